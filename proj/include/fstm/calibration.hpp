#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fstm/config.hpp"
#include "fstm/patterns.hpp"

namespace fstm {

/// Names of the tunable parameters: scalars (r, s_p, lambda, ...) and per-PA
/// entries written as name[pa], e.g. p_rg[2] or sink_needle[1].
std::vector<std::string> parameter_names(const ModelParameters& params);
double get_parameter(const ModelParameters& params, const std::string& name);
void set_parameter(ModelParameters& params, const std::string& name, double value);
/// Natural bounds: [0,1] for lambda, (0, +inf) otherwise.
std::pair<double, double> default_bounds(const std::string& name);

enum class WeightingMode {
  from_file,  // use the weight column
  unit,       // every row weight 1
  relative,   // weight = 1 / value^2
};

struct ParameterSpec {
  std::string name;
  double init = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// A calibration problem: which parameters move, what data they must fit.
struct FitProblem {
  ModelParameters params;  // fixed values; free entries overwritten per evaluation
  OrganogenesisRules rules;
  TargetDataset targets;
  std::vector<ParameterSpec> free_params;
  WeightingMode weighting = WeightingMode::from_file;
  bool per_whorl = false;  // pattern-2 crown aggregation granularity
};

class AlignmentError : public std::runtime_error {
 public:
  explicit AlignmentError(std::vector<std::string> unmatched);
  const std::vector<std::string>& unmatched() const { return unmatched_; }

 private:
  std::vector<std::string> unmatched_;
};

class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what);
};

/// Weighted residual vector sqrt(w) * (simulated - observed) at the given
/// natural-scale values of the free parameters, aligned row by row with the
/// targets. Throws AlignmentError when a target row has no simulated twin.
std::vector<double> residuals(std::span<const double> theta, const FitProblem& problem);

struct FitOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;        // relative decrease of the squared error
  double step_tolerance = 1e-10;  // relative step norm
  double gradient_tolerance = 1e-12;
  double max_step_norm = 2.0;     // trust bound on one internal (log-scale) step
  bool record_iterations = true;
};

struct IterationRecord {
  int iteration = 0;
  double error = 0.0;  // weighted residual sum of squares
  double mu = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
  std::vector<double> estimates;  // natural scale
};

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> estimates;
  std::vector<double> cv_percent;  // 100 * standard error / estimate
  double error = 0.0;              // weighted residual sum of squares at the optimum
  int iterations = 0;
  int residual_evaluations = 0;
  int residual_count = 0;
  double wall_seconds = 0.0;
  bool converged = false;
  std::string stop_reason;
  std::optional<std::string> identifiability_warning;
  std::vector<IterationRecord> iteration_log;
};

/// Bound-constrained Levenberg-Marquardt over the weighted residuals with a
/// forward-difference Jacobian. Bounds are enforced by smooth reparameterization
/// (log for positive parameters, scaled logit for intervals such as lambda's
/// [0,1]), so iterates never leave them. Deterministic for fixed options.
FitResult fit(const FitProblem& problem, const FitOptions& options = {});

struct PatternComparison {
  std::optional<FitResult> pattern1;
  std::optional<FitResult> pattern2;
  std::string error1, error2;  // per-side failure messages, empty on success
  double time_ratio = 0.0;     // pattern-1 wall time over pattern-2 wall time
};

/// Fits both problems independently; one side failing does not abort the other.
PatternComparison compare_patterns(const FitProblem& problem1, const FitProblem& problem2,
                                   const FitOptions& options = {});

/// Forward- and central-difference Jacobians of the weighted residuals with
/// respect to the internal (transformed) coordinates, for sanity checks.
/// Column j of the result is d residual / d phi_j.
std::vector<std::vector<double>> forward_jacobian(const FitProblem& problem,
                                                  std::span<const double> theta);
std::vector<std::vector<double>> central_jacobian(const FitProblem& problem,
                                                  std::span<const double> theta);

}  // namespace fstm
