#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fstm/engine.hpp"

namespace fstm {

enum class ObservableKind {
  stem_len,
  stem_radius,
  stem_wood,
  stem_needle,
  branch_len,
  branch_wood,
  branch_needle,
  crown_branch_wood,
  crown_branch_needle,
};

const char* kind_name(ObservableKind kind);
/// Parses a kind name; throws std::invalid_argument on unknown names.
ObservableKind kind_from_name(const std::string& name);
/// "cm" for lengths and radii, "g" for masses.
const char* kind_unit(ObservableKind kind);
/// Whether a kind may appear in a pattern-1 or pattern-2 dataset.
bool kind_allowed(ObservableKind kind, int pattern);

/// One observed value keyed by kind and position. Crown aggregates use
/// pa = 0, rank = 0 and birth_cycle = 0 (whole crown) or the whorl cycle.
struct TargetRow {
  ObservableKind kind = ObservableKind::stem_len;
  int pa = 0;
  int birth_cycle = 0;
  int rank = 0;
  double value = 0.0;
  double weight = 1.0;

  bool operator==(const TargetRow&) const = default;
};

struct TargetDataset {
  int pattern = 1;
  std::vector<TargetRow> rows;
  std::vector<std::string> warnings;  // non-fatal notes from parsing
};

class TargetFileError : public std::runtime_error {
 public:
  explicit TargetFileError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// Simulated observables in the same keying scheme as TargetRow.
struct PatternRow {
  ObservableKind kind = ObservableKind::stem_len;
  int pa = 0;
  int birth_cycle = 0;
  int rank = 0;
  double value = 0.0;
};

struct PatternVector {
  int pattern = 1;
  std::vector<PatternRow> rows;
};

/// Organ-level description: the stem and one representative axis of every
/// branch class, internode by internode (length, wood incl. rings, needles).
/// Row order: stem base to top, then branch classes by PA then birth cycle.
PatternVector extract_pattern1(const SimulationTrace& trace);
PatternVector extract_pattern1(std::span<const AxisClassState> classes);

/// Compartment description: stem internode by internode (length, radius,
/// wood, needles) plus crown-total branch wood and needle mass. per_whorl
/// splits the crown totals by the whorl (stem cycle) the branches belong to.
PatternVector extract_pattern2(const SimulationTrace& trace, bool per_whorl = false);
PatternVector extract_pattern2(std::span<const AxisClassState> classes, double wood_density,
                               int horizon, bool per_whorl = false);

TargetDataset parse_target_file(const std::string& path);
void write_target_file(const TargetDataset& dataset, const std::string& path);

/// Turns simulated rows into a dataset (unit weights), e.g. for synthetic targets.
TargetDataset dataset_from_pattern(const PatternVector& vec);

struct AllometryFit {
  double b = 0.0;
  double beta = 0.0;
  double r_squared = 0.0;
};

/// Log-log least squares of length = b * q^beta over (q, length) records.
/// Requires at least 3 records with positive q and length, and variance in q.
AllometryFit fit_allometry(std::span<const std::pair<double, double>> records);

}  // namespace fstm
