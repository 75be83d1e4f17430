#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fstm {

/// Physiological and allometric parameters of the growth model.
/// Per-PA vectors are indexed from physiological age 1 (element 0).
struct ModelParameters {
  double r = 0.0;       // hydraulic resistance to transpiration
  double k_beer = 0.0;  // Beer-Lambert extinction coefficient
  double s_p = 0.0;     // ground projection area available to the plant [m^2]

  std::vector<double> env;             // environmental factor E(i), one entry per growth cycle
  std::optional<double> env_fill;      // constant used beyond the env series (1.0 when env omitted)

  std::vector<double> sink_needle;     // needle sink P_a(k) per PA
  std::vector<double> sink_internode;  // internode sink P_e(k) per PA
  double ring_sink_const = 0.0;        // constant term of the ring-compartment demand
  double ring_sink_slope = 0.0;        // supply/demand slope of the ring demand [1/g]
  double lambda_pressler = 0.0;        // 0 = uniform radial growth, 1 = pure Pressler law
  std::vector<double> ring_density;    // linear ring sink p_rg(k) per unit internode length

  std::vector<double> allometry_b;     // length = b(k) * q^beta(k) [cm, g]
  std::vector<double> allometry_beta;
  double slw = 0.0;           // specific needle weight [g/m^2]
  int needle_lifespan = 2;    // functioning span of a needle cohort [growth cycles]
  double wood_density = 0.0;  // fresh wood mass per volume [g/cm^3], for radius output

  double seed_biomass = 1.0;  // Q(0), biomass funding the first growth cycle [g]

  bool pressler_counts_own_needles = true;  // "above" includes the metamer's own needles
  bool pressler_mass_weighted = false;      // weight foliage by needle mass instead of count

  /// E(i) for a 1-based growth cycle, falling back to the fill constant.
  double env_at(int cycle) const;

  bool operator==(const ModelParameters&) const = default;
};

/// Branching rules and the simulated time span.
struct OrganogenesisRules {
  int pa_max = 1;  // PA of the highest-order axes
  std::vector<int> branches_per_cycle;  // n_b(k): lateral axes of PA k+1 per new metamer of PA k
  int horizon = 1;  // growth cycles to simulate

  /// n_b for a PA, implicitly 0 at pa_max and beyond.
  int branches_at(int pa) const;

  bool operator==(const OrganogenesisRules&) const = default;
};

/// Raised by load/parse when the file violates the schema or an invariant.
/// Carries every problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// Checks every parameter and rule invariant; returns one message per violation.
std::vector<std::string> validate(const ModelParameters& params, const OrganogenesisRules& rules);

/// Rescales sinks and ring densities to the PA-1 convention (needle sink and
/// ring density both equal 1 at PA 1). Idempotent.
void normalize(ModelParameters& params);

/// Parses the "parameters"/"rules" JSON document, then normalizes and validates.
std::pair<ModelParameters, OrganogenesisRules> parse_config(const nlohmann::json& doc);

std::pair<ModelParameters, OrganogenesisRules> load_config(const std::string& path);

nlohmann::json serialize_config(const ModelParameters& params, const OrganogenesisRules& rules);

void save_config(const ModelParameters& params, const OrganogenesisRules& rules,
                 const std::string& path);

}  // namespace fstm
