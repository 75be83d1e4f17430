#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fstm/config.hpp"
#include "fstm/structure.hpp"

namespace fstm {

/// Per-cycle bookkeeping of production, demand and allocation.
struct CycleRecord {
  int cycle = 0;
  double production = 0.0;       // Q(i), biomass produced during the cycle [g]
  double leaf_area = 0.0;        // S(i), active needle area [m^2]
  double organ_demand = 0.0;     // demand of the new organs
  double ring_demand = 0.0;      // demand of the ring compartment
  double total_demand = 0.0;     // organ + ring demand
  double ring_allocation = 0.0;  // Q_rg(i), biomass sent to rings [g]
  double d_pool = 0.0;           // uniform-distribution denominator
  double d_pressler = 0.0;       // foliage-weighted denominator

  bool operator==(const CycleRecord&) const = default;
};

/// State of all identical axes of one class; arrays are indexed by rank-1.
struct AxisClassState {
  AxisClassKey key;
  std::int64_t multiplicity = 0;
  std::vector<double> internode_mass;  // primary growth [g]
  std::vector<double> ring_mass;       // accumulated secondary growth [g]
  std::vector<double> length;          // [cm]
  std::vector<double> needle_mass;     // [g], kept after needle death

  int metamer_count() const { return static_cast<int>(internode_mass.size()); }
  /// Growth cycle at which the metamer of a 1-based rank appeared.
  int born_at(int rank) const { return key.birth_cycle + rank - 1; }
};

/// New-organ and ring allocations of one cycle for one class, per single axis.
struct LedgerRow {
  int class_index = 0;
  double needle_per_organ = 0.0;     // biomass given to each new needle compartment
  double internode_per_organ = 0.0;  // biomass given to each new internode
  double ring_axis_total = 0.0;      // ring biomass received by one axis of the class

  bool operator==(const LedgerRow&) const = default;
};

/// Complete record of a simulation run.
struct SimulationTrace {
  ModelParameters params;
  OrganogenesisRules rules;
  std::vector<CycleRecord> cycles;
  std::vector<AxisClassState> classes;        // final state, ordered by (pa, birth)
  std::vector<std::vector<LedgerRow>> ledger; // [cycle-1][...]

  /// Active flag of a class's needle cohort at the final cycle.
  bool needle_active(const AxisClassState& cls, int rank) const;

  nlohmann::json to_json() const;
  static SimulationTrace from_json(const nlohmann::json& doc);
};

class EngineError : public std::runtime_error {
 public:
  EngineError(int cycle, const std::string& what);
  int cycle;
};

/// Q(i) for leaf area S: saturating Beer-Lambert light interception scaled by
/// ground area and hydraulic resistance.
double compute_production(double leaf_area, const ModelParameters& params, int cycle);

/// Multiplicity-weighted active needle mass over the specific needle weight.
double compute_leaf_area(std::span<const AxisClassState> classes, const ModelParameters& params,
                         int cycle);

struct RingDemand {
  double ring = 0.0;
  double total = 0.0;
};

/// Ring demand is implicit (it appears inside the total demand it divides by);
/// solved in closed form as the unique non-negative root of
///   x^2 + (organ_demand - p0) x - (p0 * organ_demand + p1 * q_prev) = 0.
RingDemand solve_ring_demand(double organ_demand, double q_prev, double p0, double p1);

/// Internode length from primary biomass: length = b * q^beta.
double apply_allometry(double q, double b, double beta);

/// Radius of a cylinder of the given wood mass, length and density; 0 at
/// zero length.
double radius_from_biomass(double q_total, double length, double wood_density);

/// One living internode position competing for ring biomass.
struct RingPosition {
  double prg_l = 0.0;    // ring density times internode length
  double n_above = 0.0;  // active foliage above the position
};

/// Splits `q_rg` over the positions: a uniform share blended with a
/// Pressler (foliage-above) share by lambda. The shares sum to q_rg exactly.
/// With lambda > 0 and no foliage anywhere the pool term takes the full mass.
std::vector<double> allocate_rings(std::span<const RingPosition> positions, double lambda,
                                   double q_rg);

/// Growth-cycle stepper over the factorized state.
class Simulator {
 public:
  Simulator(const ModelParameters& params, const OrganogenesisRules& rules);
  /// Shares a prebuilt census across runs with identical rules.
  Simulator(const ModelParameters& params, const OrganogenesisRules& rules,
            std::shared_ptr<const StructureCounts> counts,
            std::shared_ptr<const ClassTopology> topo);
  ~Simulator();
  Simulator(Simulator&&) noexcept;
  Simulator& operator=(Simulator&&) noexcept;

  /// Advances one growth cycle; callable while cycle() < horizon.
  void step();
  int cycle() const;

  const std::vector<AxisClassState>& classes() const;
  const std::vector<CycleRecord>& records() const;
  const std::vector<std::vector<LedgerRow>>& ledger() const;

  /// Rewinds to cycle 0 with new parameter values, keeping the census and
  /// every buffer. The rules must be the ones the simulator was built with.
  void reset(const ModelParameters& params);

  /// Runs the remaining cycles in place.
  void run_to_horizon();

  /// Runs the remaining cycles and assembles the trace.
  SimulationTrace run();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SimulationTrace simulate(const ModelParameters& params, const OrganogenesisRules& rules);

/// Reuses a shared census; the fast path for repeated runs during fitting.
SimulationTrace simulate(const ModelParameters& params, const OrganogenesisRules& rules,
                         std::shared_ptr<const StructureCounts> counts,
                         std::shared_ptr<const ClassTopology> topo);

}  // namespace fstm
