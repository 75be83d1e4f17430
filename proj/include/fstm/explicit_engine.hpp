#pragma once

#include <cstdint>
#include <vector>

#include "fstm/config.hpp"
#include "fstm/engine.hpp"
#include "fstm/structure.hpp"

namespace fstm {

/// Result of the reference simulation run on the fully expanded tree:
/// one entry per node in each mass array.
struct ExplicitSimResult {
  ExplicitTree tree;
  std::vector<double> internode_mass;
  std::vector<double> ring_mass;
  std::vector<double> length;
  std::vector<double> needle_mass;
  std::vector<CycleRecord> cycles;
};

/// Serial reference implementation: allocates to every metamer individually,
/// with no class sharing. Kept as the oracle the factorized engine is tested
/// and benchmarked against.
ExplicitSimResult simulate_explicit(const ModelParameters& params, const OrganogenesisRules& rules,
                                    std::int64_t node_cap = default_node_cap());

/// Largest relative deviation between the factorized state and the explicit
/// result, grouped by (class, rank); also checks that nodes of one class are
/// identical. Returns the max over all mass and length fields.
double max_relative_deviation(const std::vector<AxisClassState>& classes,
                              const ExplicitSimResult& explicit_result);

}  // namespace fstm
