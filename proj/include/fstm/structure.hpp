#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "fstm/config.hpp"

namespace fstm {

/// Identifies one class of identical axes: same physiological age, first
/// metamer produced at the same growth cycle.
struct AxisClassKey {
  int pa = 0;
  int birth_cycle = 0;

  auto operator<=>(const AxisClassKey&) const = default;
};

/// Factorized census of the tree: how many identical axes each class holds
/// and how many organs appear per PA and growth cycle.
class StructureCounts {
 public:
  StructureCounts() = default;
  StructureCounts(int pa_max, int horizon);

  int pa_max() const { return pa_max_; }
  int horizon() const { return horizon_; }

  /// Number of identical axes of PA `pa` whose first metamer appears at
  /// growth cycle `birth`.
  std::int64_t multiplicity(int pa, int birth) const;
  void set_multiplicity(int pa, int birth, std::int64_t m);

  /// New metamers (= new internodes = new needle compartments) of PA `pa`
  /// produced at growth cycle `cycle`: one per living axis of that PA.
  std::int64_t new_organs(int pa, int cycle) const;

  /// Living internodes of PA `pa` at growth cycle `cycle` (axes never die).
  std::int64_t living_internodes(int pa, int cycle) const;

  /// Internodes over the whole run, every axis expanded.
  std::int64_t total_internodes() const;

  /// Recomputes the per-cycle organ counts from the multiplicity table.
  void derive_counts();

  bool operator==(const StructureCounts&) const = default;

 private:
  int pa_max_ = 0;
  int horizon_ = 0;
  // Tables indexed [pa-1][cycle-1].
  std::vector<std::vector<std::int64_t>> mult_;
  std::vector<std::vector<std::int64_t>> new_organs_;
  std::vector<std::vector<std::int64_t>> living_;
};

/// Builds the factorized census from the branching rules. Polynomial in
/// horizon and pa_max; never expands the tree.
StructureCounts build_counts(const OrganogenesisRules& rules);

/// Dense index over the axis classes that actually occur (multiplicity > 0),
/// ordered by PA then birth cycle. Shared by the engine and the foliage scan.
class ClassTopology {
 public:
  static ClassTopology from_counts(const StructureCounts& counts);

  int count() const { return static_cast<int>(classes_.size()); }
  const AxisClassKey& key(int idx) const { return classes_[idx]; }
  std::int64_t multiplicity(int idx) const { return mult_[idx]; }
  int horizon() const { return horizon_; }
  int pa_max() const { return pa_max_; }

  /// Index of class (pa, birth), or -1 when no such class exists.
  int index_of(int pa, int birth) const;

  /// Half-open [begin, end) index range of the classes of one PA.
  std::pair<int, int> class_range(int pa) const;

 private:
  struct PaRange {
    int first_birth = 0;
    int count = 0;
    int offset = 0;
  };
  int pa_max_ = 0;
  int horizon_ = 0;
  std::vector<PaRange> ranges_;
  std::vector<AxisClassKey> classes_;
  std::vector<std::int64_t> mult_;
};

/// One metamer of the fully expanded tree.
struct ExplicitNode {
  int pa = 0;
  int birth_cycle = 0;
  std::int32_t axis = -1;    // owning axis
  int rank = 0;              // 1-based position along the axis
  std::int32_t parent = -1;  // previous metamer on the axis, or the bearer metamer
};

struct ExplicitAxis {
  int pa = 0;
  int birth_cycle = 0;
  std::int32_t bearer_node = -1;  // metamer carrying this lateral, -1 for the stem
  std::vector<std::int32_t> nodes;  // metamers in rank order
};

/// Unfactorized tree: every axis and metamer laid out individually.
struct ExplicitTree {
  int pa_max = 0;
  int horizon = 0;
  std::vector<ExplicitNode> nodes;
  std::vector<ExplicitAxis> axes;
  // Lateral axes borne by each node, grouped: axis ids
  // laterals[lateral_offset[n] .. lateral_offset[n+1]) belong to node n.
  std::vector<std::int32_t> laterals;
  std::vector<std::int32_t> lateral_offset;
};

/// Raised when the projected node count of an explicit expansion exceeds the cap.
class NodeCapError : public std::runtime_error {
 public:
  NodeCapError(std::int64_t projected, std::int64_t cap);
  std::int64_t projected_nodes;
  std::int64_t cap;
};

/// Node cap for explicit expansion; FSTM_NODE_CAP overrides the 10^7 default.
std::int64_t default_node_cap();

/// Expands the full tree. Refuses (without allocating) when the projected
/// node count exceeds the cap.
ExplicitTree expand_explicit(const OrganogenesisRules& rules,
                             std::int64_t node_cap = default_node_cap());

/// Census taken by walking the explicit tree node by node; the oracle bridge
/// for build_counts.
StructureCounts count_from_explicit(const ExplicitTree& tree);

/// Active-needle counts above every metamer position at `cycle`, computed on
/// the factorized representation: out[class][rank-1]. A needle cohort born at
/// cycle j is active while cycle - j < lifespan.
std::vector<std::vector<double>> leaves_above(const StructureCounts& counts,
                                              const OrganogenesisRules& rules, int cycle,
                                              int lifespan, bool include_own = true);

/// Same quantity per node of the explicit tree (oracle for leaves_above).
/// `needle_weight`, when given, replaces the per-node count of 1.
std::vector<double> leaves_above_nodes(const ExplicitTree& tree, int cycle, int lifespan,
                                       bool include_own = true,
                                       const std::vector<double>* needle_weight = nullptr);

}  // namespace fstm
