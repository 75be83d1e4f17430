#include "fstm/structure.hpp"

#include <cstdlib>
#include <limits>
#include <sstream>

#include "fstm/leaves_above.hpp"

namespace fstm {

namespace {

constexpr std::int64_t kCountLimit = std::numeric_limits<std::int64_t>::max() / 4;

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  if (a > kCountLimit - b) throw std::overflow_error("structure counts overflow");
  return a + b;
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  if (b != 0 && a > kCountLimit / b) throw std::overflow_error("structure counts overflow");
  return a * b;
}

}  // namespace

StructureCounts::StructureCounts(int pa_max, int horizon) : pa_max_(pa_max), horizon_(horizon) {
  mult_.assign(pa_max, std::vector<std::int64_t>(horizon, 0));
  new_organs_.assign(pa_max, std::vector<std::int64_t>(horizon, 0));
  living_.assign(pa_max, std::vector<std::int64_t>(horizon, 0));
}

std::int64_t StructureCounts::multiplicity(int pa, int birth) const {
  if (pa < 1 || pa > pa_max_ || birth < 1 || birth > horizon_) return 0;
  return mult_[pa - 1][birth - 1];
}

void StructureCounts::set_multiplicity(int pa, int birth, std::int64_t m) {
  mult_[pa - 1][birth - 1] = m;
}

std::int64_t StructureCounts::new_organs(int pa, int cycle) const {
  if (pa < 1 || pa > pa_max_ || cycle < 1 || cycle > horizon_) return 0;
  return new_organs_[pa - 1][cycle - 1];
}

std::int64_t StructureCounts::living_internodes(int pa, int cycle) const {
  if (pa < 1 || pa > pa_max_ || cycle < 1 || cycle > horizon_) return 0;
  return living_[pa - 1][cycle - 1];
}

std::int64_t StructureCounts::total_internodes() const {
  std::int64_t total = 0;
  for (int pa = 1; pa <= pa_max_; ++pa) total = checked_add(total, living_[pa - 1][horizon_ - 1]);
  return total;
}

void StructureCounts::derive_counts() {
  // Every axis alive at a cycle adds exactly one metamer that cycle.
  for (int pa = 1; pa <= pa_max_; ++pa) {
    std::int64_t axes = 0;
    std::int64_t cumulative = 0;
    for (int cycle = 1; cycle <= horizon_; ++cycle) {
      axes = checked_add(axes, mult_[pa - 1][cycle - 1]);
      new_organs_[pa - 1][cycle - 1] = axes;
      cumulative = checked_add(cumulative, axes);
      living_[pa - 1][cycle - 1] = cumulative;
    }
  }
}

StructureCounts build_counts(const OrganogenesisRules& rules) {
  StructureCounts counts(rules.pa_max, rules.horizon);
  counts.set_multiplicity(1, 1, 1);
  // Laterals of PA k+1 start one cycle after the metamer bearing them: the
  // n_b(k) buds of every metamer made at cycle t open at t+1.
  for (int pa = 1; pa < rules.pa_max; ++pa) {
    const std::int64_t nb = rules.branches_at(pa);
    if (nb == 0) continue;
    std::int64_t axes = 0;  // living axes of this PA, also its new-metamer count
    for (int t = 1; t < rules.horizon; ++t) {
      axes = checked_add(axes, counts.multiplicity(pa, t));
      counts.set_multiplicity(pa + 1, t + 1, checked_mul(nb, axes));
    }
  }
  counts.derive_counts();
  return counts;
}

ClassTopology ClassTopology::from_counts(const StructureCounts& counts) {
  ClassTopology topo;
  topo.pa_max_ = counts.pa_max();
  topo.horizon_ = counts.horizon();
  topo.ranges_.resize(counts.pa_max());
  for (int pa = 1; pa <= counts.pa_max(); ++pa) {
    auto& range = topo.ranges_[pa - 1];
    range.offset = static_cast<int>(topo.classes_.size());
    range.first_birth = 0;
    for (int birth = 1; birth <= counts.horizon(); ++birth) {
      const std::int64_t m = counts.multiplicity(pa, birth);
      if (m == 0) continue;
      if (range.first_birth == 0) range.first_birth = birth;
      topo.classes_.push_back({pa, birth});
      topo.mult_.push_back(m);
    }
    range.count = static_cast<int>(topo.classes_.size()) - range.offset;
  }
  return topo;
}

int ClassTopology::index_of(int pa, int birth) const {
  if (pa < 1 || pa > pa_max_) return -1;
  const auto& range = ranges_[pa - 1];
  if (range.count == 0 || birth < range.first_birth) return -1;
  const int slot = birth - range.first_birth;
  if (slot >= range.count) return -1;
  return range.offset + slot;
}

std::pair<int, int> ClassTopology::class_range(int pa) const {
  if (pa < 1 || pa > pa_max_) return {0, 0};
  const auto& range = ranges_[pa - 1];
  return {range.offset, range.offset + range.count};
}

NodeCapError::NodeCapError(std::int64_t projected_, std::int64_t cap_)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "explicit expansion would create " << projected_ << " nodes, over the cap of "
           << cap_;
        return os.str();
      }()),
      projected_nodes(projected_),
      cap(cap_) {}

std::int64_t default_node_cap() {
  if (const char* env = std::getenv("FSTM_NODE_CAP")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env && v > 0) return v;
  }
  return 10'000'000;
}

ExplicitTree expand_explicit(const OrganogenesisRules& rules, std::int64_t node_cap) {
  const StructureCounts counts = build_counts(rules);
  const std::int64_t projected = counts.total_internodes();
  if (projected > node_cap) throw NodeCapError(projected, node_cap);

  ExplicitTree tree;
  tree.pa_max = rules.pa_max;
  tree.horizon = rules.horizon;
  tree.nodes.reserve(projected);
  tree.axes.push_back({1, 1, -1, {}});

  // Grow cycle by cycle: every axis born by the cycle appends one metamer,
  // and each new metamer of PA k bears n_b(k) lateral axes opening next cycle.
  for (int cycle = 1; cycle <= rules.horizon; ++cycle) {
    const std::size_t axis_count = tree.axes.size();  // laterals born later must wait
    for (std::size_t a = 0; a < axis_count; ++a) {
      if (tree.axes[a].birth_cycle > cycle) continue;
      auto& axis = tree.axes[a];
      const std::int32_t node_id = static_cast<std::int32_t>(tree.nodes.size());
      ExplicitNode node;
      node.pa = axis.pa;
      node.birth_cycle = cycle;
      node.axis = static_cast<std::int32_t>(a);
      node.rank = static_cast<int>(axis.nodes.size()) + 1;
      node.parent = axis.nodes.empty() ? axis.bearer_node : axis.nodes.back();
      axis.nodes.push_back(node_id);
      tree.nodes.push_back(node);

      const int nb = rules.branches_at(node.pa);
      if (nb > 0 && cycle < rules.horizon) {
        for (int b = 0; b < nb; ++b)
          tree.axes.push_back({node.pa + 1, cycle + 1, node_id, {}});
      }
    }
  }

  // Group lateral axes by bearer node for the foliage traversal.
  tree.lateral_offset.assign(tree.nodes.size() + 1, 0);
  for (std::size_t a = 0; a < tree.axes.size(); ++a) {
    if (tree.axes[a].bearer_node >= 0) ++tree.lateral_offset[tree.axes[a].bearer_node + 1];
  }
  for (std::size_t n = 1; n < tree.lateral_offset.size(); ++n)
    tree.lateral_offset[n] += tree.lateral_offset[n - 1];
  tree.laterals.resize(tree.axes.empty() ? 0 : tree.axes.size() - 1);
  std::vector<std::int32_t> fill(tree.lateral_offset.begin(), tree.lateral_offset.end() - 1);
  for (std::size_t a = 0; a < tree.axes.size(); ++a) {
    const std::int32_t bearer = tree.axes[a].bearer_node;
    if (bearer >= 0) tree.laterals[fill[bearer]++] = static_cast<std::int32_t>(a);
  }
  return tree;
}

StructureCounts count_from_explicit(const ExplicitTree& tree) {
  StructureCounts counts(tree.pa_max, tree.horizon);
  for (const auto& axis : tree.axes) {
    if (axis.nodes.empty()) continue;  // axis that never grew (born past the horizon)
    counts.set_multiplicity(axis.pa, axis.birth_cycle,
                            counts.multiplicity(axis.pa, axis.birth_cycle) + 1);
  }
  counts.derive_counts();
  return counts;
}

std::vector<std::vector<double>> leaves_above(const StructureCounts& counts,
                                              const OrganogenesisRules& rules, int cycle,
                                              int lifespan, bool include_own) {
  const ClassTopology topo = ClassTopology::from_counts(counts);
  detail::LeafArena arena;
  detail::leaves_above_into(
      topo, rules, cycle, lifespan, include_own, [](int, int) { return 1.0; }, arena);
  std::vector<std::vector<double>> out(topo.count());
  for (int idx = 0; idx < topo.count(); ++idx) {
    const int birth = topo.key(idx).birth_cycle;
    if (birth > cycle) continue;
    const int ranks = cycle - birth + 1;
    out[idx].assign(arena.values.begin() + arena.offsets[idx],
                    arena.values.begin() + arena.offsets[idx] + ranks);
  }
  return out;
}

std::vector<double> leaves_above_nodes(const ExplicitTree& tree, int cycle, int lifespan,
                                       bool include_own, const std::vector<double>* needle_weight) {
  std::vector<double> n_above(tree.nodes.size(), 0.0);
  std::vector<double> axis_total(tree.axes.size(), 0.0);

  // Axes of deeper PA resolve first; suffix-scan each axis from the top.
  std::vector<std::size_t> order(tree.axes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tree.axes[a].pa > tree.axes[b].pa;
  });

  for (const std::size_t a : order) {
    const auto& axis = tree.axes[a];
    if (axis.birth_cycle > cycle) continue;
    double acc = 0.0;
    const int alive = cycle - axis.birth_cycle + 1;
    for (int rank = std::min<int>(alive, static_cast<int>(axis.nodes.size())); rank >= 1;
         --rank) {
      const std::int32_t node_id = axis.nodes[rank - 1];
      const ExplicitNode& node = tree.nodes[node_id];
      double own = 0.0;
      if (cycle - node.birth_cycle < lifespan)
        own = needle_weight ? (*needle_weight)[node_id] : 1.0;
      acc += own;
      for (std::int32_t l = tree.lateral_offset[node_id]; l < tree.lateral_offset[node_id + 1];
           ++l) {
        acc += axis_total[tree.laterals[l]];
      }
      n_above[node_id] = include_own ? acc : acc - own;
    }
    axis_total[a] = acc;
  }
  return n_above;
}

}  // namespace fstm
