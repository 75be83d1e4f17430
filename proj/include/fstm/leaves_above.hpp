#pragma once

#include <vector>

#include "fstm/structure.hpp"

namespace fstm::detail {

// Flat per-position arena for the foliage scan: values for class idx live at
// [offset(idx), offset(idx) + ranks), rank-major.
struct LeafArena {
  std::vector<double> values;
  std::vector<int> offsets;     // per class
  std::vector<double> axis_total;

  double at(int class_idx, int rank) const { return values[offsets[class_idx] + rank - 1]; }
};

// Core foliage scan over the factorized state. For every class alive at
// `cycle` fills the arena with the active-needle weight above each metamer:
// the suffix of its own axis plus n_b copies of each lateral subtree attached
// at ranks >= rank. axis_total[class] is the whole-axis value consumed by the
// bearer one PA below.
//
// weight(class_idx, rank) is read only for metamers whose needles are active
// (cycle - birth < lifespan); count mode passes a constant 1.
template <class WeightFn>
void leaves_above_into(const ClassTopology& topo, const OrganogenesisRules& rules, int cycle,
                       int lifespan, bool include_own, WeightFn&& weight, LeafArena& arena) {
  const int n = topo.count();
  arena.offsets.resize(n);
  arena.axis_total.assign(n, 0.0);
  int total = 0;
  for (int idx = 0; idx < n; ++idx) {
    arena.offsets[idx] = total;
    const int birth = topo.key(idx).birth_cycle;
    if (birth <= cycle) total += cycle - birth + 1;
  }
  arena.values.resize(total);

  for (int pa = topo.pa_max(); pa >= 1; --pa) {
    const int nb = rules.branches_at(pa);
    const auto [begin, end] = topo.class_range(pa);
    for (int idx = begin; idx < end; ++idx) {
      const int birth = topo.key(idx).birth_cycle;
      if (birth > cycle) continue;
      const int ranks = cycle - birth + 1;
      double* out = arena.values.data() + arena.offsets[idx];
      double acc = 0.0;
      for (int rank = ranks; rank >= 1; --rank) {
        const int born = birth + rank - 1;
        double own = 0.0;
        if (cycle - born < lifespan) own = weight(idx, rank);
        acc += own;
        if (nb > 0) {
          const int lat = topo.index_of(pa + 1, birth + rank);
          if (lat >= 0) acc += static_cast<double>(nb) * arena.axis_total[lat];
        }
        out[rank - 1] = include_own ? acc : acc - own;
      }
      arena.axis_total[idx] = acc;
    }
  }
}

}  // namespace fstm::detail
