#include "fstm/explicit_engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fstm {

ExplicitSimResult simulate_explicit(const ModelParameters& p, const OrganogenesisRules& rules,
                                    std::int64_t node_cap) {
  ExplicitSimResult result;
  result.tree = expand_explicit(rules, node_cap);
  const ExplicitTree& tree = result.tree;
  const std::size_t node_count = tree.nodes.size();
  result.internode_mass.assign(node_count, 0.0);
  result.ring_mass.assign(node_count, 0.0);
  result.length.assign(node_count, 0.0);
  result.needle_mass.assign(node_count, 0.0);

  // Nodes are laid down in birth order, so the nodes alive at cycle i are a
  // prefix; record where each cycle's cohort starts.
  std::vector<std::size_t> first_of_cycle(rules.horizon + 2, node_count);
  for (std::size_t n = 0; n < node_count; ++n) {
    const int born = tree.nodes[n].birth_cycle;
    if (first_of_cycle[born] == node_count || n < first_of_cycle[born]) {
      first_of_cycle[born] = std::min(first_of_cycle[born], n);
    }
  }
  for (int c = rules.horizon; c >= 1; --c)
    first_of_cycle[c] = std::min(first_of_cycle[c], first_of_cycle[c + 1]);

  // Axis processing order for the foliage scan, deepest PA first.
  std::vector<std::size_t> axis_order(tree.axes.size());
  for (std::size_t i = 0; i < axis_order.size(); ++i) axis_order[i] = i;
  std::stable_sort(axis_order.begin(), axis_order.end(), [&](std::size_t a, std::size_t b) {
    return tree.axes[a].pa > tree.axes[b].pa;
  });

  std::vector<double> n_above(node_count, 0.0);
  std::vector<double> axis_total(tree.axes.size(), 0.0);

  double q_prev = p.seed_biomass;
  for (int i = 1; i <= rules.horizon; ++i) {
    const std::size_t new_begin = first_of_cycle[i];
    const std::size_t new_end = first_of_cycle[i + 1];
    const std::size_t alive_end = new_end;

    // Demand summed metamer by metamer.
    double d_org = 0.0;
    for (std::size_t n = new_begin; n < new_end; ++n) {
      const int pa = tree.nodes[n].pa;
      d_org += p.sink_needle[pa - 1] + p.sink_internode[pa - 1];
    }

    const RingDemand demand =
        solve_ring_demand(d_org, q_prev, p.ring_sink_const, p.ring_sink_slope);
    double q_rg = 0.0;
    if (demand.total > 0.0) {
      q_rg = q_prev * demand.ring / demand.total;
    } else if (q_prev > 0.0) {
      throw EngineError(i, "available biomass with zero total demand");
    }

    for (std::size_t n = new_begin; n < new_end; ++n) {
      const int pa = tree.nodes[n].pa;
      const double share = demand.total > 0.0 ? q_prev / demand.total : 0.0;
      result.needle_mass[n] = p.sink_needle[pa - 1] * share;
      result.internode_mass[n] = p.sink_internode[pa - 1] * share;
      result.length[n] =
          apply_allometry(result.internode_mass[n], p.allometry_b[pa - 1],
                          p.allometry_beta[pa - 1]);
    }

    // Foliage above every alive node: suffix scan per axis, laterals resolved
    // first because of the PA-descending order.
    for (const std::size_t a : axis_order) {
      const auto& axis = tree.axes[a];
      if (axis.birth_cycle > i) {
        axis_total[a] = 0.0;
        continue;
      }
      double acc = 0.0;
      const int alive_ranks =
          std::min<int>(i - axis.birth_cycle + 1, static_cast<int>(axis.nodes.size()));
      for (int rank = alive_ranks; rank >= 1; --rank) {
        const std::int32_t node_id = axis.nodes[rank - 1];
        double own = 0.0;
        if (i - tree.nodes[node_id].birth_cycle < p.needle_lifespan) {
          own = p.pressler_mass_weighted ? result.needle_mass[node_id] : 1.0;
        }
        acc += own;
        for (std::int32_t l = tree.lateral_offset[node_id];
             l < tree.lateral_offset[node_id + 1]; ++l) {
          acc += axis_total[tree.laterals[l]];
        }
        n_above[node_id] = p.pressler_counts_own_needles ? acc : acc - own;
      }
      axis_total[a] = acc;
    }

    double d_pool = 0.0;
    double d_pressler = 0.0;
    for (std::size_t n = 0; n < alive_end; ++n) {
      const double w = p.ring_density[tree.nodes[n].pa - 1] * result.length[n];
      d_pool += w;
      d_pressler += n_above[n] * w;
    }

    if (q_rg > 0.0) {
      if (!(d_pool > 0.0))
        throw EngineError(i, "ring biomass with no living internode length to receive it");
      const double lambda = p.lambda_pressler;
      const bool pressler_ok = d_pressler > 0.0;
      for (std::size_t n = 0; n < alive_end; ++n) {
        double share;
        if (pressler_ok)
          share = (1.0 - lambda) / d_pool + lambda * n_above[n] / d_pressler;
        else
          share = 1.0 / d_pool;
        result.ring_mass[n] +=
            share * (p.ring_density[tree.nodes[n].pa - 1] * result.length[n]) * q_rg;
      }
    }

    double needle_area_mass = 0.0;
    for (std::size_t n = 0; n < alive_end; ++n) {
      if (i - tree.nodes[n].birth_cycle < p.needle_lifespan)
        needle_area_mass += result.needle_mass[n];
    }
    const double leaf_area = needle_area_mass / p.slw;
    const double production = compute_production(leaf_area, p, i);
    result.cycles.push_back({i, production, leaf_area, d_org, demand.ring, demand.total, q_rg,
                             d_pool, d_pressler});
    q_prev = production;
  }
  return result;
}

double max_relative_deviation(const std::vector<AxisClassState>& classes,
                              const ExplicitSimResult& explicit_result) {
  const ExplicitTree& tree = explicit_result.tree;

  std::map<AxisClassKey, const AxisClassState*> by_key;
  for (const auto& cls : classes) by_key[cls.key] = &cls;

  auto deviation = [](double a, double b) {
    const double scale = std::max(std::fabs(a), std::fabs(b));
    if (scale < 1e-12) return 0.0;
    return std::fabs(a - b) / scale;
  };

  double worst = 0.0;
  for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
    const ExplicitNode& node = tree.nodes[n];
    const AxisClassKey key{node.pa, tree.axes[node.axis].birth_cycle};
    const auto it = by_key.find(key);
    if (it == by_key.end()) return 1.0;  // class missing entirely
    const AxisClassState& cls = *it->second;
    if (node.rank > cls.metamer_count()) return 1.0;
    const int r = node.rank - 1;
    worst = std::max(worst, deviation(cls.internode_mass[r], explicit_result.internode_mass[n]));
    worst = std::max(worst, deviation(cls.ring_mass[r], explicit_result.ring_mass[n]));
    worst = std::max(worst, deviation(cls.length[r], explicit_result.length[n]));
    worst = std::max(worst, deviation(cls.needle_mass[r], explicit_result.needle_mass[n]));
  }
  return worst;
}

}  // namespace fstm
