#include "fstm/engine.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "fstm/leaves_above.hpp"

namespace fstm {

EngineError::EngineError(int cycle_, const std::string& what)
    : std::runtime_error("growth cycle " + std::to_string(cycle_) + ": " + what),
      cycle(cycle_) {}

double compute_production(double leaf_area, const ModelParameters& p, int cycle) {
  if (leaf_area <= 0.0) return 0.0;
  return p.env_at(cycle) * p.s_p / p.r * (1.0 - std::exp(-p.k_beer * leaf_area / p.s_p));
}

double compute_leaf_area(std::span<const AxisClassState> classes, const ModelParameters& p,
                         int cycle) {
  double mass = 0.0;
  for (const auto& cls : classes) {
    const int top = std::min(cls.metamer_count(), cycle - cls.key.birth_cycle + 1);
    // Cohorts age with rank depth; stop at the first inactive one.
    for (int rank = top; rank >= 1; --rank) {
      if (cycle - cls.born_at(rank) >= p.needle_lifespan) break;
      mass += static_cast<double>(cls.multiplicity) * cls.needle_mass[rank - 1];
    }
  }
  return mass / p.slw;
}

RingDemand solve_ring_demand(double organ_demand, double q_prev, double p0, double p1) {
  // The ring demand appears inside the total demand it divides by:
  //   d_rg = p0 + p1 * q_prev / (organ_demand + d_rg)
  // so d_rg is the unique non-negative root of
  //   x^2 + (organ_demand - p0) x - (p0 * organ_demand + p1 * q_prev) = 0.
  double ring;
  if (p1 * q_prev == 0.0) {
    ring = p0;  // the quadratic factors as (x - p0)(x + organ_demand)
  } else {
    const double b = organ_demand - p0;
    const double c = p0 * organ_demand + p1 * q_prev;
    const double disc = std::sqrt(b * b + 4.0 * c);
    ring = b <= 0.0 ? (disc - b) / 2.0 : 2.0 * c / (disc + b);
  }
  return {ring, organ_demand + ring};
}

double apply_allometry(double q, double b, double beta) {
  if (q < 0.0) return 0.0;
  return b * std::pow(q, beta);
}

double radius_from_biomass(double q_total, double length, double wood_density) {
  if (length <= 0.0 || q_total <= 0.0) return 0.0;
  return std::sqrt(q_total / (wood_density * std::numbers::pi * length));
}

std::vector<double> allocate_rings(std::span<const RingPosition> positions, double lambda,
                                   double q_rg) {
  std::vector<double> out(positions.size(), 0.0);
  if (q_rg == 0.0) return out;
  double d_pool = 0.0;
  double d_pressler = 0.0;
  for (const auto& pos : positions) {
    d_pool += pos.prg_l;
    d_pressler += pos.n_above * pos.prg_l;
  }
  if (!(d_pool > 0.0))
    throw std::invalid_argument("ring allocation requires a living internode (d_pool > 0)");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    double share;
    if (d_pressler > 0.0)
      share = (1.0 - lambda) / d_pool + lambda * positions[i].n_above / d_pressler;
    else
      share = 1.0 / d_pool;  // no foliage anywhere: the pool term carries all mass
    out[i] = share * positions[i].prg_l * q_rg;
  }
  return out;
}

struct Simulator::Impl {
  ModelParameters p;
  OrganogenesisRules rules;
  std::shared_ptr<const StructureCounts> counts;
  std::shared_ptr<const ClassTopology> topo;

  std::vector<AxisClassState> classes;
  std::vector<CycleRecord> records;
  // flat allocation ledger: rows for cycle i live at
  // [ledger_offsets[i-1], ledger_offsets[i])
  std::vector<LedgerRow> ledger_rows;
  std::vector<int> ledger_offsets{0};
  mutable std::vector<std::vector<LedgerRow>> ledger_nested;  // materialized on demand
  int cycle = 0;
  double q_prev = 0.0;

  // scratch reused across cycles
  detail::LeafArena arena;
  std::vector<double> dq_needle, dq_internode, new_length;  // per PA, current cycle

  Impl(const ModelParameters& params, const OrganogenesisRules& r,
       std::shared_ptr<const StructureCounts> c, std::shared_ptr<const ClassTopology> t)
      : p(params), rules(r), counts(std::move(c)), topo(std::move(t)) {
    q_prev = p.seed_biomass;
    classes.resize(topo->count());
    for (int idx = 0; idx < topo->count(); ++idx) {
      auto& cls = classes[idx];
      cls.key = topo->key(idx);
      cls.multiplicity = topo->multiplicity(idx);
      const std::size_t capacity = rules.horizon - cls.key.birth_cycle + 1;
      cls.internode_mass.reserve(capacity);
      cls.ring_mass.reserve(capacity);
      cls.length.reserve(capacity);
      cls.needle_mass.reserve(capacity);
    }
    records.reserve(rules.horizon);
    ledger_offsets.reserve(rules.horizon + 1);
    dq_needle.resize(rules.pa_max);
    dq_internode.resize(rules.pa_max);
    new_length.resize(rules.pa_max);
  }

  void reset(const ModelParameters& params) {
    p = params;
    q_prev = p.seed_biomass;
    cycle = 0;
    for (auto& cls : classes) {
      cls.internode_mass.clear();
      cls.ring_mass.clear();
      cls.length.clear();
      cls.needle_mass.clear();
    }
    records.clear();
    ledger_rows.clear();
    ledger_offsets.assign(1, 0);
    ledger_nested.clear();
  }

  void step() {
    const int i = cycle + 1;
    if (i > rules.horizon) throw EngineError(i, "stepping past the horizon");

    // Demand of this cycle's new organs: one needle compartment and one
    // internode per new metamer.
    double d_org = 0.0;
    for (int pa = 1; pa <= rules.pa_max; ++pa) {
      const auto n_new = counts->new_organs(pa, i);
      if (n_new > 0)
        d_org += (p.sink_needle[pa - 1] + p.sink_internode[pa - 1]) * static_cast<double>(n_new);
    }

    const RingDemand demand = solve_ring_demand(d_org, q_prev, p.ring_sink_const,
                                                p.ring_sink_slope);
    double q_rg = 0.0;
    if (demand.total > 0.0) {
      q_rg = q_prev * demand.ring / demand.total;
    } else if (q_prev > 0.0) {
      throw EngineError(i, "available biomass with zero total demand");
    }

    // Per-PA increments; every new organ of a PA receives the same biomass.
    for (int pa = 1; pa <= rules.pa_max; ++pa) {
      const double share = demand.total > 0.0 ? q_prev / demand.total : 0.0;
      dq_needle[pa - 1] = p.sink_needle[pa - 1] * share;
      dq_internode[pa - 1] = p.sink_internode[pa - 1] * share;
      new_length[pa - 1] =
          apply_allometry(dq_internode[pa - 1], p.allometry_b[pa - 1], p.allometry_beta[pa - 1]);
    }

    const int ledger_begin = ledger_offsets.back();
    for (int idx = 0; idx < topo->count(); ++idx) {
      auto& cls = classes[idx];
      if (cls.key.birth_cycle > i) continue;
      const int pa = cls.key.pa;
      cls.needle_mass.push_back(dq_needle[pa - 1]);
      cls.internode_mass.push_back(dq_internode[pa - 1]);
      cls.length.push_back(new_length[pa - 1]);
      cls.ring_mass.push_back(0.0);
      ledger_rows.push_back({idx, dq_needle[pa - 1], dq_internode[pa - 1], 0.0});
    }
    ledger_offsets.push_back(static_cast<int>(ledger_rows.size()));

    // Foliage above every position, then the two ring denominators.
    if (p.pressler_mass_weighted) {
      detail::leaves_above_into(
          *topo, rules, i, p.needle_lifespan, p.pressler_counts_own_needles,
          [this](int idx, int rank) { return classes[idx].needle_mass[rank - 1]; }, arena);
    } else {
      detail::leaves_above_into(
          *topo, rules, i, p.needle_lifespan, p.pressler_counts_own_needles,
          [](int, int) { return 1.0; }, arena);
    }

    double d_pool = 0.0;
    double d_pressler = 0.0;
    for (int idx = 0; idx < topo->count(); ++idx) {
      const auto& cls = classes[idx];
      if (cls.key.birth_cycle > i) continue;
      const double prg = p.ring_density[cls.key.pa - 1];
      const double mult = static_cast<double>(cls.multiplicity);
      const double* above = arena.values.data() + arena.offsets[idx];
      const double* length = cls.length.data();
      double pool = 0.0;
      double pressler = 0.0;
      for (int r = 0; r < cls.metamer_count(); ++r) {
        const double w = prg * length[r];
        pool += w;
        pressler += above[r] * w;
      }
      d_pool += mult * pool;
      d_pressler += mult * pressler;
    }

    if (q_rg > 0.0) {
      if (!(d_pool > 0.0))
        throw EngineError(i, "ring biomass with no living internode length to receive it");
      const double lambda = p.lambda_pressler;
      const bool pressler_ok = d_pressler > 0.0;
      std::size_t row = ledger_begin;
      for (int idx = 0; idx < topo->count(); ++idx) {
        auto& cls = classes[idx];
        if (cls.key.birth_cycle > i) continue;
        const double prg = p.ring_density[cls.key.pa - 1];
        const double* above = arena.values.data() + arena.offsets[idx];
        double axis_sum = 0.0;
        for (int r = 0; r < cls.metamer_count(); ++r) {
          double share;
          if (pressler_ok)
            share = (1.0 - lambda) / d_pool + lambda * above[r] / d_pressler;
          else
            share = 1.0 / d_pool;
          const double increment = share * (prg * cls.length[r]) * q_rg;
          cls.ring_mass[r] += increment;
          axis_sum += increment;
        }
        ledger_rows[row].ring_axis_total = axis_sum;
        ++row;
      }
    }

    const double leaf_area = compute_leaf_area(classes, p, i);
    const double production = compute_production(leaf_area, p, i);
    records.push_back({i, production, leaf_area, d_org, demand.ring, demand.total, q_rg, d_pool,
                       d_pressler});
    q_prev = production;
    cycle = i;
  }
};

Simulator::Simulator(const ModelParameters& params, const OrganogenesisRules& rules)
    : Simulator(params, rules, nullptr, nullptr) {}

Simulator::Simulator(const ModelParameters& params, const OrganogenesisRules& rules,
                     std::shared_ptr<const StructureCounts> counts,
                     std::shared_ptr<const ClassTopology> topo) {
  if (!counts) counts = std::make_shared<StructureCounts>(build_counts(rules));
  if (!topo) topo = std::make_shared<ClassTopology>(ClassTopology::from_counts(*counts));
  impl_ = std::make_unique<Impl>(params, rules, std::move(counts), std::move(topo));
}

Simulator::~Simulator() = default;
Simulator::Simulator(Simulator&&) noexcept = default;
Simulator& Simulator::operator=(Simulator&&) noexcept = default;

void Simulator::step() { impl_->step(); }
int Simulator::cycle() const { return impl_->cycle; }
const std::vector<AxisClassState>& Simulator::classes() const { return impl_->classes; }
const std::vector<CycleRecord>& Simulator::records() const { return impl_->records; }
const std::vector<std::vector<LedgerRow>>& Simulator::ledger() const {
  auto& nested = impl_->ledger_nested;
  nested.clear();
  nested.reserve(impl_->records.size());
  for (std::size_t c = 0; c + 1 < impl_->ledger_offsets.size(); ++c) {
    nested.emplace_back(impl_->ledger_rows.begin() + impl_->ledger_offsets[c],
                        impl_->ledger_rows.begin() + impl_->ledger_offsets[c + 1]);
  }
  return nested;
}
void Simulator::reset(const ModelParameters& params) { impl_->reset(params); }

void Simulator::run_to_horizon() {
  while (impl_->cycle < impl_->rules.horizon) impl_->step();
}

SimulationTrace Simulator::run() {
  run_to_horizon();
  SimulationTrace trace;
  trace.params = impl_->p;
  trace.rules = impl_->rules;
  trace.cycles = impl_->records;
  trace.classes = impl_->classes;
  trace.ledger = ledger();
  return trace;
}

SimulationTrace simulate(const ModelParameters& params, const OrganogenesisRules& rules) {
  return Simulator(params, rules).run();
}

SimulationTrace simulate(const ModelParameters& params, const OrganogenesisRules& rules,
                         std::shared_ptr<const StructureCounts> counts,
                         std::shared_ptr<const ClassTopology> topo) {
  return Simulator(params, rules, std::move(counts), std::move(topo)).run();
}

bool SimulationTrace::needle_active(const AxisClassState& cls, int rank) const {
  return rules.horizon - cls.born_at(rank) < params.needle_lifespan;
}

namespace {

nlohmann::json cycle_to_json(const CycleRecord& c) {
  return {{"cycle", c.cycle},
          {"production", c.production},
          {"leaf_area", c.leaf_area},
          {"organ_demand", c.organ_demand},
          {"ring_demand", c.ring_demand},
          {"total_demand", c.total_demand},
          {"ring_allocation", c.ring_allocation},
          {"d_pool", c.d_pool},
          {"d_pressler", c.d_pressler}};
}

CycleRecord cycle_from_json(const nlohmann::json& j) {
  CycleRecord c;
  c.cycle = j.at("cycle").get<int>();
  c.production = j.at("production").get<double>();
  c.leaf_area = j.at("leaf_area").get<double>();
  c.organ_demand = j.at("organ_demand").get<double>();
  c.ring_demand = j.at("ring_demand").get<double>();
  c.total_demand = j.at("total_demand").get<double>();
  c.ring_allocation = j.at("ring_allocation").get<double>();
  c.d_pool = j.at("d_pool").get<double>();
  c.d_pressler = j.at("d_pressler").get<double>();
  return c;
}

}  // namespace

nlohmann::json SimulationTrace::to_json() const {
  nlohmann::json cycles_json = nlohmann::json::array();
  for (const auto& c : cycles) cycles_json.push_back(cycle_to_json(c));

  nlohmann::json classes_json = nlohmann::json::array();
  for (const auto& cls : classes) {
    classes_json.push_back({{"pa", cls.key.pa},
                            {"birth_cycle", cls.key.birth_cycle},
                            {"multiplicity", cls.multiplicity},
                            {"internode_mass", cls.internode_mass},
                            {"ring_mass", cls.ring_mass},
                            {"length", cls.length},
                            {"needle_mass", cls.needle_mass}});
  }

  nlohmann::json ledger_json = nlohmann::json::array();
  for (const auto& rows : ledger) {
    nlohmann::json cycle_rows = nlohmann::json::array();
    for (const auto& row : rows) {
      cycle_rows.push_back({{"class_index", row.class_index},
                            {"needle_per_organ", row.needle_per_organ},
                            {"internode_per_organ", row.internode_per_organ},
                            {"ring_axis_total", row.ring_axis_total}});
    }
    ledger_json.push_back(std::move(cycle_rows));
  }

  return {{"config", serialize_config(params, rules)},
          {"cycles", std::move(cycles_json)},
          {"classes", std::move(classes_json)},
          {"ledger", std::move(ledger_json)}};
}

SimulationTrace SimulationTrace::from_json(const nlohmann::json& doc) {
  SimulationTrace trace;
  auto [params, rules] = parse_config(doc.at("config"));
  trace.params = std::move(params);
  trace.rules = rules;
  for (const auto& j : doc.at("cycles")) trace.cycles.push_back(cycle_from_json(j));
  for (const auto& j : doc.at("classes")) {
    AxisClassState cls;
    cls.key.pa = j.at("pa").get<int>();
    cls.key.birth_cycle = j.at("birth_cycle").get<int>();
    cls.multiplicity = j.at("multiplicity").get<std::int64_t>();
    cls.internode_mass = j.at("internode_mass").get<std::vector<double>>();
    cls.ring_mass = j.at("ring_mass").get<std::vector<double>>();
    cls.length = j.at("length").get<std::vector<double>>();
    cls.needle_mass = j.at("needle_mass").get<std::vector<double>>();
    trace.classes.push_back(std::move(cls));
  }
  for (const auto& rows : doc.at("ledger")) {
    std::vector<LedgerRow> cycle_rows;
    for (const auto& j : rows) {
      LedgerRow row;
      row.class_index = j.at("class_index").get<int>();
      row.needle_per_organ = j.at("needle_per_organ").get<double>();
      row.internode_per_organ = j.at("internode_per_organ").get<double>();
      row.ring_axis_total = j.at("ring_axis_total").get<double>();
      cycle_rows.push_back(row);
    }
    trace.ledger.push_back(std::move(cycle_rows));
  }
  return trace;
}

}  // namespace fstm
