#include <doctest.h>

#include <cmath>
#include <random>

#include "fstm/engine.hpp"
#include "fstm/explicit_engine.hpp"
#include "test_support.hpp"

using namespace fstm;

TEST_CASE("production: zero leaf area, saturation, direct evaluation") {
  ModelParameters p;
  p.env_fill = 1.0;
  p.s_p = 3.04;
  p.r = 1.79;
  p.k_beer = 1.0;

  CHECK(compute_production(0.0, p, 1) == 0.0);

  // direct evaluation of the light-interception formula
  const double expected = 3.04 / 1.79 * (1.0 - std::exp(-1.0));
  CHECK(compute_production(3.04, p, 1) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(compute_production(3.04, p, 1) == doctest::Approx(1.0736).epsilon(2e-4));

  // saturates toward E * s_p / r
  CHECK(compute_production(1e6, p, 1) == doctest::Approx(3.04 / 1.79).epsilon(1e-12));

  // strictly increasing in leaf area, bounded by the asymptote
  double previous = 0.0;
  for (double s = 0.25; s <= 50.0; s += 0.25) {
    const double q = compute_production(s, p, 1);
    CHECK(q > previous);
    CHECK(q < 3.04 / 1.79);
    previous = q;
  }
}

TEST_CASE("leaf area: definitional ratio and lifespan rule") {
  ModelParameters p;
  p.slw = 100.0;
  p.needle_lifespan = 2;

  AxisClassState cls;
  cls.key = {1, 1};
  cls.multiplicity = 1;
  cls.needle_mass = {50.0};
  cls.internode_mass = {1.0};
  cls.ring_mass = {0.0};
  cls.length = {1.0};

  std::vector<AxisClassState> classes{cls};
  CHECK(compute_leaf_area(classes, p, 1) == 0.5);   // 50 g at 100 g/m^2
  CHECK(compute_leaf_area(classes, p, 2) == 0.5);   // still active at age 1
  CHECK(compute_leaf_area(classes, p, 3) == 0.0);   // born 3 cycles back: dead
  CHECK(compute_leaf_area({}, p, 1) == 0.0);
}

TEST_CASE("ring demand: explicit cases and the implicit root") {
  // with no supply-dependent term the demand is the constant sink, exactly
  CHECK(solve_ring_demand(1.0, 5.0, 0.7, 0.0).ring == 0.7);
  CHECK(solve_ring_demand(1.0, 5.0, 0.0, 0.0).ring == 0.0);
  CHECK(solve_ring_demand(0.0, 0.0, 0.0, 0.0).total == 0.0);

  const RingDemand d = solve_ring_demand(1.0, 1.0, 1.0, 1.0);
  CHECK(d.ring == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  // back-substitution into the defining relation on random inputs
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double d_org = u(rng), q = u(rng), p0 = u(rng) / 5.0, p1 = u(rng) / 10.0;
    const RingDemand rd = solve_ring_demand(d_org, q, p0, p1);
    if (rd.total == 0.0) continue;
    const double reconstructed = p0 + p1 * q / rd.total;
    CHECK(rd.ring == doctest::Approx(reconstructed).epsilon(1e-12));
    CHECK(rd.ring >= 0.0);
  }
}

TEST_CASE("allometry and the cylinder radius") {
  CHECK(apply_allometry(4.0, 2.0, 0.5) == 4.0);
  CHECK(apply_allometry(123.0, 2.0, 0.0) == 2.0);  // beta 0: constant length
  CHECK(apply_allometry(0.0, 2.0, 0.5) == 0.0);

  CHECK(radius_from_biomass(std::numbers::pi, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(radius_from_biomass(1.0, 0.0, 1.0) == 0.0);  // no length yet: report 0
}

TEST_CASE("ring split: uniform pool, pure Pressler, and the blended example") {
  // equal pool weights share equally at lambda 0
  const std::vector<RingPosition> equal{{1.0, 5.0}, {1.0, 0.0}};
  const auto uniform = allocate_rings(equal, 0.0, 1.0);
  CHECK(uniform[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(uniform[1] == doctest::Approx(0.5).epsilon(1e-15));

  // pure Pressler starves a position with no foliage above
  const auto pressler = allocate_rings(equal, 1.0, 1.0);
  CHECK(pressler[1] == 0.0);
  CHECK(pressler[0] == doctest::Approx(1.0).epsilon(1e-15));

  // blended worked example: hand evaluation of the share formula
  const std::vector<RingPosition> blended{{1.0, 2.0}, {1.0, 0.0}};
  const auto out = allocate_rings(blended, 0.4, 1.0);
  const double expected_a = ((1.0 - 0.4) / 2.0 + 0.4 * 2.0 / 2.0) * 1.0 * 1.0;
  const double expected_b = ((1.0 - 0.4) / 2.0) * 1.0 * 1.0;
  CHECK(out[0] == expected_a);
  CHECK(out[1] == expected_b);
  CHECK(out[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(out[0] + out[1] == doctest::Approx(1.0).epsilon(1e-15));

  // no foliage anywhere: the pool term takes everything, mass conserved
  const std::vector<RingPosition> bare{{1.0, 0.0}, {3.0, 0.0}};
  const auto fallback = allocate_rings(bare, 0.8, 2.0);
  CHECK(fallback[0] + fallback[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(fallback[1] == doctest::Approx(1.5).epsilon(1e-15));

  CHECK_THROWS_AS(allocate_rings(std::vector<RingPosition>{{0.0, 1.0}}, 0.5, 1.0),
                  std::invalid_argument);
}

TEST_CASE("single metamer holds the seed split by the organ sinks") {
  auto params = test::make_params(1);
  params.ring_sink_const = 0.0;
  params.ring_sink_slope = 0.0;
  params.seed_biomass = 1.0;
  const auto trace = simulate(params, test::make_rules(1, 0, 1));

  REQUIRE(trace.classes.size() == 1);
  const double pa = params.sink_needle[0];
  const double pe = params.sink_internode[0];
  CHECK(trace.classes[0].needle_mass[0] == doctest::Approx(pa / (pa + pe)).epsilon(1e-15));
  CHECK(trace.classes[0].internode_mass[0] == doctest::Approx(pe / (pa + pe)).epsilon(1e-15));
  CHECK(trace.classes[0].ring_mass[0] == 0.0);
}

TEST_CASE("bootstrapping: first-cycle needles produce for the second cycle") {
  const auto params = test::make_params(2);
  const auto trace = simulate(params, test::make_rules(2, 2, 6));
  CHECK(trace.cycles[0].leaf_area > 0.0);
  CHECK(trace.cycles[0].production > 0.0);
  for (const auto& c : trace.cycles) {
    CHECK(c.production > 0.0);
    CHECK(c.total_demand == doctest::Approx(c.organ_demand + c.ring_demand).epsilon(1e-15));
  }
}

TEST_CASE("mass balance and ring partition hold over a 10-cycle run") {
  const auto params = test::make_params(3);
  const auto trace = simulate(params, test::make_rules(3, 2, 10));
  CHECK(test::max_conservation_violation(trace) <= 1e-9);
  CHECK(test::max_ring_partition_violation(trace) <= 1e-12);
}

TEST_CASE("cumulative stem length never decreases") {
  auto [params, rules] = test::tree1_config();
  Simulator sim(params, rules);
  double previous = 0.0;
  for (int i = 0; i < rules.horizon; ++i) {
    sim.step();
    double total = 0.0;
    for (const double l : sim.classes()[0].length) total += l;
    CHECK(total >= previous);
    previous = total;
  }
  CHECK(previous > 0.0);
}

TEST_CASE("identical inputs give bit-identical traces") {
  auto [params, rules] = test::tree2_config();
  const auto a = simulate(params, rules);
  const auto b = simulate(params, rules);
  CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("trace JSON round trip") {
  const auto params = test::make_params(2);
  const auto trace = simulate(params, test::make_rules(2, 2, 5));
  const auto restored = SimulationTrace::from_json(trace.to_json());
  CHECK(restored.cycles == trace.cycles);
  REQUIRE(restored.classes.size() == trace.classes.size());
  for (std::size_t i = 0; i < trace.classes.size(); ++i) {
    CHECK(restored.classes[i].key == trace.classes[i].key);
    CHECK(restored.classes[i].internode_mass == trace.classes[i].internode_mass);
    CHECK(restored.classes[i].ring_mass == trace.classes[i].ring_mass);
    CHECK(restored.classes[i].needle_mass == trace.classes[i].needle_mass);
    CHECK(restored.classes[i].length == trace.classes[i].length);
  }
  CHECK(restored.ledger == trace.ledger);
}

TEST_CASE("factorized simulation equals the per-node reference") {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 15; ++trial) {
    auto [params, rules] = test::random_config(rng, 3, 8, 3);
    const auto factorized = simulate(params, rules);
    const auto reference = simulate_explicit(params, rules);
    CAPTURE(trial);
    CHECK(max_relative_deviation(factorized.classes, reference) <= 1e-9);
    REQUIRE(factorized.cycles.size() == reference.cycles.size());
    for (std::size_t c = 0; c < reference.cycles.size(); ++c) {
      CHECK(factorized.cycles[c].production ==
            doctest::Approx(reference.cycles[c].production).epsilon(1e-9));
      CHECK(factorized.cycles[c].ring_allocation ==
            doctest::Approx(reference.cycles[c].ring_allocation).epsilon(1e-9));
    }
  }
}

TEST_CASE("the engine's Pressler denominator matches the standalone foliage scan") {
  const auto params = test::make_params(3);
  const auto rules = test::make_rules(3, 2, 9);
  const auto trace = simulate(params, rules);
  const auto counts = build_counts(rules);
  const auto topo = ClassTopology::from_counts(counts);

  for (const int cycle : {3, 6, 9}) {
    const auto above = leaves_above(counts, rules, cycle, params.needle_lifespan);
    double d_pressler = 0.0;
    for (int idx = 0; idx < topo.count(); ++idx) {
      const auto key = topo.key(idx);
      if (key.birth_cycle > cycle) continue;
      const auto& cls = trace.classes[idx];
      const double mult = static_cast<double>(cls.multiplicity);
      for (int rank = 1; rank <= cycle - key.birth_cycle + 1; ++rank) {
        d_pressler += mult * above[idx][rank - 1] * params.ring_density[key.pa - 1] *
                      cls.length[rank - 1];
      }
    }
    CHECK(d_pressler ==
          doctest::Approx(trace.cycles[cycle - 1].d_pressler).epsilon(1e-12));
  }
}

TEST_CASE("mass-weighted foliage mode stays factorization-consistent") {
  auto params = test::make_params(2);
  params.pressler_mass_weighted = true;
  params.lambda_pressler = 0.7;
  const auto rules = test::make_rules(2, 3, 7);
  const auto factorized = simulate(params, rules);
  const auto reference = simulate_explicit(params, rules);
  CHECK(max_relative_deviation(factorized.classes, reference) <= 1e-9);
  CHECK(test::max_conservation_violation(factorized) <= 1e-9);
}
