#include <doctest.h>

#include <random>

#include "fstm/structure.hpp"
#include "test_support.hpp"

using namespace fstm;

TEST_CASE("unbranched axis: one class, one internode per cycle") {
  const auto counts = build_counts(test::make_rules(1, 0, 7));
  CHECK(counts.total_internodes() == 7);
  CHECK(counts.multiplicity(1, 1) == 1);
  for (int i = 1; i <= 7; ++i) {
    CHECK(counts.new_organs(1, i) == 1);
    CHECK(counts.living_internodes(1, i) == i);
  }
  CHECK(ClassTopology::from_counts(counts).count() == 1);
}

TEST_CASE("two-PA tree matches the hand enumeration") {
  // stem of 3; two laterals born at cycle 2 (2 metamers each) and two at
  // cycle 3 (1 metamer each): 3 + 4 + 2 = 9 internodes.
  const auto counts = build_counts(test::make_rules(2, 2, 3));
  CHECK(counts.total_internodes() == 9);
  CHECK(counts.multiplicity(2, 2) == 2);
  CHECK(counts.multiplicity(2, 3) == 2);
  CHECK(counts.new_organs(1, 1) == 1);
  CHECK(counts.new_organs(1, 2) == 1);
  CHECK(counts.new_organs(1, 3) == 1);
  CHECK(counts.new_organs(2, 2) == 2);
  CHECK(counts.new_organs(2, 3) == 4);
}

TEST_CASE("explicit expansion of a path") {
  const auto tree = expand_explicit(test::make_rules(1, 0, 4));
  REQUIRE(tree.nodes.size() == 4);
  CHECK(tree.axes.size() == 1);
  CHECK(tree.nodes[0].parent == -1);
  for (int n = 1; n < 4; ++n) {
    CHECK(tree.nodes[n].parent == n - 1);
    CHECK(tree.nodes[n].rank == n + 1);
  }
}

TEST_CASE("explicit expansion of the 9-metamer tree") {
  const auto tree = expand_explicit(test::make_rules(2, 2, 3));
  CHECK(tree.nodes.size() == 9);
  CHECK(tree.axes.size() == 5);  // stem + 4 laterals
  int laterals = 0;
  for (const auto& axis : tree.axes)
    if (axis.bearer_node >= 0) ++laterals;
  CHECK(laterals == 4);
  // lateral axes open one cycle after their bearer metamer
  for (const auto& axis : tree.axes) {
    if (axis.bearer_node < 0) continue;
    CHECK(axis.birth_cycle == tree.nodes[axis.bearer_node].birth_cycle + 1);
  }
}

TEST_CASE("expansion refuses over the node cap without allocating") {
  const auto rules = test::make_rules(3, 3, 12);
  const auto projected = build_counts(rules).total_internodes();
  try {
    expand_explicit(rules, 100);
    FAIL("expected NodeCapError");
  } catch (const NodeCapError& e) {
    CHECK(e.projected_nodes == projected);
    CHECK(e.cap == 100);
  }
}

TEST_CASE("count_from_explicit censuses the 9-metamer tree") {
  const auto tree = expand_explicit(test::make_rules(2, 2, 3));
  const auto counts = count_from_explicit(tree);
  CHECK(counts.new_organs(1, 1) == 1);
  CHECK(counts.new_organs(1, 2) == 1);
  CHECK(counts.new_organs(1, 3) == 1);
  CHECK(counts.new_organs(2, 2) == 2);
  CHECK(counts.new_organs(2, 3) == 4);
}

TEST_CASE("count_from_explicit on a single node") {
  const auto tree = expand_explicit(test::make_rules(1, 0, 1));
  const auto counts = count_from_explicit(tree);
  CHECK(counts.total_internodes() == 1);
  CHECK(counts.new_organs(1, 1) == 1);
}

TEST_CASE("factorized counts equal the explicit census on random rule sets") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    auto [params, rules] = test::random_config(rng, 3, 8, 3);
    (void)params;
    const auto factorized = build_counts(rules);
    const auto explicit_counts = count_from_explicit(expand_explicit(rules));
    CAPTURE(rules.pa_max);
    CAPTURE(rules.horizon);
    CHECK(factorized == explicit_counts);
  }
}

TEST_CASE("leaves above a terminal metamer are its own needles") {
  const auto counts = build_counts(test::make_rules(1, 0, 3));
  const auto rules = test::make_rules(1, 0, 3);
  const auto above = leaves_above(counts, rules, 3, /*lifespan=*/99);
  REQUIRE(above.size() == 1);
  REQUIRE(above[0].size() == 3);
  CHECK(above[0][2] == 1.0);  // top metamer: nothing above but itself
  CHECK(above[0][1] == 2.0);
  CHECK(above[0][0] == 3.0);  // suffix sums down the axis
}

TEST_CASE("leaves above on the branched tree, all needles active") {
  const auto rules = test::make_rules(2, 2, 3);
  const auto above = leaves_above(build_counts(rules), rules, 3, /*lifespan=*/99);
  // stem rank 1 sees its own 3 cohorts plus both whorls: 3 + 2*2 + 2*1 = 9
  CHECK(above[0][0] == 9.0);
  CHECK(above[0][1] == 4.0);  // cohorts 2,3 plus the cycle-3 whorl
  CHECK(above[0][2] == 1.0);
}

TEST_CASE("needle lifespan removes old cohorts from the count") {
  const auto rules = test::make_rules(2, 2, 3);
  const auto above = leaves_above(build_counts(rules), rules, 3, /*lifespan=*/2);
  // the stem cohort of cycle 1 is no longer active at cycle 3
  CHECK(above[0][0] == 8.0);
}

TEST_CASE("factorized foliage counts equal the explicit traversal everywhere") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    auto [params, rules] = test::random_config(rng, 3, 7, 3);
    (void)params;
    const auto counts = build_counts(rules);
    const auto tree = expand_explicit(rules);
    const auto topo = ClassTopology::from_counts(counts);
    for (const int lifespan : {1, 2, 99}) {
      for (const bool include_own : {true, false}) {
        for (int cycle = 1; cycle <= rules.horizon; ++cycle) {
          const auto factorized = leaves_above(counts, rules, cycle, lifespan, include_own);
          const auto per_node = leaves_above_nodes(tree, cycle, lifespan, include_own);
          for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
            const auto& node = tree.nodes[n];
            if (node.birth_cycle > cycle) continue;
            const int idx =
                topo.index_of(node.pa, tree.axes[node.axis].birth_cycle);
            REQUIRE(idx >= 0);
            CAPTURE(cycle);
            CAPTURE(lifespan);
            CAPTURE(include_own);
            CHECK(factorized[idx][node.rank - 1] == per_node[n]);
          }
        }
      }
    }
  }
}

TEST_CASE("factorization advantage grows with the horizon") {
  double previous = 0.0;
  for (const int horizon : {5, 10, 15, 20}) {
    const auto rules = test::make_rules(4, 2, horizon);
    const auto counts = build_counts(rules);
    const auto topo = ClassTopology::from_counts(counts);
    std::int64_t positions = 0;
    for (int idx = 0; idx < topo.count(); ++idx)
      positions += horizon - topo.key(idx).birth_cycle + 1;
    const double ratio =
        static_cast<double>(counts.total_internodes()) / static_cast<double>(positions);
    CHECK(ratio > previous);
    previous = ratio;
  }
}
