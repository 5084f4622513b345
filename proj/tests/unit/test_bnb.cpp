#include <cmath>
#include <vector>

#include "doctest.h"
#include "nncert/bnb.hpp"
#include "nncert/bounds.hpp"
#include "nncert/oracle.hpp"
#include "test_support.hpp"

using namespace nncert;
using nncert::testing::e1;
using nncert::testing::identity_net;
using nncert::testing::Rng;

namespace {

MilpProblem encode(const FoldedNetwork& net, const InputBox& box) {
  const auto b = propagate_bounds(net, box);
  return encode_network(net, b, classify_neurons(b), box);
}

MilpResult solve(const MilpProblem& p, const FoldedNetwork& net, BnbOptions opts = {}) {
  return solve_milp(p, opts, forward_heuristic(p, net));
}

}  // namespace

TEST_CASE("zero binaries solve as a single LP") {
  const auto net = identity_net();
  const auto p = set_robustness_objective(encode(net, InputBox::unit(1)), 0, Sign::Plus, 0.25);
  const auto r = solve(p, net);
  CHECK(r.status == MilpStatus::Certified);
  CHECK(r.nodes == 1);
  CHECK(*r.incumbent == doctest::Approx(0.75));
  CHECK(r.gap <= 1e-8);
}

TEST_CASE("E1 robustness and trust subproblems") {
  const auto net = e1();
  SUBCASE("max deviation on [0.4,0.6]^2") {
    const auto p = set_robustness_objective(encode(net, InputBox{{0.4, 0.4}, {0.6, 0.6}}), 0, Sign::Plus, 0.25);
    const auto r = solve(p, net);
    REQUIRE(r.status == MilpStatus::Certified);
    CHECK(*r.incumbent == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(r.bound >= *r.incumbent);
    const auto z = input_point(p, r.point);
    CHECK(forward(net, z)[0] - 0.25 == doctest::Approx(0.2).epsilon(1e-9));
  }
  SUBCASE("trust, sign minus, beta 0.15") {
    const Vector z_ref{0.5, 0.5}, scale{1.0, 1.0};
    const auto p = set_trust_problem(encode(net, InputBox::unit(2)), 0, Sign::Minus, 0.15, 0.25, z_ref, scale, 0.5);
    const auto r = solve(p, net);
    REQUIRE(r.status == MilpStatus::Certified);
    CHECK(*r.incumbent == doctest::Approx(0.15).epsilon(1e-9));
    CHECK(r.bound <= *r.incumbent);
    // The witness must actually reach the target.
    const auto z = input_point(p, r.point);
    CHECK(0.25 - forward(net, z)[0] >= 0.15 - 1e-7);
  }
}

TEST_CASE("certified values match exhaustive enumeration on random networks") {
  Rng r(99);
  int checked = 0;
  for (int t = 0; t < 120; ++t) {
    const auto net = fold_bn(nncert::testing::random_small_spec(r));
    const auto box = InputBox::ball(r.vec(net.input_dim), r.vec(net.input_dim, 0.05, 0.5), true);
    const auto base = encode(net, box);
    const std::size_t out = r.index(0, net.output_dim() - 1);
    const Sign s = t % 2 ? Sign::Plus : Sign::Minus;
    const double x_ref = r.uniform(-0.5, 0.5);
    const auto p = set_robustness_objective(base, out, s, x_ref);
    BnbOptions opts;
    opts.branch_rule = t % 3 ? BranchRule::EarliestLayerMostFractional : BranchRule::MostFractional;
    const auto res = solve(p, net, opts);
    const auto exact = oracle::pattern_enumerate_opt(net, box, oracle::ObjectiveSpec::robustness(out, s, x_ref));
    REQUIRE(exact.feasible);
    REQUIRE(res.status == MilpStatus::Certified);
    CHECK(*res.incumbent == doctest::Approx(exact.value).epsilon(1e-6));
    CHECK(std::abs(*res.incumbent - exact.value) <= 1e-6);
    ++checked;
  }
  CHECK(checked == 120);
}

TEST_CASE("trace brackets the optimum and the global bound never rises") {
  Rng r(4);
  for (int t = 0; t < 30; ++t) {
    const auto net = fold_bn(nncert::testing::random_spec(r, 2, {6, 5}, 1));
    const auto box = InputBox::unit(2);
    const auto p = set_robustness_objective(encode(net, box), 0, Sign::Plus, 0.0);
    std::vector<BnbTraceRow> rows;
    BnbOptions opts;
    opts.trace = [&](const BnbTraceRow& row) { rows.push_back(row); };
    const auto res = solve(p, net, opts);
    const auto exact = oracle::pattern_enumerate_opt(net, box, oracle::ObjectiveSpec::robustness(0, Sign::Plus, 0.0));
    REQUIRE(res.status == MilpStatus::Certified);
    REQUIRE_FALSE(rows.empty());
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& row : rows) {
      CHECK(row.global_bound >= exact.value - 1e-7);
      if (!std::isnan(row.incumbent)) CHECK(row.incumbent <= exact.value + 1e-7);
      CHECK(row.global_bound <= prev + 1e-9);
      prev = row.global_bound;
      const bool known = row.action == "branch" || row.action == "integral" || row.action == "prune-infeasible" ||
                         row.action == "prune-bound";
      CHECK(known);
    }
  }
}

TEST_CASE("the oracle argmax stays feasible in exactly one child of the root") {
  Rng r(17);
  for (int t = 0; t < 20; ++t) {
    const auto net = fold_bn(nncert::testing::random_spec(r, 2, {5}, 1));
    const auto box = InputBox::unit(2);
    const auto p = set_robustness_objective(encode(net, box), 0, Sign::Plus, 0.0);
    if (p.binary_count() == 0) continue;
    const auto exact = oracle::pattern_enumerate_opt(net, box, oracle::ObjectiveSpec::robustness(0, Sign::Plus, 0.0));
    const auto full = lift_point(p, net, exact.argopt);
    REQUIRE(full.has_value());
    const std::size_t b = p.binaries()[0];
    int feasible_children = 0;
    for (const double v : {0.0, 1.0}) {
      auto x = *full;
      x[b] = v;
      if (max_violation(p, x) <= 1e-9) ++feasible_children;
    }
    // A neuron sitting exactly at zero satisfies both phases.
    const double pre = (*full)[p.pre_vars[0][p.vars[b].neuron]];
    if (std::abs(pre) > 1e-9) CHECK(feasible_children == 1);
    else CHECK(feasible_children >= 1);
  }
}

TEST_CASE("limits report an honest bracket") {
  Rng r(3);
  const auto net = fold_bn(nncert::testing::random_spec(r, 3, {12, 12}, 1));
  const auto box = InputBox::unit(3);
  const auto p = set_robustness_objective(encode(net, box), 0, Sign::Plus, 0.0);
  REQUIRE(p.binary_count() > 4);
  BnbOptions opts;
  opts.node_limit = 2;
  const auto limited = solve(p, net, opts);
  const auto full = solve(p, net);
  REQUIRE(full.status == MilpStatus::Certified);
  if (limited.status == MilpStatus::Certified) {
    CHECK(*limited.incumbent == doctest::Approx(*full.incumbent).epsilon(1e-6));
  } else {
    CHECK((limited.status == MilpStatus::GapLimit || limited.status == MilpStatus::Limit));
    CHECK(limited.bound >= *full.incumbent - 1e-7);
    if (limited.incumbent) CHECK(*limited.incumbent <= *full.incumbent + 1e-7);
  }
  CHECK(limited.nodes <= 2);

  BnbOptions timed;
  timed.time_limit_seconds = 0.0;
  const auto t0 = solve(p, net, timed);
  CHECK(t0.status == MilpStatus::Limit);
  CHECK(t0.nodes == 0);
}

TEST_CASE("unreachable trust target is Infeasible") {
  const auto net = e1();
  const Vector z_ref{0.5, 0.5}, scale{1.0, 1.0};
  const auto p = set_trust_problem(encode(net, InputBox::unit(2)), 0, Sign::Plus, 5.0, 0.25, z_ref, scale, 0.5);
  const auto r = solve(p, net);
  CHECK(r.status == MilpStatus::Infeasible);
  CHECK_FALSE(r.incumbent.has_value());
}

TEST_CASE("the search also works without a heuristic") {
  const auto net = e1();
  const auto p = set_robustness_objective(encode(net, InputBox::unit(2)), 0, Sign::Plus, 0.0);
  const auto r = solve_milp(p);
  REQUIRE(r.status == MilpStatus::Certified);
  CHECK(*r.incumbent == doctest::Approx(1.25).epsilon(1e-9));
  CHECK(std::string(to_string(r.status)) == "certified");
}
