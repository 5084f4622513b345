#include <cmath>
#include <sstream>

#include "doctest.h"
#include "nncert/bounds.hpp"
#include "nncert/milp.hpp"
#include "test_support.hpp"

using namespace nncert;
using nncert::testing::e1;
using nncert::testing::identity_net;
using nncert::testing::kind_of;
using nncert::testing::Rng;

namespace {

MilpProblem encode(const FoldedNetwork& net, const InputBox& box) {
  const auto b = propagate_bounds(net, box);
  return encode_network(net, b, classify_neurons(b), box);
}

// MILP optimum by trying every 0/1 assignment of the binaries.
std::optional<double> brute_force(const MilpProblem& p) {
  const auto bins = p.binaries();
  REQUIRE(bins.size() <= 12);
  std::optional<double> best;
  const bool maximize = p.objective.sense == ObjectiveSense::Maximize;
  for (std::size_t mask = 0; mask < (std::size_t{1} << bins.size()); ++mask) {
    BinaryFixing fix(p.vars.size(), kFree);
    for (std::size_t i = 0; i < bins.size(); ++i) fix[bins[i]] = (mask >> i) & 1;
    const auto s = solve_lp(p, fix);
    if (s.status != LpStatus::Optimal) continue;
    if (!best || (maximize ? s.objective > *best : s.objective < *best)) best = s.objective;
  }
  return best;
}

std::size_t relu_rows(const MilpProblem& p) {
  std::size_t n = 0;
  for (const auto& r : p.rows) {
    if (r.sense == RowSense::Eq) continue;
    for (std::size_t k = 0; k < r.index.size(); ++k)
      if (p.vars[r.index[k]].role == VarRole::Post) {
        ++n;
        break;
      }
  }
  return n;
}

}  // namespace

TEST_CASE("E1 on the unit box has two binaries and eight big-M rows") {
  const auto p = encode(e1(), InputBox::unit(2));
  CHECK(p.binary_count() == 2);
  CHECK(relu_rows(p) == 8);
  CHECK(p.input_vars.size() == 2);
  CHECK(p.output_vars.size() == 1);
}

TEST_CASE("big-M rows force the ReLU on either phase") {
  // h = relu(z) on z in [-1, 2].
  HiddenLayer h;
  h.w = Matrix(1, 1, 1.0);
  h.b = {0.0};
  h.bn = identity_bn(1);
  OutputLayer o;
  o.w = Matrix(1, 1, 1.0);
  o.b = {0.0};
  const auto net = fold_bn(make_spec(1, {h}, o));
  const InputBox box{{-1.0}, {2.0}};
  auto p = encode(net, box);
  REQUIRE(p.binary_count() == 1);
  const std::size_t r = p.binaries()[0];
  const std::size_t pre = p.pre_vars[0][0], post = p.post_vars[0][0];

  for (const double z : {-1.0, -0.3, 0.0, 0.7, 2.0}) {
    for (const int phase : {0, 1}) {
      BinaryFixing fix(p.vars.size(), kFree);
      fix[r] = static_cast<std::int8_t>(phase);
      // Pin the input and probe the feasible range of h.
      auto q = p;
      q.vars[p.input_vars[0]].lower = q.vars[p.input_vars[0]].upper = z;
      q.objective = {ObjectiveSense::Maximize, {post}, {1.0}, 0.0};
      const auto hi = solve_lp(q, fix);
      q.objective.sense = ObjectiveSense::Minimize;
      const auto lo = solve_lp(q, fix);
      const bool consistent = phase == 1 ? z >= 0.0 : z <= 0.0;
      if (!consistent) {
        CHECK(hi.status == LpStatus::Infeasible);
        continue;
      }
      REQUIRE(hi.status == LpStatus::Optimal);
      REQUIRE(lo.status == LpStatus::Optimal);
      const double expect = phase == 1 ? z : 0.0;
      CHECK(hi.objective == doctest::Approx(expect).epsilon(1e-9));
      CHECK(lo.objective == doctest::Approx(expect).epsilon(1e-9));
      CHECK(hi.x[pre] == doctest::Approx(z));
    }
  }
}

TEST_CASE("a network with every neuron active needs no binaries") {
  const auto p = encode(identity_net(), InputBox::unit(1));
  CHECK(p.binary_count() == 0);
  CHECK(relu_rows(p) == 0);
}

TEST_CASE("E1 with phase (1,1) fixed on [0.4,0.6]^2 maximizes to 0.45") {
  const auto net = e1();
  const InputBox box{{0.4, 0.4}, {0.6, 0.6}};
  const auto b = propagate_bounds(net, box);
  auto p = encode_network(net, b, StabilityMap::all_unstable(net), box);
  p = set_robustness_objective(std::move(p), 0, Sign::Plus, 0.0);
  BinaryFixing fix(p.vars.size(), kFree);
  for (const auto v : p.binaries()) fix[v] = 1;
  const auto s = solve_lp(p, fix);
  REQUIRE(s.status == LpStatus::Optimal);
  CHECK(s.objective == doctest::Approx(0.45).epsilon(1e-9));
  const auto z = input_point(p, s.x);
  CHECK(z[0] == doctest::Approx(0.6));
  CHECK(z[1] == doctest::Approx(0.4));
}

TEST_CASE("identity network robustness objective on the unit box") {
  const auto net = identity_net();
  const auto base = encode(net, InputBox::unit(1));
  const auto plus = set_robustness_objective(base, 0, Sign::Plus, 0.0);
  const auto minus = set_robustness_objective(base, 0, Sign::Minus, 0.0);
  CHECK(solve_lp(plus).objective == doctest::Approx(1.0));
  CHECK(solve_lp(minus).objective == doctest::Approx(0.0));
  CHECK(kind_of([&] { (void)set_robustness_objective(base, 1, Sign::Plus, 0.0); }) == ErrorKind::Index);
}

TEST_CASE("E1 trust subproblems") {
  const auto net = e1();
  const auto base = encode(net, InputBox::unit(2));
  const Vector z_ref{0.5, 0.5}, scale{1.0, 1.0};
  const double x_ref = forward(net, z_ref)[0];
  CHECK(x_ref == doctest::Approx(0.25));
  const auto plus = set_trust_problem(base, 0, Sign::Plus, 0.15, x_ref, z_ref, scale, 0.5);
  const auto minus = set_trust_problem(base, 0, Sign::Minus, 0.15, x_ref, z_ref, scale, 0.5);
  REQUIRE(plus.delta_var.has_value());
  CHECK(plus.objective.sense == ObjectiveSense::Minimize);
  CHECK(*brute_force(plus) == doctest::Approx(0.075).epsilon(1e-9));
  CHECK(*brute_force(minus) == doctest::Approx(0.15).epsilon(1e-9));

  CHECK(kind_of([&] { (void)set_trust_problem(base, 0, Sign::Plus, 0.0, x_ref, z_ref, scale, 0.5); }) ==
        ErrorKind::InvalidArg);
  CHECK(kind_of([&] { (void)set_trust_problem(base, 0, Sign::Plus, 0.1, x_ref, z_ref, scale, 0.0); }) ==
        ErrorKind::InvalidArg);
  CHECK(kind_of([&] { (void)set_trust_problem(base, 0, Sign::Plus, 0.1, x_ref, Vector{0.5}, scale, 0.5); }) ==
        ErrorKind::DimensionMismatch);
  CHECK(kind_of([&] { (void)set_trust_problem(plus, 0, Sign::Plus, 0.1, x_ref, z_ref, scale, 0.5); }) ==
        ErrorKind::InvalidArg);
}

TEST_CASE("unsatisfiable trust target is infeasible") {
  const auto net = e1();
  const auto base = encode(net, InputBox::unit(2));
  const Vector z_ref{0.5, 0.5}, scale{1.0, 1.0};
  // x never exceeds 1.25 on the unit box.
  const auto p = set_trust_problem(base, 0, Sign::Plus, 5.0, 0.25, z_ref, scale, 0.5);
  CHECK_FALSE(brute_force(p).has_value());
}

TEST_CASE("crossed bounds are rejected") {
  const auto net = e1();
  const auto box = InputBox::unit(2);
  auto b = propagate_bounds(net, box);
  b.lo[0][1] = b.hi[0][1] + 1.0;
  CHECK(kind_of([&] { (void)encode_network(net, b, StabilityMap::all_unstable(net), box); }) ==
        ErrorKind::UnsoundBounds);
}

TEST_CASE("lift_point reproduces the forward pass and respects every row") {
  Rng r(11);
  for (int t = 0; t < 40; ++t) {
    const auto net = fold_bn(nncert::testing::random_small_spec(r));
    const auto box = InputBox::unit(net.input_dim);
    const auto p = set_robustness_objective(encode(net, box), 0, Sign::Plus, 0.0);
    const auto z = r.vec(net.input_dim);
    const auto x = lift_point(p, net, z);
    REQUIRE(x.has_value());
    CHECK(max_violation(p, *x) <= 1e-9);
    CHECK(objective_value(p, *x) == doctest::Approx(forward(net, z)[0]).epsilon(1e-12));
    CHECK(input_point(p, *x) == z);
  }
}

TEST_CASE("lift_point rejects a point that misses the trust target") {
  const auto net = e1();
  const auto base = encode(net, InputBox::unit(2));
  const Vector z_ref{0.5, 0.5}, scale{1.0, 1.0};
  const auto p = set_trust_problem(base, 0, Sign::Plus, 0.15, 0.25, z_ref, scale, 0.5);
  CHECK_FALSE(lift_point(p, net, z_ref).has_value());
  const auto hit = lift_point(p, net, Vector{0.575, 0.425});
  REQUIRE(hit.has_value());
  CHECK(objective_value(p, *hit) == doctest::Approx(0.075));
}

TEST_CASE("LP relaxation bounds the MILP optimum on random networks") {
  Rng r(5);
  for (int t = 0; t < 60; ++t) {
    const auto net = fold_bn(nncert::testing::random_small_spec(r));
    const auto box = InputBox::unit(net.input_dim);
    const auto base = encode(net, box);
    if (base.binary_count() > 10) continue;
    for (const Sign s : {Sign::Plus, Sign::Minus}) {
      const auto p = set_robustness_objective(base, 0, s, 0.1);
      const auto exact = brute_force(p);
      REQUIRE(exact.has_value());
      const auto relax = solve_lp(p);
      REQUIRE(relax.status == LpStatus::Optimal);
      CHECK(relax.objective >= *exact - 1e-7 * (1.0 + std::abs(*exact)));
      // Any sampled input is no better than the optimum.
      const auto z = r.vec(net.input_dim);
      CHECK(sign_value(s) * (forward(net, z)[0] - 0.1) <= *exact + 1e-9);
    }
  }
}

TEST_CASE("LP text output names every part of the problem") {
  const auto p = set_robustness_objective(encode(e1(), InputBox::unit(2)), 0, Sign::Plus, 0.0);
  std::ostringstream out;
  write_lp_format(p, out);
  const auto text = out.str();
  CHECK(text.find("Maximize") != std::string::npos);
  CHECK(text.find("Subject To") != std::string::npos);
  CHECK(text.find("Bounds") != std::string::npos);
  CHECK(text.find("Binaries") != std::string::npos);
  CHECK(text.find("End") != std::string::npos);
  for (std::size_t v = 0; v < p.vars.size(); ++v) CHECK(text.find(variable_name(p, v)) != std::string::npos);
}
