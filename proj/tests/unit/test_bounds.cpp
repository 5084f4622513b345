#include <cmath>

#include "doctest.h"
#include "nncert/bounds.hpp"
#include "test_support.hpp"

using namespace nncert;
using nncert::testing::e1;
using nncert::testing::kind_of;
using nncert::testing::Rng;

namespace {

// Exact per-neuron range of a single hidden layer over a box: the
// pre-activation is affine in z, so its extremes sit at box corners.
std::pair<double, double> affine_range(const FoldedNetwork& net, std::size_t n, const InputBox& box) {
  double lo = net.layers[0].c[n], hi = lo;
  for (std::size_t j = 0; j < net.input_dim; ++j) {
    const double a = net.layers[0].a(n, j);
    lo += std::min(a * box.lo[j], a * box.hi[j]);
    hi += std::max(a * box.lo[j], a * box.hi[j]);
  }
  return {lo, hi};
}

LayerBounds single(double lo, double hi) {
  LayerBounds b;
  b.lo = {{lo}, {0.0}};
  b.hi = {{hi}, {0.0}};
  return b;
}

}  // namespace

TEST_CASE("E1 interval bounds") {
  const auto net = e1();
  SUBCASE("unit box") {
    const auto b = propagate_bounds(net, InputBox::unit(2));
    REQUIRE(b.layer_count() == 2);
    CHECK(b.lo[0][0] == doctest::Approx(-1.0));
    CHECK(b.hi[0][0] == doctest::Approx(1.0));
    CHECK(b.lo[0][1] == doctest::Approx(-0.25));
    CHECK(b.hi[0][1] == doctest::Approx(0.75));
    CHECK(classify_neurons(b).unstable() == 2);
  }
  SUBCASE("[0.4,0.6]^2") {
    const auto b = propagate_bounds(net, InputBox{{0.4, 0.4}, {0.6, 0.6}});
    CHECK(b.lo[0][0] == doctest::Approx(-0.2));
    CHECK(b.hi[0][0] == doctest::Approx(0.2));
    CHECK(b.lo[0][1] == doctest::Approx(0.15));
    CHECK(b.hi[0][1] == doctest::Approx(0.35));
    const auto s = classify_neurons(b);
    CHECK(s.layers[0][0] == Stability::Unstable);
    CHECK(s.layers[0][1] == Stability::Active);
    // Output: h1 in [0,0.2], h2 in [0.15,0.35].
    CHECK(b.lo[1][0] == doctest::Approx(0.15));
    CHECK(b.hi[1][0] == doctest::Approx(0.55));
  }
}

TEST_CASE("classification of single intervals") {
  CHECK(classify_neurons(single(0.1, 2.0)).layers[0][0] == Stability::Active);
  CHECK(classify_neurons(single(-2.0, -0.1)).layers[0][0] == Stability::Dead);
  CHECK(classify_neurons(single(-1.0, 2.0)).layers[0][0] == Stability::Unstable);
  CHECK(classify_neurons(single(0.0, 0.0)).layers[0][0] == Stability::Active);
  CHECK(classify_neurons(single(0.0, 1.0)).layers[0][0] == Stability::Active);
  CHECK(classify_neurons(single(-1.0, 0.0)).layers[0][0] == Stability::Dead);
}

TEST_CASE("input box construction and validation") {
  const Vector z{0.05, 0.5};
  const auto clipped = InputBox::ball(z, Vector{0.1, 0.1}, true);
  CHECK(clipped.lo[0] == 0.0);
  CHECK(clipped.hi[0] == doctest::Approx(0.15));
  CHECK(clipped.within_unit());
  const auto raw = InputBox::ball(z, Vector{0.1, 0.1}, false);
  CHECK(raw.lo[0] == doctest::Approx(-0.05));
  CHECK_FALSE(raw.within_unit());
  CHECK(kind_of([] { InputBox{{0.5}, {0.4}}.validate(); }).has_value());
  CHECK(kind_of([] { InputBox{{0.0}, {NAN}}.validate(); }).has_value());
}

TEST_CASE("interval bounds contain every sampled pre-activation") {
  Rng r(21);
  for (int t = 0; t < 100; ++t) {
    const auto net = fold_bn(nncert::testing::random_small_spec(r));
    const auto c = r.vec(net.input_dim);
    const auto a = r.vec(net.input_dim, 0.0, 0.3);
    const auto box = InputBox::ball(c, a, true);
    const auto b = propagate_bounds(net, box);
    const auto tight = lp_tighten(net, box, b);
    CHECK(b.contains(tight));
    for (int s = 0; s < 200; ++s) {
      Vector z(net.input_dim);
      for (std::size_t j = 0; j < z.size(); ++j) z[j] = r.uniform(box.lo[j], box.hi[j]);
      const auto pre = pre_activations(net, z);
      for (std::size_t k = 0; k < pre.size(); ++k)
        for (std::size_t n = 0; n < pre[k].size(); ++n) {
          CHECK(pre[k][n] >= b.lo[k][n] - 1e-9);
          CHECK(pre[k][n] <= b.hi[k][n] + 1e-9);
          CHECK(pre[k][n] >= tight.lo[k][n] - 1e-7);
          CHECK(pre[k][n] <= tight.hi[k][n] + 1e-7);
        }
    }
  }
}

TEST_CASE("LP tightening is exact for a single hidden layer") {
  Rng r(8);
  for (int t = 0; t < 30; ++t) {
    const auto net = fold_bn(nncert::testing::random_spec(r, r.index(1, 3), {r.index(1, 6)}, 1));
    const auto box = InputBox::ball(r.vec(net.input_dim), r.vec(net.input_dim, 0.0, 0.4), true);
    const auto b = propagate_bounds(net, box);
    const auto tight = lp_tighten(net, box, b);
    for (std::size_t n = 0; n < net.layers[0].c.size(); ++n) {
      const auto [lo, hi] = affine_range(net, n, box);
      CHECK(b.lo[0][n] == doctest::Approx(lo).epsilon(1e-12));
      CHECK(b.hi[0][n] == doctest::Approx(hi).epsilon(1e-12));
      CHECK(tight.lo[0][n] == doctest::Approx(lo).epsilon(1e-9));
      CHECK(tight.hi[0][n] == doctest::Approx(hi).epsilon(1e-9));
    }
  }
}

TEST_CASE("bounds are monotone in the box") {
  Rng r(31);
  for (int t = 0; t < 50; ++t) {
    const auto net = fold_bn(nncert::testing::random_small_spec(r));
    const auto c = r.vec(net.input_dim);
    const auto a = r.vec(net.input_dim, 0.01, 0.2);
    Vector a2 = a;
    for (auto& v : a2) v *= 1.5;
    const auto small = propagate_bounds(net, InputBox::ball(c, a, true));
    const auto big = propagate_bounds(net, InputBox::ball(c, a2, true));
    CHECK(big.contains(small, 1e-12));
    CHECK(classify_neurons(big).unstable() >= classify_neurons(small).unstable());
  }
}

TEST_CASE("empirical classification") {
  const auto net = e1();
  CHECK(kind_of([&] { (void)classify_empirical(net, std::vector<Vector>{}); }) == ErrorKind::InvalidArg);
  // Samples with z1 >= z2 keep neuron 1 active; z1 + z2 >= 0.5 keeps neuron 2 active.
  const std::vector<Vector> pts{{0.6, 0.4}, {0.9, 0.1}, {0.7, 0.7}};
  const auto s = classify_empirical(net, pts);
  CHECK(s.layers[0][0] == Stability::Active);
  CHECK(s.layers[0][1] == Stability::Active);
  const std::vector<Vector> dead{{0.1, 0.2}, {0.0, 0.3}};
  CHECK(classify_empirical(net, dead).layers[0] == std::vector<Stability>{Stability::Dead, Stability::Dead});
}

TEST_CASE("dimension mismatch is reported") {
  CHECK(kind_of([] { (void)propagate_bounds(e1(), InputBox::unit(3)); }) == ErrorKind::DimensionMismatch);
}
