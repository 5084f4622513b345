#include <cmath>

#include "doctest.h"
#include "nncert/error.hpp"
#include "nncert/trainer.hpp"
#include "test_support.hpp"

using namespace nncert;
using nncert::testing::kind_of;
using nncert::testing::Rng;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> v) {
  Matrix m(v.size(), v.begin()->size());
  std::size_t r = 0;
  for (const auto& row : v) {
    std::size_t c = 0;
    for (double x : row) m(r, c++) = x;
    ++r;
  }
  return m;
}

// Two-loop reference for the per-output max absolute error.
Vector naive_T(const FoldedNetwork& net, const Dataset& ds, const std::vector<std::size_t>& idx) {
  Vector t(ds.output_dim(), 0.0);
  for (std::size_t i : idx) {
    Vector z(ds.inputs.row(i).begin(), ds.inputs.row(i).end());
    Vector x = forward(net, z);
    for (std::size_t o = 0; o < t.size(); ++o) {
      double e = x[o] - ds.targets(i, o);
      if (e < 0) e = -e;
      if (e > t[o]) t[o] = e;
    }
  }
  return t;
}

}  // namespace

TEST_CASE("running statistics follow the momentum update") {
  BnLayerStats s{{0.0}, {0.0}};
  // batch {0, 2}: mean 1, mean of squares 2
  BnLayerStats u = update_bn_stats(s, rows({{0.0}, {2.0}}), 0.9);
  CHECK(u.mu[0] == doctest::Approx(0.1));
  CHECK(u.var[0] == doctest::Approx(0.1));

  BnLayerStats keep{{0.3, -1.0}, {0.7, 2.0}};
  BnLayerStats same = update_bn_stats(keep, rows({{5, 6}, {7, 8}, {9, -1}}), 1.0);
  CHECK(same.mu == keep.mu);
  CHECK(same.var == keep.var);

  BnLayerStats last = update_bn_stats(keep, rows({{1, 2}, {3, 2}}), 0.0);
  CHECK(last.mu[0] == 2.0);
  CHECK(last.var[0] == 1.0);
  CHECK(last.var[1] == 0.0);

  CHECK(kind_of([&] { update_bn_stats(keep, rows({{1, 2}}), 0.5); }) == ErrorKind::InvalidArg);
}

TEST_CASE("running variance stays nonnegative") {
  Rng r(4);
  BnLayerStats s{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.5}};
  for (int rep = 0; rep < 200; ++rep) {
    Matrix b(r.index(2, 6), 3);
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < 3; ++j) b(i, j) = j == 1 ? 0.1 : r.uniform(-5, 5);
    s = update_bn_stats(s, b, r.uniform(0, 1));
    for (double v : s.var) CHECK(v >= 0.0);
  }
}

TEST_CASE("gen_synthetic: split, determinism, noise bound") {
  Dataset a = gen_synthetic(3, 2, 100, 0.0, 9);
  CHECK(a.train.size() == 80);
  CHECK(a.test.size() == 20);
  a.validate();
  Dataset b = gen_synthetic(3, 2, 100, 0.0, 9);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  CHECK(a.train == b.train);
  // noise 0: inputs lie exactly on the ground truth's graph
  for (std::size_t i = 0; i < a.size(); ++i) {
    Vector x = forward(*a.truth, a.inputs.row(i));
    for (std::size_t o = 0; o < 2; ++o) CHECK(x[o] == a.targets(i, o));
  }

  Dataset n = gen_synthetic(3, 2, 200, 0.05, 9);
  double worst = 0.0;
  for (std::size_t i = 0; i < n.inputs.rows() * 3; ++i)
    worst = std::max(worst, std::abs(n.inputs.data()[i] - n.clean_inputs->data()[i]));
  CHECK(worst <= 0.05);
  CHECK(worst > 0.0);
  CHECK(kind_of([] { gen_synthetic(3, 2, 9, 0.0, 1); }) == ErrorKind::InvalidArg);
  CHECK(kind_of([] { gen_synthetic(0, 2, 50, 0.0, 1); }) == ErrorKind::InvalidArg);
  CHECK(kind_of([] { gen_synthetic(1, 1, 50, -0.1, 1); }) == ErrorKind::InvalidArg);
}

TEST_CASE("dataset CSV round-trip") {
  Dataset a = gen_synthetic(2, 3, 40, 0.02, 5);
  Dataset b = load_dataset_csv(save_dataset_csv(a));
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(kind_of([] { load_dataset_csv("z_1,x_1,split\n0.5,1,validation\n"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { load_dataset_csv("z_1,x_1,split\n1.5,1,train\n"); }) == ErrorKind::InvalidValue);
  CHECK(kind_of([] { load_dataset_csv("a,b\n"); }) == ErrorKind::Parse);
}

TEST_CASE("training is deterministic and fits a realizable target") {
  Dataset ds = gen_synthetic(2, 1, 400, 0.0, 21);
  TrainConfig cfg;
  cfg.widths = {16};
  cfg.epochs = 300;
  cfg.learning_rate = 0.05;
  cfg.seed = 3;
  TrainDiagnostics d1, d2;
  NetworkSpec a = train(ds, cfg, &d1);
  NetworkSpec b = train(ds, cfg, &d2);
  CHECK(a == b);
  CHECK(std::isfinite(d1.final_train_mse));
  CHECK(d1.final_train_mse <= 1e-3);
  CHECK(d1.epoch_loss.size() == 300);
  CHECK(mse(fold_bn(a), ds, Split::Train) == d1.final_train_mse);
}

TEST_CASE("eta = 0 stores the last batch statistics") {
  Dataset ds = gen_synthetic(2, 1, 50, 0.0, 2);
  TrainConfig cfg;
  cfg.widths = {4, 3};
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.eta = 0.0;
  TrainDiagnostics d;
  NetworkSpec s = train(ds, cfg, &d);
  REQUIRE(d.last_batch_activations.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    const Matrix& b = d.last_batch_activations[k];
    for (std::size_t c = 0; c < b.cols(); ++c) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t r = 0; r < b.rows(); ++r) {
        s1 += b(r, c);
        s2 += b(r, c) * b(r, c);
      }
      const double mean = s1 / double(b.rows());
      CHECK(s.hidden[k].bn.mu[c] == mean);
      CHECK(s.hidden[k].bn.var[c] == std::max(s2 / double(b.rows()) - mean * mean, 0.0));
    }
  }
}

TEST_CASE("training rejects bad configs and reports divergence") {
  Dataset ds = gen_synthetic(2, 1, 50, 0.0, 2);
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK(kind_of([&] { train(ds, cfg); }) == ErrorKind::InvalidArg);
  cfg.batch_size = 8;
  cfg.eta = 1.0;
  CHECK(kind_of([&] { train(ds, cfg); }) == ErrorKind::InvalidArg);
  cfg.eta = 0.9;
  cfg.learning_rate = 1e6;
  cfg.epochs = 50;
  CHECK(kind_of([&] { train(ds, cfg); }) == ErrorKind::Divergence);
}

TEST_CASE("evaluate: exact fit, single sample, naive recomputation, union") {
  Dataset ds = gen_synthetic(3, 2, 60, 0.0, 8);
  Vector zero = evaluate(*ds.truth, ds, Split::Test);
  CHECK(zero == Vector{0.0, 0.0});

  Rng r(2);
  FoldedNetwork net = fold_bn(nncert::testing::random_spec(r, 3, {5}, 2));
  CHECK(evaluate(net, ds, Split::Test) == naive_T(net, ds, ds.test));
  CHECK(evaluate(net, ds, Split::Train) == naive_T(net, ds, ds.train));

  Dataset one = ds;
  one.test = {ds.test.front()};
  one.train.clear();
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (i != one.test[0]) one.train.push_back(i);
  Vector x = forward(net, ds.inputs.row(one.test[0]));
  Vector t1 = evaluate(net, one, Split::Test);
  CHECK(t1[0] == std::abs(x[0] - ds.targets(one.test[0], 0)));

  // T over train u test is the elementwise max of the two.
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Vector tu = naive_T(net, ds, all), ta = evaluate(net, ds, Split::Train), tb = evaluate(net, ds, Split::Test);
  for (std::size_t o = 0; o < 2; ++o) CHECK(tu[o] == std::max(ta[o], tb[o]));

  FoldedNetwork wrong = fold_bn(nncert::testing::random_spec(r, 2, {5}, 2));
  CHECK(kind_of([&] { evaluate(wrong, ds, Split::Test); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("train config JSON") {
  TrainConfig c = parse_train_config(R"({"widths":[30,30],"eta":0.5,"batch_size":16})");
  CHECK(c.widths == std::vector<std::size_t>{30, 30});
  CHECK(c.eta == 0.5);
  CHECK(c.batch_size == 16);
  CHECK(c.epochs == TrainConfig{}.epochs);
  CHECK(kind_of([] { parse_train_config(R"({"eta":1.5})"); }) == ErrorKind::InvalidArg);
  CHECK(kind_of([] { parse_train_config("[1]"); }) == ErrorKind::Parse);
}
