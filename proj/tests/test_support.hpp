#pragma once

// Fixtures and random generators shared by the unit and acceptance tests.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "nncert/error.hpp"
#include "nncert/nnmodel.hpp"

namespace nncert::testing {

/// Two inputs, two hidden ReLUs, one output:
///   h1 = relu(z1 - z2), h2 = relu(0.5 z1 + 0.5 z2 - 0.25), x = h1 + h2.
inline NetworkSpec e1_spec() {
  HiddenLayer h;
  h.w = Matrix(2, 2);
  h.w(0, 0) = 1.0;
  h.w(0, 1) = -1.0;
  h.w(1, 0) = 0.5;
  h.w(1, 1) = 0.5;
  h.b = {0.0, -0.25};
  h.bn = identity_bn(2);
  OutputLayer o;
  o.w = Matrix(1, 2, 1.0);
  o.b = {0.0};
  return make_spec(2, {h}, o);
}

inline FoldedNetwork e1() { return fold_bn(e1_spec()); }

/// x = z on a single input (one always-on ReLU).
inline FoldedNetwork identity_net() {
  HiddenLayer h;
  h.w = Matrix(1, 1, 1.0);
  h.b = {0.0};
  h.bn = identity_bn(1);
  OutputLayer o;
  o.w = Matrix(1, 1, 1.0);
  o.b = {0.0};
  return fold_bn(make_spec(1, {h}, o));
}

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
  }
  Vector vec(std::size_t n, double lo = 0.0, double hi = 1.0) {
    Vector v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
};

/// Random network with real BN parameters (variances away from zero so the
/// folded weights stay moderate).
inline NetworkSpec random_spec(Rng& r, std::size_t n0, const std::vector<std::size_t>& widths, std::size_t m) {
  std::vector<HiddenLayer> hidden;
  std::size_t prev = n0;
  for (std::size_t w : widths) {
    HiddenLayer h;
    h.w = Matrix(w, prev);
    for (std::size_t i = 0; i < w; ++i)
      for (std::size_t j = 0; j < prev; ++j) h.w(i, j) = r.uniform(-1.0, 1.0);
    h.b = r.vec(w, -0.5, 0.5);
    h.bn.gamma = r.vec(w, 0.5, 1.5);
    h.bn.beta = r.vec(w, -0.3, 0.3);
    h.bn.mu = r.vec(w, 0.0, 0.5);
    h.bn.var = r.vec(w, 0.05, 1.0);
    h.bn.eps = 1e-5;
    hidden.push_back(std::move(h));
    prev = w;
  }
  OutputLayer o;
  o.w = Matrix(m, prev);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < prev; ++j) o.w(i, j) = r.uniform(-1.0, 1.0);
  o.b = r.vec(m, -0.5, 0.5);
  return make_spec(n0, std::move(hidden), std::move(o));
}

/// Small shape drawn at random: N0 <= 3, K <= 2, widths <= 6, M <= 2.
inline NetworkSpec random_small_spec(Rng& r) {
  const std::size_t n0 = r.index(1, 3), k = r.index(1, 2), m = r.index(1, 2);
  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i < k; ++i) widths.push_back(r.index(1, 6));
  return random_spec(r, n0, widths, m);
}

/// Kind of the Error thrown by f, or nullopt if it returns normally.
inline std::optional<ErrorKind> kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline std::string temp_dir() {
  const char* env = std::getenv("NNCERT_TMP");
  std::filesystem::path p = env ? env : std::filesystem::temp_directory_path() / "nncert_tests";
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string temp_path(const std::string& name) { return temp_dir() + "/" + name; }

}  // namespace nncert::testing
