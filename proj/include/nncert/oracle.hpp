#pragma once

// Ground-truth engines for checking the MILP path: exhaustive enumeration
// of ReLU phase patterns (exact, tiny networks only) and sampling (a
// one-sided bound at any size). Both work directly from the folded network
// and share no encoding code with the big-M formulation.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "nncert/bounds.hpp"
#include "nncert/milp.hpp"
#include "nncert/nnmodel.hpp"
#include "nncert/simplex.hpp"

namespace nncert::oracle {

enum class ObjectiveKind { Robustness, Trust };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::Robustness;
  std::size_t output = 0;
  Sign sign = Sign::Plus;
  double x_ref = 0.0;
  // Trust only.
  double beta = 0.0;
  Vector z_ref;
  Vector scale;
  double delta_cap = 0.0;

  static ObjectiveSpec robustness(std::size_t output, Sign sign, double x_ref);
  static ObjectiveSpec trust(std::size_t output, Sign sign, double beta, double x_ref,
                             std::span<const double> z_ref, std::span<const double> scale,
                             double delta_cap);

  /// Robustness maximizes sign * (x_i - x_ref); trust minimizes delta.
  bool maximize() const noexcept { return kind == ObjectiveKind::Robustness; }
};

struct OracleResult {
  bool feasible = false;
  double value = 0.0;
  Vector argopt;  // input point attaining value
  std::size_t unstable = 0;
  std::size_t patterns = 0;
  std::size_t feasible_patterns = 0;
};

/// Exact optimum over the box (trust problems additionally keep z in [0,1]
/// and within the delta ball). Throws Error(TooManyUnstable) above
/// max_unstable undecided neurons.
OracleResult pattern_enumerate_opt(const FoldedNetwork& net, const InputBox& box,
                                   const ObjectiveSpec& spec, std::size_t max_unstable = 16,
                                   const SimplexOptions& lp = {});

struct SampleResult {
  bool found = false;  // trust: some sample reached the target
  double value = 0.0;  // lower bound (maximize) / upper bound (minimize)
  Vector point;
  std::size_t evaluated = 0;
};

/// Shifted Halton points plus every box corner when the input dimension is
/// at most 12. Deterministic per seed.
SampleResult sample_bound(const FoldedNetwork& net, const InputBox& box, const ObjectiveSpec& spec,
                          std::size_t n, std::uint64_t seed);

/// Objective at z: the signed deviation, or for trust the delta needed to
/// reach z (nullopt if z misses the target or leaves the delta cap by
/// more than tol).
std::optional<double> evaluate(const FoldedNetwork& net, const ObjectiveSpec& spec,
                               std::span<const double> z, double tol = 0.0);

}  // namespace nncert::oracle
