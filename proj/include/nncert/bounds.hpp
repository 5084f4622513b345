#pragma once

// Pre-activation interval bounds, neuron stability classification and
// optional LP-based tightening of those intervals.

#include <cstddef>
#include <span>
#include <vector>

#include "nncert/linalg.hpp"
#include "nncert/nnmodel.hpp"
#include "nncert/simplex.hpp"

namespace nncert {

/// Axis-aligned input region. Verification boxes normally sit inside the
/// unit cube; unclipped balls used for oracle comparisons may not.
struct InputBox {
  Vector lo;
  Vector hi;

  static InputBox unit(std::size_t dim);
  /// [z_ref - alpha, z_ref + alpha], intersected with [0,1] when clip is set.
  static InputBox ball(std::span<const double> z_ref, std::span<const double> alpha, bool clip);

  std::size_t dim() const noexcept { return lo.size(); }
  bool contains(std::span<const double> z, double tol = 0.0) const;
  bool within_unit() const;
  /// lo <= hi elementwise, finite; throws Error otherwise.
  void validate() const;
};

/// Interval bounds per layer. Index k < K holds the hidden pre-activations
/// of layer k, index K the network outputs.
struct LayerBounds {
  std::vector<Vector> lo;
  std::vector<Vector> hi;

  std::size_t layer_count() const noexcept { return lo.size(); }
  bool contains(const LayerBounds& inner, double tol = 0.0) const;
};

enum class Stability { Active, Dead, Unstable };

struct StabilityMap {
  std::vector<std::vector<Stability>> layers;  // hidden layers only

  std::size_t count(Stability s) const;
  std::size_t unstable() const { return count(Stability::Unstable); }
  static StabilityMap all_unstable(const FoldedNetwork& net);
};

/// Interval arithmetic through the folded network: each layer maps the
/// previous post-ReLU box [max(lo,0), max(hi,0)] through A x + c.
LayerBounds propagate_bounds(const FoldedNetwork& net, const InputBox& box);

/// Active iff lo >= 0 (so lo = hi = 0 is Active), Dead iff hi <= 0.
StabilityMap classify_neurons(const LayerBounds& bounds);

struct TightenOptions {
  SimplexOptions lp;
};

/// Per-neuron LP tightening in layer order. Each neuron's interval is
/// intersected with the max/min of its pre-activation over the LP
/// relaxation of the earlier layers, so the result is a subset of `bounds`.
/// A failed LP keeps the neuron's incoming interval.
LayerBounds lp_tighten(const FoldedNetwork& net, const InputBox& box, const LayerBounds& bounds,
                       const TightenOptions& opts = {});

/// UNSAFE: classifies neurons from observed activations instead of
/// certified bounds. Results built on it are not certificates.
StabilityMap classify_empirical(const FoldedNetwork& net, std::span<const Vector> samples);

}  // namespace nncert
