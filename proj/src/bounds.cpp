#include "nncert/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nncert/error.hpp"
#include "nncert/kernels.hpp"
#include "nncert/milp.hpp"

namespace nncert {

InputBox InputBox::unit(std::size_t dim) { return {Vector(dim, 0.0), Vector(dim, 1.0)}; }

InputBox InputBox::ball(std::span<const double> z_ref, std::span<const double> alpha, bool clip) {
  if (z_ref.size() != alpha.size())
    throw Error(ErrorKind::DimensionMismatch, "alpha must have one entry per input");
  InputBox box{Vector(z_ref.size()), Vector(z_ref.size())};
  for (std::size_t j = 0; j < z_ref.size(); ++j) {
    if (!(alpha[j] >= 0.0) || !std::isfinite(alpha[j]))
      throw Error(ErrorKind::InvalidArg, "alpha must be finite and >= 0");
    box.lo[j] = z_ref[j] - alpha[j];
    box.hi[j] = z_ref[j] + alpha[j];
    if (clip) {
      box.lo[j] = std::max(box.lo[j], 0.0);
      box.hi[j] = std::min(box.hi[j], 1.0);
    }
  }
  box.validate();
  return box;
}

bool InputBox::contains(std::span<const double> z, double tol) const {
  if (z.size() != lo.size()) return false;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (z[j] < lo[j] - tol || z[j] > hi[j] + tol) return false;
  return true;
}

bool InputBox::within_unit() const {
  for (std::size_t j = 0; j < lo.size(); ++j)
    if (lo[j] < 0.0 || hi[j] > 1.0) return false;
  return true;
}

void InputBox::validate() const {
  if (lo.size() != hi.size()) throw Error(ErrorKind::DimensionMismatch, "box lo/hi lengths differ");
  for (std::size_t j = 0; j < lo.size(); ++j) {
    if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]))
      throw Error(ErrorKind::InvalidValue, "box bounds must be finite");
    if (lo[j] > hi[j])
      throw Error(ErrorKind::InvalidValue, "box has lo > hi at input " + std::to_string(j));
  }
}

bool LayerBounds::contains(const LayerBounds& inner, double tol) const {
  if (inner.layer_count() != layer_count()) return false;
  for (std::size_t k = 0; k < lo.size(); ++k) {
    if (inner.lo[k].size() != lo[k].size()) return false;
    for (std::size_t n = 0; n < lo[k].size(); ++n)
      if (inner.lo[k][n] < lo[k][n] - tol || inner.hi[k][n] > hi[k][n] + tol) return false;
  }
  return true;
}

std::size_t StabilityMap::count(Stability s) const {
  std::size_t c = 0;
  for (const auto& layer : layers) c += static_cast<std::size_t>(std::count(layer.begin(), layer.end(), s));
  return c;
}

StabilityMap StabilityMap::all_unstable(const FoldedNetwork& net) {
  StabilityMap m;
  for (std::size_t k = 0; k < net.hidden_count(); ++k)
    m.layers.emplace_back(net.width(k), Stability::Unstable);
  return m;
}

LayerBounds propagate_bounds(const FoldedNetwork& net, const InputBox& box) {
  validate(net);
  box.validate();
  if (box.dim() != net.input_dim)
    throw Error(ErrorKind::DimensionMismatch, "box dimension differs from the network input");
  LayerBounds out;
  Vector lo = box.lo;
  Vector hi = box.hi;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    Vector pre_lo(layer.c.size());
    Vector pre_hi(layer.c.size());
    kernels::interval_affine(layer.a, lo, hi, layer.c, pre_lo, pre_hi);
    out.lo.push_back(pre_lo);
    out.hi.push_back(pre_hi);
    kernels::relu(pre_lo);
    kernels::relu(pre_hi);
    lo = std::move(pre_lo);
    hi = std::move(pre_hi);
  }
  return out;
}

StabilityMap classify_neurons(const LayerBounds& bounds) {
  StabilityMap m;
  const std::size_t hidden = bounds.layer_count() == 0 ? 0 : bounds.layer_count() - 1;
  for (std::size_t k = 0; k < hidden; ++k) {
    std::vector<Stability> layer(bounds.lo[k].size());
    for (std::size_t n = 0; n < layer.size(); ++n) {
      if (bounds.lo[k][n] >= 0.0)
        layer[n] = Stability::Active;
      else if (bounds.hi[k][n] <= 0.0)
        layer[n] = Stability::Dead;
      else
        layer[n] = Stability::Unstable;
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

LayerBounds lp_tighten(const FoldedNetwork& net, const InputBox& box, const LayerBounds& bounds,
                       const TightenOptions& opts) {
  validate(net);
  if (bounds.layer_count() != net.layers.size())
    throw Error(ErrorKind::DimensionMismatch, "bounds do not match the network depth");
  LayerBounds out = bounds;

  // Layer 0 is an affine image of the box, so its interval is already exact.
  for (std::size_t k = 1; k < net.layers.size(); ++k) {
    FoldedNetwork prefix;
    prefix.input_dim = net.input_dim;
    prefix.layers.assign(net.layers.begin(), net.layers.begin() + static_cast<std::ptrdiff_t>(k + 1));
    LayerBounds prefix_bounds;
    prefix_bounds.lo.assign(out.lo.begin(), out.lo.begin() + static_cast<std::ptrdiff_t>(k + 1));
    prefix_bounds.hi.assign(out.hi.begin(), out.hi.begin() + static_cast<std::ptrdiff_t>(k + 1));
    const MilpProblem base =
        encode_network(prefix, prefix_bounds, classify_neurons(prefix_bounds), box);

    for (std::size_t n = 0; n < net.width(k); ++n) {
      for (Sign sign : {Sign::Plus, Sign::Minus}) {
        const MilpProblem p = set_robustness_objective(base, n, sign, 0.0);
        LpSolution sol;
        try {
          sol = solve_lp(p, {}, opts.lp);
        } catch (const Error&) {
          continue;
        }
        if (sol.status != LpStatus::Optimal) continue;
        const double v = sign_value(sign) * sol.objective;
        const double pad = 1e-9 * (1.0 + std::abs(v));
        if (sign == Sign::Plus)
          out.hi[k][n] = std::min(out.hi[k][n], v + pad);
        else
          out.lo[k][n] = std::max(out.lo[k][n], v - pad);
      }
      if (out.lo[k][n] > out.hi[k][n]) {
        // Padding cannot cover this; keep the incoming interval.
        out.lo[k][n] = bounds.lo[k][n];
        out.hi[k][n] = bounds.hi[k][n];
      }
    }
  }
  return out;
}

StabilityMap classify_empirical(const FoldedNetwork& net, std::span<const Vector> samples) {
  validate(net);
  if (samples.empty()) throw Error(ErrorKind::InvalidArg, "empirical classification needs samples");
  const std::size_t hidden = net.hidden_count();
  std::vector<Vector> lo(hidden), hi(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    lo[k].assign(net.width(k), std::numeric_limits<double>::infinity());
    hi[k].assign(net.width(k), -std::numeric_limits<double>::infinity());
  }
  for (const auto& z : samples) {
    const auto pre = pre_activations(net, z);
    for (std::size_t k = 0; k < hidden; ++k)
      for (std::size_t n = 0; n < pre[k].size(); ++n) {
        lo[k][n] = std::min(lo[k][n], pre[k][n]);
        hi[k][n] = std::max(hi[k][n], pre[k][n]);
      }
  }
  LayerBounds observed{lo, hi};
  observed.lo.emplace_back();
  observed.hi.emplace_back();
  return classify_neurons(observed);
}

}  // namespace nncert
