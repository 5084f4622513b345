#pragma once

// Network representation: the serialized network with per-layer batch
// normalization, and the BN-free folded form every verification runs on.
//
// Layer order follows the trained model: affine -> ReLU -> BN for each
// hidden layer, then a plain affine output layer.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nncert/linalg.hpp"

namespace nncert {

struct BatchNormParams {
  Vector gamma;
  Vector beta;
  Vector mu;
  Vector var;
  double eps = 1e-5;

  friend bool operator==(const BatchNormParams&, const BatchNormParams&) = default;
};

struct HiddenLayer {
  Matrix w;  // N_k x N_{k-1}
  Vector b;
  BatchNormParams bn;

  friend bool operator==(const HiddenLayer&, const HiddenLayer&) = default;
};

struct OutputLayer {
  Matrix w;  // M x N_K
  Vector b;

  friend bool operator==(const OutputLayer&, const OutputLayer&) = default;
};

/// Physical range of one input; the network sees (v - lo) / (hi - lo).
struct InputRange {
  double lo = 0.0;
  double hi = 1.0;

  friend bool operator==(const InputRange&, const InputRange&) = default;
};

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<HiddenLayer> hidden;
  OutputLayer output;
  std::vector<InputRange> input_norm;
  std::vector<std::string> output_names;

  std::size_t output_dim() const noexcept { return output.b.size(); }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct AffineLayer {
  Matrix a;
  Vector c;
};

/// Alternating affine maps and ReLU. layers[0..K-1] are followed by ReLU,
/// layers[K] produces the outputs directly.
struct FoldedNetwork {
  std::size_t input_dim = 0;
  std::vector<AffineLayer> layers;
  std::vector<std::string> output_names;

  std::size_t hidden_count() const noexcept { return layers.empty() ? 0 : layers.size() - 1; }
  std::size_t output_dim() const noexcept { return layers.empty() ? 0 : layers.back().c.size(); }
  std::size_t width(std::size_t k) const { return layers.at(k).c.size(); }
};

/// Checks every structural and numeric invariant; throws Error on failure.
void validate(const NetworkSpec& spec);
void validate(const FoldedNetwork& net);

NetworkSpec load_network(std::string_view text);
NetworkSpec load_network_file(const std::string& path);
/// JSON with every number written at 17 significant digits.
std::string save_network(const NetworkSpec& spec);
void save_network_file(const NetworkSpec& spec, const std::string& path);

FoldedNetwork fold_bn(const NetworkSpec& spec);

/// Inputs are expected in [0,1]; out-of-range points are evaluated anyway
/// (a single warning is written to stderr per process).
Vector forward(const FoldedNetwork& net, std::span<const double> z);

/// Evaluates the unfolded affine -> ReLU -> BN chain directly.
Vector forward(const NetworkSpec& spec, std::span<const double> z);

/// Pre-activations of every layer (hidden layers then output) at z.
std::vector<Vector> pre_activations(const FoldedNetwork& net, std::span<const double> z);

/// Product of the induced infinity-norms of the affine maps: a Lipschitz
/// constant of forward() w.r.t. the infinity norm.
double lipschitz_bound(const FoldedNetwork& net);

/// Fills input_norm with [0,1] ranges and output_names with x_1..x_M.
NetworkSpec make_spec(std::size_t input_dim, std::vector<HiddenLayer> hidden, OutputLayer output);

/// gamma = 1, beta = 0, mu = 0, var = 1 - eps.
BatchNormParams identity_bn(std::size_t width, double eps = 1e-5);

}  // namespace nncert
