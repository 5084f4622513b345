#pragma once

// Synthetic regression data, minibatch SGD with batch normalization, and
// held-out error evaluation.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nncert/linalg.hpp"
#include "nncert/nnmodel.hpp"

namespace nncert {

enum class Split { Train, Test };

struct Dataset {
  Matrix inputs;   // S x N0, stored (possibly perturbed) inputs in [0,1]
  Matrix targets;  // S x M
  std::vector<std::size_t> train;  // ascending row indices
  std::vector<std::size_t> test;
  // Only present for generated data; never serialized.
  std::optional<Matrix> clean_inputs;
  std::optional<FoldedNetwork> truth;

  std::size_t size() const noexcept { return inputs.rows(); }
  std::size_t input_dim() const noexcept { return inputs.cols(); }
  std::size_t output_dim() const noexcept { return targets.cols(); }
  const std::vector<std::size_t>& rows(Split s) const { return s == Split::Train ? train : test; }
  /// Throws Error on range, shape or split violations.
  void validate() const;
};

struct TrainConfig {
  std::vector<std::size_t> widths{16};  // hidden layer widths, K = size
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double eta = 0.99;  // running-statistics momentum
  std::uint64_t seed = 1;
  double bn_eps = 1e-5;
  double data_noise = 0.0;  // used by gen-data only

  void validate() const;
};

struct BnLayerStats {
  Vector mu;
  Vector var;
};

struct BnRunningStats {
  std::vector<BnLayerStats> layers;
};

/// Ground truth is a random one-hidden-layer ReLU network of width 8.
/// Targets are computed from the clean inputs; the stored inputs carry
/// uniform noise in [-noise, noise] and are clipped to [0,1].
Dataset gen_synthetic(std::size_t n0, std::size_t m, std::size_t s, double noise,
                      std::uint64_t seed);

/// mu' = eta mu + (1-eta) mean, var' = eta var + (1-eta) (mean(b^2) - mean(b)^2).
/// batch is B x N with B >= 2.
BnLayerStats update_bn_stats(const BnLayerStats& stats, const Matrix& batch, double eta);

struct TrainDiagnostics {
  std::vector<double> epoch_loss;  // mean training-mode loss per epoch
  double final_train_mse = 0.0;    // inference-mode MSE on the train split
  /// Post-ReLU activations of each hidden layer in the last batch.
  std::vector<Matrix> last_batch_activations;
  std::size_t steps = 0;
};

/// Throws Error(Divergence) when the loss turns non-finite.
NetworkSpec train(const Dataset& ds, const TrainConfig& cfg, TrainDiagnostics* diag = nullptr);

/// Per-output max absolute error over the split.
Vector evaluate(const FoldedNetwork& net, const Dataset& ds, Split split);

/// Mean squared error over the split and all outputs.
double mse(const FoldedNetwork& net, const Dataset& ds, Split split);

std::string save_dataset_csv(const Dataset& ds);
Dataset load_dataset_csv(std::string_view text);
void save_dataset_file(const Dataset& ds, const std::string& path);
Dataset load_dataset_file(const std::string& path);

/// JSON object with any of: widths, epochs, batch_size, learning_rate,
/// eta, seed, bn_eps, data_noise. Missing keys keep their defaults.
TrainConfig parse_train_config(std::string_view json_text, TrainConfig base = {});

}  // namespace nncert
