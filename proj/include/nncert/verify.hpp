#pragma once

// Robustness (largest output deviation over an input ball) and
// trustworthiness (smallest input perturbation reaching an output error)
// drivers. Each query splits into one MILP per output and sign.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "nncert/bnb.hpp"
#include "nncert/bounds.hpp"
#include "nncert/milp.hpp"
#include "nncert/nnmodel.hpp"

namespace nncert {

struct VerificationQuery {
  std::string id;
  Vector z_ref;
  Vector x_ref;
  Vector alpha;  // per-input radius, normalized units
  std::optional<double> beta;
  Vector scale;  // empty means all ones
  bool clip_to_domain = true;
  std::optional<double> delta_cap;

  /// Throws Error on dimension or range problems. Fills nothing in.
  void validate(std::size_t input_dim, std::size_t output_dim, bool need_alpha, bool need_beta) const;
  Vector scale_or_ones() const;
};

enum class TightenMode { Auto, On, Off };

struct VerifyOptions {
  BnbOptions bnb;
  TightenMode tighten = TightenMode::Auto;
  /// Auto tightens when more neurons than this are unstable.
  std::size_t tighten_threshold = 32;
  /// false leaves every hidden neuron as a binary (no stable fixing).
  bool fix_stable = true;
  std::size_t jobs = 1;
  /// Subproblems handed to a worker at a time; 0 means the output count.
  std::size_t cluster_size = 0;
  /// Use forward(z_ref) instead of the query's x_ref.
  bool reference_from_model = false;
  /// UNSAFE when nonzero: stability is taken from this many samples of the
  /// box instead of certified bounds. Results are then not certificates.
  std::size_t empirical_samples = 0;
  std::uint64_t seed = 1;
};

/// One MILP (an output and a sign).
struct Subresult {
  MilpStatus status = MilpStatus::Infeasible;
  bool failed = false;  // solver threw; error holds the message
  std::string error;
  std::optional<double> value;  // incumbent
  double bound = 0.0;
  double gap = 0.0;
  Vector witness;  // input point of the incumbent
  std::size_t nodes = 0;
  double seconds = 0.0;

  bool certified() const noexcept { return !failed && status == MilpStatus::Certified; }
};

struct OutputRobustness {
  std::string name;
  Subresult plus;   // max x_i - x_ref_i
  Subresult minus;  // max x_ref_i - x_i
  double dev_plus = 0.0;
  double dev_minus = 0.0;
  double R = 0.0;
  /// Sound upper bound on |x_i - x_ref_i| over the ball.
  double R_bound = 0.0;
  Vector witness;
  bool certified = false;
  double gap = 0.0;
};

struct RobustnessResult {
  std::string query_id;
  Vector x_ref;  // the reference actually used
  InputBox box;
  LayerBounds bounds;
  std::size_t unstable = 0;
  bool tightened = false;
  bool empirical = false;
  std::vector<OutputRobustness> outputs;
  double R_max = 0.0;  // joint infinity-norm deviation

  bool certified() const;
};

enum class TrustStatus { Found, NotFound, Uncertified };
const char* to_string(TrustStatus s) noexcept;

struct OutputTrust {
  std::string name;
  Subresult plus;
  Subresult minus;
  TrustStatus status = TrustStatus::NotFound;
  double delta_min = 0.0;  // Found, or best known when Uncertified
  double delta_lower = 0.0;  // proven lower bound on delta_min
  Vector witness;
  Sign sign = Sign::Plus;
  double delta_cap = 0.0;
};

struct TrustResult {
  std::string query_id;
  Vector x_ref;
  double beta = 0.0;
  Vector scale;
  double delta_cap = 0.0;
  InputBox box;
  std::size_t unstable = 0;
  bool empirical = false;
  std::vector<OutputTrust> outputs;
  std::optional<double> delta_min;  // min over Found outputs
};

RobustnessResult robustness(const FoldedNetwork& net, const VerificationQuery& q,
                            const VerifyOptions& opts = {});
TrustResult trustworthiness(const FoldedNetwork& net, const VerificationQuery& q,
                            const VerifyOptions& opts = {});

struct RobustnessBatch {
  std::vector<RobustnessResult> results;
  Vector R_max;  // per output, over queries
  std::vector<std::string> output_names;
  std::size_t uncertified = 0;  // subproblems that did not certify
};

/// Throws Error(InvalidArg) on an empty list. Result is independent of
/// opts.jobs and cluster_size.
RobustnessBatch robustness_batch(const FoldedNetwork& net, const std::vector<VerificationQuery>& qs,
                                 const VerifyOptions& opts = {});
std::vector<TrustResult> trust_batch(const FoldedNetwork& net, const std::vector<VerificationQuery>& qs,
                                     const VerifyOptions& opts = {});

struct Histogram {
  Vector edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max] of values (a single bin of width 0 when
/// all values coincide).
Histogram make_histogram(const Vector& values, std::size_t bins);

struct Comparison {
  Vector difference;  // R_i - T_i
  Histogram histogram;
  std::size_t positive = 0;  // outputs with difference > 0
};

Comparison compare_robustness_vs_test(const RobustnessBatch& agg, const Vector& T, std::size_t bins = 10);

/// Rows of `inputs` lying outside every query's alpha ball; such samples
/// fall outside the guarantee and are excluded from dominance claims.
std::vector<std::size_t> samples_outside_balls(const std::vector<VerificationQuery>& qs,
                                               const Matrix& inputs,
                                               const std::vector<std::size_t>& rows,
                                               double tol = 1e-12);

/// Perturbation in percent of the physical reference value: the largest
/// over inputs of 100 * delta * scale_j * (hi_j - lo_j) / |physical z_ref_j|.
/// Inputs whose physical reference is 0 use their range width instead.
double delta_percent(const std::vector<InputRange>& norm, const VerificationQuery& q, double delta);

}  // namespace nncert
