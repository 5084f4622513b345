#pragma once

// Big-M MILP encoding of a folded ReLU network plus the robustness and
// trustworthiness query layers placed on top of it.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nncert/bounds.hpp"
#include "nncert/nnmodel.hpp"
#include "nncert/simplex.hpp"

namespace nncert {

enum class VarKind { Continuous, Binary };
enum class VarRole { Input, Pre, Post, Binary, Output, Delta };
enum class ObjectiveSense { Maximize, Minimize };

/// Which side of |x_i - x_ref_i| a subproblem works on.
enum class Sign { Plus, Minus };
inline double sign_value(Sign s) noexcept { return s == Sign::Plus ? 1.0 : -1.0; }

struct MilpVariable {
  double lower = 0.0;
  double upper = 0.0;
  VarKind kind = VarKind::Continuous;
  VarRole role = VarRole::Input;
  std::size_t layer = 0;   // hidden layer for Pre/Post/Binary
  std::size_t neuron = 0;  // neuron, input or output index
};

struct MilpObjective {
  ObjectiveSense sense = ObjectiveSense::Maximize;
  std::vector<std::size_t> index;
  std::vector<double> value;
  double offset = 0.0;
};

/// Data needed to rebuild delta for a candidate input point.
struct TrustShape {
  Vector z_ref;
  Vector scale;
};

struct MilpProblem {
  std::vector<MilpVariable> vars;
  std::vector<LinearRow> rows;
  MilpObjective objective;

  std::vector<std::size_t> input_vars;
  std::vector<std::size_t> output_vars;
  std::vector<std::vector<std::size_t>> pre_vars;
  std::vector<std::vector<std::size_t>> post_vars;
  std::vector<std::vector<std::optional<std::size_t>>> binary_vars;
  std::optional<std::size_t> delta_var;
  std::optional<TrustShape> trust;

  std::size_t add_var(const MilpVariable& v);
  std::size_t binary_count() const;
  /// Binary variable indices, ordered by layer then neuron.
  std::vector<std::size_t> binaries() const;
};

/// Per-variable override used for LP relaxations: kFree relaxes a binary to
/// [0,1], 0 or 1 fixes it. An empty span relaxes every binary.
constexpr std::int8_t kFree = -1;
using BinaryFixing = std::vector<std::int8_t>;

/// Affine equalities for every layer, big-M rows for unstable
/// neurons, h = pre for Active and h = 0 for Dead neurons. Throws
/// UnsoundBounds if any lo > hi.
MilpProblem encode_network(const FoldedNetwork& net, const LayerBounds& bounds,
                           const StabilityMap& stability, const InputBox& box);

/// Maximize sign * (x_i - x_ref_i); x_ref enters as the objective offset.
MilpProblem set_robustness_objective(MilpProblem p, std::size_t output, Sign sign, double x_ref);

/// Adds delta in [0, delta_cap] with |z_j - z_ref_j| <= delta * scale_j and
/// sign * (x_i - x_ref_i) >= beta; minimizes delta.
MilpProblem set_trust_problem(MilpProblem p, std::size_t output, Sign sign, double beta,
                              double x_ref, std::span<const double> z_ref,
                              std::span<const double> scale, double delta_cap);

LinearProgram to_linear_program(const MilpProblem& p, std::span<const std::int8_t> fixing = {});

LpSolution solve_lp(const MilpProblem& p, std::span<const std::int8_t> fixing = {},
                    const SimplexOptions& opts = {});

double objective_value(const MilpProblem& p, std::span<const double> x);

/// Largest violation of any row or variable bound (binaries are not
/// checked for integrality).
double max_violation(const MilpProblem& p, std::span<const double> x);

/// Completes an input point into a full assignment by forward evaluation.
/// Returns nullopt if the result violates any row by more than tol (e.g. a
/// trust target row that z does not reach).
std::optional<Vector> lift_point(const MilpProblem& p, const FoldedNetwork& net,
                                 std::span<const double> z, double tol = 1e-7);

/// Input coordinates of a full assignment.
Vector input_point(const MilpProblem& p, std::span<const double> x);

std::string variable_name(const MilpProblem& p, std::size_t var);

/// CPLEX LP text format (objective, constraints, bounds, binaries).
void write_lp_format(const MilpProblem& p, std::ostream& out);

}  // namespace nncert
