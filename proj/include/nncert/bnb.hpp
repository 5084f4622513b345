#pragma once

// Best-first branch-and-bound over the ReLU phase binaries of a MilpProblem.

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>

#include "nncert/milp.hpp"
#include "nncert/simplex.hpp"

namespace nncert {

enum class BranchRule { EarliestLayerMostFractional, MostFractional };

struct BnbTraceRow {
  std::size_t node_id = 0;
  std::size_t depth = 0;
  double bound = 0.0;      // node bound, problem sense
  double incumbent = 0.0;  // NaN while none exists
  std::string action;      // branch | integral | prune-infeasible | prune-bound
  double global_bound = 0.0;
};

struct BnbOptions {
  double abs_gap = 1e-8;
  double rel_gap = 1e-6;
  std::size_t node_limit = 1'000'000;
  double time_limit_seconds = std::numeric_limits<double>::infinity();
  BranchRule branch_rule = BranchRule::EarliestLayerMostFractional;
  double integrality_tol = 1e-6;
  SimplexOptions lp;
  /// Called once per processed node when set.
  std::function<void(const BnbTraceRow&)> trace;
};

enum class MilpStatus { Certified, GapLimit, Infeasible, Limit };

const char* to_string(MilpStatus s) noexcept;

struct MilpResult {
  MilpStatus status = MilpStatus::Infeasible;
  std::optional<double> incumbent;  // problem sense, offset included
  Vector point;                     // full assignment of the incumbent
  /// Best proven bound in the problem's sense: an upper bound for
  /// maximization, a lower bound for minimization. Infinite if no bound.
  double bound = 0.0;
  double gap = std::numeric_limits<double>::infinity();
  std::size_t nodes = 0;
  double wall_seconds = 0.0;
};

struct Candidate {
  Vector point;
  double objective = 0.0;
};

/// Maps an LP relaxation point to a feasible full assignment, or nullopt.
using IncumbentHeuristic = std::function<std::optional<Candidate>(std::span<const double>)>;

/// Heuristic that forward-evaluates the network at the LP point's inputs.
/// Holds references: p and net must outlive the returned function.
IncumbentHeuristic forward_heuristic(const MilpProblem& p, const FoldedNetwork& net);

/// Propagates Error(NumericalBreakdown) with the node id in the message.
MilpResult solve_milp(const MilpProblem& p, const BnbOptions& opts = {},
                      const IncumbentHeuristic& heuristic = {});

}  // namespace nncert
