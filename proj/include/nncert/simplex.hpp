#pragma once

// Bounded-variable primal simplex with a two-phase start.
//
// Every variable carries finite bounds and sits at one of them while
// nonbasic. Each row gets an activity variable r_i = a_i x whose bounds
// encode the row sense, so the working system is A x - r = 0. Rows whose
// activity is out of range at the starting point receive an artificial
// column; phase 1 drives the artificials to zero. The tableau is dense and
// rebuilt from the original matrix every `refactor_interval` pivots.

#include <cstddef>
#include <span>
#include <vector>

#include "nncert/linalg.hpp"

namespace nncert {

enum class RowSense { Le, Eq, Ge };

struct LinearRow {
  std::vector<std::size_t> index;
  std::vector<double> value;
  RowSense sense = RowSense::Le;
  double rhs = 0.0;
};

struct LinearProgram {
  Vector lower;
  Vector upper;
  Vector cost;
  double cost_offset = 0.0;
  bool maximize = false;
  std::vector<LinearRow> rows;

  std::size_t num_vars() const noexcept { return lower.size(); }
};

struct SimplexOptions {
  double feas_tol = 1e-7;
  double opt_tol = 1e-7;
  double pivot_tol = 1e-9;
  std::size_t refactor_interval = 100;
  /// Consecutive degenerate pivots tolerated before Bland's rule engages.
  std::size_t bland_after = 50;
  /// 0 selects a limit proportional to the problem size.
  std::size_t max_iterations = 0;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  Vector x;                 // structural values (Optimal only)
  double objective = 0.0;   // c.x + offset in the problem's own sense
  double infeasibility = 0.0;  // phase-1 residual when Infeasible
  /// Basic column per row: [0,n) structural, [n,n+m) row activities,
  /// beyond that artificials.
  std::vector<std::size_t> basis;
  std::size_t iterations = 0;
};

/// Throws Error(NumericalBreakdown) if no acceptable pivot exists, the
/// basis turns singular on refactorization, or the iteration limit is hit.
LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opts = {});

/// Largest violation of any row or bound by x.
double max_violation(const LinearProgram& lp, std::span<const double> x);

}  // namespace nncert
