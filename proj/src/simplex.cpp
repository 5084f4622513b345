#include "nncert/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>

#include "nncert/error.hpp"
#include "nncert/kernels.hpp"

namespace nncert {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDegenerateStep = 1e-12;

enum class VarState : std::uint8_t { Basic, AtLower, AtUpper };

struct RowRange {
  double lo;
  double hi;
};

RowRange activity_range(const LinearProgram& lp, const LinearRow& row) {
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t k = 0; k < row.index.size(); ++k) {
    const double a = row.value[k];
    const std::size_t j = row.index[k];
    if (a > 0.0) {
      lo += a * lp.lower[j];
      hi += a * lp.upper[j];
    } else {
      lo += a * lp.upper[j];
      hi += a * lp.lower[j];
    }
  }
  // The range is implied by the variable bounds, so widening it is free and
  // keeps rounding from turning a tight equality into a false infeasibility.
  lo -= 1e-9 * (1.0 + std::abs(lo));
  hi += 1e-9 * (1.0 + std::abs(hi));
  return {lo, hi};
}

std::string format_violation(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

class Tableau {
 public:
  Tableau(const LinearProgram& lp, const SimplexOptions& opts, bool harris)
      : lp_(lp), opts_(opts), harris_(harris) {}

  LpSolution run();

 private:
  bool setup(LpSolution& out);
  void iterate();
  std::optional<std::size_t> price() const;
  void pivot(std::size_t p, std::size_t q, bool update_costs);
  void refactor();
  void recompute_basic_values();
  void recompute_reduced_costs();
  void set_phase2_costs();
  void drive_out_artificials();
  double primal_violation() const;
  bool is_optimal() const;

  const LinearProgram& lp_;
  const SimplexOptions& opts_;
  const bool harris_;

  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t ncols_ = 0;
  std::size_t first_art_ = 0;

  Matrix orig_;
  Matrix t_;
  Vector lo_, hi_, val_, cost_, d_;
  std::vector<VarState> state_;
  std::vector<std::size_t> head_;

  std::size_t iterations_ = 0;
  std::size_t max_iterations_ = 0;
  std::size_t since_refactor_ = 0;
  std::size_t degenerate_run_ = 0;
  bool bland_ = false;
};

bool Tableau::setup(LpSolution& out) {
  n_ = lp_.num_vars();
  m_ = lp_.rows.size();
  if (lp_.upper.size() != n_ || lp_.cost.size() != n_)
    throw Error(ErrorKind::DimensionMismatch, "LP bound/cost vectors differ in length");
  for (std::size_t j = 0; j < n_; ++j) {
    if (!std::isfinite(lp_.lower[j]) || !std::isfinite(lp_.upper[j]))
      throw Error(ErrorKind::InvalidArg, "LP variable " + std::to_string(j) + " has an infinite bound");
    if (lp_.lower[j] > lp_.upper[j]) {
      out.status = LpStatus::Infeasible;
      out.infeasibility = lp_.lower[j] - lp_.upper[j];
      return false;
    }
  }

  Vector row_lo(m_), row_hi(m_), activity(m_, 0.0);
  for (std::size_t i = 0; i < m_; ++i) {
    const auto& row = lp_.rows[i];
    if (row.index.size() != row.value.size())
      throw Error(ErrorKind::DimensionMismatch, "LP row index/value lengths differ");
    for (std::size_t j : row.index)
      if (j >= n_) throw Error(ErrorKind::Index, "LP row references a missing variable");
    const RowRange range = activity_range(lp_, row);
    double lo = range.lo;
    double hi = range.hi;
    if (row.sense != RowSense::Le) lo = std::max(lo, row.rhs);
    if (row.sense != RowSense::Ge) hi = std::min(hi, row.rhs);
    if (lo > hi) {
      if (lo - hi > opts_.feas_tol) {
        out.status = LpStatus::Infeasible;
        out.infeasibility = lo - hi;
        return false;
      }
      hi = lo;
    }
    row_lo[i] = lo;
    row_hi[i] = hi;
    for (std::size_t k = 0; k < row.index.size(); ++k)
      activity[i] += row.value[k] * lp_.lower[row.index[k]];
  }

  std::size_t n_art = 0;
  for (std::size_t i = 0; i < m_; ++i)
    if (activity[i] < row_lo[i] || activity[i] > row_hi[i]) ++n_art;

  first_art_ = n_ + m_;
  ncols_ = n_ + m_ + n_art;
  orig_ = Matrix(m_, ncols_);
  lo_.assign(ncols_, 0.0);
  hi_.assign(ncols_, 0.0);
  val_.assign(ncols_, 0.0);
  state_.assign(ncols_, VarState::AtLower);
  head_.assign(m_, 0);

  for (std::size_t j = 0; j < n_; ++j) {
    lo_[j] = lp_.lower[j];
    hi_[j] = lp_.upper[j];
    val_[j] = lo_[j];
  }
  std::size_t art = first_art_;
  for (std::size_t i = 0; i < m_; ++i) {
    const auto& row = lp_.rows[i];
    for (std::size_t k = 0; k < row.index.size(); ++k) orig_(i, row.index[k]) += row.value[k];
    const std::size_t r = n_ + i;
    orig_(i, r) = -1.0;
    lo_[r] = row_lo[i];
    hi_[r] = row_hi[i];
    if (activity[i] >= row_lo[i] && activity[i] <= row_hi[i]) {
      state_[r] = VarState::Basic;
      val_[r] = activity[i];
      head_[i] = r;
    } else {
      const bool below = activity[i] < row_lo[i];
      state_[r] = below ? VarState::AtLower : VarState::AtUpper;
      val_[r] = below ? row_lo[i] : row_hi[i];
      // a_i x - r_i + sigma * art = 0 with art = |a_i x - r_i| >= 0
      const double sigma = activity[i] - val_[r] > 0.0 ? -1.0 : 1.0;
      orig_(i, art) = sigma;
      lo_[art] = 0.0;
      hi_[art] = kInf;
      val_[art] = std::abs(activity[i] - val_[r]);
      state_[art] = VarState::Basic;
      head_[i] = art;
      ++art;
    }
  }

  // The starting basis is diagonal with +-1 entries, so B^-1 M is a row
  // scaling of M.
  t_ = orig_;
  for (std::size_t i = 0; i < m_; ++i) {
    const double s = orig_(i, head_[i]);
    if (s != 1.0) kernels::scale(s, t_.row(i));
  }

  cost_.assign(ncols_, 0.0);
  for (std::size_t j = first_art_; j < ncols_; ++j) cost_[j] = 1.0;
  recompute_reduced_costs();

  max_iterations_ = opts_.max_iterations ? opts_.max_iterations : 50 * (m_ + ncols_) + 1000;
  return true;
}

std::optional<std::size_t> Tableau::price() const {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t j = 0; j < ncols_; ++j) {
    if (state_[j] == VarState::Basic || hi_[j] <= lo_[j]) continue;
    double score = 0.0;
    if (state_[j] == VarState::AtLower && d_[j] < -opts_.opt_tol)
      score = -d_[j];
    else if (state_[j] == VarState::AtUpper && d_[j] > opts_.opt_tol)
      score = d_[j];
    else
      continue;
    if (bland_) return j;
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

void Tableau::pivot(std::size_t p, std::size_t q, bool update_costs) {
  auto prow = t_.row(p);
  kernels::scale(1.0 / prow[q], prow);
  prow[q] = 1.0;
  for (std::size_t i = 0; i < m_; ++i) {
    if (i == p) continue;
    const double f = t_(i, q);
    if (f == 0.0) continue;
    kernels::axpy(-f, prow, t_.row(i));
    t_(i, q) = 0.0;
  }
  if (update_costs) {
    const double f = d_[q];
    if (f != 0.0) {
      kernels::axpy(-f, prow, d_);
      d_[q] = 0.0;
    }
  }
}

void Tableau::recompute_basic_values() {
  std::vector<std::size_t> moving;
  for (std::size_t j = 0; j < ncols_; ++j)
    if (state_[j] != VarState::Basic && val_[j] != 0.0) moving.push_back(j);
  for (std::size_t i = 0; i < m_; ++i) {
    double s = 0.0;
    for (std::size_t j : moving) s += t_(i, j) * val_[j];
    val_[head_[i]] = -s;
  }
}

void Tableau::recompute_reduced_costs() {
  d_ = cost_;
  for (std::size_t i = 0; i < m_; ++i) {
    const double cb = cost_[head_[i]];
    if (cb != 0.0) kernels::axpy(-cb, t_.row(i), d_);
  }
  for (std::size_t i = 0; i < m_; ++i) d_[head_[i]] = 0.0;
}

void Tableau::refactor() {
  // Gauss-Jordan on the original matrix, pivoting each basic column into
  // the unassigned row where it is largest.
  t_ = orig_;
  std::vector<bool> assigned(m_, false);
  std::vector<std::size_t> head(m_, 0);
  for (std::size_t k = 0; k < m_; ++k) {
    const std::size_t col = head_[k];
    std::size_t best = m_;
    double mag = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (assigned[i]) continue;
      const double a = std::abs(t_(i, col));
      if (a > mag) {
        mag = a;
        best = i;
      }
    }
    if (best == m_ || mag < opts_.pivot_tol)
      throw Error(ErrorKind::NumericalBreakdown, "basis became singular during refactorization");
    pivot(best, col, false);
    assigned[best] = true;
    head[best] = col;
  }
  head_ = std::move(head);
  recompute_basic_values();
  recompute_reduced_costs();
  since_refactor_ = 0;
}

void Tableau::iterate() {
  Vector alpha(m_);
  while (true) {
    const auto entering = price();
    if (!entering) return;
    const std::size_t q = *entering;
    if (++iterations_ > max_iterations_)
      throw Error(ErrorKind::NumericalBreakdown,
                  "simplex iteration limit reached (" + std::to_string(max_iterations_) + ")");

    const double dir = state_[q] == VarState::AtLower ? 1.0 : -1.0;
    for (std::size_t i = 0; i < m_; ++i) alpha[i] = t_(i, q);

    // Ratio test. Harris two-pass in normal mode: find the largest step
    // allowed with bounds relaxed by feas_tol, then take the biggest pivot
    // among rows blocking within that step. Bland mode uses the textbook
    // rule with smallest-index tie breaking.
    const double flip = hi_[q] - lo_[q];
    std::size_t p = m_;
    double step = flip;

    auto limit = [&](std::size_t i, double slack) -> double {
      const double rate = -dir * alpha[i];
      const std::size_t b = head_[i];
      if (rate < 0.0) return std::max(0.0, (val_[b] - lo_[b] + slack) / -rate);
      if (hi_[b] == kInf) return kInf;
      return std::max(0.0, (hi_[b] - val_[b] + slack) / rate);
    };

    if (bland_) {
      double min_lim = kInf;
      for (std::size_t i = 0; i < m_; ++i)
        if (std::abs(alpha[i]) > opts_.pivot_tol) min_lim = std::min(min_lim, limit(i, 0.0));
      if (min_lim < flip) {
        step = min_lim;
        for (std::size_t i = 0; i < m_; ++i) {
          if (std::abs(alpha[i]) <= opts_.pivot_tol) continue;
          if (limit(i, 0.0) <= min_lim + kDegenerateStep && (p == m_ || head_[i] < head_[p])) p = i;
        }
      }
    } else {
      // Without Harris the relaxed pass degenerates to the exact minimum
      // ratio (plus rounding slack), so basics never leave their bounds.
      const double slack = harris_ ? opts_.feas_tol : 0.0;
      double relaxed = flip;
      for (std::size_t i = 0; i < m_; ++i) {
        if (std::abs(alpha[i]) <= opts_.pivot_tol) continue;
        relaxed = std::min(relaxed, limit(i, slack));
      }
      if (!harris_) relaxed += kDegenerateStep;
      double best_mag = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        const double mag = std::abs(alpha[i]);
        if (mag <= opts_.pivot_tol) continue;
        const double lim = limit(i, 0.0);
        if (lim <= relaxed && mag > best_mag) {
          best_mag = mag;
          p = i;
        }
      }
      if (p != m_) {
        step = limit(p, 0.0);
        if (flip <= step) p = m_, step = flip;
      }
    }

    if (step == kInf)
      throw Error(ErrorKind::NumericalBreakdown, "unbounded ray with finite variable bounds");

    for (std::size_t i = 0; i < m_; ++i)
      if (alpha[i] != 0.0) val_[head_[i]] += -dir * alpha[i] * step;

    if (p == m_) {
      state_[q] = dir > 0.0 ? VarState::AtUpper : VarState::AtLower;
      val_[q] = dir > 0.0 ? hi_[q] : lo_[q];
    } else {
      const std::size_t leaving = head_[p];
      const double rate = -dir * alpha[p];
      if (rate < 0.0) {
        state_[leaving] = VarState::AtLower;
        val_[leaving] = lo_[leaving];
      } else {
        state_[leaving] = VarState::AtUpper;
        val_[leaving] = hi_[leaving];
      }
      if (leaving >= first_art_) {
        // Artificials never re-enter.
        hi_[leaving] = 0.0;
        val_[leaving] = 0.0;
        state_[leaving] = VarState::AtLower;
      }
      val_[q] += dir * step;
      state_[q] = VarState::Basic;
      head_[p] = q;
      pivot(p, q, true);
      if (++since_refactor_ >= opts_.refactor_interval) refactor();
    }

    if (step <= kDegenerateStep) {
      if (++degenerate_run_ >= opts_.bland_after) bland_ = true;
    } else {
      degenerate_run_ = 0;
      bland_ = false;
    }
  }
}

void Tableau::drive_out_artificials() {
  for (std::size_t j = first_art_; j < ncols_; ++j) {
    lo_[j] = 0.0;
    hi_[j] = 0.0;
  }
  bool pivoted = false;
  for (std::size_t p = 0; p < m_; ++p) {
    if (head_[p] < first_art_) continue;
    std::size_t best = ncols_;
    double mag = 1e-7;
    for (std::size_t j = 0; j < first_art_; ++j) {
      if (state_[j] == VarState::Basic) continue;
      const double a = std::abs(t_(p, j));
      if (a > mag) {
        mag = a;
        best = j;
      }
    }
    if (best == ncols_) continue;  // redundant row; the artificial stays basic at zero
    const std::size_t art = head_[p];
    state_[art] = VarState::AtLower;
    val_[art] = 0.0;
    state_[best] = VarState::Basic;
    head_[p] = best;
    pivot(p, best, false);
    pivoted = true;
  }
  for (std::size_t j = first_art_; j < ncols_; ++j)
    if (state_[j] != VarState::Basic) val_[j] = 0.0;
  if (pivoted) refactor();
}

void Tableau::set_phase2_costs() {
  cost_.assign(ncols_, 0.0);
  const double sign = lp_.maximize ? -1.0 : 1.0;
  for (std::size_t j = 0; j < n_; ++j) cost_[j] = sign * lp_.cost[j];
  recompute_reduced_costs();
}

double Tableau::primal_violation() const {
  double v = 0.0;
  for (std::size_t i = 0; i < m_; ++i) {
    const std::size_t b = head_[i];
    v = std::max({v, lo_[b] - val_[b], hi_[b] == kInf ? 0.0 : val_[b] - hi_[b]});
  }
  return v;
}

bool Tableau::is_optimal() const { return !price().has_value(); }

LpSolution Tableau::run() {
  LpSolution out;
  if (!setup(out)) return out;

  iterate();
  if (since_refactor_ > 0) refactor();
  iterate();

  double residual = 0.0;
  for (std::size_t i = 0; i < m_; ++i)
    if (head_[i] >= first_art_) residual += std::max(0.0, val_[head_[i]]);
  if (residual > opts_.feas_tol) {
    out.status = LpStatus::Infeasible;
    out.infeasibility = residual;
    out.iterations = iterations_;
    out.basis = head_;
    return out;
  }

  drive_out_artificials();
  set_phase2_costs();
  bland_ = false;
  degenerate_run_ = 0;
  for (int round = 0; round < 4; ++round) {
    iterate();
    if (since_refactor_ > 0) refactor();
    if (is_optimal()) break;
  }
  if (const double v = primal_violation(); v > opts_.feas_tol)
    throw Error(ErrorKind::NumericalBreakdown,
                "primal feasibility lost after refactorization (violation " + format_violation(v) + ")");

  out.status = LpStatus::Optimal;
  out.x.assign(val_.begin(), val_.begin() + static_cast<std::ptrdiff_t>(n_));
  out.objective = lp_.cost_offset;
  for (std::size_t j = 0; j < n_; ++j) out.objective += lp_.cost[j] * out.x[j];
  out.basis = head_;
  out.iterations = iterations_;
  return out;
}

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opts) {
  // Harris's relaxed ratio test lets basics drift up to feas_tol outside
  // their bounds; badly scaled rows can push that past the tolerance. The
  // retry uses the strict ratio test.
  try {
    return Tableau(lp, opts, true).run();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NumericalBreakdown) throw;
  }
  return Tableau(lp, opts, false).run();
}

double max_violation(const LinearProgram& lp, std::span<const double> x) {
  if (x.size() != lp.num_vars())
    throw Error(ErrorKind::DimensionMismatch, "point has the wrong dimension");
  double v = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    v = std::max({v, lp.lower[j] - x[j], x[j] - lp.upper[j]});
  for (const auto& row : lp.rows) {
    double a = 0.0;
    for (std::size_t k = 0; k < row.index.size(); ++k) a += row.value[k] * x[row.index[k]];
    if (row.sense != RowSense::Le) v = std::max(v, row.rhs - a);
    if (row.sense != RowSense::Ge) v = std::max(v, a - row.rhs);
  }
  return v;
}

}  // namespace nncert
