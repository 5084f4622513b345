#include "nncert/milp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nncert/error.hpp"

namespace nncert {

std::size_t MilpProblem::add_var(const MilpVariable& v) {
  vars.push_back(v);
  return vars.size() - 1;
}

std::size_t MilpProblem::binary_count() const {
  return static_cast<std::size_t>(std::count_if(
      vars.begin(), vars.end(), [](const MilpVariable& v) { return v.kind == VarKind::Binary; }));
}

std::vector<std::size_t> MilpProblem::binaries() const {
  std::vector<std::size_t> out;
  for (const auto& layer : binary_vars)
    for (const auto& b : layer)
      if (b) out.push_back(*b);
  return out;
}

namespace {

LinearRow make_row(std::initializer_list<std::pair<std::size_t, double>> terms, RowSense sense,
                   double rhs) {
  LinearRow row;
  for (const auto& [j, a] : terms) {
    row.index.push_back(j);
    row.value.push_back(a);
  }
  row.sense = sense;
  row.rhs = rhs;
  return row;
}

void check_bounds(const LayerBounds& bounds, const FoldedNetwork& net) {
  if (bounds.layer_count() != net.layers.size())
    throw Error(ErrorKind::DimensionMismatch, "bounds do not match the network depth");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    if (bounds.lo[k].size() != net.width(k) || bounds.hi[k].size() != net.width(k))
      throw Error(ErrorKind::DimensionMismatch, "bounds do not match layer widths");
    for (std::size_t n = 0; n < net.width(k); ++n)
      if (!(bounds.lo[k][n] <= bounds.hi[k][n]))
        throw Error(ErrorKind::UnsoundBounds, "layer " + std::to_string(k) + " neuron " +
                                                  std::to_string(n) + " has lo > hi");
  }
}

}  // namespace

MilpProblem encode_network(const FoldedNetwork& net, const LayerBounds& bounds,
                           const StabilityMap& stability, const InputBox& box) {
  validate(net);
  check_bounds(bounds, net);
  box.validate();
  if (box.dim() != net.input_dim)
    throw Error(ErrorKind::DimensionMismatch, "box dimension differs from the network input");
  const std::size_t hidden = net.hidden_count();
  if (stability.layers.size() != hidden)
    throw Error(ErrorKind::DimensionMismatch, "stability map does not match the network depth");

  MilpProblem p;
  for (std::size_t j = 0; j < net.input_dim; ++j)
    p.input_vars.push_back(
        p.add_var({box.lo[j], box.hi[j], VarKind::Continuous, VarRole::Input, 0, j}));

  std::vector<std::size_t> prev = p.input_vars;
  for (std::size_t k = 0; k <= hidden; ++k) {
    const auto& layer = net.layers[k];
    const bool is_output = k == hidden;
    const std::size_t width = layer.c.size();
    if (!is_output && stability.layers[k].size() != width)
      throw Error(ErrorKind::DimensionMismatch, "stability map width mismatch");

    std::vector<std::size_t> pre(width);
    for (std::size_t n = 0; n < width; ++n) {
      double lo = bounds.lo[k][n];
      double hi = bounds.hi[k][n];
      if (!is_output) {
        // Keep the pre-activation consistent with an assumed phase; this is
        // a no-op for bound-certified classifications.
        if (stability.layers[k][n] == Stability::Active) lo = std::max(lo, 0.0);
        if (stability.layers[k][n] == Stability::Dead) hi = std::min(hi, 0.0);
      }
      pre[n] = p.add_var({lo, hi, VarKind::Continuous, is_output ? VarRole::Output : VarRole::Pre,
                          is_output ? 0 : k, n});
      // pre_n - sum_j A_nj prev_j = c_n
      LinearRow row;
      row.index.push_back(pre[n]);
      row.value.push_back(1.0);
      for (std::size_t j = 0; j < prev.size(); ++j) {
        const double a = layer.a(n, j);
        if (a == 0.0) continue;
        row.index.push_back(prev[j]);
        row.value.push_back(-a);
      }
      row.sense = RowSense::Eq;
      row.rhs = layer.c[n];
      p.rows.push_back(std::move(row));
    }

    if (is_output) {
      p.output_vars = pre;
      break;
    }

    p.pre_vars.push_back(pre);
    std::vector<std::size_t> post(width);
    std::vector<std::optional<std::size_t>> bins(width);
    for (std::size_t n = 0; n < width; ++n) {
      const double lo = bounds.lo[k][n];
      const double hi = bounds.hi[k][n];
      const Stability s = stability.layers[k][n];
      const double post_lo = s == Stability::Dead ? 0.0 : std::max(lo, 0.0);
      const double post_hi = s == Stability::Dead ? 0.0 : std::max(hi, 0.0);
      post[n] = p.add_var({post_lo, post_hi, VarKind::Continuous, VarRole::Post, k, n});
      switch (s) {
        case Stability::Active:
          p.rows.push_back(make_row({{post[n], 1.0}, {pre[n], -1.0}}, RowSense::Eq, 0.0));
          break;
        case Stability::Dead:
          // h = 0 is carried by the variable bounds.
          break;
        case Stability::Unstable: {
          const std::size_t r = p.add_var({0.0, 1.0, VarKind::Binary, VarRole::Binary, k, n});
          bins[n] = r;
          // h <= pre - lo (1 - r)
          p.rows.push_back(
              make_row({{post[n], 1.0}, {pre[n], -1.0}, {r, -lo}}, RowSense::Le, -lo));
          // h >= pre
          p.rows.push_back(make_row({{post[n], 1.0}, {pre[n], -1.0}}, RowSense::Ge, 0.0));
          // h <= hi r
          p.rows.push_back(make_row({{post[n], 1.0}, {r, -hi}}, RowSense::Le, 0.0));
          // h >= 0
          p.rows.push_back(make_row({{post[n], 1.0}}, RowSense::Ge, 0.0));
          break;
        }
      }
    }
    p.post_vars.push_back(post);
    p.binary_vars.push_back(bins);
    prev = post;
  }

  p.objective.sense = ObjectiveSense::Maximize;
  return p;
}

MilpProblem set_robustness_objective(MilpProblem p, std::size_t output, Sign sign, double x_ref) {
  if (output >= p.output_vars.size())
    throw Error(ErrorKind::Index, "output index " + std::to_string(output) + " out of range");
  const double s = sign_value(sign);
  p.objective.sense = ObjectiveSense::Maximize;
  p.objective.index = {p.output_vars[output]};
  p.objective.value = {s};
  p.objective.offset = -s * x_ref;
  return p;
}

MilpProblem set_trust_problem(MilpProblem p, std::size_t output, Sign sign, double beta,
                              double x_ref, std::span<const double> z_ref,
                              std::span<const double> scale, double delta_cap) {
  if (output >= p.output_vars.size())
    throw Error(ErrorKind::Index, "output index " + std::to_string(output) + " out of range");
  const std::size_t n0 = p.input_vars.size();
  if (z_ref.size() != n0 || scale.size() != n0)
    throw Error(ErrorKind::DimensionMismatch, "z_ref/scale must have one entry per input");
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw Error(ErrorKind::InvalidArg, "beta must be positive");
  if (!(delta_cap > 0.0) || !std::isfinite(delta_cap))
    throw Error(ErrorKind::InvalidArg, "delta_cap must be positive");
  for (std::size_t j = 0; j < n0; ++j) {
    if (!(scale[j] > 0.0) || !std::isfinite(scale[j]))
      throw Error(ErrorKind::InvalidArg, "scale entries must be positive");
    if (!(z_ref[j] >= 0.0 && z_ref[j] <= 1.0))
      throw Error(ErrorKind::InvalidArg, "z_ref must lie in [0,1]");
  }
  if (p.delta_var) throw Error(ErrorKind::InvalidArg, "problem already carries a trust layer");

  const double s = sign_value(sign);
  const std::size_t delta =
      p.add_var({0.0, delta_cap, VarKind::Continuous, VarRole::Delta, 0, 0});
  p.delta_var = delta;
  for (std::size_t j = 0; j < n0; ++j) {
    const std::size_t z = p.input_vars[j];
    // Perturbed measurements stay inside the normalized domain.
    p.vars[z].lower = std::max(p.vars[z].lower, 0.0);
    p.vars[z].upper = std::min(p.vars[z].upper, 1.0);
    p.rows.push_back(make_row({{z, 1.0}, {delta, -scale[j]}}, RowSense::Le, z_ref[j]));
    p.rows.push_back(make_row({{z, -1.0}, {delta, -scale[j]}}, RowSense::Le, -z_ref[j]));
  }
  p.rows.push_back(make_row({{p.output_vars[output], s}}, RowSense::Ge, beta + s * x_ref));
  p.trust = TrustShape{Vector(z_ref.begin(), z_ref.end()), Vector(scale.begin(), scale.end())};

  p.objective.sense = ObjectiveSense::Minimize;
  p.objective.index = {delta};
  p.objective.value = {1.0};
  p.objective.offset = 0.0;
  return p;
}

LinearProgram to_linear_program(const MilpProblem& p, std::span<const std::int8_t> fixing) {
  if (!fixing.empty() && fixing.size() != p.vars.size())
    throw Error(ErrorKind::DimensionMismatch, "fixing vector must cover every variable");
  LinearProgram lp;
  const std::size_t n = p.vars.size();
  lp.lower.resize(n);
  lp.upper.resize(n);
  lp.cost.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    lp.lower[j] = p.vars[j].lower;
    lp.upper[j] = p.vars[j].upper;
    if (!fixing.empty() && fixing[j] != kFree) {
      if (p.vars[j].kind != VarKind::Binary)
        throw Error(ErrorKind::InvalidArg, "only binaries can be fixed");
      lp.lower[j] = lp.upper[j] = fixing[j] ? 1.0 : 0.0;
    }
  }
  for (std::size_t k = 0; k < p.objective.index.size(); ++k)
    lp.cost[p.objective.index[k]] += p.objective.value[k];
  lp.cost_offset = p.objective.offset;
  lp.maximize = p.objective.sense == ObjectiveSense::Maximize;
  lp.rows = p.rows;
  return lp;
}

LpSolution solve_lp(const MilpProblem& p, std::span<const std::int8_t> fixing,
                    const SimplexOptions& opts) {
  return solve_lp(to_linear_program(p, fixing), opts);
}

double objective_value(const MilpProblem& p, std::span<const double> x) {
  double v = p.objective.offset;
  for (std::size_t k = 0; k < p.objective.index.size(); ++k)
    v += p.objective.value[k] * x[p.objective.index[k]];
  return v;
}

double max_violation(const MilpProblem& p, std::span<const double> x) {
  if (x.size() != p.vars.size())
    throw Error(ErrorKind::DimensionMismatch, "assignment has the wrong dimension");
  double v = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    v = std::max({v, p.vars[j].lower - x[j], x[j] - p.vars[j].upper});
  for (const auto& row : p.rows) {
    double a = 0.0;
    for (std::size_t k = 0; k < row.index.size(); ++k) a += row.value[k] * x[row.index[k]];
    if (row.sense != RowSense::Le) v = std::max(v, row.rhs - a);
    if (row.sense != RowSense::Ge) v = std::max(v, a - row.rhs);
  }
  return v;
}

std::optional<Vector> lift_point(const MilpProblem& p, const FoldedNetwork& net,
                                 std::span<const double> z, double tol) {
  if (z.size() != p.input_vars.size())
    throw Error(ErrorKind::DimensionMismatch, "point has the wrong dimension");
  Vector zin(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    const auto& v = p.vars[p.input_vars[j]];
    zin[j] = std::clamp(z[j], v.lower, v.upper);
  }
  const auto pre = pre_activations(net, zin);

  Vector x(p.vars.size(), 0.0);
  for (std::size_t j = 0; j < zin.size(); ++j) x[p.input_vars[j]] = zin[j];
  for (std::size_t k = 0; k < p.pre_vars.size(); ++k) {
    for (std::size_t n = 0; n < p.pre_vars[k].size(); ++n) {
      const double h = pre[k][n];
      x[p.pre_vars[k][n]] = h;
      x[p.post_vars[k][n]] = h > 0.0 ? h : 0.0;
      if (p.binary_vars[k][n]) x[*p.binary_vars[k][n]] = h > 0.0 ? 1.0 : 0.0;
    }
  }
  for (std::size_t i = 0; i < p.output_vars.size(); ++i) x[p.output_vars[i]] = pre.back()[i];
  if (p.delta_var && p.trust) {
    double delta = 0.0;
    for (std::size_t j = 0; j < zin.size(); ++j)
      delta = std::max(delta, std::abs(zin[j] - p.trust->z_ref[j]) / p.trust->scale[j]);
    x[*p.delta_var] = delta;
  }
  if (max_violation(p, x) > tol) return std::nullopt;
  return x;
}

Vector input_point(const MilpProblem& p, std::span<const double> x) {
  Vector z(p.input_vars.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = x[p.input_vars[j]];
  return z;
}

std::string variable_name(const MilpProblem& p, std::size_t var) {
  const auto& v = p.vars.at(var);
  const auto k = std::to_string(v.layer);
  const auto n = std::to_string(v.neuron);
  switch (v.role) {
    case VarRole::Input: return "z_" + n;
    case VarRole::Pre: return "pre_" + k + "_" + n;
    case VarRole::Post: return "post_" + k + "_" + n;
    case VarRole::Binary: return "r_" + k + "_" + n;
    case VarRole::Output: return "x_" + n;
    case VarRole::Delta: return "delta";
  }
  return "v" + std::to_string(var);
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_terms(const MilpProblem& p, std::span<const std::size_t> idx,
                 std::span<const double> val, std::ostream& out) {
  if (idx.empty()) {
    out << " 0 " << variable_name(p, 0);
    return;
  }
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out << (val[k] < 0.0 ? " - " : " + ") << num(std::abs(val[k])) << ' '
        << variable_name(p, idx[k]);
  }
}

}  // namespace

void write_lp_format(const MilpProblem& p, std::ostream& out) {
  out << "\\ ReLU network MILP\n";
  if (p.objective.offset != 0.0) out << "\\ objective offset: " << num(p.objective.offset) << '\n';
  out << (p.objective.sense == ObjectiveSense::Maximize ? "Maximize\n" : "Minimize\n");
  out << " obj:";
  write_terms(p, p.objective.index, p.objective.value, out);
  out << "\nSubject To\n";
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& row = p.rows[i];
    out << " c" << i << ':';
    write_terms(p, row.index, row.value, out);
    out << (row.sense == RowSense::Le ? " <= " : row.sense == RowSense::Ge ? " >= " : " = ")
        << num(row.rhs) << '\n';
  }
  out << "Bounds\n";
  for (std::size_t j = 0; j < p.vars.size(); ++j) {
    if (p.vars[j].kind == VarKind::Binary) continue;
    out << ' ' << num(p.vars[j].lower) << " <= " << variable_name(p, j)
        << " <= " << num(p.vars[j].upper) << '\n';
  }
  const auto bins = p.binaries();
  if (!bins.empty()) {
    out << "Binaries\n";
    for (std::size_t j : bins) out << ' ' << variable_name(p, j) << '\n';
  }
  out << "End\n";
}

}  // namespace nncert
