#include "nncert/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nncert/error.hpp"

namespace nncert::oracle {

ObjectiveSpec ObjectiveSpec::robustness(std::size_t output, Sign sign, double x_ref) {
  ObjectiveSpec s;
  s.kind = ObjectiveKind::Robustness;
  s.output = output;
  s.sign = sign;
  s.x_ref = x_ref;
  return s;
}

ObjectiveSpec ObjectiveSpec::trust(std::size_t output, Sign sign, double beta, double x_ref,
                                   std::span<const double> z_ref, std::span<const double> scale,
                                   double delta_cap) {
  ObjectiveSpec s;
  s.kind = ObjectiveKind::Trust;
  s.output = output;
  s.sign = sign;
  s.beta = beta;
  s.x_ref = x_ref;
  s.z_ref.assign(z_ref.begin(), z_ref.end());
  s.scale.assign(scale.begin(), scale.end());
  s.delta_cap = delta_cap;
  return s;
}

namespace {

void check_spec(const FoldedNetwork& net, const InputBox& box, const ObjectiveSpec& spec) {
  if (box.dim() != net.input_dim)
    throw Error(ErrorKind::DimensionMismatch, "oracle: box dimension differs from network input");
  if (spec.output >= net.output_dim()) throw Error(ErrorKind::Index, "oracle: output index out of range");
  if (spec.kind == ObjectiveKind::Trust) {
    if (spec.z_ref.size() != net.input_dim || spec.scale.size() != net.input_dim)
      throw Error(ErrorKind::DimensionMismatch, "oracle: z_ref/scale dimension");
    for (double s : spec.scale)
      if (!(s > 0.0)) throw Error(ErrorKind::InvalidValue, "oracle: scale must be positive");
    if (!(spec.delta_cap >= 0.0)) throw Error(ErrorKind::InvalidValue, "oracle: delta cap");
  }
}

// Plain interval pass, kept separate from the kernel-based one so the
// oracle does not inherit its bugs.
std::vector<std::vector<int>> phases_by_interval(const FoldedNetwork& net, Vector lo, Vector hi) {
  std::vector<std::vector<int>> phase(net.hidden_count());
  for (std::size_t k = 0; k < net.hidden_count(); ++k) {
    const auto& L = net.layers[k];
    Vector nlo(L.c.size()), nhi(L.c.size());
    phase[k].assign(L.c.size(), 0);
    for (std::size_t r = 0; r < L.c.size(); ++r) {
      double a = L.c[r], b = L.c[r];
      for (std::size_t j = 0; j < lo.size(); ++j) {
        double w = L.a(r, j);
        a += w > 0 ? w * lo[j] : w * hi[j];
        b += w > 0 ? w * hi[j] : w * lo[j];
      }
      // 1 active, -1 dead, 0 undecided
      phase[k][r] = a >= 0 ? 1 : (b <= 0 ? -1 : 0);
      nlo[r] = std::max(a, 0.0);
      nhi[r] = std::max(b, 0.0);
    }
    lo = std::move(nlo);
    hi = std::move(nhi);
  }
  return phase;
}

struct AffineExpr {
  Vector g;  // coefficients over z
  double g0 = 0.0;
};

}  // namespace

OracleResult pattern_enumerate_opt(const FoldedNetwork& net, const InputBox& box,
                                   const ObjectiveSpec& spec, std::size_t max_unstable,
                                   const SimplexOptions& lp_opts) {
  validate(net);
  box.validate();
  check_spec(net, box, spec);
  const std::size_t n0 = net.input_dim;
  const bool trust = spec.kind == ObjectiveKind::Trust;

  // Region over z: the box, and for trust also [0,1] and the delta cap.
  Vector zlo = box.lo, zhi = box.hi;
  if (trust) {
    for (std::size_t j = 0; j < n0; ++j) {
      zlo[j] = std::max({zlo[j], 0.0, spec.z_ref[j] - spec.delta_cap * spec.scale[j]});
      zhi[j] = std::min({zhi[j], 1.0, spec.z_ref[j] + spec.delta_cap * spec.scale[j]});
    }
  }
  OracleResult res;
  for (std::size_t j = 0; j < n0; ++j)
    if (zlo[j] > zhi[j]) return res;

  auto phase = phases_by_interval(net, zlo, zhi);
  std::vector<std::pair<std::size_t, std::size_t>> free;
  for (std::size_t k = 0; k < phase.size(); ++k)
    for (std::size_t r = 0; r < phase[k].size(); ++r)
      if (phase[k][r] == 0) free.emplace_back(k, r);
  res.unstable = free.size();
  if (free.size() > max_unstable)
    throw Error(ErrorKind::TooManyUnstable, "oracle: " + std::to_string(free.size()) +
                                                " unstable neurons exceed the limit of " +
                                                std::to_string(max_unstable));

  const double s = sign_value(spec.sign);
  const std::size_t nv = n0 + (trust ? 1 : 0);
  const std::uint64_t count = std::uint64_t{1} << free.size();
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    for (std::size_t f = 0; f < free.size(); ++f)
      phase[free[f].first][free[f].second] = (mask >> f) & 1 ? 1 : -1;

    LinearProgram lp;
    lp.lower = zlo;
    lp.upper = zhi;
    lp.cost.assign(nv, 0.0);
    if (trust) {
      lp.lower.push_back(0.0);
      lp.upper.push_back(spec.delta_cap);
    }

    // Compose the pattern's network into affine maps of z.
    std::vector<AffineExpr> cur(n0);
    for (std::size_t j = 0; j < n0; ++j) {
      cur[j].g.assign(n0, 0.0);
      cur[j].g[j] = 1.0;
    }
    std::vector<AffineExpr> out;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      const auto& L = net.layers[k];
      std::vector<AffineExpr> next(L.c.size());
      for (std::size_t r = 0; r < L.c.size(); ++r) {
        AffineExpr e;
        e.g.assign(n0, 0.0);
        e.g0 = L.c[r];
        for (std::size_t p = 0; p < cur.size(); ++p) {
          double w = L.a(r, p);
          if (w == 0.0) continue;
          e.g0 += w * cur[p].g0;
          for (std::size_t j = 0; j < n0; ++j) e.g[j] += w * cur[p].g[j];
        }
        if (k + 1 < net.layers.size()) {
          const bool active = phase[k][r] > 0;
          const bool was_free =
              std::find(free.begin(), free.end(), std::make_pair(k, r)) != free.end();
          if (was_free) {
            LinearRow row;
            for (std::size_t j = 0; j < n0; ++j)
              if (e.g[j] != 0.0) {
                row.index.push_back(j);
                row.value.push_back(e.g[j]);
              }
            row.sense = active ? RowSense::Ge : RowSense::Le;
            row.rhs = -e.g0;
            lp.rows.push_back(std::move(row));
          }
          if (!active) {
            e.g.assign(n0, 0.0);
            e.g0 = 0.0;
          }
        }
        next[r] = std::move(e);
      }
      cur = std::move(next);
    }
    const AffineExpr& xo = cur[spec.output];

    if (!trust) {
      lp.maximize = true;
      for (std::size_t j = 0; j < n0; ++j) lp.cost[j] = s * xo.g[j];
      lp.cost_offset = s * (xo.g0 - spec.x_ref);
    } else {
      lp.maximize = false;
      lp.cost[n0] = 1.0;
      for (std::size_t j = 0; j < n0; ++j) {
        // z_j - scale_j delta <= z_ref_j  and  z_j + scale_j delta >= z_ref_j
        lp.rows.push_back({{j, n0}, {1.0, -spec.scale[j]}, RowSense::Le, spec.z_ref[j]});
        lp.rows.push_back({{j, n0}, {1.0, spec.scale[j]}, RowSense::Ge, spec.z_ref[j]});
      }
      LinearRow target;
      for (std::size_t j = 0; j < n0; ++j)
        if (xo.g[j] != 0.0) {
          target.index.push_back(j);
          target.value.push_back(s * xo.g[j]);
        }
      target.sense = RowSense::Ge;
      target.rhs = spec.beta + s * spec.x_ref - s * xo.g0;
      if (target.index.empty()) {
        // Constant output on this piece: reachable everywhere or nowhere.
        if (target.rhs > lp_opts.feas_tol) {
          ++res.patterns;
          continue;
        }
      } else {
        lp.rows.push_back(std::move(target));
      }
    }

    ++res.patterns;
    LpSolution sol = solve_lp(lp, lp_opts);
    if (sol.status != LpStatus::Optimal) continue;
    ++res.feasible_patterns;
    const bool better = !res.feasible || (trust ? sol.objective < res.value : sol.objective > res.value);
    if (better) {
      res.feasible = true;
      res.value = sol.objective;
      res.argopt.assign(sol.x.begin(), sol.x.begin() + static_cast<std::ptrdiff_t>(n0));
    }
  }
  return res;
}

std::optional<double> evaluate(const FoldedNetwork& net, const ObjectiveSpec& spec,
                               std::span<const double> z, double tol) {
  Vector x = forward(net, z);
  const double dev = sign_value(spec.sign) * (x.at(spec.output) - spec.x_ref);
  if (spec.kind == ObjectiveKind::Robustness) return dev;
  if (dev < spec.beta - tol) return std::nullopt;
  double d = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) d = std::max(d, std::abs(z[j] - spec.z_ref[j]) / spec.scale[j]);
  if (d > spec.delta_cap + tol) return std::nullopt;
  return d;
}

namespace {

std::vector<unsigned> first_primes(std::size_t n) {
  std::vector<unsigned> p;
  for (unsigned c = 2; p.size() < n; ++c) {
    bool prime = true;
    for (unsigned q : p) {
      if (q * q > c) break;
      if (c % q == 0) {
        prime = false;
        break;
      }
    }
    if (prime) p.push_back(c);
  }
  return p;
}

double radical_inverse(std::uint64_t i, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

}  // namespace

SampleResult sample_bound(const FoldedNetwork& net, const InputBox& box, const ObjectiveSpec& spec,
                          std::size_t n, std::uint64_t seed) {
  validate(net);
  box.validate();
  check_spec(net, box, spec);
  const std::size_t n0 = net.input_dim;
  const bool trust = spec.kind == ObjectiveKind::Trust;
  Vector lo = box.lo, hi = box.hi;
  if (trust) {
    for (std::size_t j = 0; j < n0; ++j) {
      lo[j] = std::max({lo[j], 0.0, spec.z_ref[j] - spec.delta_cap * spec.scale[j]});
      hi[j] = std::min({hi[j], 1.0, spec.z_ref[j] + spec.delta_cap * spec.scale[j]});
    }
  }
  SampleResult res;
  for (std::size_t j = 0; j < n0; ++j)
    if (lo[j] > hi[j]) return res;

  Vector z(n0);
  auto consider = [&] {
    ++res.evaluated;
    auto v = evaluate(net, spec, z);
    if (!v) return;
    if (!res.found || (trust ? *v < res.value : *v > res.value)) {
      res.found = true;
      res.value = *v;
      res.point = z;
    }
  };

  if (n0 <= 12) {
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n0); ++m) {
      for (std::size_t j = 0; j < n0; ++j) z[j] = (m >> j) & 1 ? hi[j] : lo[j];
      consider();
    }
  }
  if (trust) {
    // The reference point itself and the point closest to it.
    for (std::size_t j = 0; j < n0; ++j) z[j] = std::clamp(spec.z_ref[j], lo[j], hi[j]);
    consider();
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector shift(n0);
  for (auto& v : shift) v = u(rng);
  auto primes = first_primes(n0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n0; ++j) {
      double t = radical_inverse(i + 1, primes[j]) + shift[j];
      t -= std::floor(t);
      z[j] = lo[j] + t * (hi[j] - lo[j]);
    }
    consider();
  }
  return res;
}

}  // namespace nncert::oracle
