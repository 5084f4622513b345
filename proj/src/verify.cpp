#include "nncert/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <thread>

#include "nncert/error.hpp"

namespace nncert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_vec(const Vector& v, std::size_t n, const char* what) {
  if (v.size() != n)
    throw Error(ErrorKind::DimensionMismatch, std::string(what) + " has " + std::to_string(v.size()) +
                                                  " entries, expected " + std::to_string(n));
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorKind::InvalidValue, std::string(what) + " is not finite");
}

}  // namespace

void VerificationQuery::validate(std::size_t n0, std::size_t m, bool need_alpha, bool need_beta) const {
  check_vec(z_ref, n0, "z_ref");
  for (double z : z_ref)
    if (z < 0.0 || z > 1.0) throw Error(ErrorKind::InvalidValue, "z_ref must lie in [0,1]");
  check_vec(x_ref, m, "x_ref");
  if (need_alpha || !alpha.empty()) {
    check_vec(alpha, n0, "alpha");
    for (double a : alpha)
      if (a < 0.0) throw Error(ErrorKind::InvalidValue, "alpha must be >= 0");
  }
  if (need_beta && !beta) throw Error(ErrorKind::InvalidArg, "query has no beta");
  if (beta && !(*beta > 0.0 && std::isfinite(*beta)))
    throw Error(ErrorKind::InvalidValue, "beta must be positive");
  if (!scale.empty()) {
    check_vec(scale, n0, "scale");
    for (double s : scale)
      if (!(s > 0.0)) throw Error(ErrorKind::InvalidValue, "scale must be positive");
  }
  if (delta_cap && !(*delta_cap > 0.0 && std::isfinite(*delta_cap)))
    throw Error(ErrorKind::InvalidValue, "delta_cap must be positive");
}

Vector VerificationQuery::scale_or_ones() const { return scale.empty() ? Vector(z_ref.size(), 1.0) : scale; }

bool RobustnessResult::certified() const {
  return std::all_of(outputs.begin(), outputs.end(), [](const OutputRobustness& o) { return o.certified; });
}

const char* to_string(TrustStatus s) noexcept {
  switch (s) {
    case TrustStatus::Found: return "found";
    case TrustStatus::NotFound: return "not_found";
    case TrustStatus::Uncertified: return "uncertified";
  }
  return "unknown";
}

namespace {

// Work items are run in clusters of consecutive indices; each writes only
// its own slot, so the outcome does not depend on scheduling.
void run_jobs(std::size_t count, std::size_t cluster, std::size_t threads,
              const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  cluster = std::max<std::size_t>(cluster, 1);
  const std::size_t clusters = (count + cluster - 1) / cluster;
  threads = std::clamp<std::size_t>(threads, 1, clusters);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < clusters;)
      for (std::size_t i = c * cluster; i < std::min(count, (c + 1) * cluster); ++i) fn(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

struct Prepared {
  InputBox box;
  LayerBounds bounds;
  StabilityMap stability;
  MilpProblem base;
  Vector x_ref;
  bool tightened = false;
  bool empirical = false;
};

Prepared prepare(const FoldedNetwork& net, const InputBox& box, const Vector& x_ref,
                 const VerifyOptions& opts) {
  Prepared pr;
  pr.box = box;
  pr.x_ref = x_ref;
  pr.bounds = propagate_bounds(net, box);
  pr.stability = classify_neurons(pr.bounds);
  const bool tighten = opts.tighten == TightenMode::On ||
                       (opts.tighten == TightenMode::Auto && pr.stability.unstable() > opts.tighten_threshold);
  if (tighten && pr.stability.unstable() > 0) {
    pr.bounds = lp_tighten(net, box, pr.bounds, TightenOptions{opts.bnb.lp});
    pr.stability = classify_neurons(pr.bounds);
    pr.tightened = true;
  }
  if (opts.empirical_samples > 0) {
    std::mt19937_64 rng(opts.seed);
    std::vector<Vector> samples(opts.empirical_samples, Vector(box.dim()));
    for (auto& z : samples)
      for (std::size_t j = 0; j < z.size(); ++j)
        z[j] = std::uniform_real_distribution<double>(box.lo[j], std::nextafter(box.hi[j], kInf))(rng);
    pr.stability = classify_empirical(net, samples);
    pr.empirical = true;
  }
  const StabilityMap st = opts.fix_stable ? pr.stability : StabilityMap::all_unstable(net);
  pr.base = encode_network(net, pr.bounds, st, box);
  return pr;
}

Subresult solve_sub(const FoldedNetwork& net, const MilpProblem& p, const BnbOptions& bnb) {
  Subresult s;
  try {
    MilpResult r = solve_milp(p, bnb, forward_heuristic(p, net));
    s.status = r.status;
    s.value = r.incumbent;
    s.bound = r.bound;
    s.gap = r.gap;
    s.nodes = r.nodes;
    s.seconds = r.wall_seconds;
    if (r.incumbent) s.witness = input_point(p, r.point);
  } catch (const std::exception& e) {
    s.failed = true;
    s.error = e.what();
    s.bound = p.objective.sense == ObjectiveSense::Maximize ? kInf : -kInf;
    s.gap = kInf;
  }
  return s;
}

Subresult failed_sub(const std::string& msg, bool maximize) {
  Subresult s;
  s.failed = true;
  s.error = msg;
  s.bound = maximize ? kInf : -kInf;
  s.gap = kInf;
  return s;
}

std::string output_name(const FoldedNetwork& net, std::size_t i) {
  return i < net.output_names.size() ? net.output_names[i] : "x_" + std::to_string(i + 1);
}

Vector reference(const FoldedNetwork& net, const VerificationQuery& q, const VerifyOptions& opts) {
  return opts.reference_from_model ? forward(net, q.z_ref) : q.x_ref;
}

void assemble(RobustnessResult& r, const FoldedNetwork& net) {
  r.R_max = 0.0;
  for (std::size_t i = 0; i < r.outputs.size(); ++i) {
    auto& o = r.outputs[i];
    o.name = output_name(net, i);
    // The minus subproblem maximizes x_ref - x, so its value negates.
    o.dev_plus = o.plus.value ? *o.plus.value : -kInf;
    o.dev_minus = o.minus.value ? -*o.minus.value : kInf;
    o.R = std::max(o.dev_plus, std::abs(o.dev_minus));
    if (!std::isfinite(o.R)) o.R = kInf;
    o.R_bound = std::max(o.plus.bound, o.minus.bound);
    o.certified = o.plus.certified() && o.minus.certified();
    o.gap = std::max(o.plus.gap, o.minus.gap);
    o.witness = o.dev_plus >= std::abs(o.dev_minus) ? o.plus.witness : o.minus.witness;
    r.R_max = std::max(r.R_max, o.R);
  }
}

void assemble(OutputTrust& o, const BnbOptions& bnb) {
  // Proven lower bound and best known value of min over both signs.
  double lower = kInf, upper = kInf;
  bool any_failed = false, any_limit = false;
  for (const Subresult* s : {&o.plus, &o.minus}) {
    if (s->failed) {
      any_failed = true;
      lower = -kInf;
      continue;
    }
    if (s->status == MilpStatus::Limit || s->status == MilpStatus::GapLimit) any_limit = true;
    lower = std::min(lower, s->bound);
    if (s->value && *s->value < upper) {
      upper = *s->value;
      o.witness = s->witness;
      o.sign = s == &o.plus ? Sign::Plus : Sign::Minus;
    }
  }
  o.delta_lower = lower;
  if (!std::isfinite(upper) && !any_failed && !any_limit) {
    o.status = TrustStatus::NotFound;
    o.delta_min = o.delta_cap;
    return;
  }
  o.delta_min = upper;
  const double tol = std::max(bnb.abs_gap, bnb.rel_gap * std::abs(upper));
  o.status = std::isfinite(upper) && !any_failed && upper - lower <= tol ? TrustStatus::Found
                                                                         : TrustStatus::Uncertified;
}

struct RobustJob {
  std::size_t query, output;
  Sign sign;
};

}  // namespace

RobustnessBatch robustness_batch(const FoldedNetwork& net, const std::vector<VerificationQuery>& qs,
                                 const VerifyOptions& opts) {
  if (qs.empty()) throw Error(ErrorKind::InvalidArg, "robustness_batch: no queries");
  validate(net);
  const std::size_t m = net.output_dim();
  RobustnessBatch batch;
  batch.results.resize(qs.size());
  std::vector<std::optional<Prepared>> prep(qs.size());
  std::vector<std::string> prep_error(qs.size());

  for (std::size_t q = 0; q < qs.size(); ++q) {
    qs[q].validate(net.input_dim, m, true, false);
    auto& r = batch.results[q];
    r.query_id = qs[q].id;
    r.x_ref = reference(net, qs[q], opts);
    r.box = InputBox::ball(qs[q].z_ref, qs[q].alpha, qs[q].clip_to_domain);
  }
  run_jobs(qs.size(), 1, opts.jobs, [&](std::size_t q) {
    try {
      prep[q] = prepare(net, batch.results[q].box, batch.results[q].x_ref, opts);
    } catch (const std::exception& e) {
      prep_error[q] = e.what();
    }
  });

  std::vector<RobustJob> jobs;
  for (std::size_t q = 0; q < qs.size(); ++q)
    for (std::size_t i = 0; i < m; ++i)
      for (Sign s : {Sign::Plus, Sign::Minus}) jobs.push_back({q, i, s});
  std::vector<Subresult> subs(jobs.size());
  run_jobs(jobs.size(), opts.cluster_size ? opts.cluster_size : m, opts.jobs, [&](std::size_t j) {
    const auto& job = jobs[j];
    if (!prep[job.query]) {
      subs[j] = failed_sub(prep_error[job.query], true);
      return;
    }
    const Prepared& pr = *prep[job.query];
    const MilpProblem p = set_robustness_objective(pr.base, job.output, job.sign, pr.x_ref[job.output]);
    subs[j] = solve_sub(net, p, opts.bnb);
  });

  batch.R_max.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) batch.output_names.push_back(output_name(net, i));
  for (std::size_t q = 0; q < qs.size(); ++q) {
    auto& r = batch.results[q];
    r.outputs.resize(m);
    if (prep[q]) {
      r.bounds = prep[q]->bounds;
      r.unstable = prep[q]->stability.unstable();
      r.tightened = prep[q]->tightened;
      r.empirical = prep[q]->empirical;
    }
    for (std::size_t i = 0; i < m; ++i) {
      r.outputs[i].plus = std::move(subs[(q * m + i) * 2]);
      r.outputs[i].minus = std::move(subs[(q * m + i) * 2 + 1]);
    }
    assemble(r, net);
    for (std::size_t i = 0; i < m; ++i) {
      batch.R_max[i] = std::max(batch.R_max[i], r.outputs[i].R);
      batch.uncertified += !r.outputs[i].plus.certified() + !r.outputs[i].minus.certified();
    }
  }
  return batch;
}

RobustnessResult robustness(const FoldedNetwork& net, const VerificationQuery& q, const VerifyOptions& opts) {
  return std::move(robustness_batch(net, {q}, opts).results.front());
}

std::vector<TrustResult> trust_batch(const FoldedNetwork& net, const std::vector<VerificationQuery>& qs,
                                     const VerifyOptions& opts) {
  validate(net);
  const std::size_t n0 = net.input_dim, m = net.output_dim();
  std::vector<TrustResult> out(qs.size());
  std::vector<std::optional<Prepared>> prep(qs.size());
  std::vector<std::string> prep_error(qs.size());

  for (std::size_t q = 0; q < qs.size(); ++q) {
    qs[q].validate(n0, m, false, true);
    auto& r = out[q];
    r.query_id = qs[q].id;
    r.x_ref = reference(net, qs[q], opts);
    r.beta = *qs[q].beta;
    r.scale = qs[q].scale_or_ones();
    if (qs[q].delta_cap) {
      r.delta_cap = *qs[q].delta_cap;
    } else {
      // Smallest cap whose ball covers the unit box.
      for (std::size_t j = 0; j < n0; ++j)
        r.delta_cap = std::max(r.delta_cap, std::max(qs[q].z_ref[j], 1.0 - qs[q].z_ref[j]) / r.scale[j]);
    }
    r.box = InputBox::unit(n0);
    for (std::size_t j = 0; j < n0; ++j) {
      r.box.lo[j] = std::max(0.0, qs[q].z_ref[j] - r.delta_cap * r.scale[j]);
      r.box.hi[j] = std::min(1.0, qs[q].z_ref[j] + r.delta_cap * r.scale[j]);
    }
  }
  run_jobs(qs.size(), 1, opts.jobs, [&](std::size_t q) {
    try {
      prep[q] = prepare(net, out[q].box, out[q].x_ref, opts);
    } catch (const std::exception& e) {
      prep_error[q] = e.what();
    }
  });

  std::vector<RobustJob> jobs;
  for (std::size_t q = 0; q < qs.size(); ++q)
    for (std::size_t i = 0; i < m; ++i)
      for (Sign s : {Sign::Plus, Sign::Minus}) jobs.push_back({q, i, s});
  std::vector<Subresult> subs(jobs.size());
  run_jobs(jobs.size(), opts.cluster_size ? opts.cluster_size : m, opts.jobs, [&](std::size_t j) {
    const auto& job = jobs[j];
    if (!prep[job.query]) {
      subs[j] = failed_sub(prep_error[job.query], false);
      return;
    }
    const Prepared& pr = *prep[job.query];
    const auto& r = out[job.query];
    try {
      const MilpProblem p = set_trust_problem(pr.base, job.output, job.sign, r.beta, r.x_ref[job.output],
                                              qs[job.query].z_ref, r.scale, r.delta_cap);
      subs[j] = solve_sub(net, p, opts.bnb);
    } catch (const std::exception& e) {
      subs[j] = failed_sub(e.what(), false);
    }
  });

  for (std::size_t q = 0; q < qs.size(); ++q) {
    auto& r = out[q];
    if (prep[q]) {
      r.unstable = prep[q]->stability.unstable();
      r.empirical = prep[q]->empirical;
    }
    r.outputs.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      auto& o = r.outputs[i];
      o.name = output_name(net, i);
      o.delta_cap = r.delta_cap;
      o.plus = std::move(subs[(q * m + i) * 2]);
      o.minus = std::move(subs[(q * m + i) * 2 + 1]);
      assemble(o, opts.bnb);
      if (o.status == TrustStatus::Found && (!r.delta_min || o.delta_min < *r.delta_min)) r.delta_min = o.delta_min;
    }
  }
  return out;
}

TrustResult trustworthiness(const FoldedNetwork& net, const VerificationQuery& q, const VerifyOptions& opts) {
  return std::move(trust_batch(net, {q}, opts).front());
}

Histogram make_histogram(const Vector& values, std::size_t bins) {
  if (bins == 0) throw Error(ErrorKind::InvalidArg, "histogram needs at least one bin");
  Histogram h;
  if (values.empty()) return h;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn, hi = *mx;
  if (!(hi > lo)) {
    h.edges = {lo, hi};
    h.counts = {values.size()};
    return h;
  }
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * double(b) / double(bins);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * double(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

Comparison compare_robustness_vs_test(const RobustnessBatch& agg, const Vector& T, std::size_t bins) {
  if (T.size() != agg.R_max.size())
    throw Error(ErrorKind::DimensionMismatch, "compare: T has " + std::to_string(T.size()) +
                                                  " outputs, report has " + std::to_string(agg.R_max.size()));
  Comparison c;
  c.difference.resize(T.size());
  for (std::size_t i = 0; i < T.size(); ++i) {
    c.difference[i] = agg.R_max[i] - T[i];
    c.positive += c.difference[i] > 0.0;
  }
  c.histogram = make_histogram(c.difference, bins);
  return c;
}

std::vector<std::size_t> samples_outside_balls(const std::vector<VerificationQuery>& qs, const Matrix& inputs,
                                               const std::vector<std::size_t>& rows, double tol) {
  std::vector<std::size_t> outside;
  for (std::size_t r : rows) {
    auto z = inputs.row(r);
    bool inside = false;
    for (const auto& q : qs) {
      if (q.z_ref.size() != z.size() || q.alpha.size() != z.size())
        throw Error(ErrorKind::DimensionMismatch, "ball check: query and sample dimensions differ");
      bool in = true;
      for (std::size_t j = 0; j < z.size() && in; ++j) in = std::abs(z[j] - q.z_ref[j]) <= q.alpha[j] + tol;
      if (in) {
        inside = true;
        break;
      }
    }
    if (!inside) outside.push_back(r);
  }
  return outside;
}

double delta_percent(const std::vector<InputRange>& norm, const VerificationQuery& q, double delta) {
  if (norm.size() != q.z_ref.size()) throw Error(ErrorKind::DimensionMismatch, "delta_percent: input_norm size");
  const Vector scale = q.scale_or_ones();
  double pct = 0.0;
  for (std::size_t j = 0; j < norm.size(); ++j) {
    const double width = norm[j].hi - norm[j].lo;
    double ref = std::abs(norm[j].lo + q.z_ref[j] * width);
    if (ref == 0.0) ref = std::abs(width);
    pct = std::max(pct, 100.0 * delta * scale[j] * width / ref);
  }
  return pct;
}

}  // namespace nncert
