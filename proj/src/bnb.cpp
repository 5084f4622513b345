#include "nncert/bnb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>
#include <vector>

#include "nncert/error.hpp"

namespace nncert {

const char* to_string(MilpStatus s) noexcept {
  switch (s) {
    case MilpStatus::Certified: return "certified";
    case MilpStatus::GapLimit: return "gap_limit";
    case MilpStatus::Infeasible: return "infeasible";
    case MilpStatus::Limit: return "limit";
  }
  return "unknown";
}

IncumbentHeuristic forward_heuristic(const MilpProblem& p, const FoldedNetwork& net) {
  return [&p, &net](std::span<const double> x) -> std::optional<Candidate> {
    auto lifted = lift_point(p, net, input_point(p, x));
    if (!lifted) return std::nullopt;
    const double obj = objective_value(p, *lifted);
    return Candidate{std::move(*lifted), obj};
  };
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Node {
  BinaryFixing fix;
  double bound;  // maximization sense
  std::size_t depth;
  std::size_t id;
};

// Largest bound first, deeper first on ties, then creation order.
struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound < b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  }
};

std::optional<std::size_t> pick_branch(const MilpProblem& p, const std::vector<std::size_t>& bins,
                                       const BinaryFixing& fix, std::span<const double> x,
                                       const BnbOptions& opts) {
  std::optional<std::size_t> best;
  double best_frac = opts.integrality_tol;
  std::size_t best_layer = 0;
  for (std::size_t b : bins) {
    if (fix[b] != kFree) continue;
    const double frac = std::min(x[b], 1.0 - x[b]);
    if (frac <= opts.integrality_tol) continue;
    const std::size_t layer = p.vars[b].layer;
    if (opts.branch_rule == BranchRule::EarliestLayerMostFractional && best) {
      if (layer > best_layer) continue;
      if (layer < best_layer) {
        best = b;
        best_frac = frac;
        best_layer = layer;
        continue;
      }
    }
    if (!best || frac > best_frac) {
      best = b;
      best_frac = frac;
      best_layer = layer;
    }
  }
  return best;
}

}  // namespace

MilpResult solve_milp(const MilpProblem& p, const BnbOptions& opts,
                      const IncumbentHeuristic& heuristic) {
  if (opts.abs_gap < 0.0 || opts.rel_gap < 0.0)
    throw Error(ErrorKind::InvalidArg, "gap tolerances must be >= 0");
  const auto start = std::chrono::steady_clock::now();
  const double sense = p.objective.sense == ObjectiveSense::Maximize ? 1.0 : -1.0;
  const std::vector<std::size_t> bins = p.binaries();

  std::priority_queue<Node, std::vector<Node>, NodeOrder> queue;
  queue.push(Node{BinaryFixing(p.vars.size(), kFree), kInf, 0, 0});
  std::size_t next_id = 1;

  std::optional<double> inc;
  Vector inc_point;
  double closed = -kInf;  // best bound among nodes closed without children
  bool hit_limit = false;
  MilpResult result;

  auto global_bound = [&] {
    double b = closed;
    if (!queue.empty()) b = std::max(b, queue.top().bound);
    if (inc) b = std::max(b, *inc);
    return b;
  };
  auto tolerance = [&] { return std::max(opts.abs_gap, opts.rel_gap * std::abs(*inc)); };
  auto offer = [&](const Candidate& c) {
    const double v = sense * c.objective;
    if (!inc || v > *inc) {
      inc = v;
      inc_point = c.point;
    }
  };
  auto trace = [&](const Node& node, double bound, const char* action) {
    if (!opts.trace) return;
    opts.trace(BnbTraceRow{node.id, node.depth, sense * bound,
                           inc ? sense * *inc : std::numeric_limits<double>::quiet_NaN(), action,
                           sense * global_bound()});
  };

  while (!queue.empty()) {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (result.nodes >= opts.node_limit || elapsed > opts.time_limit_seconds) {
      hit_limit = true;
      break;
    }
    if (inc && global_bound() - *inc <= tolerance()) break;

    Node node = queue.top();
    queue.pop();
    if (inc && node.bound <= *inc + opts.abs_gap) {
      closed = std::max(closed, node.bound);
      trace(node, node.bound, "prune-bound");
      continue;
    }

    ++result.nodes;
    LpSolution sol;
    try {
      sol = solve_lp(p, node.fix, opts.lp);
    } catch (const Error& e) {
      throw Error(ErrorKind::NumericalBreakdown,
                  "branch-and-bound node " + std::to_string(node.id) + ": " + e.what());
    }
    if (sol.status != LpStatus::Optimal) {
      trace(node, -kInf, "prune-infeasible");
      continue;
    }

    const double bound = std::min(sense * sol.objective, node.bound);
    std::optional<Candidate> cand;
    if (heuristic) {
      cand = heuristic(sol.x);
      if (cand) offer(*cand);
    }
    if (inc && bound <= *inc + opts.abs_gap) {
      closed = std::max(closed, bound);
      trace(node, bound, "prune-bound");
      continue;
    }

    const auto branch = pick_branch(p, bins, node.fix, sol.x, opts);
    if (!branch) {
      offer(Candidate{sol.x, sol.objective});
      closed = std::max(closed, bound);
      trace(node, bound, "integral");
      continue;
    }

    for (std::int8_t v : {std::int8_t{0}, std::int8_t{1}}) {
      Node child{node.fix, bound, node.depth + 1, next_id++};
      child.fix[*branch] = v;
      queue.push(std::move(child));
    }
    trace(node, bound, "branch");
  }

  const double best = global_bound();
  if (inc) {
    result.incumbent = sense * *inc;
    result.point = std::move(inc_point);
    result.gap = std::max(0.0, best - *inc);
    result.bound = sense * best;
    result.status = result.gap <= tolerance() ? MilpStatus::Certified : MilpStatus::GapLimit;
  } else {
    result.status = hit_limit ? MilpStatus::Limit : MilpStatus::Infeasible;
    result.bound = hit_limit ? sense * best : -sense * kInf;
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace nncert
