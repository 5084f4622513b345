#include "nncert/report.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "nncert/error.hpp"
#include "nncert/io.hpp"
#include "nncert/kernels.hpp"

namespace nncert {

using ojson = nlohmann::ordered_json;

namespace {

Vector read_vec(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<Vector>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::Parse, std::string("query: \"") + key + "\" must be an array of numbers");
  }
}

VerificationQuery parse_one(const nlohmann::json& j, std::size_t index) {
  if (!j.is_object()) throw Error(ErrorKind::Parse, "query " + std::to_string(index) + " is not an object");
  VerificationQuery q;
  q.id = j.contains("id") ? j["id"].get<std::string>() : "q" + std::to_string(index);
  if (!j.contains("z_ref") || !j.contains("x_ref"))
    throw Error(ErrorKind::Parse, "query " + q.id + " needs z_ref and x_ref");
  q.z_ref = read_vec(j, "z_ref");
  q.x_ref = read_vec(j, "x_ref");
  try {
    if (j.contains("alpha")) {
      const auto& a = j["alpha"];
      q.alpha = a.is_number() ? Vector(q.z_ref.size(), a.get<double>()) : a.get<Vector>();
    }
    if (j.contains("beta") && !j["beta"].is_null()) q.beta = j["beta"].get<double>();
    if (j.contains("scale") && !j["scale"].is_null()) {
      const auto& s = j["scale"];
      q.scale = s.is_number() ? Vector(q.z_ref.size(), s.get<double>()) : s.get<Vector>();
    }
    if (j.contains("clip_to_domain")) q.clip_to_domain = j["clip_to_domain"].get<bool>();
    if (j.contains("delta_cap") && !j["delta_cap"].is_null()) q.delta_cap = j["delta_cap"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, "query " + q.id + ": " + e.what());
  }
  return q;
}

ojson opt_number(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(v > 0 ? "inf" : "-inf"); }

ojson sub_json(const Subresult& s) {
  ojson j;
  j["status"] = s.failed ? "failed" : to_string(s.status);
  j["value"] = opt_number(s.value);
  j["bound"] = num(s.bound);
  j["gap"] = num(s.gap);
  j["nodes"] = s.nodes;
  j["witness"] = s.witness;
  if (s.failed) j["error"] = s.error;
  return j;
}

ojson provenance(const ReportContext& ctx) {
  const auto& o = ctx.options;
  ojson p;
  p["network_hash"] = ctx.network_hash;
  p["query_hash"] = ctx.query_hash;
  p["tolerances"] = {{"abs_gap", o.bnb.abs_gap},          {"rel_gap", o.bnb.rel_gap},
                     {"integrality_tol", o.bnb.integrality_tol}, {"feas_tol", o.bnb.lp.feas_tol},
                     {"opt_tol", o.bnb.lp.opt_tol},        {"pivot_tol", o.bnb.lp.pivot_tol}};
  const char* tighten = o.tighten == TightenMode::On ? "on" : o.tighten == TightenMode::Off ? "off" : "auto";
  p["solver"] = {{"node_limit", o.bnb.node_limit},
                 {"time_limit_seconds", num(o.bnb.time_limit_seconds)},
                 {"branch_rule", o.bnb.branch_rule == BranchRule::MostFractional ? "most_fractional"
                                                                                 : "earliest_layer_most_fractional"},
                 {"tighten", tighten},
                 {"tighten_threshold", o.tighten_threshold},
                 {"fix_stable", o.fix_stable},
                 {"cluster_size", o.cluster_size},
                 {"reference_from_model", o.reference_from_model},
                 {"empirical_samples", o.empirical_samples},
                 {"refactor_interval", o.bnb.lp.refactor_interval},
                 {"bland_after", o.bnb.lp.bland_after},
                 {"kernels", std::string(kernels::name(kernels::active()))}};
  return p;
}

ojson query_json(const VerificationQuery& q) {
  ojson j;
  j["z_ref"] = q.z_ref;
  j["x_ref"] = q.x_ref;
  j["alpha"] = q.alpha;
  j["beta"] = opt_number(q.beta);
  j["scale"] = q.scale;
  j["clip_to_domain"] = q.clip_to_domain;
  j["delta_cap"] = opt_number(q.delta_cap);
  return j;
}

}  // namespace

std::vector<VerificationQuery> parse_queries(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("query file: ") + e.what());
  }
  if (j.is_object() && j.contains("queries")) j = j["queries"];
  std::vector<VerificationQuery> qs;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) qs.push_back(parse_one(j[i], i));
  } else {
    qs.push_back(parse_one(j, 0));
  }
  if (qs.empty()) throw Error(ErrorKind::Parse, "query file holds no queries");
  return qs;
}

std::string save_queries(const std::vector<VerificationQuery>& qs) {
  ojson arr = ojson::array();
  for (const auto& q : qs) {
    ojson j;
    j["id"] = q.id;
    j["z_ref"] = q.z_ref;
    j["x_ref"] = q.x_ref;
    if (!q.alpha.empty()) j["alpha"] = q.alpha;
    if (q.beta) j["beta"] = *q.beta;
    if (!q.scale.empty()) j["scale"] = q.scale;
    j["clip_to_domain"] = q.clip_to_domain;
    if (q.delta_cap) j["delta_cap"] = *q.delta_cap;
    arr.push_back(std::move(j));
  }
  return ojson{{"queries", arr}}.dump(2) + "\n";
}

std::string robustness_report(const RobustnessBatch& batch, const std::vector<VerificationQuery>& qs,
                              const ReportContext& ctx, const std::optional<ComparisonBlock>& cmp) {
  ojson root;
  root["kind"] = "robustness";
  root["provenance"] = provenance(ctx);
  ojson results = ojson::array();
  for (std::size_t q = 0; q < batch.results.size(); ++q) {
    const auto& r = batch.results[q];
    ojson jq;
    jq["query_id"] = r.query_id;
    jq["query"] = query_json(qs.at(q));
    jq["x_ref_used"] = r.x_ref;
    jq["box"] = {{"lo", r.box.lo}, {"hi", r.box.hi}};
    jq["unstable"] = r.unstable;
    jq["tightened"] = r.tightened;
    jq["certificate"] = !r.empirical;
    ojson outs = ojson::array();
    for (const auto& o : r.outputs) {
      ojson jo;
      jo["name"] = o.name;
      jo["dev_plus"] = num(o.dev_plus);
      jo["dev_minus"] = num(o.dev_minus);
      jo["R"] = num(o.R);
      jo["R_bound"] = num(o.R_bound);
      jo["status"] = o.certified ? "certified" : "uncertified";
      jo["gap"] = num(o.gap);
      jo["witness"] = o.witness;
      jo["plus"] = sub_json(o.plus);
      jo["minus"] = sub_json(o.minus);
      outs.push_back(std::move(jo));
    }
    jq["per_output"] = std::move(outs);
    results.push_back(std::move(jq));
  }
  root["results"] = std::move(results);
  ojson agg;
  agg["output_names"] = batch.output_names;
  ojson rmax = ojson::array();
  for (double v : batch.R_max) rmax.push_back(num(v));
  agg["R_max"] = rmax;
  double joint = 0.0;
  for (double v : batch.R_max) joint = std::max(joint, v);
  agg["R_joint"] = num(joint);
  agg["uncertified_subproblems"] = batch.uncertified;
  root["aggregate"] = std::move(agg);
  if (cmp) {
    ojson c;
    c["T"] = cmp->T;
    c["difference"] = cmp->comparison.difference;
    c["positive_outputs"] = cmp->comparison.positive;
    ojson exceeds = ojson::array();
    for (std::size_t i = 0; i < cmp->comparison.difference.size(); ++i)
      if (cmp->comparison.difference[i] > 0.0) exceeds.push_back(batch.output_names.at(i));
    // Outputs where the certified deviation exceeds the test error: an
    // input perturbation exists for which the network does worse.
    c["bound_exceeds_test_error"] = exceeds;
    c["test_samples"] = cmp->test_samples;
    c["samples_outside_balls"] = cmp->outside;
    root["comparison"] = std::move(c);
  }
  return root.dump(2) + "\n";
}

std::string trust_report(const std::vector<TrustResult>& results, const std::vector<VerificationQuery>& qs,
                         const std::vector<InputRange>& norm, const ReportContext& ctx) {
  ojson root;
  root["kind"] = "trust";
  root["provenance"] = provenance(ctx);
  ojson arr = ojson::array();
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& r = results[q];
    ojson jq;
    jq["query_id"] = r.query_id;
    jq["query"] = query_json(qs.at(q));
    jq["x_ref_used"] = r.x_ref;
    jq["beta"] = r.beta;
    jq["scale"] = r.scale;
    jq["delta_cap"] = r.delta_cap;
    jq["box"] = {{"lo", r.box.lo}, {"hi", r.box.hi}};
    jq["unstable"] = r.unstable;
    jq["certificate"] = !r.empirical;
    ojson outs = ojson::array();
    for (const auto& o : r.outputs) {
      ojson jo;
      jo["name"] = o.name;
      jo["status"] = to_string(o.status);
      jo["delta_min"] = o.status == TrustStatus::NotFound ? ojson(nullptr) : num(o.delta_min);
      jo["delta_lower"] = num(o.delta_lower);
      jo["delta_min_percent"] = o.status == TrustStatus::Found ? ojson(delta_percent(norm, qs.at(q), o.delta_min))
                                                               : ojson(nullptr);
      jo["sign"] = o.sign == Sign::Plus ? "+" : "-";
      jo["witness"] = o.witness;
      jo["plus"] = sub_json(o.plus);
      jo["minus"] = sub_json(o.minus);
      outs.push_back(std::move(jo));
    }
    jq["per_output"] = std::move(outs);
    jq["delta_min"] = opt_number(r.delta_min);
    // No perturbation up to the cap reaches beta on any output.
    bool trustworthy = true;
    for (const auto& o : r.outputs) trustworthy = trustworthy && o.status == TrustStatus::NotFound;
    jq["trustworthy_within_cap"] = trustworthy;
    arr.push_back(std::move(jq));
  }
  root["results"] = std::move(arr);
  return root.dump(2) + "\n";
}

std::string robustness_timing(const RobustnessBatch& batch) {
  ojson root = ojson::array();
  for (const auto& r : batch.results) {
    ojson q;
    q["query_id"] = r.query_id;
    ojson outs = ojson::array();
    for (const auto& o : r.outputs)
      outs.push_back({{"name", o.name}, {"plus_seconds", o.plus.seconds}, {"minus_seconds", o.minus.seconds}});
    q["per_output"] = std::move(outs);
    root.push_back(std::move(q));
  }
  return ojson{{"timing", root}}.dump(2) + "\n";
}

std::string trust_timing(const std::vector<TrustResult>& results) {
  ojson root = ojson::array();
  for (const auto& r : results) {
    ojson q;
    q["query_id"] = r.query_id;
    ojson outs = ojson::array();
    for (const auto& o : r.outputs)
      outs.push_back({{"name", o.name}, {"plus_seconds", o.plus.seconds}, {"minus_seconds", o.minus.seconds}});
    q["per_output"] = std::move(outs);
    root.push_back(std::move(q));
  }
  return ojson{{"timing", root}}.dump(2) + "\n";
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    out << format_double(h.edges[b]) << ',' << format_double(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
  return out.str();
}

std::string trust_table_csv(const std::vector<TrustResult>& results, const std::vector<VerificationQuery>& qs,
                            const std::vector<InputRange>& norm) {
  std::ostringstream out;
  out << "query_id,output_name,delta_min_percent\n";
  for (std::size_t q = 0; q < results.size(); ++q)
    for (const auto& o : results[q].outputs) {
      out << results[q].query_id << ',' << o.name << ',';
      if (o.status == TrustStatus::Found) out << format_double(delta_percent(norm, qs.at(q), o.delta_min));
      else if (o.status == TrustStatus::NotFound) out << "not_found";
      else out << "uncertified";
      out << '\n';
    }
  return out.str();
}

}  // namespace nncert
