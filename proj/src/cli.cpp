#include "nncert/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nncert/error.hpp"
#include "nncert/io.hpp"
#include "nncert/oracle.hpp"
#include "nncert/report.hpp"
#include "nncert/trainer.hpp"
#include "nncert/verify.hpp"

namespace nncert::cli {

namespace {

constexpr const char* kConfigEnv = "NNCERT_CONFIG";
constexpr double kDiscrepancyTol = 1e-6;

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::SolverFailure:
    case ErrorKind::NumericalBreakdown:
    case ErrorKind::UnsoundBounds:
    case ErrorKind::Divergence:
      return kSolverFailure;
    default:
      return kInputError;
  }
}

// Defaults from the file named by NNCERT_CONFIG, overridden by flags.
nlohmann::json load_env_config() {
  const char* path = std::getenv(kConfigEnv);
  if (!path || !*path) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(read_file(path));
    if (!j.is_object()) throw Error(ErrorKind::Parse, std::string(kConfigEnv) + " file must hold a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("config ") + path + ": " + e.what());
  }
}

struct Globals {
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  double time_limit = std::numeric_limits<double>::infinity();
  double gap = 1e-6;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
  CLI::Option* time_opt = nullptr;
  CLI::Option* gap_opt = nullptr;
};

struct VerifyFlags {
  std::string network, queries, out, trace;
  std::string tighten = "auto";
  double abs_gap = 1e-8;
  std::size_t node_limit = 1'000'000;
  bool no_fix_stable = false;
  bool model_reference = false;
  std::size_t cluster = 0;
  std::size_t empirical = 0;
};

void add_verify_flags(CLI::App* sub, VerifyFlags& f) {
  sub->add_option("--network", f.network, "network JSON")->required();
  sub->add_option("--queries", f.queries, "query JSON")->required();
  sub->add_option("--out", f.out, "report JSON path (stdout if omitted)");
  sub->add_option("--tighten", f.tighten, "LP bound tightening: auto|on|off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  sub->add_option("--abs-gap", f.abs_gap, "absolute optimality gap");
  sub->add_option("--node-limit", f.node_limit, "branch-and-bound node limit per subproblem");
  sub->add_flag("--no-fix-stable", f.no_fix_stable, "keep a binary for every hidden neuron");
  sub->add_flag("--model-reference", f.model_reference, "use forward(z_ref) as the output reference");
  sub->add_option("--cluster-size", f.cluster, "subproblems per dispatched cluster (0 = outputs)");
  sub->add_option("--unsafe-empirical-stability", f.empirical,
                  "UNSAFE: classify neurons from N samples; results are not certificates");
  sub->add_option("--bnb-trace", f.trace, "write a per-node CSV trace");
}

VerifyOptions make_verify_options(const VerifyFlags& f, const Globals& g, const nlohmann::json& cfg) {
  VerifyOptions o;
  const auto v = cfg.contains("verify") ? cfg["verify"] : nlohmann::json::object();
  o.jobs = g.jobs_opt->count() ? g.jobs : v.value("jobs", g.jobs);
  o.bnb.time_limit_seconds = g.time_opt->count() ? g.time_limit : v.value("time_limit", g.time_limit);
  o.bnb.rel_gap = g.gap_opt->count() ? g.gap : v.value("gap", g.gap);
  o.bnb.abs_gap = f.abs_gap;
  o.bnb.node_limit = f.node_limit;
  o.seed = g.seed_opt->count() ? g.seed : v.value("seed", g.seed);
  o.tighten = f.tighten == "on" ? TightenMode::On : f.tighten == "off" ? TightenMode::Off : TightenMode::Auto;
  o.fix_stable = !f.no_fix_stable;
  o.reference_from_model = f.model_reference;
  o.cluster_size = f.cluster;
  o.empirical_samples = f.empirical;
  if (o.jobs == 0) o.jobs = 1;
  if (!(o.bnb.rel_gap >= 0.0) || !(o.bnb.abs_gap >= 0.0)) throw Error(ErrorKind::InvalidArg, "gaps must be >= 0");
  if (!(o.bnb.time_limit_seconds > 0.0)) throw Error(ErrorKind::InvalidArg, "time limit must be positive");
  return o;
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) out << text;
  else write_file(path, text);
}

std::string sidecar(const std::string& report_path) { return report_path + ".timing.json"; }

// Installs a CSV trace writer shared by all worker threads.
struct TraceSink {
  std::ofstream file;
  std::mutex mu;
};

void attach_trace(VerifyOptions& o, const std::string& path, TraceSink& sink) {
  if (path.empty()) return;
  sink.file.open(path);
  if (!sink.file) throw Error(ErrorKind::Io, "cannot write " + path);
  sink.file << "node_id,depth,bound,incumbent,action,global_bound\n";
  o.bnb.trace = [&sink](const BnbTraceRow& r) {
    std::lock_guard lock(sink.mu);
    sink.file << r.node_id << ',' << r.depth << ',' << format_double(r.bound) << ','
              << format_double(r.incumbent) << ',' << r.action << ',' << format_double(r.global_bound) << '\n';
  };
}

// ---------------------------------------------------------------------------

int cmd_gen_data(std::size_t n0, std::size_t m, std::size_t s, double noise, const std::string& out_path,
                 const std::string& queries_out, std::optional<double> alpha, std::optional<double> beta,
                 const Globals& g, std::ostream& out) {
  Dataset ds = gen_synthetic(n0, m, s, noise, g.seed);
  save_dataset_file(ds, out_path);
  out << "wrote " << ds.size() << " rows (" << ds.train.size() << " train, " << ds.test.size()
      << " test) to " << out_path << "\n";
  if (!queries_out.empty()) {
    // One operating condition per test row: the clean input and its target.
    std::vector<VerificationQuery> qs;
    for (std::size_t i : ds.test) {
      VerificationQuery q;
      q.id = "row" + std::to_string(i);
      auto z = ds.clean_inputs->row(i);
      q.z_ref.assign(z.begin(), z.end());
      auto x = ds.targets.row(i);
      q.x_ref.assign(x.begin(), x.end());
      q.alpha.assign(n0, alpha.value_or(noise));
      q.beta = beta;
      qs.push_back(std::move(q));
    }
    write_file(queries_out, save_queries(qs));
    out << "wrote " << qs.size() << " queries to " << queries_out << "\n";
  }
  return kOk;
}

int cmd_train(const std::string& dataset, const std::string& config, const std::string& out_path,
              const Globals& g, const nlohmann::json& env_cfg, std::ostream& out) {
  TrainConfig cfg;
  if (env_cfg.contains("train")) cfg = parse_train_config(env_cfg["train"].dump(), cfg);
  if (!config.empty()) cfg = parse_train_config(read_file(config), cfg);
  if (g.seed_opt->count()) cfg.seed = g.seed;
  Dataset ds = load_dataset_file(dataset);
  TrainDiagnostics diag;
  NetworkSpec spec = train(ds, cfg, &diag);
  save_network_file(spec, out_path);
  FoldedNetwork net = fold_bn(spec);
  Vector t = evaluate(net, ds, Split::Test);
  out << "train_mse " << format_double(diag.final_train_mse) << "\n";
  for (std::size_t i = 0; i < t.size(); ++i) out << "T " << net.output_names[i] << ' ' << format_double(t[i]) << "\n";
  return kOk;
}

nlohmann::ordered_json bounds_json(const LayerBounds& b, const StabilityMap& st) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < b.layer_count(); ++k) {
    nlohmann::ordered_json l;
    l["lo"] = b.lo[k];
    l["hi"] = b.hi[k];
    if (k < st.layers.size()) {
      std::vector<std::string> s;
      for (auto v : st.layers[k])
        s.push_back(v == Stability::Active ? "active" : v == Stability::Dead ? "dead" : "unstable");
      l["stability"] = s;
    }
    layers.push_back(std::move(l));
  }
  return layers;
}

int cmd_bounds(const std::string& network, const std::string& queries, std::size_t index,
               const std::string& tighten, const std::string& out_path, std::ostream& out) {
  NetworkSpec spec = load_network_file(network);
  FoldedNetwork net = fold_bn(spec);
  InputBox box = InputBox::unit(net.input_dim);
  if (!queries.empty()) {
    auto qs = parse_queries(read_file(queries));
    if (index >= qs.size()) throw Error(ErrorKind::Index, "query index out of range");
    qs[index].validate(net.input_dim, net.output_dim(), true, false);
    box = InputBox::ball(qs[index].z_ref, qs[index].alpha, qs[index].clip_to_domain);
  }
  LayerBounds b = propagate_bounds(net, box);
  StabilityMap st = classify_neurons(b);
  nlohmann::ordered_json root;
  root["box"] = {{"lo", box.lo}, {"hi", box.hi}};
  root["interval"] = bounds_json(b, st);
  root["unstable"] = st.unstable();
  if (tighten == "on") {
    LayerBounds t = lp_tighten(net, box, b);
    StabilityMap ts = classify_neurons(t);
    root["tightened"] = bounds_json(t, ts);
    root["unstable_tightened"] = ts.unstable();
  }
  emit(out_path, root.dump(2) + "\n", out);
  return kOk;
}

int cmd_verify_robust(const VerifyFlags& f, const std::string& dataset, const std::string& hist_out,
                      const Globals& g, const nlohmann::json& cfg, std::ostream& out, std::ostream& err) {
  const std::string net_text = read_file(f.network);
  const std::string q_text = read_file(f.queries);
  NetworkSpec spec = load_network(net_text);
  FoldedNetwork net = fold_bn(spec);
  auto qs = parse_queries(q_text);
  VerifyOptions o = make_verify_options(f, g, cfg);
  TraceSink sink;
  attach_trace(o, f.trace, sink);

  RobustnessBatch batch = robustness_batch(net, qs, o);
  std::optional<ComparisonBlock> cmp;
  if (!dataset.empty()) {
    Dataset ds = load_dataset_file(dataset);
    ComparisonBlock c;
    c.T = evaluate(net, ds, Split::Test);
    c.comparison = compare_robustness_vs_test(batch, c.T);
    c.outside = samples_outside_balls(qs, ds.inputs, ds.test);
    c.test_samples = ds.test.size();
    if (!c.outside.empty())
      err << "warning: " << c.outside.size() << " test samples lie outside every query ball and are "
          << "not covered by the robustness guarantee\n";
    cmp = std::move(c);
  }
  ReportContext ctx{fnv1a_hex(net_text), fnv1a_hex(q_text), o};
  emit(f.out, robustness_report(batch, qs, ctx, cmp), out);
  if (!f.out.empty()) write_file(sidecar(f.out), robustness_timing(batch));
  if (cmp && !hist_out.empty()) write_file(hist_out, histogram_csv(cmp->comparison.histogram));

  bool failed = false;
  for (const auto& r : batch.results)
    for (const auto& o2 : r.outputs) failed = failed || o2.plus.failed || o2.minus.failed;
  if (failed) {
    for (const auto& r : batch.results)
      for (const auto& o2 : r.outputs)
        for (const Subresult* s : {&o2.plus, &o2.minus})
          if (s->failed) err << "error: query " << r.query_id << " output " << o2.name << ": " << s->error << "\n";
    return kSolverFailure;
  }
  if (batch.uncertified) err << "warning: " << batch.uncertified << " subproblems stopped at a limit\n";
  return kOk;
}

int cmd_verify_trust(const VerifyFlags& f, const std::string& table_out, const std::string& hist_out,
                     std::size_t bins, const Globals& g, const nlohmann::json& cfg, std::ostream& out,
                     std::ostream& err) {
  const std::string net_text = read_file(f.network);
  const std::string q_text = read_file(f.queries);
  NetworkSpec spec = load_network(net_text);
  FoldedNetwork net = fold_bn(spec);
  auto qs = parse_queries(q_text);
  VerifyOptions o = make_verify_options(f, g, cfg);
  TraceSink sink;
  attach_trace(o, f.trace, sink);

  auto results = trust_batch(net, qs, o);
  ReportContext ctx{fnv1a_hex(net_text), fnv1a_hex(q_text), o};
  emit(f.out, trust_report(results, qs, spec.input_norm, ctx), out);
  if (!f.out.empty()) write_file(sidecar(f.out), trust_timing(results));
  if (!table_out.empty()) write_file(table_out, trust_table_csv(results, qs, spec.input_norm));
  if (!hist_out.empty()) {
    Vector pct;
    for (std::size_t q = 0; q < results.size(); ++q)
      for (const auto& o2 : results[q].outputs)
        if (o2.status == TrustStatus::Found) pct.push_back(delta_percent(spec.input_norm, qs[q], o2.delta_min));
    write_file(hist_out, histogram_csv(make_histogram(pct, bins)));
  }
  bool failed = false;
  for (const auto& r : results)
    for (const auto& o2 : r.outputs)
      for (const Subresult* s : {&o2.plus, &o2.minus})
        if (s->failed) {
          failed = true;
          err << "error: query " << r.query_id << " output " << o2.name << ": " << s->error << "\n";
        }
  return failed ? kSolverFailure : kOk;
}

// ---------------------------------------------------------------------------
// oracle-check

Vector json_vec(const nlohmann::json& j) { return j.is_null() ? Vector{} : j.get<Vector>(); }

std::optional<double> json_opt(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  return std::nullopt;
}

struct CheckStats {
  std::size_t exact = 0, sampled = 0, witnesses = 0;
  double discrepancy = 0.0;
  double witness_error = 0.0;
  std::vector<std::string> notes;
};

void note(CheckStats& st, double d, const std::string& what) {
  if (d > kDiscrepancyTol) st.notes.push_back(what + ": " + format_double(d));
}

int cmd_oracle_check(const std::string& network, const std::string& report, std::size_t max_unstable,
                     std::size_t samples, const Globals& g, std::ostream& out) {
  FoldedNetwork net = fold_bn(load_network_file(network));
  nlohmann::json rep;
  try {
    rep = nlohmann::json::parse(read_file(report));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("report: ") + e.what());
  }
  const std::string kind = rep.value("kind", "");
  if (kind != "robustness" && kind != "trust") throw Error(ErrorKind::Parse, "report has unknown kind");
  CheckStats st;

  for (const auto& jq : rep.at("results")) {
    const std::string qid = jq.at("query_id").get<std::string>();
    const Vector x_ref = json_vec(jq.at("x_ref_used"));
    const Vector z_ref = json_vec(jq.at("query").at("z_ref"));
    InputBox box{json_vec(jq.at("box").at("lo")), json_vec(jq.at("box").at("hi"))};
    const auto& outs = jq.at("per_output");
    for (std::size_t i = 0; i < outs.size(); ++i) {
      const auto& jo = outs[i];
      for (Sign sign : {Sign::Plus, Sign::Minus}) {
        const auto& js = jo.at(sign == Sign::Plus ? "plus" : "minus");
        const std::string status = js.at("status").get<std::string>();
        const auto value = json_opt(js.at("value"));
        const Vector witness = json_vec(js.at("witness"));
        const std::string tag = qid + "/" + jo.at("name").get<std::string>() + (sign == Sign::Plus ? "/+" : "/-");
        oracle::ObjectiveSpec spec;
        if (kind == "robustness") {
          spec = oracle::ObjectiveSpec::robustness(i, sign, x_ref.at(i));
        } else {
          spec = oracle::ObjectiveSpec::trust(i, sign, jq.at("beta").get<double>(), x_ref.at(i), z_ref,
                                              json_vec(jq.at("scale")), jq.at("delta_cap").get<double>());
        }
        const double s = sign_value(sign);

        // Witness: re-evaluate and compare with the claimed value.
        if (value && !witness.empty()) {
          ++st.witnesses;
          const Vector x = forward(net, witness);
          double err = 0.0;
          if (!box.contains(witness, 1e-9)) err = std::max(err, 1.0);
          if (kind == "robustness") {
            err = std::max(err, std::abs(s * (x.at(i) - x_ref.at(i)) - *value));
          } else {
            err = std::max(err, std::max(0.0, spec.beta - s * (x.at(i) - x_ref.at(i))));
            double d = 0.0;
            for (std::size_t j = 0; j < witness.size(); ++j)
              d = std::max(d, std::abs(witness[j] - z_ref[j]) / spec.scale[j]);
            err = std::max(err, std::abs(d - *value));
          }
          st.witness_error = std::max(st.witness_error, err);
          note(st, err, tag + " witness error");
        }

        if (status == "failed") continue;
        try {
          InputBox obox = kind == "robustness" ? box : InputBox::unit(net.input_dim);
          auto exact = oracle::pattern_enumerate_opt(net, obox, spec, max_unstable);
          ++st.exact;
          double d = 0.0;
          if (status == "certified") {
            if (!value || !exact.feasible) d = (value.has_value() != exact.feasible) ? 1.0 : 0.0;
            else d = std::abs(*value - exact.value);
          } else if (status == "infeasible") {
            d = exact.feasible ? 1.0 : 0.0;
          } else if (value && exact.feasible) {
            // Limits: the incumbent must not beat the true optimum.
            d = std::max(0.0, spec.maximize() ? *value - exact.value : exact.value - *value);
          }
          st.discrepancy = std::max(st.discrepancy, d);
          note(st, d, tag + " oracle discrepancy");
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::TooManyUnstable) throw;
          // Too large for enumeration: samples give a one-sided check.
          auto sb = oracle::sample_bound(net, kind == "robustness" ? box : InputBox::unit(net.input_dim), spec,
                                         samples, g.seed);
          ++st.sampled;
          const double bound = js.at("bound").is_number() ? js.at("bound").get<double>()
                                                          : (spec.maximize() ? INFINITY : -INFINITY);
          double d = 0.0;
          if (sb.found) d = std::max(0.0, spec.maximize() ? sb.value - bound : bound - sb.value);
          st.discrepancy = std::max(st.discrepancy, d);
          note(st, d, tag + " sample beats certified bound");
        }
      }
    }
  }
  out << "subproblems checked exactly: " << st.exact << "\n";
  out << "subproblems checked by sampling: " << st.sampled << "\n";
  out << "witnesses checked: " << st.witnesses << "\n";
  out << "max discrepancy: " << format_double(st.discrepancy) << "\n";
  out << "max witness error: " << format_double(st.witness_error) << "\n";
  for (const auto& n : st.notes) out << "  " << n << "\n";
  return std::max(st.discrepancy, st.witness_error) > kDiscrepancyTol ? kOracleDiscrepancy : kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact certification of ReLU networks with batch normalization", "nncert"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "random seed");
  g.jobs_opt = app.add_option("--jobs", g.jobs, "worker threads");
  g.time_opt = app.add_option("--time-limit", g.time_limit, "seconds per subproblem");
  g.gap_opt = app.add_option("--gap", g.gap, "relative optimality gap");

  std::size_t n0 = 2, m = 1, samples = 1000;
  double noise = 0.0;
  std::optional<double> q_alpha, q_beta;
  std::string data_out, queries_out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--inputs", n0, "input dimension")->check(CLI::PositiveNumber);
  gen->add_option("--outputs", m, "output dimension")->check(CLI::PositiveNumber);
  gen->add_option("--samples", samples, "number of rows");
  gen->add_option("--noise", noise, "uniform input perturbation radius");
  gen->add_option("--out", data_out, "dataset CSV")->required();
  gen->add_option("--queries-out", queries_out, "also write one query per test row");
  gen->add_option("--alpha", q_alpha, "query radius (defaults to --noise)");
  gen->add_option("--beta", q_beta, "query trust threshold");

  std::string t_dataset, t_config, t_out;
  auto* tr = app.add_subcommand("train", "train a network on a dataset");
  tr->add_option("--dataset", t_dataset, "dataset CSV")->required();
  tr->add_option("--config", t_config, "training config JSON");
  tr->add_option("--out", t_out, "network JSON")->required();

  std::string b_network, b_queries, b_out, b_tighten = "off";
  std::size_t b_index = 0;
  auto* bd = app.add_subcommand("bounds", "interval bounds and neuron stability");
  bd->add_option("--network", b_network, "network JSON")->required();
  bd->add_option("--queries", b_queries, "query JSON (unit box if omitted)");
  bd->add_option("--index", b_index, "query index");
  bd->add_option("--tighten", b_tighten, "on|off")->check(CLI::IsMember({"on", "off"}));
  bd->add_option("--out", b_out, "output JSON (stdout if omitted)");

  VerifyFlags vr_flags;
  std::string vr_dataset, vr_hist;
  auto* vr = app.add_subcommand("verify-robust", "certified maximum output deviation per query");
  add_verify_flags(vr, vr_flags);
  vr->add_option("--dataset", vr_dataset, "dataset CSV for comparison with the test error");
  vr->add_option("--histogram-out", vr_hist, "CSV histogram of R - T");

  VerifyFlags vt_flags;
  std::string vt_table, vt_hist;
  std::size_t vt_bins = 10;
  auto* vt = app.add_subcommand("verify-trust", "certified minimum perturbation reaching beta");
  add_verify_flags(vt, vt_flags);
  vt->add_option("--table-out", vt_table, "CSV of delta_min percent per output");
  vt->add_option("--histogram-out", vt_hist, "CSV histogram of delta_min percent");
  vt->add_option("--bins", vt_bins, "histogram bins")->check(CLI::PositiveNumber);

  std::string oc_network, oc_report;
  std::size_t oc_max_unstable = 16, oc_samples = 100000;
  auto* oc = app.add_subcommand("oracle-check", "re-solve a report with the enumeration oracle");
  oc->add_option("--network", oc_network, "network JSON")->required();
  oc->add_option("--report", oc_report, "report JSON")->required();
  oc->add_option("--max-unstable", oc_max_unstable, "enumeration limit");
  oc->add_option("--samples", oc_samples, "samples for instances above the limit");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    const nlohmann::json cfg = load_env_config();
    if (gen->parsed())
      return cmd_gen_data(n0, m, samples, noise, data_out, queries_out, q_alpha, q_beta, g, out);
    if (tr->parsed()) return cmd_train(t_dataset, t_config, t_out, g, cfg, out);
    if (bd->parsed()) return cmd_bounds(b_network, b_queries, b_index, b_tighten, b_out, out);
    if (vr->parsed()) return cmd_verify_robust(vr_flags, vr_dataset, vr_hist, g, cfg, out, err);
    if (vt->parsed()) return cmd_verify_trust(vt_flags, vt_table, vt_hist, vt_bins, g, cfg, out, err);
    if (oc->parsed()) return cmd_oracle_check(oc_network, oc_report, oc_max_unstable, oc_samples, g, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kSolverFailure;
  }
  return kInputError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace nncert::cli
