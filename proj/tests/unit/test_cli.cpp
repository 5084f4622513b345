#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "nncert/cli.hpp"
#include "nncert/io.hpp"
#include "nncert/nnmodel.hpp"
#include "test_support.hpp"

using namespace nncert;
using nncert::testing::temp_path;
using json = nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run nncert_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string e1_file() {
  const auto p = temp_path("cli_e1.json");
  save_network_file(nncert::testing::e1_spec(), p);
  return p;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(nncert_run({"--help"}).code == 0);
  CHECK(nncert_run({"verify-robust", "--help"}).code == 0);
  CHECK(nncert_run({}).code == 1);
  CHECK(nncert_run({"no-such-command"}).code == 1);
  CHECK(nncert_run({"verify-robust"}).code == 1);  // missing required flags
}

TEST_CASE("generate, train, verify and re-check") {
  const auto data = temp_path("cli_data.csv"), queries = temp_path("cli_queries.json"),
             cfg = temp_path("cli_train.json"), net = temp_path("cli_net.json"), report = temp_path("cli_report.json"),
             hist = temp_path("cli_hist.csv");
  auto r = nncert_run({"--seed", "3", "gen-data", "--inputs", "2", "--outputs", "2", "--samples", "60", "--noise", "0.02",
                       "--out", data, "--queries-out", queries});
  REQUIRE(r.code == 0);
  write_file(cfg, R"({"widths":[5],"epochs":40,"batch_size":16})");
  r = nncert_run({"--seed", "3", "train", "--dataset", data, "--config", cfg, "--out", net});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("train_mse") != std::string::npos);
  CHECK(r.out.find("T x_1") != std::string::npos);

  r = nncert_run({"--jobs", "2", "verify-robust", "--network", net, "--queries", queries, "--out", report, "--dataset",
                  data, "--histogram-out", hist});
  REQUIRE(r.code == 0);
  const auto rep = json::parse(read_file(report));
  CHECK(rep["aggregate"]["uncertified_subproblems"] == 0);
  CHECK(rep["results"].size() == 12);
  CHECK(rep.contains("comparison"));
  CHECK(read_file(hist).rfind("bin_lo,bin_hi,count", 0) == 0);
  CHECK(std::ifstream(report + ".timing.json").good());

  r = nncert_run({"oracle-check", "--network", net, "--report", report});
  CHECK(r.code == 0);
  CHECK(r.out.find("max discrepancy") != std::string::npos);

  // Same inputs, byte-identical report regardless of thread count.
  const auto report2 = temp_path("cli_report2.json");
  REQUIRE(nncert_run({"verify-robust", "--network", net, "--queries", queries, "--out", report2, "--dataset", data})
              .code == 0);
  CHECK(read_file(report) == read_file(report2));
}

TEST_CASE("seeded data generation and training are byte-identical") {
  std::string bytes[2];
  for (int k = 0; k < 2; ++k) {
    const auto data = temp_path("cli_det" + std::to_string(k) + ".csv"), net = temp_path("cli_det" + std::to_string(k) + ".json");
    REQUIRE(nncert_run({"--seed", "9", "gen-data", "--inputs", "2", "--outputs", "1", "--samples", "40", "--out", data}).code == 0);
    REQUIRE(nncert_run({"--seed", "9", "train", "--dataset", data, "--out", net}).code == 0);
    bytes[k] = read_file(data) + read_file(net);
  }
  CHECK(bytes[0] == bytes[1]);
}

TEST_CASE("E1 robustness with zero radius and a trust query with no answer") {
  const auto net = e1_file();
  const auto q0 = temp_path("cli_q0.json"), rep = temp_path("cli_rep0.json");
  write_file(q0, R"({"id":"still","z_ref":[0.5,0.5],"x_ref":[0.2],"alpha":0})");
  REQUIRE(nncert_run({"verify-robust", "--network", net, "--queries", q0, "--out", rep}).code == 0);
  const auto j = json::parse(read_file(rep));
  CHECK(j["results"][0]["per_output"][0]["R"].get<double>() == doctest::Approx(0.05));

  const auto qt = temp_path("cli_qt.json"), rept = temp_path("cli_rept.json"), table = temp_path("cli_table.csv");
  write_file(qt, R"([{"id":"near","z_ref":[0.5,0.5],"x_ref":[0.25],"beta":0.15},
                     {"id":"far","z_ref":[0.5,0.5],"x_ref":[0.25],"beta":9}])");
  const auto r = nncert_run({"verify-trust", "--network", net, "--queries", qt, "--out", rept, "--table-out", table});
  CHECK(r.code == 0);
  const auto t = json::parse(read_file(rept));
  CHECK(t["results"][0]["per_output"][0]["status"] == "found");
  CHECK(t["results"][1]["per_output"][0]["status"] == "not_found");
  CHECK(read_file(table).find("far,x_1,not_found") != std::string::npos);
  CHECK(nncert_run({"oracle-check", "--network", net, "--report", rept}).code == 0);
}

TEST_CASE("bounds subcommand prints E1 intervals") {
  const auto net = e1_file();
  const auto q = temp_path("cli_qb.json");
  write_file(q, R"({"z_ref":[0.5,0.5],"x_ref":[0.25],"alpha":0.1})");
  const auto r = nncert_run({"bounds", "--network", net, "--queries", q});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  const auto& l1 = j["interval"][0];
  CHECK(l1["lo"][0].get<double>() == doctest::Approx(-0.2));
  CHECK(l1["hi"][1].get<double>() == doctest::Approx(0.35));
  CHECK(l1["stability"] == json::array({"unstable", "active"}));
  CHECK(j["unstable"] == 1);
}

TEST_CASE("input errors exit with 1") {
  const auto net = e1_file();
  const auto bad = temp_path("cli_bad.json"), wrong = temp_path("cli_wrong.json");
  write_file(bad, "{ not json");
  write_file(wrong, R"({"z_ref":[0.5],"x_ref":[0.25],"alpha":0.1})");
  CHECK(nncert_run({"verify-robust", "--network", net, "--queries", bad}).code == 1);
  CHECK(nncert_run({"verify-robust", "--network", net, "--queries", wrong}).code == 1);
  CHECK(nncert_run({"verify-robust", "--network", temp_path("missing.json"), "--queries", wrong}).code == 1);
  CHECK(nncert_run({"verify-trust", "--network", net, "--queries", wrong}).code == 1);
  CHECK(nncert_run({"verify-robust", "--network", net, "--queries", wrong, "--tighten", "maybe"}).code == 1);
}

TEST_CASE("a tampered report is caught by oracle-check") {
  const auto net = e1_file();
  const auto q = temp_path("cli_qo.json"), rep = temp_path("cli_repo.json");
  write_file(q, R"({"id":"c","z_ref":[0.5,0.5],"x_ref":[0.25],"alpha":0.1})");
  REQUIRE(nncert_run({"verify-robust", "--network", net, "--queries", q, "--out", rep}).code == 0);
  auto j = json::parse(read_file(rep));
  j["results"][0]["per_output"][0]["plus"]["value"] = 0.19;
  write_file(rep, j.dump(2));
  CHECK(nncert_run({"oracle-check", "--network", net, "--report", rep}).code == 3);
}
