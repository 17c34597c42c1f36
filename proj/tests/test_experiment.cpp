#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "torusdyn/errors.hpp"
#include "torusdyn/experiment.hpp"

using namespace torusdyn;
namespace fs = std::filesystem;

namespace {

// A small doubling run; every stage finishes well under a second.
nlohmann::json small_doubling() {
  return {{"map", {{"family", "doubling"}}},
          {"stages", {"map", "periodic", "source", "induced", "measures", "stats"}},
          {"seed", 5},
          {"output_dir", ""},
          {"induced", {{"max_R", 4}, {"cell_budget", 256}, {"markov_samples", 8}}},
          {"measures", {{"n_samples", 20000}, {"csv_samples", 50}}},
          {"stats",
           {{"lyapunov_iterates", 200},
            {"lyapunov_samples", 16},
            {"lebesgue_iterates", 1000},
            {"correlation_samples", 20000},
            {"tail_n_max", 4}}}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("torusdyn_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config validation happens before any computation") {
  auto j = small_doubling();
  j["density"] = {{"eps", 0.0}, {"point", {0.0}}};
  try {
    config_from_json(j);
    FAIL("expected ConfigValidation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigValidation);
    CHECK(std::string(e.what()).find("density.eps") != std::string::npos);
  }

  auto bad_key = small_doubling();
  bad_key["induced"]["max_r"] = 3;
  CHECK_THROWS_AS(config_from_json(bad_key), Error);

  auto bad_stage = small_doubling();
  bad_stage["stages"] = {"map", "warp"};
  CHECK_THROWS_AS(config_from_json(bad_stage), Error);

  auto bad_type = small_doubling();
  bad_type["seed"] = "seven";
  CHECK_THROWS_AS(config_from_json(bad_type), Error);

  auto no_point = small_doubling();
  no_point["stages"] = {"map", "preorbit_density"};
  CHECK_THROWS_AS(config_from_json(no_point), Error);
}

TEST_CASE("config round trip") {
  const auto c = config_from_json(small_doubling());
  const auto j = to_json(c);
  CHECK(to_json(config_from_json(j)) == j);
  CHECK(c.induced.max_R == 4);
  CHECK(c.induced.alpha_rate == 0.125);  // default
  CHECK(c.measures.family == "geometric");
}

TEST_CASE("stage dependencies") {
  CHECK(stage_closure({"stats"}) ==
        std::vector<std::string>{"map", "periodic", "source", "induced", "measures", "stats"});
  CHECK(stage_closure({"verify_example"}) == std::vector<std::string>{"map", "verify_example"});

  auto j = small_doubling();
  j["stages"] = {"map", "periodic", "source", "measures", "stats"};
  const auto c = config_from_json(j);
  try {
    check_stage_dependencies(c.stages);
    FAIL("expected StageDependency");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StageDependency);
    CHECK(std::string(e.what()).find("'induced'") != std::string::npos);
  }
  const auto r = run_experiment(c);
  CHECK(r.exit_code == kExitDependency);
  CHECK(r.diagnostic.find("induced") != std::string::npos);
  CHECK(r.reports.empty());
}

TEST_CASE("small doubling pipeline passes every certificate") {
  const auto r = run_experiment(config_from_json(small_doubling()));
  CHECK(r.exit_code == kExitOk);
  CHECK(r.diagnostic.empty());
  CHECK(r.summary["all_certificates_pass"].get<bool>());
  CHECK(r.reports.size() == 6);
  CHECK(r.reports.at("source")["n0"] == 6);
  CHECK(r.reports.at("induced")["cells"] == 1 + 3 * 64);  // per-level cap 256 / 4
  CHECK(r.csv.count("samples.csv") == 1);
  CHECK(r.csv.count("correlations.csv") == 1);
}

TEST_CASE("stage failure maps to a per-stage exit code") {
  auto j = small_doubling();
  j["stages"] = {"map", "verify_example"};
  const auto r = run_experiment(config_from_json(j));
  CHECK(r.exit_code == kExitStageBase + 2);
  CHECK(r.failed_stage == "verify_example");
  CHECK(r.diagnostic.rfind("verify_example: ", 0) == 0);
  CHECK(r.reports.count("map") == 1);
}

TEST_CASE("failed certificate gives exit 1") {
  // The cat map is hyperbolic: every fixed point is a saddle.
  nlohmann::json j = {{"map", {{"family", "linear"}, {"matrix", {{2, 1}, {1, 1}}}}},
                      {"stages", {"map", "periodic"}},
                      {"output_dir", ""}};
  const auto r = run_experiment(config_from_json(j));
  CHECK(r.exit_code == kExitCertificateFailed);
  CHECK_FALSE(r.summary["certificates"]["periodic.sources_found"].get<bool>());
}

TEST_CASE("reports are byte-identical across runs and thread counts") {
  auto j = small_doubling();
  const fs::path a = fresh_dir("a"), b = fresh_dir("b");
  j["output_dir"] = a.string();
  j["threads"] = 1;
  REQUIRE(run_experiment(config_from_json(j)).exit_code == kExitOk);
  j["output_dir"] = b.string();
  j["threads"] = 4;
  REQUIRE(run_experiment(config_from_json(j)).exit_code == kExitOk);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    CHECK_MESSAGE(slurp(a / name) == slurp(b / name), name.string());
    ++files;
  }
  CHECK(files == 10);
  fs::remove_all(a);
  fs::remove_all(b);
}
