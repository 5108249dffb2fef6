#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mixcop/dependence.hpp"
#include "mixcop/io.hpp"

using namespace mixcop;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = MIXCOP_CLI_PATH;
const std::string kSource = MIXCOP_SOURCE_DIR;

struct CliRun {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded, capturing stdout and the exit status.
CliRun run(const std::string& args) {
  CliRun r;
  FILE* pipe = popen((kCli + " " + args + " 2>/dev/null").c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  for (size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mixcop_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const std::string kTiny =
    "subject,time,y,x1\n"
    "1,1,2,0\n1,2,3,0\n1,3,1,0\n"
    "2,1,0,1\n2,2,1,1\n2,3,4,1\n"
    "3,1,5,0\n3,2,2,0\n3,3,3,0\n";

}  // namespace

TEST_F(Cli, SimulateShapeAndDeterminism) {
  const std::string config = kSource + "/configs/study_gaussian_poisson.json";
  ASSERT_EQ(run("simulate --config " + config + " --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run("simulate --config " + config + " --out " + path("b.csv")).code, 0);
  const std::string a = slurp(path("a.csv"));
  EXPECT_EQ(a, slurp(path("b.csv")));
  EXPECT_EQ(a.rfind("# schema_version: 1\n", 0), 0u);
  const auto lines = data_lines(a);
  ASSERT_EQ(lines.size(), 801u);  // header + 800 rows
  std::map<std::string, int> per_subject;
  for (size_t i = 1; i < lines.size(); ++i) ++per_subject[split(lines[i])[0]];
  EXPECT_EQ(per_subject.size(), 200u);
  for (const auto& [id, n] : per_subject) EXPECT_EQ(n, 4) << id;
  EXPECT_EQ(run("simulate --config " + config).out, a);
  EXPECT_NE(run("simulate --config " + config + " --replicate 1").out, a);
}

TEST_F(Cli, TinyFitRoundTripsThroughJson) {
  spit(path("tiny.csv"), kTiny);
  spit(path("k1.json"), R"({"schema_version": 1, "marginal": "poisson",
    "data": {"covariates": ["x1"]}, "fit": {"family": "gaussian", "structures": ["AR1"], "starts": 2}})");
  const CliRun r = run("fit --data " + path("tiny.csv") + " --config " + path("k1.json") + " --out " + path("fit.json"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("xi_1"), std::string::npos);
  const json j = read_json_file(path("fit.json"));
  EXPECT_EQ(j["schema_version"], 1);
  const FitResult fit = fit_result_from_json(j);
  EXPECT_EQ(fit.num_subjects, 3);
  EXPECT_EQ(fit.copula.num_components(), 1);
  EXPECT_EQ(to_json(fit).dump(), j.dump());
}

TEST_F(Cli, ExitCodes) {
  spit(path("tiny.csv"), kTiny);
  spit(path("bad.csv"), "subject,time,y\n1,1,-3\n");
  spit(path("badcfg.json"), R"({"schema_version": 1, "fit": {"structures": ["toeplitz"]}})");
  spit(path("short.json"), R"({"schema_version": 1, "marginal": "poisson", "data": {"covariates": ["x1"]},
    "fit": {"starts": 1, "simplex": {"max_iterations": 1}}})");
  EXPECT_EQ(run("fit --data " + path("bad.csv")).code, 2);
  EXPECT_EQ(run("fit --data " + path("missing.csv")).code, 2);
  EXPECT_EQ(run("fit --data " + path("tiny.csv") + " --config " + path("badcfg.json")).code, 4);
  EXPECT_EQ(run("fit --data " + path("tiny.csv") + " --family clayton").code, 4);
  EXPECT_EQ(run("fit --bogus").code, 4);
  EXPECT_EQ(run("fit --data " + path("tiny.csv") + " --config " + path("short.json")).code, 3);
}

TEST_F(Cli, DependenceWithZeroCorrelationSpec) {
  spit(path("tiny.csv"), kTiny);
  spit(path("spec.json"), R"({
    "marginal": {"family": "poisson", "beta": [0.5, 0.2]},
    "copula": {"family": "gaussian", "components": [{"structure": "EX", "xi": 60}], "weights": [1]}})");
  spit(path("cols.json"), R"({"schema_version": 1, "data": {"covariates": ["x1"]}})");
  const CliRun r = run("dependence --spec " + path("spec.json") + " --data " + path("tiny.csv") + " --config " + path("cols.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("# schema_version: 1\n", 0), 0u);
  const auto lines = data_lines(r.out);
  ASSERT_EQ(lines.size(), 7u);  // header + 3 pairs x 2 measures
  EXPECT_EQ(lines[0], "measure,time_j,time_k,model,empirical,tail_lower,tail_upper");
  for (size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i]);
    EXPECT_NEAR(std::stod(f[3]), 0.0, 1e-9) << lines[i];
    EXPECT_EQ(std::stod(f[5]), 0.0);
  }
  EXPECT_EQ(run("dependence --data " + path("tiny.csv")).code, 4);
}

TEST_F(Cli, CurveEndpointsMatchDiscreteTau) {
  const CliRun r = run("curves --measure tau --margin poisson:1 --weight 0.5 --grid 21");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("# schema_version: 1\n", 0), 0u);
  const auto lines = data_lines(r.out);
  ASSERT_EQ(lines.size(), 22u);
  const auto header = split(lines[0]);
  const auto col = [&](const std::string& name) {
    return static_cast<size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  ASSERT_LT(col("rho2"), header.size());
  ASSERT_LT(col("value"), header.size());
  // First component at independence, second swept to rho2.

  const auto dist = CountDistribution::poisson(1.0);
  const DiscreteMarginPair margins{DiscreteMargin::from_distribution(dist), DiscreteMargin::from_distribution(dist)};
  MixtureCopulaSpec spec;
  spec.components = {{StructureKind::AR1, 1.0}, {StructureKind::AR1, 1.0}};
  spec.weights = {0.5, 0.5};
  for (const std::string& line : {lines[1], lines.back()}) {
    const auto f = split(line);
    const double rho2 = std::stod(f[col("rho2")]);
    EXPECT_EQ(std::abs(rho2), 1.0);
    const std::vector<double> rho{0.0, rho2};
    EXPECT_NEAR(std::stod(f[col("value")]), tau_discrete(margins, spec, rho), 1e-8) << line;
  }
}

TEST_F(Cli, GofOnDataSimulatedFromFit) {
  const std::string study = kSource + "/configs/study_gaussian_poisson.json";
  spit(path("model.json"), R"({"schema_version": 1, "marginal": "poisson",
    "data": {"covariates": ["x1", "x2", "time"]}, "fit": {"family": "gaussian", "starts": 3}})");
  ASSERT_EQ(run("simulate --config " + study + " --out " + path("train.csv")).code, 0);
  ASSERT_EQ(run("fit --quiet --data " + path("train.csv") + " --config " + path("model.json") + " --out " +
                path("fit.json")).code,
            0);

  // Model-implied and empirical (residual-based) matrices of the training data agree.
  const CliRun dep = run("dependence --fit " + path("fit.json") + " --data " + path("train.csv") + " --config " +
                         path("model.json"));
  ASSERT_EQ(dep.code, 0);
  const auto dep_lines = data_lines(dep.out);
  ASSERT_EQ(dep_lines.size(), 13u);
  for (size_t i = 1; i < dep_lines.size(); ++i) {
    const auto f = split(dep_lines[i]);
    EXPECT_NEAR(std::stod(f[3]), std::stod(f[4]), 0.15) << dep_lines[i];
  }

  json sim = read_json_file(study);
  const json fit = read_json_file(path("fit.json"));
  sim["marginal"] = {{"family", "poisson"}, {"beta", fit["marginal"]["beta"]}};
  sim["copula"] = fit["copula"];
  sim["seed"] = 77;
  spit(path("refit_study.json"), sim.dump());
  ASSERT_EQ(run("simulate --config " + path("refit_study.json") + " --out " + path("fresh.csv")).code, 0);

  const std::string args = "gof --data " + path("fresh.csv") + " --fit " + path("fit.json") + " --config " +
                           path("model.json") + " --svg " + path("qq.svg");
  const CliRun r = run(args);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, run(args).out);
  EXPECT_EQ(r.out.rfind("# schema_version: 1\n", 0), 0u);
  const auto lines = data_lines(r.out);
  ASSERT_EQ(lines.size(), 201u);
  std::vector<double> v;
  for (size_t i = 1; i < lines.size(); ++i) v.push_back(std::stod(split(lines[i])[1]));
  std::sort(v.begin(), v.end());
  double d = 0.0;
  for (size_t i = 0; i < v.size(); ++i) d = std::max({d, (i + 1.0) / v.size() - v[i], v[i] - i / double(v.size())});
  EXPECT_LT(d, 1.63 / std::sqrt(200.0)) << "KS rejects at the 1% level";
  const CliRun randomized = run(args + " --pit randomized --seed 3");
  ASSERT_EQ(randomized.code, 0);
  EXPECT_EQ(data_lines(randomized.out).size(), 201u);
  EXPECT_NE(slurp(path("qq.svg")).find("<svg"), std::string::npos);
}
