#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mixcop/dependence.hpp"
#include "mixcop/estimation.hpp"
#include "mixcop/io.hpp"
#include "mixcop/simulation.hpp"
#include "mixcop/validation.hpp"

using namespace mixcop;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kBadData = 2, kNotConverged = 3, kBadConfig = 4 };

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

// "gaussian", "t:4"
EllipticalFamily parse_family(const std::string& s) {
  if (s == "gaussian" || s == "normal") return EllipticalFamily::gaussian();
  if (s.rfind("t:", 0) == 0) {
    try {
      return EllipticalFamily::student_t(std::stod(s.substr(2)));
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("bad family '" + s + "' (expected gaussian or t:<nu>)");
}

// "continuous", "poisson:<mu>", "bernoulli:<p>", "negbinomial:<mu>:<psi>"
CurveMargin parse_margin(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  try {
    if (parts.size() == 1 && parts[0] == "continuous") return {};
    if (parts.size() == 2 && parts[0] == "poisson") return {CurveMargin::Kind::Poisson, std::stod(parts[1]), 0.0};
    if (parts.size() == 2 && parts[0] == "bernoulli") return {CurveMargin::Kind::Bernoulli, std::stod(parts[1]), 0.0};
    if (parts.size() == 3 && parts[0] == "negbinomial") {
      return {CurveMargin::Kind::NegBinomial, std::stod(parts[1]), std::stod(parts[2])};
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("bad margin '" + s + "'");
}

std::vector<ConcordanceMeasure> parse_measures(const std::string& s) {
  if (s == "both") return {ConcordanceMeasure::KendallTau, ConcordanceMeasure::SpearmanRho};
  try {
    return {concordance_measure_from_string(s)};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ModelConfig load_model_config(const std::string& path) {
  return path.empty() ? ModelConfig{} : model_config_from_json(read_json_file(path));
}

struct FitArgs {
  std::string data, config, out;
  std::string marginal;
  std::string family;
  double nu = 0.0;
  bool quiet = false;
};

int cmd_fit(const FitArgs& a) {
  ModelConfig cfg = load_model_config(a.config);
  if (!a.marginal.empty()) {
    try {
      cfg.marginal = marginal_family_from_string(a.marginal);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (!a.family.empty()) {
    const EllipticalFamily f = parse_family(a.family);
    cfg.copula.family = f.kind;
    if (!f.is_gaussian()) cfg.copula.nu = f.nu;
  }
  if (a.nu > 0.0) cfg.copula.nu = a.nu;
  try {
    cfg.copula.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const LongitudinalDataset data = read_long_csv(a.data, cfg.columns);
  FitResult fit;
  try {
    fit = fit_two_stage(data, cfg.marginal, cfg.copula);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  if (!a.out.empty()) write_json_file(a.out, to_json(fit));
  if (!a.quiet) {
    std::cout << to_string(cfg.marginal) << " margins, " << family_label(fit.copula.family) << " copula, "
              << fit.num_subjects << " subjects\n";
    write_fit_table(std::cout, fit);
  }
  if (!fit.diagnostics.converged()) {
    throw NotConverged("fit did not converge (stage 1: " +
                       std::string(fit.diagnostics.stage1_converged ? "ok" : "failed") +
                       ", stage 2: " + (fit.diagnostics.stage2_converged ? "ok" : "failed") + ")");
  }
  return kOk;
}

struct SimulateArgs {
  std::string config, out;
  long long replicate = 0;
  int m = 0;
  long long seed = -1;
};

StudyConfig load_study_config(const std::string& path, int m, long long seed, int threads) {
  StudyConfig c = study_config_from_json(read_json_file(path));
  if (m > 0) c.m = m;
  if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
  if (threads > 0) c.threads = threads;
  return c;
}

int cmd_simulate(const SimulateArgs& a) {
  const StudyConfig c = load_study_config(a.config, a.m, a.seed, 0);
  const LongitudinalDataset data = simulate_dataset(c, static_cast<std::uint64_t>(a.replicate));
  if (a.out.empty() || a.out == "-") {
    write_long_csv(std::cout, data);
  } else {
    auto out = open_output(a.out);
    write_long_csv(out, data);
  }
  return kOk;
}

struct StudyArgs {
  std::string config, out, json_out;
  std::vector<int> sizes;
  int replicates = 0;
  long long seed = -1;
  bool progress = false;
};

int cmd_study(const StudyArgs& a, int threads) {
  StudyConfig base = load_study_config(a.config, 0, a.seed, threads);
  if (a.replicates > 0) base.replicates = a.replicates;
  std::vector<int> sizes = a.sizes.empty() ? std::vector<int>{base.m} : a.sizes;
  std::vector<StudyReport> reports;
  for (int m : sizes) {
    StudyConfig c = base;
    c.m = m;
    ProgressCallback cb;
    if (a.progress) {
      cb = [m](int done, int total) { std::cerr << "m = " << m << ": " << done << "/" << total << "\r" << std::flush; };
    }
    reports.push_back(run_study(c, cb));
    if (a.progress) std::cerr << '\n';
  }
  write_report_table(std::cout, reports);
  for (const auto& r : reports) {
    if (r.failures > 0) std::cout << "m = " << r.m << ": " << r.failures << " failed replicates excluded\n";
  }
  if (!a.out.empty()) {
    auto out = open_output(a.out);
    for (const auto& r : reports) write_report_csv(out, r);
  }
  if (!a.json_out.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    write_json_file(a.json_out, {{"schema_version", kSchemaVersion}, {"reports", arr}});
  }
  return kOk;
}

struct DependenceArgs {
  std::string fit, spec, data, config, out, measure = "both";
};

int cmd_dependence(const DependenceArgs& a) {
  if (a.fit.empty() == a.spec.empty()) throw ConfigError("give exactly one of --fit or --spec");
  const ModelConfig cfg = load_model_config(a.config);
  MarginalSpec marginal;
  MixtureCopulaSpec copula;
  if (!a.fit.empty()) {
    const FitResult fit = fit_result_from_json(read_json_file(a.fit));
    marginal = fit.marginal.spec;
    copula = fit.copula;
  } else {
    const auto j = read_json_file(a.spec);
    try {
      marginal = marginal_spec_from_json(j.at("marginal"));
      copula = copula_spec_from_json(j.at("copula"));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(e.what());
    }
  }
  const LongitudinalDataset data = read_long_csv(a.data, cfg.columns);
  if (data.num_covariates() != static_cast<int>(marginal.beta.size())) {
    throw DataError("data has " + std::to_string(data.num_covariates()) + " covariate columns but beta has " +
                    std::to_string(marginal.beta.size()) + " entries");
  }

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!a.out.empty() && a.out != "-") {
    file = open_output(a.out);
    os = &file;
  }
  auto& out = *os;
  out << "# schema_version: " << kSchemaVersion << '\n';
  out << "# copula: " << family_label(copula.family) << ", K = " << copula.num_components() << '\n';
  out << "measure,time_j,time_k,model,empirical,tail_lower,tail_upper\n";
  out << std::setprecision(10);
  for (auto measure : parse_measures(a.measure)) {
    const ConcordanceMatrix model = model_concordance_matrix(data, marginal, copula, measure);
    const ConcordanceMatrix emp = empirical_concordance_matrix(data, measure, &marginal);
    for (int j = 0; j < model.dim(); ++j) {
      for (int k = j + 1; k < model.dim(); ++k) {
        const double t1 = model.visit_times[static_cast<size_t>(j)];
        const double t2 = model.visit_times[static_cast<size_t>(k)];
        const auto rho = copula.pair_correlations(t1, t2);
        const TailDependence tail = tail_dependence(copula, rho);
        out << to_string(measure) << ',' << t1 << ',' << t2 << ',' << model.entries(j, k) << ','
            << emp.entries(j, k) << ',' << tail.lower << ',' << tail.upper << '\n';
      }
    }
  }
  return kOk;
}

struct CurveArgs {
  std::string out, measure = "both";
  std::vector<std::string> families{"gaussian"};
  std::vector<std::string> margins{"continuous"};
  std::vector<double> weights{0.25, 0.5, 0.75};
  int grid = 41;
};

int cmd_curves(const CurveArgs& a) {
  CurveOptions opts;
  opts.measures = parse_measures(a.measure);
  opts.families.clear();
  for (const auto& f : a.families) opts.families.push_back(parse_family(f));
  opts.margins.clear();
  for (const auto& m : a.margins) opts.margins.push_back(parse_margin(m));
  opts.first_weights = a.weights;
  opts.grid_points = a.grid;
  std::vector<CurvePoint> points;
  try {
    points = dependence_curves(opts);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (a.out.empty() || a.out == "-") {
    write_curves_csv(std::cout, points);
  } else {
    auto out = open_output(a.out);
    write_curves_csv(out, points);
  }
  return kOk;
}

struct GofArgs {
  std::string data, fit, config, out, svg, pit = "upper";
  unsigned long long seed = 1;
};

int cmd_gof(const GofArgs& a) {
  const ModelConfig cfg = load_model_config(a.config);
  const FitResult fit = fit_result_from_json(read_json_file(a.fit));
  const LongitudinalDataset data = read_long_csv(a.data, cfg.columns);
  if (data.num_covariates() != static_cast<int>(fit.marginal.spec.beta.size())) {
    throw DataError("data covariates do not match the fitted beta");
  }
  TplotOptions opts;
  opts.seed = a.seed;
  if (a.pit == "upper") opts.pit = PitMode::Upper;
  else if (a.pit == "mid") opts.pit = PitMode::Mid;
  else if (a.pit == "randomized") opts.pit = PitMode::Randomized;
  else throw ConfigError("bad --pit '" + a.pit + "'");
  const TplotResult r = tplot(data, fit, opts);
  if (a.out.empty() || a.out == "-") {
    write_qq_csv(std::cout, r);
  } else {
    auto out = open_output(a.out);
    write_qq_csv(out, r);
  }
  if (!a.svg.empty()) {
    auto out = open_output(a.svg);
    write_qq_svg(out, r);
  }
  std::cerr << "KS = " << r.ks_statistic << ", p = " << r.ks_pvalue << " (" << r.v.size() << " subjects, "
            << r.excluded_subjects << " excluded)\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-copula regression for longitudinal counts"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Maximum worker threads")->check(CLI::PositiveNumber);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Two-stage fit of a dataset");
  fit_cmd->add_option("--data", fit.data, "Long-format CSV")->required();
  fit_cmd->add_option("--config", fit.config, "Model config JSON");
  fit_cmd->add_option("--out", fit.out, "FitResult JSON output");
  fit_cmd->add_option("--marginal", fit.marginal, "poisson | negbinomial");
  fit_cmd->add_option("--family", fit.family, "gaussian | t:<nu>");
  fit_cmd->add_option("--nu", fit.nu, "Fixed Student-t degrees of freedom");
  fit_cmd->add_flag("--quiet", fit.quiet, "No summary table");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate one dataset");
  sim_cmd->add_option("--config", sim.config, "Study config JSON")->required();
  sim_cmd->add_option("--out", sim.out, "CSV output (default stdout)");
  sim_cmd->add_option("--replicate", sim.replicate, "Replicate index")->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--m", sim.m, "Number of subjects")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim.seed, "Seed override")->check(CLI::NonNegativeNumber);

  StudyArgs study;
  auto* study_cmd = app.add_subcommand("study", "Monte-Carlo study");
  study_cmd->add_option("--config", study.config, "Study config JSON")->required();
  study_cmd->add_option("--out", study.out, "Report CSV");
  study_cmd->add_option("--json", study.json_out, "Report JSON with replicate estimates");
  study_cmd->add_option("--m", study.sizes, "Sample sizes (repeatable)");
  study_cmd->add_option("--replicates", study.replicates, "Replicates per size")->check(CLI::PositiveNumber);
  study_cmd->add_option("--seed", study.seed, "Seed override")->check(CLI::NonNegativeNumber);
  study_cmd->add_flag("--progress", study.progress, "Progress on stderr");

  DependenceArgs dep;
  auto* dep_cmd = app.add_subcommand("dependence", "Model and empirical concordance matrices");
  dep_cmd->add_option("--fit", dep.fit, "FitResult JSON");
  dep_cmd->add_option("--spec", dep.spec, "JSON with marginal and copula objects");
  dep_cmd->add_option("--data", dep.data, "Long-format CSV")->required();
  dep_cmd->add_option("--config", dep.config, "Model config JSON (column mapping)");
  dep_cmd->add_option("--measure", dep.measure, "tau | rho | both");
  dep_cmd->add_option("--out", dep.out, "CSV output (default stdout)");

  CurveArgs curves;
  auto* curves_cmd = app.add_subcommand("curves", "Concordance curves of two-component mixtures");
  curves_cmd->add_option("--out", curves.out, "CSV output (default stdout)");
  curves_cmd->add_option("--measure", curves.measure, "tau | rho | both");
  curves_cmd->add_option("--family", curves.families, "gaussian | t:<nu> (repeatable)");
  curves_cmd->add_option("--margin", curves.margins,
                         "continuous | poisson:<mu> | bernoulli:<p> | negbinomial:<mu>:<psi> (repeatable)");
  curves_cmd->add_option("--weight", curves.weights, "First-component weights (repeatable)");
  curves_cmd->add_option("--grid", curves.grid, "Grid points on [-1, 1]");

  GofArgs gof;
  auto* gof_cmd = app.add_subcommand("gof", "t-plot goodness of fit");
  gof_cmd->add_option("--data", gof.data, "Long-format CSV")->required();
  gof_cmd->add_option("--fit", gof.fit, "FitResult JSON")->required();
  gof_cmd->add_option("--config", gof.config, "Model config JSON (column mapping)");
  gof_cmd->add_option("--out", gof.out, "QQ CSV output (default stdout)");
  gof_cmd->add_option("--svg", gof.svg, "QQ plot SVG output");
  gof_cmd->add_option("--pit", gof.pit, "upper | mid | randomized");
  gof_cmd->add_option("--seed", gof.seed, "Seed for randomized PIT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit);
    if (sim_cmd->parsed()) return cmd_simulate(sim);
    if (study_cmd->parsed()) return cmd_study(study, threads);
    if (dep_cmd->parsed()) return cmd_dependence(dep);
    if (curves_cmd->parsed()) return cmd_curves(curves);
    if (gof_cmd->parsed()) return cmd_gof(gof);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadData;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const NotConverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
