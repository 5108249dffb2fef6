#include "mixcop/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace mixcop {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Comma-separated fields with optional double quotes ("" escapes a quote).
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("unterminated quote");
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DataError("not a finite number: '" + s + "'");
  }
  return v;
}

int parse_count(const std::string& s) {
  const double v = parse_double(s);
  if (v < 0.0 || v != std::floor(v) || v > std::numeric_limits<int>::max()) {
    throw DataError("response must be a nonnegative integer: '" + s + "'");
  }
  return static_cast<int>(v);
}

double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v[i]) ? json(v[i]) : json());
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_or_nan(j[i]);
  return v;
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(); }

EllipticalFamily::Kind family_kind_from_string(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "gaussian" || s == "normal") return EllipticalFamily::Kind::Gaussian;
  if (s == "t" || s == "student_t" || s == "student-t" || s == "studentt") {
    return EllipticalFamily::Kind::StudentT;
  }
  throw ConfigError("unknown copula family '" + name + "'");
}

std::string family_kind_name(EllipticalFamily::Kind kind) {
  return kind == EllipticalFamily::Kind::Gaussian ? "gaussian" : "t";
}

void check_schema(const json& j) {
  if (!j.is_object()) throw ConfigError("expected a JSON object");
  const int v = j.value("schema_version", kSchemaVersion);
  if (v != kSchemaVersion) throw ConfigError("unsupported schema_version " + std::to_string(v));
}

// Runs a parser, mapping library and validation errors to ConfigError.
template <typename F>
auto config_guard(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

LongitudinalDataset read_long_csv(std::istream& in, const ColumnSpec& columns) {
  std::string line;
  std::vector<std::string> header;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  if (header.empty()) throw DataError("CSV has no header");

  const auto find = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "'");
    return static_cast<size_t>(it - header.begin());
  };
  const size_t subject_col = find(columns.subject);
  const size_t time_col = find(columns.time);
  const size_t y_col = find(columns.response);

  std::vector<std::string> names = columns.covariates;
  if (names.empty()) {
    for (size_t c = 0; c < header.size(); ++c) {
      if (c != subject_col && c != y_col) names.push_back(header[c]);
    }
  }
  std::vector<size_t> cov_cols;
  for (const auto& n : names) cov_cols.push_back(find(n));
  const bool add_intercept =
      columns.intercept && std::find(names.begin(), names.end(), "intercept") == names.end();
  if (add_intercept) names.insert(names.begin(), "intercept");

  struct Row {
    double time;
    int y;
    std::vector<double> x;
    int line = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    try {
      const auto f = split_csv(line);
      if (f.size() != header.size()) {
        throw DataError("expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(f.size()));
      }
      Row r{parse_double(f[time_col]), parse_count(f[y_col]), {}, line_no};
      if (add_intercept) r.x.push_back(1.0);
      for (size_t c : cov_cols) r.x.push_back(parse_double(f[c]));
      const std::string& id = f[subject_col];
      if (id.empty()) throw DataError("empty subject id");
      auto [it, inserted] = rows.try_emplace(id);
      if (inserted) order.push_back(id);
      it->second.push_back(std::move(r));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (order.empty()) throw DataError("CSV has no data rows");

  std::vector<Subject> subjects;
  for (const auto& id : order) {
    auto& rs = rows[id];
    std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.time < b.time; });
    for (size_t j = 1; j < rs.size(); ++j) {
      if (rs[j].time == rs[j - 1].time) {
        throw DataError("line " + std::to_string(std::max(rs[j].line, rs[j - 1].line)) +
                        ": duplicate time for subject '" + id + "'");
      }
    }
    Subject s;
    s.id = id;
    s.covariates.resize(static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(names.size()));
    for (size_t j = 0; j < rs.size(); ++j) {
      s.times.push_back(rs[j].time);
      s.counts.push_back(rs[j].y);
      for (size_t c = 0; c < names.size(); ++c) {
        s.covariates(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = rs[j].x[c];
      }
    }
    subjects.push_back(std::move(s));
  }
  try {
    return LongitudinalDataset(std::move(subjects), names);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

LongitudinalDataset read_long_csv(const std::string& path, const ColumnSpec& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_long_csv(in, columns);
}

void write_long_csv(std::ostream& out, const LongitudinalDataset& data) {
  const auto& names = data.covariate_names();
  std::vector<size_t> keep;
  for (size_t c = 0; c < names.size(); ++c) {
    if (names[c] == "intercept" || names[c] == "time") continue;
    keep.push_back(c);
  }
  out << "# schema_version: " << kSchemaVersion << '\n';
  out << "subject,time,y";
  for (size_t c : keep) out << ',' << names[c];
  out << '\n' << std::setprecision(15);
  for (const auto& s : data.subjects()) {
    for (int j = 0; j < s.size(); ++j) {
      out << s.id << ',' << s.times[static_cast<size_t>(j)] << ',' << s.counts[static_cast<size_t>(j)];
      for (size_t c : keep) out << ',' << s.covariates(j, static_cast<Eigen::Index>(c));
      out << '\n';
    }
  }
}

json to_json(const MarginalSpec& spec) {
  json j{{"family", to_string(spec.family)}, {"beta", vector_json(spec.beta)}};
  if (spec.family == MarginalFamily::NegBinomial) j["psi"] = spec.psi;
  return j;
}

MarginalSpec marginal_spec_from_json(const json& j) {
  return config_guard([&] {
    MarginalSpec s;
    s.family = marginal_family_from_string(j.at("family").get<std::string>());
    s.beta = vector_from_json(j.at("beta"));
    s.psi = j.value("psi", 0.0);
    s.validate();
    return s;
  });
}

json to_json(const MixtureCopulaSpec& spec) {
  json comps = json::array();
  for (const auto& c : spec.components) comps.push_back({{"structure", to_string(c.kind)}, {"xi", c.xi}});
  json j{{"family", family_kind_name(spec.family.kind)}, {"components", comps}, {"weights", spec.weights}};
  if (!spec.family.is_gaussian()) j["nu"] = spec.family.nu;
  return j;
}

MixtureCopulaSpec copula_spec_from_json(const json& j) {
  return config_guard([&] {
    MixtureCopulaSpec s;
    const auto kind = family_kind_from_string(j.value("family", std::string("gaussian")));
    s.family = kind == EllipticalFamily::Kind::Gaussian ? EllipticalFamily::gaussian()
                                                        : EllipticalFamily::student_t(j.at("nu").get<double>());
    for (const auto& c : j.at("components")) {
      s.components.push_back({structure_kind_from_string(c.at("structure").get<std::string>()),
                              c.at("xi").get<double>()});
    }
    if (j.contains("weights")) {
      s.weights = j.at("weights").get<std::vector<double>>();
    } else if (s.components.size() == 1) {
      s.weights = {1.0};
    }
    s.validate();
    for (const auto& c : s.components) c.validate();
    return s;
  });
}

json to_json(const CopulaFitConfig& c) {
  json structures = json::array();
  for (auto s : c.structures) structures.push_back(to_string(s));
  json j{{"family", family_kind_name(c.family)},
         {"structures", structures},
         {"nu_grid", c.nu_grid},
         {"starts", c.starts},
         {"native_coordinates", c.native_coordinates},
         {"pi_bounds", {c.pi_min, c.pi_max}},
         {"xi_bounds", {c.xi_min, c.xi_max}},
         {"simplex",
          {{"max_iterations", c.simplex.max_iterations},
           {"size_tolerance", c.simplex.size_tolerance},
           {"initial_step", c.simplex.initial_step}}},
         {"stage1",
          {{"max_iterations", c.stage1.max_iterations},
           {"gradient_tolerance", c.stage1.gradient_tolerance}}},
         {"standard_errors", c.standard_errors},
         {"information_criteria", c.information_criteria}};
  if (c.nu) j["nu"] = *c.nu;
  return j;
}

CopulaFitConfig copula_fit_config_from_json(const json& j, CopulaFitConfig c) {
  return config_guard([&] {
    if (!j.is_object()) throw ConfigError("fit configuration must be an object");
    if (j.contains("family")) c.family = family_kind_from_string(j.at("family").get<std::string>());
    if (j.contains("structures")) {
      c.structures.clear();
      for (const auto& s : j.at("structures")) c.structures.push_back(structure_kind_from_string(s.get<std::string>()));
    }
    if (j.contains("nu")) {
      if (j.at("nu").is_null()) {
        c.nu.reset();
      } else {
        c.nu = j.at("nu").get<double>();
      }
    }
    if (j.contains("nu_grid")) c.nu_grid = j.at("nu_grid").get<std::vector<int>>();
    c.starts = j.value("starts", c.starts);
    c.native_coordinates = j.value("native_coordinates", c.native_coordinates);
    if (j.contains("pi_bounds")) {
      const auto b = j.at("pi_bounds").get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("pi_bounds must have two entries");
      c.pi_min = b[0];
      c.pi_max = b[1];
    }
    if (j.contains("xi_bounds")) {
      const auto b = j.at("xi_bounds").get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("xi_bounds must have two entries");
      c.xi_min = b[0];
      c.xi_max = b[1];
    }
    if (j.contains("simplex")) {
      const auto& s = j.at("simplex");
      c.simplex.max_iterations = s.value("max_iterations", c.simplex.max_iterations);
      c.simplex.size_tolerance = s.value("size_tolerance", c.simplex.size_tolerance);
      if (s.contains("initial_step")) c.simplex.initial_step = s.at("initial_step").get<std::vector<double>>();
    }
    if (j.contains("stage1")) {
      const auto& s = j.at("stage1");
      c.stage1.max_iterations = s.value("max_iterations", c.stage1.max_iterations);
      c.stage1.gradient_tolerance = s.value("gradient_tolerance", c.stage1.gradient_tolerance);
    }
    c.standard_errors = j.value("standard_errors", c.standard_errors);
    c.information_criteria = j.value("information_criteria", c.information_criteria);
    c.validate();
    return c;
  });
}

ModelConfig model_config_from_json(const json& j) {
  return config_guard([&] {
    check_schema(j);
    ModelConfig m;
    if (j.contains("data")) {
      const auto& d = j.at("data");
      m.columns.subject = d.value("subject", m.columns.subject);
      m.columns.time = d.value("time", m.columns.time);
      m.columns.response = d.value("response", m.columns.response);
      if (d.contains("covariates")) m.columns.covariates = d.at("covariates").get<std::vector<std::string>>();
      m.columns.intercept = d.value("intercept", m.columns.intercept);
    }
    if (j.contains("marginal")) m.marginal = marginal_family_from_string(j.at("marginal").get<std::string>());
    if (j.contains("fit")) m.copula = copula_fit_config_from_json(j.at("fit"));
    m.seed = j.value("seed", m.seed);
    m.threads = j.value("threads", m.threads);
    if (m.threads < 1) throw ConfigError("threads must be >= 1");
    return m;
  });
}

json to_json(const ModelConfig& m) {
  return {{"schema_version", kSchemaVersion},
          {"data",
           {{"subject", m.columns.subject},
            {"time", m.columns.time},
            {"response", m.columns.response},
            {"covariates", m.columns.covariates},
            {"intercept", m.columns.intercept}}},
          {"marginal", to_string(m.marginal)},
          {"fit", to_json(m.copula)},
          {"seed", m.seed},
          {"threads", m.threads}};
}

StudyConfig study_config_from_json(const json& j) {
  return config_guard([&] {
    check_schema(j);
    const json marginal = j.value("marginal", json::object());
    const json copula = j.value("copula", json::object());
    const auto family = marginal_family_from_string(marginal.value("family", std::string("poisson")));
    const auto kind = family_kind_from_string(copula.value("family", std::string("gaussian")));
    StudyConfig c = StudyConfig::standard(family, kind, 0.5);
    c.m = j.value("m", c.m);
    c.replicates = j.value("replicates", c.replicates);
    if (j.contains("design")) {
      const auto& d = j.at("design");
      c.design.bernoulli_p = d.value("bernoulli_p", c.design.bernoulli_p);
      c.design.uniform_levels = d.value("uniform_levels", c.design.uniform_levels);
      c.design.visits = d.value("visits", c.design.visits);
    }
    if (marginal.contains("beta")) {
      c.marginal = marginal_spec_from_json(marginal);
    } else {
      c.marginal.psi = marginal.value("psi", c.marginal.psi);
    }
    if (copula.contains("components")) {
      c.copula = copula_spec_from_json(copula);
    } else {
      if (copula.contains("weights")) c.copula.weights = copula.at("weights").get<std::vector<double>>();
      if (copula.contains("nu") && !c.copula.family.is_gaussian()) {
        c.copula.family = EllipticalFamily::student_t(copula.at("nu").get<double>());
      }
    }
    // The fit mirrors the generating model unless overridden.
    c.fit.family = c.copula.family.kind;
    c.fit.structures.clear();
    for (const auto& comp : c.copula.components) c.fit.structures.push_back(comp.kind);
    if (c.copula.family.is_gaussian()) {
      c.fit.nu.reset();
    } else {
      c.fit.nu = c.copula.family.nu;
    }
    if (j.contains("fit")) c.fit = copula_fit_config_from_json(j.at("fit"), c.fit);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.validate();
    return c;
  });
}

json to_json(const StudyConfig& c) {
  return {{"schema_version", kSchemaVersion},
          {"m", c.m},
          {"replicates", c.replicates},
          {"design",
           {{"bernoulli_p", c.design.bernoulli_p},
            {"uniform_levels", c.design.uniform_levels},
            {"visits", c.design.visits}}},
          {"marginal", to_json(c.marginal)},
          {"copula", to_json(c.copula)},
          {"fit", to_json(c.fit)},
          {"seed", c.seed},
          {"threads", c.threads}};
}

json to_json(const FitResult& fit) {
  json params = json::array();
  for (size_t i = 0; i < fit.parameter_names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    params.push_back({{"name", fit.parameter_names[i]},
                      {"estimate", finite_or_null(fit.estimates[k])},
                      {"se", k < fit.standard_errors.size() ? finite_or_null(fit.standard_errors[k]) : json()}});
  }
  json cov = json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) cov.push_back(vector_json(fit.covariance.row(r).transpose()));
  json profile = json::array();
  for (const auto& [nu, ll] : fit.diagnostics.nu_profile) profile.push_back({nu, finite_or_null(ll)});
  json marginal = to_json(fit.marginal.spec);
  marginal["loglik"] = finite_or_null(fit.marginal.loglik);
  marginal["converged"] = fit.marginal.converged;
  marginal["iterations"] = fit.marginal.iterations;
  marginal["gradient_norm"] = finite_or_null(fit.marginal.gradient_norm);
  const auto& d = fit.diagnostics;
  return {{"schema_version", kSchemaVersion},
          {"num_subjects", fit.num_subjects},
          {"marginal", marginal},
          {"copula", to_json(fit.copula)},
          {"comp_loglik", finite_or_null(fit.comp_loglik)},
          {"claic", finite_or_null(fit.claic)},
          {"clbic", finite_or_null(fit.clbic)},
          {"penalty", finite_or_null(fit.penalty)},
          {"parameters", params},
          {"covariance", cov},
          {"diagnostics",
           {{"stage1_converged", d.stage1_converged},
            {"stage1_gradient_norm", finite_or_null(d.stage1_gradient_norm)},
            {"stage2_converged", d.stage2_converged},
            {"stage2_iterations", d.stage2_iterations},
            {"stage2_simplex_size", finite_or_null(d.stage2_simplex_size)},
            {"boundary", d.boundary},
            {"pseudo_inverse", d.pseudo_inverse},
            {"nu_profile", profile}}}};
}

FitResult fit_result_from_json(const json& j) {
  return config_guard([&] {
    check_schema(j);
    FitResult fit;
    fit.num_subjects = j.at("num_subjects").get<int>();
    const auto& m = j.at("marginal");
    fit.marginal.spec = marginal_spec_from_json(m);
    fit.marginal.loglik = number_or_nan(m.value("loglik", json()));
    fit.marginal.converged = m.value("converged", false);
    fit.marginal.iterations = m.value("iterations", 0);
    fit.marginal.gradient_norm = number_or_nan(m.value("gradient_norm", json()));
    fit.copula = copula_spec_from_json(j.at("copula"));
    fit.comp_loglik = number_or_nan(j.at("comp_loglik"));
    fit.claic = number_or_nan(j.value("claic", json()));
    fit.clbic = number_or_nan(j.value("clbic", json()));
    fit.penalty = number_or_nan(j.value("penalty", json()));
    const auto& params = j.at("parameters");
    const auto n = static_cast<Eigen::Index>(params.size());
    fit.estimates.resize(n);
    fit.standard_errors.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = params[static_cast<size_t>(i)];
      fit.parameter_names.push_back(p.at("name").get<std::string>());
      fit.estimates[i] = number_or_nan(p.at("estimate"));
      fit.standard_errors[i] = number_or_nan(p.value("se", json()));
    }
    fit.covariance = Eigen::MatrixXd::Constant(n, n, kNaN);
    if (j.contains("covariance")) {
      const auto& cov = j.at("covariance");
      if (static_cast<Eigen::Index>(cov.size()) != n) throw ConfigError("covariance has wrong size");
      for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::VectorXd row = vector_from_json(cov[static_cast<size_t>(r)]);
        if (row.size() != n) throw ConfigError("covariance has wrong size");
        fit.covariance.row(r) = row.transpose();
      }
    }
    if (j.contains("diagnostics")) {
      const auto& d = j.at("diagnostics");
      auto& fd = fit.diagnostics;
      fd.stage1_converged = d.value("stage1_converged", false);
      fd.stage1_gradient_norm = number_or_nan(d.value("stage1_gradient_norm", json()));
      fd.stage2_converged = d.value("stage2_converged", false);
      fd.stage2_iterations = d.value("stage2_iterations", 0);
      fd.stage2_simplex_size = number_or_nan(d.value("stage2_simplex_size", json()));
      fd.boundary = d.value("boundary", false);
      fd.pseudo_inverse = d.value("pseudo_inverse", false);
      for (const auto& e : d.value("nu_profile", json::array())) {
        fd.nu_profile.emplace_back(e.at(0).get<double>(), number_or_nan(e.at(1)));
      }
    }
    return fit;
  });
}

json to_json(const StudyReport& r) {
  json rows = json::array();
  for (const auto& p : r.rows) {
    rows.push_back({{"parameter", p.name},
                    {"true_value", p.truth},
                    {"mean", finite_or_null(p.mean)},
                    {"bias", finite_or_null(p.bias)},
                    {"sd", finite_or_null(p.sd)},
                    {"se", finite_or_null(p.se)},
                    {"rmse", finite_or_null(p.rmse)}});
  }
  json est = json::array();
  for (const auto& e : r.estimates) est.push_back(vector_json(e));
  return {{"schema_version", kSchemaVersion},
          {"m", r.m},
          {"replicates", r.requested},
          {"failures", r.failures},
          {"failure_messages", r.failure_messages},
          {"summary", rows},
          {"replicate_index", r.replicate_index},
          {"estimates", est}};
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

void write_fit_table(std::ostream& out, const FitResult& fit) {
  out << std::left << std::setw(18) << "Parameter" << std::right << std::setw(12) << "Estimate"
      << std::setw(12) << "SE" << '\n';
  out << std::fixed << std::setprecision(4);
  for (size_t i = 0; i < fit.parameter_names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << std::left << std::setw(18) << fit.parameter_names[i] << std::right << std::setw(12)
        << fit.estimates[k] << std::setw(12) << fit.standard_errors[k] << '\n';
  }
  if (!fit.copula.family.is_gaussian()) out << std::left << std::setw(18) << "nu" << std::right << std::setw(12) << fit.copula.family.nu << '\n';
  out << std::setprecision(2);
  out << std::left << std::setw(18) << "comp_loglik" << std::right << std::setw(12) << fit.comp_loglik << '\n';
  out << std::left << std::setw(18) << "CLAIC" << std::right << std::setw(12) << fit.claic << '\n';
  out << std::left << std::setw(18) << "CLBIC" << std::right << std::setw(12) << fit.clbic << '\n';
  out.unsetf(std::ios::fixed);
  out << std::setprecision(6);
}

}  // namespace mixcop
