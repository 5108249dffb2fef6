#include "mixcop/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mixcop {

void CovariateDesign::validate() const {
  if (!(bernoulli_p >= 0.0 && bernoulli_p <= 1.0)) {
    throw std::invalid_argument("CovariateDesign: bernoulli_p must lie in [0, 1]");
  }
  if (uniform_levels < 1) throw std::invalid_argument("CovariateDesign: uniform_levels must be >= 1");
  if (visits < 1) throw std::invalid_argument("CovariateDesign: visits must be >= 1");
}

StudyConfig StudyConfig::standard(MarginalFamily family, EllipticalFamily::Kind copula_family,
                                  double pi_ar1) {
  StudyConfig c;
  c.marginal.family = family;
  c.marginal.beta = Eigen::Vector4d(1.0, 0.5, 0.5, -0.5);
  c.marginal.psi = family == MarginalFamily::NegBinomial ? 4.0 : 0.0;
  c.copula.family = copula_family == EllipticalFamily::Kind::Gaussian ? EllipticalFamily::gaussian()
                                                                      : EllipticalFamily::student_t(4.0);
  c.copula.components = {{StructureKind::AR1, 0.3}, {StructureKind::EX, 0.7}};
  c.copula.weights = {pi_ar1, 1.0 - pi_ar1};
  c.fit.family = copula_family;
  c.fit.structures = {StructureKind::AR1, StructureKind::EX};
  if (copula_family == EllipticalFamily::Kind::StudentT) c.fit.nu = 4.0;
  return c;
}

void StudyConfig::validate() const {
  if (m < 1) throw std::invalid_argument("StudyConfig: m must be >= 1");
  if (replicates < 1) throw std::invalid_argument("StudyConfig: replicates must be >= 1");
  if (threads < 1) throw std::invalid_argument("StudyConfig: threads must be >= 1");
  design.validate();
  marginal.validate();
  copula.validate();
  fit.validate();
  if (marginal.beta.size() != 4) {
    throw std::invalid_argument("StudyConfig: beta must have 4 entries (intercept, x1, x2, time)");
  }
  for (size_t l = 0; l < copula.components.size(); ++l) {
    const double w = copula.weights[l];
    const double xi = copula.components[l].xi;
    if (copula.components.size() > 1 && (w < fit.pi_min || w > fit.pi_max)) {
      throw std::invalid_argument("StudyConfig: true weight outside the fitting box");
    }
    if (xi < fit.xi_min || xi > fit.xi_max) {
      throw std::invalid_argument("StudyConfig: true xi outside the fitting box");
    }
  }
}

std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  return std::mt19937_64(seq);
}

LongitudinalDataset simulate_design(int m, const CovariateDesign& design, std::mt19937_64& rng) {
  design.validate();
  if (m < 1) throw std::invalid_argument("simulate_design: m must be >= 1");
  std::bernoulli_distribution ber(design.bernoulli_p);
  std::uniform_int_distribution<int> lev(1, design.uniform_levels);
  std::vector<Subject> subjects;
  subjects.reserve(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    Subject s;
    s.id = std::to_string(i + 1);
    const double x1 = ber(rng) ? 1.0 : 0.0;
    const double x2 = lev(rng);
    s.covariates.resize(design.visits, 4);
    for (int j = 0; j < design.visits; ++j) {
      const double t = j + 1.0;
      s.times.push_back(t);
      s.covariates.row(j) << 1.0, x1, x2, t;
    }
    s.counts.assign(static_cast<size_t>(design.visits), 0);
    subjects.push_back(std::move(s));
  }
  return LongitudinalDataset(std::move(subjects), CovariateDesign::column_names());
}

std::vector<double> simulate_latent(std::span<const double> times, const MixtureCopulaSpec& copula,
                                    std::mt19937_64& rng, int* component) {
  std::discrete_distribution<int> pick(copula.weights.begin(), copula.weights.end());
  const int l = pick(rng);
  if (component) *component = l;
  const CorrelationMatrix sigma = corr_matrix(copula.components[static_cast<size_t>(l)], times);
  const auto n = static_cast<Eigen::Index>(times.size());
  std::normal_distribution<double> norm;
  Eigen::VectorXd g(n);
  for (Eigen::Index j = 0; j < n; ++j) g[j] = norm(rng);
  Eigen::VectorXd z = sigma.cholesky_lower() * g;
  if (copula.family.kind == EllipticalFamily::Kind::StudentT) {
    std::chi_squared_distribution<double> chi(copula.family.nu);
    z *= std::sqrt(copula.family.nu / chi(rng));
  }
  return {z.data(), z.data() + n};
}

LongitudinalDataset simulate_counts(const LongitudinalDataset& design, const MarginalSpec& marginal,
                                    const MixtureCopulaSpec& copula, std::mt19937_64& rng) {
  marginal.validate();
  copula.validate();
  if (design.num_covariates() != static_cast<int>(marginal.beta.size())) {
    throw std::invalid_argument("simulate_counts: covariate width does not match beta");
  }
  const double below_one = std::nextafter(1.0, 0.0);
  std::vector<Subject> subjects = design.subjects();
  for (auto& s : subjects) {
    const auto z = simulate_latent(s.times, copula, rng);
    for (int j = 0; j < s.size(); ++j) {
      const auto dist = distribution_at(marginal, s.covariates.row(j));
      const double u = std::min(latent_cdf(z[static_cast<size_t>(j)], copula.family), below_one);
      s.counts[static_cast<size_t>(j)] = dist.quantile(u);
    }
  }
  return LongitudinalDataset(std::move(subjects), design.covariate_names());
}

LongitudinalDataset simulate_dataset(const StudyConfig& config, std::mt19937_64& rng) {
  const LongitudinalDataset design = simulate_design(config.m, config.design, rng);
  return simulate_counts(design, config.marginal, config.copula, rng);
}

LongitudinalDataset simulate_dataset(const StudyConfig& config, std::uint64_t k) {
  auto rng = replicate_engine(config.seed, k);
  return simulate_dataset(config, rng);
}

std::vector<ParameterSummary> summarize(const std::vector<std::string>& names,
                                        const Eigen::VectorXd& truth,
                                        const std::vector<Eigen::VectorXd>& estimates,
                                        const std::vector<Eigen::VectorXd>& standard_errors) {
  const auto p = truth.size();
  if (static_cast<Eigen::Index>(names.size()) != p) {
    throw std::invalid_argument("summarize: names and truth differ in length");
  }
  const double n = static_cast<double>(estimates.size());
  std::vector<ParameterSummary> rows;
  for (Eigen::Index j = 0; j < p; ++j) {
    ParameterSummary r;
    r.name = names[static_cast<size_t>(j)];
    r.truth = truth[j];
    if (estimates.empty()) {
      r.mean = r.bias = r.sd = r.se = r.rmse = std::numeric_limits<double>::quiet_NaN();
      rows.push_back(r);
      continue;
    }
    double sum = 0.0;
    for (const auto& e : estimates) sum += e[j];
    r.mean = sum / n;
    r.bias = r.mean - r.truth;
    double ss = 0.0, sq = 0.0;
    for (const auto& e : estimates) {
      ss += (e[j] - r.mean) * (e[j] - r.mean);
      sq += (e[j] - r.truth) * (e[j] - r.truth);
    }
    r.sd = estimates.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    r.rmse = std::sqrt(sq / n);
    double se_sum = 0.0;
    int se_count = 0;
    for (const auto& s : standard_errors) {
      if (s.size() > j && std::isfinite(s[j])) {
        se_sum += s[j];
        ++se_count;
      }
    }
    r.se = se_count > 0 ? se_sum / se_count : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(r);
  }
  return rows;
}

StudyReport run_study(const StudyConfig& config, const ProgressCallback& progress) {
  config.validate();
  const int total = config.replicates;

  struct Slot {
    bool ok = false;
    std::string message;
    Eigen::VectorXd estimates;
    Eigen::VectorXd standard_errors;
  };
  std::vector<Slot> slots(static_cast<size_t>(total));
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  CopulaFitConfig fit_config = config.fit;
  fit_config.information_criteria = false;  // not part of the report

  const auto worker = [&] {
    for (int k = next++; k < total; k = next++) {
      Slot& slot = slots[static_cast<size_t>(k)];
      try {
        const LongitudinalDataset data = simulate_dataset(config, static_cast<std::uint64_t>(k));
        const FitResult fit = fit_two_stage(data, config.marginal.family, fit_config);
        if (fit.diagnostics.converged()) {
          slot.ok = true;
          slot.estimates = fit.estimates;
          slot.standard_errors = fit.standard_errors;
        } else {
          slot.message = "replicate " + std::to_string(k) + ": did not converge";
        }
      } catch (const std::exception& e) {
        slot.message = "replicate " + std::to_string(k) + ": " + e.what();
      }
      const int d = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(d, total);
      }
    }
  };

  const int workers = std::min(config.threads, total);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  StudyReport report;
  report.m = config.m;
  report.requested = total;
  for (int k = 0; k < total; ++k) {
    Slot& slot = slots[static_cast<size_t>(k)];
    if (slot.ok) {
      report.replicate_index.push_back(k);
      report.estimates.push_back(std::move(slot.estimates));
      report.standard_errors.push_back(std::move(slot.standard_errors));
    } else {
      ++report.failures;
      report.failure_messages.push_back(slot.message);
    }
  }
  if (report.failures * 5 > total) {
    std::ostringstream msg;
    msg << "run_study: " << report.failures << " of " << total << " replicates failed";
    for (size_t i = 0; i < std::min<size_t>(report.failure_messages.size(), 5); ++i) {
      msg << "; " << report.failure_messages[i];
    }
    throw std::runtime_error(msg.str());
  }
  const auto names = reporting_names(config.marginal, config.copula, CovariateDesign::column_names());
  report.rows = summarize(names, reporting_parameters(config.marginal, config.copula),
                          report.estimates, report.standard_errors);
  return report;
}

void write_report_csv(std::ostream& out, const StudyReport& report) {
  out << "# schema_version: 1\n";
  out << "# m: " << report.m << ", replicates: " << report.requested
      << ", failures: " << report.failures << '\n';
  out << "parameter,true_value,mean,bias,sd,se,rmse\n";
  out << std::setprecision(10);
  for (const auto& r : report.rows) {
    out << r.name << ',' << r.truth << ',' << r.mean << ',' << r.bias << ',' << r.sd << ','
        << r.se << ',' << r.rmse << '\n';
  }
}

void write_report_table(std::ostream& out, const std::vector<StudyReport>& reports) {
  if (reports.empty()) return;
  constexpr int name_w = 14, col_w = 10;
  out << std::left << std::setw(name_w) << "" << std::setw(col_w) << "";
  for (const auto& r : reports) {
    std::ostringstream head;
    head << "m = " << r.m << " (N = " << r.completed() << ")";
    out << std::setw(5 * col_w) << head.str();
  }
  out << '\n' << std::setw(name_w) << "Parameters" << std::setw(col_w) << "True Value";
  for (size_t i = 0; i < reports.size(); ++i) {
    for (const char* c : {"Mean", "Bias", "SD", "SE", "RMSE"}) out << std::setw(col_w) << c;
  }
  out << '\n' << std::right << std::fixed << std::setprecision(4);
  const auto& first = reports.front().rows;
  for (size_t j = 0; j < first.size(); ++j) {
    out << std::left << std::setw(name_w) << first[j].name << std::right << std::setw(col_w - 2)
        << first[j].truth << "  ";
    for (const auto& r : reports) {
      const auto& row = r.rows.at(j);
      for (double v : {row.mean, row.bias, row.sd, row.se, row.rmse}) out << std::setw(col_w) << v;
    }
    out << '\n';
  }
  out.unsetf(std::ios::fixed);
}

}  // namespace mixcop
