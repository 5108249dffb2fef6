#include "mixcop/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mixcop/optimize.hpp"
#include "mixcop/special_fn.hpp"

namespace mixcop {

namespace {

constexpr double kEtaClamp = 500.0;

double clamp_eta(double eta) { return std::clamp(eta, -kEtaClamp, kEtaClamp); }

}  // namespace

std::string to_string(MarginalFamily family) {
  return family == MarginalFamily::Poisson ? "poisson" : "negbinomial";
}

MarginalFamily marginal_family_from_string(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "poisson") return MarginalFamily::Poisson;
  if (s == "negbinomial" || s == "negative_binomial" || s == "nb" || s == "negbin") {
    return MarginalFamily::NegBinomial;
  }
  throw std::invalid_argument("unknown marginal family '" + name + "'");
}

void MarginalSpec::validate() const {
  if (beta.size() < 1) throw std::invalid_argument("MarginalSpec: beta must be nonempty");
  if (!beta.allFinite()) throw std::invalid_argument("MarginalSpec: beta must be finite");
  if (family == MarginalFamily::NegBinomial && !(psi > 0.0 && std::isfinite(psi))) {
    throw std::invalid_argument("MarginalSpec: NegBinomial dispersion psi must be positive");
  }
}

int MarginalSpec::num_parameters() const {
  return static_cast<int>(beta.size()) + (family == MarginalFamily::NegBinomial ? 1 : 0);
}

double mean(std::span<const double> x, const Eigen::VectorXd& beta) {
  if (static_cast<Eigen::Index>(x.size()) != beta.size()) {
    throw std::invalid_argument("mean: covariate and coefficient lengths differ");
  }
  double eta = 0.0;
  for (size_t i = 0; i < x.size(); ++i) eta += x[i] * beta[static_cast<Eigen::Index>(i)];
  return std::exp(clamp_eta(eta));
}

double mean(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::VectorXd& beta) {
  if (x.size() != beta.size()) {
    throw std::invalid_argument("mean: covariate and coefficient lengths differ");
  }
  return std::exp(clamp_eta(x.dot(beta.transpose())));
}

CountDistribution::CountDistribution(MarginalFamily family, double mu, double psi)
    : family_(family), mu_(mu), psi_(psi) {
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    throw std::invalid_argument("CountDistribution: mean must be positive and finite");
  }
  if (family == MarginalFamily::NegBinomial && !(psi > 0.0)) {
    throw std::invalid_argument("CountDistribution: dispersion must be positive");
  }
}

double CountDistribution::log_pmf(int y) const {
  if (y < 0) return -std::numeric_limits<double>::infinity();
  const double yd = static_cast<double>(y);
  if (family_ == MarginalFamily::Poisson) {
    return yd * std::log(mu_) - mu_ - special::log_gamma(yd + 1.0);
  }
  const double log_total = std::log(psi_ + mu_);
  return special::log_gamma_ratio(psi_, yd) - special::log_gamma(yd + 1.0) -
         psi_ * std::log1p(mu_ / psi_) + yd * (std::log(mu_) - log_total);
}

double CountDistribution::pmf(int y) const { return y < 0 ? 0.0 : std::exp(log_pmf(y)); }

double CountDistribution::cdf(int y) const {
  if (y < 0) return 0.0;
  const double yd = static_cast<double>(y);
  if (family_ == MarginalFamily::Poisson) {
    return special::gamma_q(yd + 1.0, mu_);
  }
  const double total = psi_ + mu_;
  return special::ibeta(psi_, yd + 1.0, psi_ / total, mu_ / total).first;
}

int CountDistribution::quantile(double u) const {
  if (!(u >= 0.0 && u < 1.0)) {
    throw std::invalid_argument("CountDistribution::quantile: u must lie in [0, 1)");
  }
  if (u <= cdf(0)) return 0;
  // Normal-approximation guess, then bracket and bisect on the exact cdf.
  const double z = special::norm_quantile(u);
  const double guess = mu_ + std::sqrt(variance()) * z;
  int lo = -1;  // cdf(lo) < u
  int hi = std::max(1, static_cast<int>(std::min(guess, 2e9)));
  if (cdf(hi) < u) {
    int step = std::max(1, static_cast<int>(std::sqrt(variance())));
    lo = hi;
    while (cdf(hi) < u) {
      lo = hi;
      if (hi > std::numeric_limits<int>::max() / 2) {
        throw std::domain_error("CountDistribution::quantile: support overflow");
      }
      hi += step;
      step *= 2;
    }
  } else {
    int step = std::max(1, static_cast<int>(std::sqrt(variance())));
    int cand = hi - step;
    while (cand >= 0 && cdf(cand) >= u) {
      hi = cand;
      step *= 2;
      cand = hi - step;
    }
    lo = std::max(cand, 0);
  }
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    if (cdf(mid) >= u) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double CountDistribution::variance() const {
  return family_ == MarginalFamily::Poisson ? mu_ : mu_ + mu_ * mu_ / psi_;
}

LongitudinalDataset::LongitudinalDataset(std::vector<Subject> subjects,
                                         std::vector<std::string> covariate_names)
    : subjects_(std::move(subjects)), covariate_names_(std::move(covariate_names)) {
  p_ = -1;
  for (const auto& s : subjects_) {
    const int n = s.size();
    if (n < 1) throw std::invalid_argument("subject '" + s.id + "' has no records");
    if (static_cast<int>(s.times.size()) != n || s.covariates.rows() != n) {
      throw std::invalid_argument("subject '" + s.id + "': inconsistent record counts");
    }
    if (p_ < 0) p_ = static_cast<int>(s.covariates.cols());
    if (s.covariates.cols() != p_) {
      throw std::invalid_argument("subject '" + s.id + "': covariate length differs");
    }
    for (int j = 0; j < n; ++j) {
      if (s.counts[j] < 0) throw std::invalid_argument("subject '" + s.id + "': negative count");
      if (!std::isfinite(s.times[j])) {
        throw std::invalid_argument("subject '" + s.id + "': non-finite time");
      }
      if (j > 0 && !(s.times[j] > s.times[j - 1])) {
        throw std::invalid_argument("subject '" + s.id + "': times must be strictly increasing");
      }
    }
    if (!s.covariates.allFinite()) {
      throw std::invalid_argument("subject '" + s.id + "': non-finite covariate");
    }
    records_ += n;
  }
  if (p_ < 0) p_ = 0;
  if (p_ < 1 && !subjects_.empty()) throw std::invalid_argument("dataset needs at least one covariate");
  if (!covariate_names_.empty() && static_cast<int>(covariate_names_.size()) != p_) {
    throw std::invalid_argument("covariate name count does not match covariate width");
  }
}

CountDistribution distribution_at(const MarginalSpec& spec,
                                  const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return CountDistribution(spec.family, mean(x, spec.beta), spec.psi);
}

double independence_loglik(const LongitudinalDataset& data, const MarginalSpec& spec) {
  spec.validate();
  double total = 0.0;
  for (const auto& s : data.subjects()) {
    for (int j = 0; j < s.size(); ++j) {
      total += distribution_at(spec, s.covariates.row(j)).log_pmf(s.counts[j]);
    }
  }
  return total;
}

Eigen::VectorXd subject_marginal_score(const Subject& subject, const MarginalSpec& spec) {
  const auto p = spec.beta.size();
  const bool nb = spec.family == MarginalFamily::NegBinomial;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p + (nb ? 1 : 0));
  for (int j = 0; j < subject.size(); ++j) {
    const auto x = subject.covariates.row(j);
    const double eta = x.dot(spec.beta.transpose());
    const double mu = std::exp(clamp_eta(eta));
    const double y = subject.counts[j];
    // Clamped predictors are flat in beta.
    const bool active = std::abs(eta) < kEtaClamp;
    if (!nb) {
      if (active) g.head(p) += (y - mu) * x.transpose();
      continue;
    }
    const double psi = spec.psi;
    if (active) g.head(p) += (psi * (y - mu) / (psi + mu)) * x.transpose();
    g[p] += special::digamma_difference(psi, y) - std::log1p(mu / psi) + (mu - y) / (psi + mu);
  }
  return g;
}

namespace {

// Objective over theta = (beta, log psi) returning the negative log-likelihood.
struct Stage1Objective {
  const LongitudinalDataset& data;
  MarginalFamily family;

  MarginalSpec spec_at(const Eigen::VectorXd& theta) const {
    MarginalSpec spec;
    spec.family = family;
    const auto p = data.num_covariates();
    spec.beta = theta.head(p);
    if (family == MarginalFamily::NegBinomial) spec.psi = std::exp(std::clamp(theta[p], -30.0, 30.0));
    return spec;
  }

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    const MarginalSpec spec = spec_at(theta);
    const double ll = independence_loglik(data, spec);
    if (grad != nullptr) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
      for (const auto& s : data.subjects()) g += subject_marginal_score(s, spec);
      if (family == MarginalFamily::NegBinomial) g[theta.size() - 1] *= spec.psi;
      *grad = -g;
    }
    return -ll;
  }
};

Eigen::MatrixXd stacked_design(const LongitudinalDataset& data) {
  Eigen::MatrixXd x(data.num_records(), data.num_covariates());
  Eigen::Index row = 0;
  for (const auto& s : data.subjects()) {
    x.middleRows(row, s.size()) = s.covariates;
    row += s.size();
  }
  return x;
}

// Newton iterations with a finite-difference Hessian of the analytic gradient,
// used to drive the gradient below tolerance after the quasi-Newton phase.
void newton_polish(const Stage1Objective& f, Eigen::VectorXd& theta, double& value,
                   Eigen::VectorXd& grad, std::vector<double>& trace, int& iterations,
                   double tolerance) {
  const auto n = theta.size();
  for (int it = 0; it < 50 && grad.norm() > tolerance; ++it) {
    Eigen::MatrixXd hess(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = 1e-5 * (1.0 + std::abs(theta[i]));
      Eigen::VectorXd tp = theta, tm = theta, gp, gm;
      tp[i] += h;
      tm[i] -= h;
      f(tp, &gp);
      f(tm, &gm);
      hess.col(i) = (gp - gm) / (2.0 * h);
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    Eigen::VectorXd step = ldlt.solve(grad);
    bool accepted = false;
    for (int half = 0; half < 30; ++half) {
      Eigen::VectorXd cand = theta - step;
      Eigen::VectorXd g;
      const double v = f(cand, &g);
      // Near the optimum the decrease drops below rounding of the objective;
      // accept such ties when the gradient shrinks.
      const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(value);
      if (std::isfinite(v) && (v <= value || (v <= value + slack && g.norm() < grad.norm()))) {
        theta = cand;
        value = v;
        grad = g;
        trace.push_back(-v);
        ++iterations;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
}

}  // namespace

MarginalFit fit_stage1(const LongitudinalDataset& data, MarginalFamily family,
                       const Stage1Options& options) {
  if (data.empty()) throw std::invalid_argument("fit_stage1: empty dataset");
  const int p = data.num_covariates();
  const Eigen::MatrixXd design = stacked_design(data);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) throw std::invalid_argument("fit_stage1: design matrix is rank deficient");

  // Start beta at the least-squares fit of log(y + 0.5).
  Eigen::VectorXd logy(data.num_records());
  {
    Eigen::Index row = 0;
    for (const auto& s : data.subjects()) {
      for (int y : s.counts) logy[row++] = std::log(y + 0.5);
    }
  }
  Eigen::VectorXd beta0 = qr.solve(logy);
  if (!beta0.allFinite()) beta0 = Eigen::VectorXd::Zero(p);

  QuasiNewtonOptions qn;
  qn.max_iterations = options.max_iterations;
  qn.gradient_tolerance = options.gradient_tolerance;

  MarginalFit fit;
  int iterations = 0;
  std::vector<double> trace;

  // Poisson fit first; it seeds the NegBinomial fit.
  Stage1Objective poisson{data, MarginalFamily::Poisson};
  auto res = minimize_bfgs(poisson, beta0, qn);
  Eigen::VectorXd theta = res.x;
  iterations += res.iterations;
  for (double v : res.trace) trace.push_back(-v);

  Stage1Objective objective{data, family};
  if (family == MarginalFamily::NegBinomial) {
    double num = 0.0, den = 0.0;
    for (const auto& s : data.subjects()) {
      for (int j = 0; j < s.size(); ++j) {
        const double mu = mean(s.covariates.row(j), theta.head(p));
        num += mu * mu;
        den += (s.counts[j] - mu) * (s.counts[j] - mu) - mu;
      }
    }
    const double psi0 = den > 0.0 ? std::clamp(num / den, 0.05, 1e4) : 100.0;
    Eigen::VectorXd start(p + 1);
    start << theta, std::log(psi0);
    trace.clear();  // the Poisson phase optimizes a different likelihood
    res = minimize_bfgs(objective, start, qn);
    theta = res.x;
    iterations += res.iterations;
    for (double v : res.trace) trace.push_back(-v);
  }

  Eigen::VectorXd grad;
  double value = objective(theta, &grad);
  newton_polish(objective, theta, value, grad, trace, iterations, options.gradient_tolerance);

  fit.spec = objective.spec_at(theta);
  fit.loglik = -value;
  fit.gradient_norm = grad.norm();
  fit.converged = std::isfinite(value) && fit.gradient_norm <= options.gradient_tolerance;
  fit.iterations = iterations;
  fit.loglik_trace = std::move(trace);
  return fit;
}

}  // namespace mixcop
