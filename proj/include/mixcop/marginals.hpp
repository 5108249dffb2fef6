#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mixcop {

enum class MarginalFamily { Poisson, NegBinomial };

std::string to_string(MarginalFamily family);
MarginalFamily marginal_family_from_string(const std::string& name);

/// Log-link count regression: mu = exp(x . beta). For NegBinomial,
/// Var(Y) = mu + mu^2 / psi with size psi and success probability psi / (psi + mu).
struct MarginalSpec {
  MarginalFamily family = MarginalFamily::Poisson;
  Eigen::VectorXd beta;
  double psi = 0.0;  // ignored for Poisson

  /// Throws std::invalid_argument if beta is empty or psi <= 0 for NegBinomial.
  void validate() const;
  /// Number of free parameters: p, plus one for NegBinomial.
  int num_parameters() const;
};

/// mu = exp(x . beta) with the linear predictor clamped to [-500, 500].
double mean(std::span<const double> x, const Eigen::VectorXd& beta);
double mean(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::VectorXd& beta);

/// A single count distribution with fixed mean (and dispersion).
class CountDistribution {
 public:
  CountDistribution(MarginalFamily family, double mu, double psi = 0.0);
  static CountDistribution poisson(double mu) { return {MarginalFamily::Poisson, mu}; }
  static CountDistribution neg_binomial(double mu, double psi) {
    return {MarginalFamily::NegBinomial, mu, psi};
  }

  MarginalFamily family() const { return family_; }
  double mu() const { return mu_; }
  double psi() const { return psi_; }

  double log_pmf(int y) const;
  double pmf(int y) const;
  /// P(Y <= y); cdf(y) = 0 for every y < 0.
  double cdf(int y) const;
  /// min{y : cdf(y) >= u} for u in [0, 1).
  int quantile(double u) const;

  double variance() const;

 private:
  MarginalFamily family_;
  double mu_;
  double psi_;
};

/// One subject: visits ordered by strictly increasing time.
struct Subject {
  std::string id;
  std::vector<double> times;
  Eigen::MatrixXd covariates;  // n_i x p
  std::vector<int> counts;

  int size() const { return static_cast<int>(counts.size()); }
};

class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;
  /// Validates times, covariate widths and counts; throws std::invalid_argument.
  LongitudinalDataset(std::vector<Subject> subjects, std::vector<std::string> covariate_names = {});

  const std::vector<Subject>& subjects() const { return subjects_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  int num_subjects() const { return static_cast<int>(subjects_.size()); }
  int num_covariates() const { return p_; }
  int num_records() const { return records_; }
  bool empty() const { return subjects_.empty(); }

 private:
  std::vector<Subject> subjects_;
  std::vector<std::string> covariate_names_;
  int p_ = 0;
  int records_ = 0;
};

CountDistribution distribution_at(const MarginalSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Working-independence log-likelihood: sum of log-pmf over every record.
double independence_loglik(const LongitudinalDataset& data, const MarginalSpec& spec);

/// Gradient of one subject's log-likelihood with respect to (beta, psi).
/// The psi entry is omitted for Poisson.
Eigen::VectorXd subject_marginal_score(const Subject& subject, const MarginalSpec& spec);

struct Stage1Options {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
};

struct MarginalFit {
  MarginalSpec spec;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  /// Objective trace of the accepted optimizer iterations (log-likelihood scale).
  std::vector<double> loglik_trace;
};

/// Maximizes the working-independence likelihood. beta by BFGS with analytic
/// score; psi on the log scale. Throws std::invalid_argument if the design is
/// rank deficient or the data is empty.
MarginalFit fit_stage1(const LongitudinalDataset& data, MarginalFamily family,
                       const Stage1Options& options = {});

}  // namespace mixcop
