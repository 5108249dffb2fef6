#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixcop/copula.hpp"
#include "mixcop/marginals.hpp"
#include "mixcop/optimize.hpp"

namespace mixcop {

/// Per subject-visit probability integral transforms u = F(y), u- = F(y - 1).
struct UniformScores {
  struct SubjectScores {
    std::vector<double> times;
    std::vector<double> u;
    std::vector<double> u_minus;
  };
  std::vector<SubjectScores> subjects;
};

UniformScores uniform_scores(const LongitudinalDataset& data, const MarginalSpec& spec);

/// Pairwise mixture-copula log-likelihood:
/// sum_i sum_{j<k} log sum_l pi_l h_l(u_ij, u_ik). Rectangle masses are
/// floored at 1e-300 before the log; returns -infinity if any term is NaN.
double composite_loglik(const UniformScores& scores, const MixtureCopulaSpec& spec);

/// Composite likelihood over the latent-scale intervals of a fixed family.
/// Precomputes the quantile transforms once so repeated evaluation in the
/// dependence parameters is cheap.
class CompositeEvaluator {
 public:
  CompositeEvaluator(const UniformScores& scores, const EllipticalFamily& family);

  const EllipticalFamily& family() const { return family_; }
  int num_subjects() const { return static_cast<int>(subjects_.size()); }
  int num_pairs() const { return num_pairs_; }

  double loglik(const MixtureCopulaSpec& spec) const;
  double subject_loglik(int subject, const MixtureCopulaSpec& spec) const;
  /// Log-likelihood of every pair in subject order, j < k within subject.
  std::vector<double> pair_logliks(const MixtureCopulaSpec& spec) const;
  /// Analytic gradient of the subject's contribution with respect to the
  /// natural dependence parameters (pi_1..pi_{K-1}, xi_1..xi_K).
  Eigen::VectorXd subject_score(int subject, const MixtureCopulaSpec& spec) const;

 private:
  struct SubjectLatent {
    std::vector<double> times;
    std::vector<LatentInterval> intervals;
  };
  EllipticalFamily family_;
  std::vector<SubjectLatent> subjects_;
  int num_pairs_ = 0;
};

/// Natural dependence parameter vector (pi_1..pi_{K-1}, xi_1..xi_K) and back.
Eigen::VectorXd dependence_parameters(const MixtureCopulaSpec& spec);
MixtureCopulaSpec with_dependence_parameters(const MixtureCopulaSpec& base, const Eigen::VectorXd& eta);

struct CopulaFitConfig {
  EllipticalFamily::Kind family = EllipticalFamily::Kind::Gaussian;
  std::vector<StructureKind> structures{StructureKind::AR1, StructureKind::EX};
  /// Fixed Student-t degrees of freedom; when absent nu is profiled over nu_grid.
  std::optional<double> nu;
  std::vector<int> nu_grid = default_nu_grid();
  int starts = 5;
  /// Optimize in the boxed native coordinates (clamped) instead of the
  /// logit / log transformed ones.
  bool native_coordinates = false;
  double pi_min = 1e-4;
  double pi_max = 1.0 - 1e-4;
  double xi_min = 1e-3;
  double xi_max = 50.0;
  SimplexOptions simplex{4000, 1e-7, {0.5}};
  Stage1Options stage1;
  bool standard_errors = true;
  /// CLAIC / CLBIC; left NaN when the sensitivity matrix is singular.
  bool information_criteria = true;

  static std::vector<int> default_nu_grid();
  int num_components() const { return static_cast<int>(structures.size()); }
  void validate() const;
};

struct FitDiagnostics {
  bool stage1_converged = false;
  double stage1_gradient_norm = 0.0;
  bool stage2_converged = false;
  int stage2_iterations = 0;
  double stage2_simplex_size = 0.0;
  bool boundary = false;
  bool pseudo_inverse = false;
  /// (nu, best composite log-likelihood) for every profiled value.
  std::vector<std::pair<double, double>> nu_profile;

  bool converged() const { return stage1_converged && stage2_converged; }
};

struct FitResult {
  MarginalFit marginal;
  MixtureCopulaSpec copula;
  double comp_loglik = 0.0;
  double claic = 0.0;
  double clbic = 0.0;
  /// tr(J H^{-1}) effective parameter count used by CLAIC / CLBIC.
  double penalty = 0.0;
  int num_subjects = 0;

  /// Reporting order: pi_1..pi_{K-1}, beta..., psi (NegBinomial), xi_1..xi_K.
  std::vector<std::string> parameter_names;
  Eigen::VectorXd estimates;
  Eigen::VectorXd standard_errors;
  Eigen::MatrixXd covariance;
  FitDiagnostics diagnostics;
};

/// Internal (estimation-order) parameter vector: beta, psi, pi_1..pi_{K-1}, xi_1..xi_K.
Eigen::VectorXd full_parameters(const MarginalSpec& marginal, const MixtureCopulaSpec& copula);
std::pair<MarginalSpec, MixtureCopulaSpec> split_parameters(const MarginalSpec& marginal_template,
                                                            const MixtureCopulaSpec& copula_template,
                                                            const Eigen::VectorXd& theta);

/// Parameters in reporting order (pi, beta, psi, xi) with matching names.
Eigen::VectorXd reporting_parameters(const MarginalSpec& marginal, const MixtureCopulaSpec& copula);
std::vector<std::string> reporting_names(const MarginalSpec& marginal, const MixtureCopulaSpec& copula,
                                         const std::vector<std::string>& covariate_names = {});

/// Stage 2 only: maximizes the composite likelihood for fixed margins.
struct Stage2Result {
  MixtureCopulaSpec copula;
  double comp_loglik = 0.0;
  FitDiagnostics diagnostics;
};
Stage2Result fit_stage2(const UniformScores& scores, const CopulaFitConfig& config);

/// Full two-stage fit. Throws std::invalid_argument on invalid configuration or data.
FitResult fit_two_stage(const LongitudinalDataset& data, MarginalFamily family,
                        const CopulaFitConfig& config);

struct GodambeResult {
  Eigen::MatrixXd sensitivity;  // D
  Eigen::MatrixXd variability;  // M
  Eigen::MatrixXd covariance;   // D^{-1} M D^{-T}, estimation order
  Eigen::VectorXd standard_errors;
  bool pseudo_inverse = false;
};

/// Sandwich covariance of the two-stage estimator from per-subject estimating
/// functions g_i = (stage-1 score, stage-2 score). D by central differences
/// with step step_scale * 1e-5 * (1 + |p|).
GodambeResult godambe_covariance(const LongitudinalDataset& data, const FitResult& fit,
                                 double step_scale = 1.0);

struct InformationCriteria {
  double claic = 0.0;
  double clbic = 0.0;
  double penalty = 0.0;
};

/// CLAIC = -2 l_c + 2 tr(J H^{-1}), CLBIC = -2 l_c + log(m) tr(J H^{-1}), where
/// J and H are the variability and sensitivity of the pairwise composite
/// likelihood in all parameters at the fitted values.
InformationCriteria claic_clbic(const FitResult& fit, const LongitudinalDataset& data);

/// Penalty helper for given J and H (exposed for testing).
double composite_penalty(const Eigen::MatrixXd& variability, const Eigen::MatrixXd& sensitivity);

}  // namespace mixcop
