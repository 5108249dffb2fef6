#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixcop/copula.hpp"
#include "mixcop/marginals.hpp"

namespace mixcop {

struct FitResult;

enum class ConcordanceMeasure { KendallTau, SpearmanRho };

std::string to_string(ConcordanceMeasure measure);
ConcordanceMeasure concordance_measure_from_string(const std::string& name);

/// Count distribution tabulated up to a truncation bound: the smallest y with
/// cdf(y) >= 1 - tail. Mass above the bound is ignored (at most `tail`).
class DiscreteMargin {
 public:
  static constexpr double kDefaultTail = 1e-10;

  static DiscreteMargin from_distribution(const CountDistribution& dist, double tail = kDefaultTail);
  static DiscreteMargin bernoulli(double p);
  /// Arbitrary pmf over 0..size-1; must be nonnegative and sum to one within 1e-9.
  static DiscreteMargin from_pmf(std::vector<double> pmf);

  int bound() const { return static_cast<int>(pmf_.size()) - 1; }
  double pmf(int y) const;
  /// Tabulated cdf; 0 below the support and 1 above the bound.
  double cdf(int y) const;
  double sum_squared_pmf() const;

 private:
  std::vector<double> pmf_;
  std::vector<double> cdf_;
};

struct DiscreteMarginPair {
  DiscreteMargin first;
  DiscreteMargin second;
};

/// Kendall's tau of the mixture copula itself (continuous margins). Gaussian
/// cross terms use the arcsin closed form; Student-t cross terms average it
/// over the Beta(nu/2, nu/2) mixing ratio.
double tau_continuous(const MixtureCopulaSpec& spec, std::span<const double> pair_rho);

/// Spearman's rho of the mixture copula. Gaussian components use the closed
/// form; Student-t components integrate C over a 64 x 64 Gauss-Legendre grid.
double rho_continuous(const MixtureCopulaSpec& spec, std::span<const double> pair_rho);

/// Spearman's rho of one component by quadrature, exposed for testing.
double rho_component_quadrature(const EllipticalFamily& family, double rho);

/// Kendall's tau (P(concordant) - P(discordant)) for discrete margins.
double tau_discrete(const DiscreteMarginPair& margins, const MixtureCopulaSpec& spec,
                    std::span<const double> pair_rho);

/// Component term tau*(C_l) and cross term Q*_lm of the discrete tau.
double tau_discrete_component(const DiscreteMarginPair& margins, const EllipticalFamily& family,
                              double rho);
double tau_discrete_cross(const DiscreteMarginPair& margins, const EllipticalFamily& family,
                          double rho_l, double rho_m);

/// Spearman's rho for discrete margins: sum_l pi_l rho*(C_l).
double rho_discrete(const DiscreteMarginPair& margins, const MixtureCopulaSpec& spec,
                    std::span<const double> pair_rho);
double rho_discrete_component(const DiscreteMarginPair& margins, const EllipticalFamily& family,
                              double rho);

struct TailDependence {
  double lower = 0.0;
  double upper = 0.0;
};

/// Zero for Gaussian mixtures. For Student-t mixtures
/// lambda = 2 sum_l pi_l T_{nu+1}(-sqrt((nu+1)(1-rho_l)/(1+rho_l))).
TailDependence tail_dependence(const MixtureCopulaSpec& spec, std::span<const double> pair_rho);

struct ConcordanceMatrix {
  ConcordanceMeasure measure = ConcordanceMeasure::KendallTau;
  std::vector<double> visit_times;
  Eigen::MatrixXd entries;

  int dim() const { return static_cast<int>(entries.rows()); }
};

/// Model-implied matrix over the distinct visit times of `data`. Entry (j, k)
/// averages the discrete measure over subjects observed at both times, each
/// with its own fitted margins.
ConcordanceMatrix model_concordance_matrix(const LongitudinalDataset& data,
                                           const MarginalSpec& marginal,
                                           const MixtureCopulaSpec& copula,
                                           ConcordanceMeasure measure);
ConcordanceMatrix model_concordance_matrix(const FitResult& fit, const LongitudinalDataset& data,
                                           ConcordanceMeasure measure);

/// Sample Kendall tau-a or midrank Spearman rho over subjects observed at both
/// visits. With `residual_spec`, statistics use Pearson residuals
/// (y - mu) / sqrt(Var) instead of raw counts.
ConcordanceMatrix empirical_concordance_matrix(const LongitudinalDataset& data,
                                               ConcordanceMeasure measure,
                                               const MarginalSpec* residual_spec = nullptr);

double sample_kendall_tau(std::span<const double> a, std::span<const double> b);
double sample_spearman_rho(std::span<const double> a, std::span<const double> b);

/// Margin used by the curve generator: a count distribution, or "continuous"
/// for the copula-level measures.
struct CurveMargin {
  enum class Kind { Continuous, Poisson, Bernoulli, NegBinomial };
  Kind kind = Kind::Continuous;
  double param = 0.0;   // mean for Poisson / NegBinomial, p for Bernoulli
  double psi = 0.0;     // NegBinomial only

  std::string label() const;
};

struct CurveOptions {
  std::vector<ConcordanceMeasure> measures{ConcordanceMeasure::KendallTau,
                                           ConcordanceMeasure::SpearmanRho};
  std::vector<EllipticalFamily> families{EllipticalFamily::gaussian()};
  std::vector<double> first_weights{0.25, 0.5, 0.75};
  std::vector<CurveMargin> margins{CurveMargin{}};
  int grid_points = 41;
};

struct CurvePoint {
  ConcordanceMeasure measure;
  EllipticalFamily family;
  double weight;
  std::string margin;
  double rho2;
  double value;
};

/// Two-component curves with the first component at independence and rho2
/// swept over an equispaced grid on [-1, 1].
std::vector<CurvePoint> dependence_curves(const CurveOptions& options);
void write_curves_csv(std::ostream& out, const std::vector<CurvePoint>& points);

std::string family_label(const EllipticalFamily& family);

}  // namespace mixcop
