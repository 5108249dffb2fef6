#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixcop/copula.hpp"
#include "mixcop/estimation.hpp"
#include "mixcop/marginals.hpp"

namespace mixcop {

struct KsResult {
  double statistic = 0.0;
  double pvalue = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against U(0, 1) with the asymptotic
/// Kolmogorov p-value (Stephens' small-sample correction of the argument).
KsResult ks_uniform(std::span<const double> v);

/// Probability integral transform used before the latent quantile step.
/// Upper uses u = F(y); Mid uses F(y - 1) + f(y) / 2; Randomized draws
/// uniformly in [F(y - 1), F(y)] from a seeded stream.
enum class PitMode { Upper, Mid, Randomized };

struct TplotOptions {
  PitMode pit = PitMode::Upper;
  unsigned long long seed = 1;  // Randomized only
  double clamp = 1e-12;
};

struct TplotResult {
  std::vector<std::string> subject_ids;
  std::vector<double> v;
  std::vector<int> component_assignment;  // 1-based
  std::vector<std::vector<double>> posterior_weights;
  std::vector<std::pair<double, double>> qq_pairs;  // (theoretical, sample)
  double ks_statistic = 0.0;
  double ks_pvalue = 1.0;
  int excluded_subjects = 0;  // n_i = 1
};

/// Posterior component probabilities for one latent vector z observed at `times`.
std::vector<double> posterior_weights(std::span<const double> z, std::span<const double> times,
                                      const MixtureCopulaSpec& spec);

/// One-sample t statistic sqrt(n) mean / sd of a whitened vector.
double whitened_t_statistic(const Eigen::VectorXd& zstar);

/// Per-subject outputs are ordered by subject id (numeric ids numerically).
TplotResult tplot(const LongitudinalDataset& data, const MarginalSpec& marginal,
                  const MixtureCopulaSpec& copula, const TplotOptions& options = {});
TplotResult tplot(const LongitudinalDataset& data, const FitResult& fit,
                  const TplotOptions& options = {});

void write_qq_csv(std::ostream& out, const TplotResult& result);
/// Self-contained SVG scatter of the QQ pairs with the 45-degree line.
void write_qq_svg(std::ostream& out, const TplotResult& result, const std::string& title = "t-plot");

}  // namespace mixcop
