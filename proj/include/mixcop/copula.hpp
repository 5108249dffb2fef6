#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mixcop/special_fn.hpp"

namespace mixcop {

enum class StructureKind { AR1, EX };

std::string to_string(StructureKind kind);
StructureKind structure_kind_from_string(const std::string& name);

/// AR1: rho_jk = exp(-xi |t_j - t_k|). EX: rho = exp(-xi) for every pair,
/// so exchangeable correlation is restricted to (0, 1).
struct CorrelationStructure {
  StructureKind kind = StructureKind::AR1;
  double xi = 1.0;

  void validate() const;
  double correlation(double gap) const;
  /// d rho / d xi at the given time gap.
  double correlation_derivative(double gap) const;
};

/// Throws std::invalid_argument for xi <= 0 or non-increasing times.
CorrelationMatrix corr_matrix(const CorrelationStructure& structure, std::span<const double> times);

/// K-component mixture of elliptical copulas from one family, with a shared
/// nu for Student-t.
struct MixtureCopulaSpec {
  EllipticalFamily family = EllipticalFamily::gaussian();
  std::vector<CorrelationStructure> components;
  std::vector<double> weights;

  int num_components() const { return static_cast<int>(components.size()); }
  /// Weights nonnegative and summing to one within 1e-9; throws std::invalid_argument.
  void validate() const;
  /// Per-component correlations for a pair of visits at times t1, t2.
  std::vector<double> pair_correlations(double t1, double t2) const;
};

/// Bivariate elliptical copula C(u1, u2; rho). Requires |rho| < 1.
double biv_copula_cdf(double u1, double u2, const EllipticalFamily& family, double rho);

/// As biv_copula_cdf, but also accepts rho = +-1 (upper / lower Frechet bound).
double biv_copula_cdf_closed(double u1, double u2, const EllipticalFamily& family, double rho);

/// sum_l pi_l C_l(u1, u2; rho_l).
double mixture_cdf(double u1, double u2, const MixtureCopulaSpec& spec,
                   std::span<const double> pair_rho);

using CountCdf = std::function<double(int)>;

/// Copula mass of the rectangle [F1(x1-1), F1(x1)] x [F2(x2-1), F2(x2)] for a
/// single component. May be slightly negative from rounding; not clamped.
double component_rectangle(int x1, int x2, const CountCdf& f1, const CountCdf& f2,
                           const EllipticalFamily& family, double rho);

/// Joint pmf P(X1 = x1, X2 = x2) under the mixture copula, clamped at zero.
double pmf_rectangle(int x1, int x2, const CountCdf& f1, const CountCdf& f2,
                     const MixtureCopulaSpec& spec, std::span<const double> pair_rho);

/// Univariate quantile H^{-1}(u) of the family's latent margin.
double latent_quantile(double u, const EllipticalFamily& family);

/// Univariate latent cdf H(z).
double latent_cdf(double z, const EllipticalFamily& family);

/// Joint latent cdf P(Z1 <= a, Z2 <= b); accepts infinite limits.
double latent_cdf2(double a, double b, const EllipticalFamily& family, double rho);

/// d latent_cdf2 / d rho.
double latent_cdf2_drho(double a, double b, const EllipticalFamily& family, double rho);

/// Latent interval (H^{-1}(u-), H^{-1}(u)] of one observed count.
struct LatentInterval {
  double lower;
  double upper;
};

/// Rectangle mass on the latent scale: the copula rectangle with the
/// quantile transforms already applied.
double latent_rectangle(const LatentInterval& a, const LatentInterval& b,
                        const EllipticalFamily& family, double rho);

/// d latent_rectangle / d rho.
double latent_rectangle_drho(const LatentInterval& a, const LatentInterval& b,
                             const EllipticalFamily& family, double rho);

}  // namespace mixcop
