#include "mixcop/copula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mixcop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_unit(double u, const char* what) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw std::domain_error(std::string(what) + ": probability outside [0, 1]");
  }
}

}  // namespace

std::string to_string(StructureKind kind) { return kind == StructureKind::AR1 ? "AR1" : "EX"; }

StructureKind structure_kind_from_string(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  if (s == "AR1" || s == "AR(1)") return StructureKind::AR1;
  if (s == "EX" || s == "EXCHANGEABLE") return StructureKind::EX;
  throw std::invalid_argument("unknown correlation structure '" + name + "'");
}

void CorrelationStructure::validate() const {
  if (!(xi > 0.0) || !std::isfinite(xi)) {
    throw std::invalid_argument("correlation structure: xi must be positive and finite");
  }
}

double CorrelationStructure::correlation(double gap) const {
  return kind == StructureKind::AR1 ? std::exp(-xi * std::abs(gap)) : std::exp(-xi);
}

double CorrelationStructure::correlation_derivative(double gap) const {
  return kind == StructureKind::AR1 ? -std::abs(gap) * std::exp(-xi * std::abs(gap))
                                    : -std::exp(-xi);
}

CorrelationMatrix corr_matrix(const CorrelationStructure& structure, std::span<const double> times) {
  structure.validate();
  const auto d = static_cast<Eigen::Index>(times.size());
  if (d < 1) throw std::invalid_argument("corr_matrix: no times given");
  for (size_t j = 1; j < times.size(); ++j) {
    if (!(times[j] > times[j - 1])) {
      throw std::invalid_argument("corr_matrix: times must be strictly increasing");
    }
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = j + 1; k < d; ++k) {
      m(j, k) = m(k, j) = structure.correlation(times[k] - times[j]);
    }
  }
  return CorrelationMatrix(std::move(m));
}

void MixtureCopulaSpec::validate() const {
  if (components.empty()) throw std::invalid_argument("mixture copula: need at least one component");
  if (weights.size() != components.size()) {
    throw std::invalid_argument("mixture copula: one weight per component required");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("mixture copula: weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture copula: weights must sum to one");
  }
  for (const auto& c : components) c.validate();
  if (!family.is_gaussian() && !(family.nu > 0.0)) {
    throw std::invalid_argument("mixture copula: Student-t degrees of freedom must be positive");
  }
}

std::vector<double> MixtureCopulaSpec::pair_correlations(double t1, double t2) const {
  std::vector<double> rho;
  rho.reserve(components.size());
  for (const auto& c : components) rho.push_back(c.correlation(t2 - t1));
  return rho;
}

double latent_quantile(double u, const EllipticalFamily& family) {
  return family.is_gaussian() ? special::norm_quantile(u) : special::t_quantile(u, family.nu);
}

double latent_cdf(double z, const EllipticalFamily& family) {
  return family.is_gaussian() ? special::norm_cdf(z) : special::t_cdf(z, family.nu);
}

double latent_cdf2(double a, double b, const EllipticalFamily& family, double rho) {
  return family.is_gaussian() ? special::bvn_cdf(a, b, rho)
                              : special::bvt_cdf(a, b, rho, family.nu);
}

double latent_cdf2_drho(double a, double b, const EllipticalFamily& family, double rho) {
  return family.is_gaussian() ? special::bvn_pdf(a, b, rho)
                              : special::bvt_cdf_drho(a, b, rho, family.nu);
}

double biv_copula_cdf(double u1, double u2, const EllipticalFamily& family, double rho) {
  check_unit(u1, "biv_copula_cdf");
  check_unit(u2, "biv_copula_cdf");
  if (!(std::abs(rho) < 1.0)) throw std::domain_error("biv_copula_cdf: |rho| must be below 1");
  if (u1 == 0.0 || u2 == 0.0) return 0.0;
  if (u1 == 1.0) return u2;
  if (u2 == 1.0) return u1;
  return latent_cdf2(latent_quantile(u1, family), latent_quantile(u2, family), family, rho);
}

double biv_copula_cdf_closed(double u1, double u2, const EllipticalFamily& family, double rho) {
  if (rho == 1.0) {
    check_unit(u1, "biv_copula_cdf");
    check_unit(u2, "biv_copula_cdf");
    return std::min(u1, u2);
  }
  if (rho == -1.0) {
    check_unit(u1, "biv_copula_cdf");
    check_unit(u2, "biv_copula_cdf");
    return std::max(u1 + u2 - 1.0, 0.0);
  }
  return biv_copula_cdf(u1, u2, family, rho);
}

double mixture_cdf(double u1, double u2, const MixtureCopulaSpec& spec,
                   std::span<const double> pair_rho) {
  if (pair_rho.size() != spec.components.size()) {
    throw std::invalid_argument("mixture_cdf: one correlation per component required");
  }
  double total = 0.0;
  for (size_t l = 0; l < pair_rho.size(); ++l) {
    if (spec.weights[l] == 0.0) continue;
    total += spec.weights[l] * biv_copula_cdf(u1, u2, spec.family, pair_rho[l]);
  }
  return total;
}

double component_rectangle(int x1, int x2, const CountCdf& f1, const CountCdf& f2,
                           const EllipticalFamily& family, double rho) {
  const double a_hi = f1(x1), a_lo = f1(x1 - 1);
  const double b_hi = f2(x2), b_lo = f2(x2 - 1);
  return biv_copula_cdf_closed(a_hi, b_hi, family, rho) -
         biv_copula_cdf_closed(a_lo, b_hi, family, rho) -
         biv_copula_cdf_closed(a_hi, b_lo, family, rho) +
         biv_copula_cdf_closed(a_lo, b_lo, family, rho);
}

double pmf_rectangle(int x1, int x2, const CountCdf& f1, const CountCdf& f2,
                     const MixtureCopulaSpec& spec, std::span<const double> pair_rho) {
  if (pair_rho.size() != spec.components.size()) {
    throw std::invalid_argument("pmf_rectangle: one correlation per component required");
  }
  double total = 0.0;
  for (size_t l = 0; l < pair_rho.size(); ++l) {
    if (spec.weights[l] == 0.0) continue;
    total += spec.weights[l] * component_rectangle(x1, x2, f1, f2, spec.family, pair_rho[l]);
  }
  return std::max(total, 0.0);
}

double latent_rectangle(const LatentInterval& a, const LatentInterval& b,
                        const EllipticalFamily& family, double rho) {
  double h = latent_cdf2(a.upper, b.upper, family, rho);
  if (a.lower > -kInf) h -= latent_cdf2(a.lower, b.upper, family, rho);
  if (b.lower > -kInf) h -= latent_cdf2(a.upper, b.lower, family, rho);
  if (a.lower > -kInf && b.lower > -kInf) h += latent_cdf2(a.lower, b.lower, family, rho);
  return h;
}

double latent_rectangle_drho(const LatentInterval& a, const LatentInterval& b,
                             const EllipticalFamily& family, double rho) {
  double d = latent_cdf2_drho(a.upper, b.upper, family, rho);
  if (a.lower > -kInf) d -= latent_cdf2_drho(a.lower, b.upper, family, rho);
  if (b.lower > -kInf) d -= latent_cdf2_drho(a.upper, b.lower, family, rho);
  if (a.lower > -kInf && b.lower > -kInf) d += latent_cdf2_drho(a.lower, b.lower, family, rho);
  return d;
}

}  // namespace mixcop
