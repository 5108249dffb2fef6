#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mixcop {

/// Elliptical family of a copula component or latent distribution.
/// `nu` is only meaningful for Student-t.
struct EllipticalFamily {
  enum class Kind { Gaussian, StudentT };

  Kind kind = Kind::Gaussian;
  double nu = 0.0;

  static EllipticalFamily gaussian() { return {Kind::Gaussian, 0.0}; }
  static EllipticalFamily student_t(double nu);

  bool is_gaussian() const { return kind == Kind::Gaussian; }
  bool operator==(const EllipticalFamily&) const = default;
};

/// Symmetric positive-definite matrix with unit diagonal.
///
/// Construction validates symmetry (to 1e-12), the unit diagonal, off-diagonal
/// entries strictly inside (-1, 1) and positive definiteness via Cholesky.
/// Throws std::domain_error on any violation.
class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(Eigen::MatrixXd entries);

  static CorrelationMatrix identity(int dim);

  int dim() const { return static_cast<int>(entries_.rows()); }
  double operator()(int i, int j) const { return entries_(i, j); }
  const Eigen::MatrixXd& matrix() const { return entries_; }
  const Eigen::MatrixXd& cholesky_lower() const { return lower_; }
  double log_determinant() const { return log_det_; }

 private:
  Eigen::MatrixXd entries_;
  Eigen::MatrixXd lower_;
  double log_det_ = 0.0;
};

namespace special {

double log_gamma(double x);

/// log Gamma(a + b) - log Gamma(a), exact summation for small integer b.
double log_gamma_ratio(double a, double b);

double log_beta(double a, double b);

double digamma(double x);

/// digamma(a + n) - digamma(a) without cancellation for moderate integer n.
double digamma_difference(double a, double n);

/// Regularized lower / upper incomplete gamma P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

/// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; passing it
/// separately keeps precision when x is close to one. Returns {I, 1 - I}.
std::pair<double, double> ibeta(double a, double b, double x, double y);

double norm_pdf(double x);
double norm_cdf(double x);

/// Inverse of norm_cdf. p = 0 and p = 1 map to -inf / +inf; p outside
/// [0, 1] or NaN throws std::domain_error.
double norm_quantile(double p);

double t_pdf(double x, double nu);
double t_log_pdf(double x, double nu);
double t_cdf(double x, double nu);
double t_quantile(double p, double nu);

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.
/// Genz's double-precision implementation of the Drezner-Wesolowsky method.
double bvn_cdf(double h, double k, double rho);
double bvn_pdf(double h, double k, double rho);

/// P(X <= h, Y <= k) for the standard bivariate Student-t with correlation rho
/// and nu degrees of freedom. Integer nu up to 1000 uses the closed-form
/// Dunnett-Sobel recursion; anything else goes through bvt_cdf_quadrature.
double bvt_cdf(double h, double k, double rho, double nu);

/// Adaptive Gauss-Kronrod integration of the conditional-t representation
/// P(X <= h, Y <= k) = int_{-inf}^{h} t_nu(x) T_{nu+1}(...) dx.
double bvt_cdf_quadrature(double h, double k, double rho, double nu);
double bvt_pdf(double h, double k, double rho, double nu);

/// d/d rho of bvt_cdf. Unlike the normal case this is not the joint density:
/// the exponent is -nu/2 instead of -(nu+2)/2.
double bvt_cdf_drho(double h, double k, double rho, double nu);

/// Log-density of a d-variate Gaussian or Student-t with zero location and
/// correlation (= scale) matrix `sigma`.
double mv_elliptical_logpdf(std::span<const double> z, const CorrelationMatrix& sigma,
                            const EllipticalFamily& family);

/// Symmetric inverse square root via eigendecomposition, so that
/// A * sigma * A^T = I and A = A^T.
Eigen::MatrixXd inv_sqrt(const CorrelationMatrix& sigma);

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(int n);

}  // namespace special
}  // namespace mixcop
