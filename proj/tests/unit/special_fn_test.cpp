#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mixcop/special_fn.hpp"

namespace sp = mixcop::special;
using mixcop::CorrelationMatrix;
using mixcop::EllipticalFamily;

namespace {

constexpr double kPi = std::numbers::pi;

// Maclaurin series of erf in long double; converges fine for |x| <= 3.
long double erf_series(long double x) {
  long double term = x;
  long double sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    sum += term / (2 * n + 1);
  }
  return 2.0L / std::sqrt(std::numbers::pi_v<long double>) * sum;
}

double bisect(auto f, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// P(X <= h, Y <= k) by nested Gauss-Kronrod over the joint normal density.
double bvn_by_2d_quadrature(double h, double k, double rho) {
  using boost::math::quadrature::gauss_kronrod;
  const double s = std::sqrt(1.0 - rho * rho);
  auto inner = [&](double x) {
    // integrate the conditional normal over y in closed form would be 1-D;
    // stay fully 2-D here on purpose.
    auto fy = [&](double y) {
      const double q = (x * x - 2 * rho * x * y + y * y) / (s * s);
      return std::exp(-0.5 * q) / (2 * kPi * s);
    };
    return gauss_kronrod<double, 61>::integrate(fy, -12.0, k, 12, 1e-14);
  };
  return gauss_kronrod<double, 61>::integrate(inner, -12.0, h, 12, 1e-14);
}

// Conditional-t representation integrated with Boost (independent of the
// library's own quadrature path).
double bvt_by_conditional_integral(double h, double k, double rho, double nu) {
  using boost::math::quadrature::gauss_kronrod;
  boost::math::students_t tx(nu);
  boost::math::students_t ty(nu + 1.0);
  auto f = [&](double x) {
    const double scale = std::sqrt((1 - rho * rho) * (nu + x * x) / (nu + 1.0));
    return boost::math::pdf(tx, x) * boost::math::cdf(ty, (k - rho * x) / scale);
  };
  return gauss_kronrod<double, 61>::integrate(f, -std::numeric_limits<double>::infinity(), h, 15,
                                              1e-14);
}

}  // namespace

TEST(NormalCdf, FixedPoints) {
  EXPECT_EQ(sp::norm_cdf(0.0), 0.5);
  EXPECT_EQ(sp::norm_cdf(std::numeric_limits<double>::infinity()), 1.0);
  EXPECT_EQ(sp::norm_cdf(-std::numeric_limits<double>::infinity()), 0.0);
  EXPECT_NEAR(sp::norm_cdf(1.0), 0.841344746068542948585, 1e-15);
}

TEST(NormalCdf, MatchesErfSeries) {
  for (double x = -4.0; x <= 4.0; x += 0.125) {
    const long double ref = 0.5L * (1.0L + erf_series(x / std::numbers::sqrt2_v<long double>));
    EXPECT_NEAR(sp::norm_cdf(x), static_cast<double>(ref), 1e-12) << "x=" << x;
  }
}

TEST(NormalCdf, Monotone) {
  double prev = 0.0;
  for (double x = -40.0; x <= 40.0; x += 0.01) {
    const double v = sp::norm_cdf(x);
    EXPECT_GE(v, prev);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
}

TEST(NormalQuantile, SymmetryAndBisection) {
  EXPECT_EQ(sp::norm_quantile(0.5), 0.0);
  const double oracle = bisect([](double x) { return sp::norm_cdf(x) - 0.975; }, 0.0, 5.0);
  EXPECT_NEAR(sp::norm_quantile(0.975), oracle, 1e-12);
  EXPECT_NEAR(oracle, 1.959963984540054, 1e-12);
}

TEST(NormalQuantile, RoundTrip) {
  for (int i = 1; i <= 99; ++i) {
    const double p = i / 100.0;
    EXPECT_NEAR(sp::norm_cdf(sp::norm_quantile(p)), p, 1e-10);
  }
  for (double p : {1e-8, 1e-6, 1e-4, 1.0 - 1e-4, 1.0 - 1e-6, 1.0 - 1e-8}) {
    EXPECT_NEAR(sp::norm_cdf(sp::norm_quantile(p)), p, 1e-9 * std::min(1.0, p / 1e-8 + 1e-9));
  }
}

TEST(NormalQuantile, StrictlyIncreasing) {
  double prev = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < 10000; ++i) {
    const double q = sp::norm_quantile(i / 10000.0);
    EXPECT_GT(q, prev);
    prev = q;
  }
}

TEST(NormalQuantile, DomainConvention) {
  EXPECT_EQ(sp::norm_quantile(0.0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(sp::norm_quantile(1.0), std::numeric_limits<double>::infinity());
  EXPECT_THROW(sp::norm_quantile(-0.1), std::domain_error);
  EXPECT_THROW(sp::norm_quantile(1.1), std::domain_error);
  EXPECT_THROW(sp::norm_quantile(std::nan("")), std::domain_error);
}

TEST(StudentT, CdfAgainstIncompleteBetaOracle) {
  EXPECT_EQ(sp::t_cdf(0.0, 4.0), 0.5);
  // T_nu(x) = 1 - I_{nu/(nu+x^2)}(nu/2, 1/2) / 2 for x > 0.
  const double ref = 1.0 - 0.5 * boost::math::ibeta(2.0, 0.5, 4.0 / (4.0 + 4.0));
  EXPECT_NEAR(sp::t_cdf(2.0, 4.0), ref, 1e-14);
  EXPECT_NEAR(ref, 0.9419417382415922, 1e-14);
  for (double nu : {0.5, 1.0, 2.5, 3.0, 7.0, 30.0, 250.0}) {
    boost::math::students_t dist(nu);
    for (double x = -30.0; x <= 30.0; x += 0.37) {
      EXPECT_NEAR(sp::t_cdf(x, nu), boost::math::cdf(dist, x), 1e-13) << nu << " " << x;
    }
  }
}

TEST(StudentT, LargeDfApproachesNormal) {
  for (double x = -4.0; x <= 4.0; x += 0.25) {
    EXPECT_NEAR(sp::t_cdf(x, 1e6), sp::norm_cdf(x), 1e-5);
  }
}

TEST(StudentT, QuantileRoundTrip) {
  for (double nu : {0.7, 1.0, 2.0, 3.0, 4.0, 9.5, 30.0, 1e4}) {
    for (int i = 1; i <= 99; ++i) {
      const double p = i / 100.0;
      EXPECT_NEAR(sp::t_cdf(sp::t_quantile(p, nu), nu), p, 1e-10) << nu << " " << p;
    }
    for (double p : {1e-8, 1e-5, 1.0 - 1e-5, 1.0 - 1e-8}) {
      const double q = sp::t_quantile(p, nu);
      EXPECT_NEAR(sp::t_cdf(q, nu), p, 1e-9 * std::min(p, 1.0 - p) + 1e-16) << nu << " " << p;
    }
  }
  EXPECT_THROW(sp::t_quantile(1.5, 3.0), std::domain_error);
  EXPECT_THROW(sp::t_cdf(1.0, 0.0), std::domain_error);
}

TEST(IncompleteFunctions, AgainstBoost) {
  for (double a : {0.5, 1.0, 3.0, 17.5, 200.0}) {
    for (double x : {0.01, 0.5, 2.0, 10.0, 150.0, 400.0}) {
      EXPECT_NEAR(sp::gamma_q(a, x), boost::math::gamma_q(a, x), 1e-13);
      EXPECT_NEAR(sp::gamma_p(a, x), boost::math::gamma_p(a, x), 1e-13);
    }
  }
  for (double a : {0.5, 2.0, 40.0, 1e5}) {
    for (double b : {0.5, 1.0, 7.0, 300.0}) {
      for (double x : {1e-6, 0.1, 0.5, 0.9, 0.999999}) {
        const auto [lower, upper] = sp::ibeta(a, b, x, 1.0 - x);
        EXPECT_NEAR(lower, boost::math::ibeta(a, b, x), 1e-12) << a << " " << b << " " << x;
        EXPECT_NEAR(upper, boost::math::ibetac(a, b, x), 1e-12);
      }
    }
  }
  EXPECT_NEAR(sp::digamma(1.0), -0.5772156649015329, 1e-14);
  EXPECT_NEAR(sp::digamma(0.3), boost::math::digamma(0.3), 1e-13);
  EXPECT_NEAR(sp::digamma(123.4), boost::math::digamma(123.4), 1e-13);
}

TEST(Bvn, OrthantAndIndependence) {
  EXPECT_NEAR(sp::bvn_cdf(0.0, 0.0, 0.5), 1.0 / 3.0, 1e-15);
  for (double rho = -0.95; rho < 0.96; rho += 0.05) {
    EXPECT_NEAR(sp::bvn_cdf(0.0, 0.0, rho), 0.25 + std::asin(rho) / (2 * kPi), 1e-14);
  }
  for (double h : {-2.0, -0.3, 0.0, 1.7}) {
    for (double k : {-1.1, 0.4, 2.5}) {
      EXPECT_NEAR(sp::bvn_cdf(h, k, 0.0), sp::norm_cdf(h) * sp::norm_cdf(k), 1e-15);
    }
  }
}

TEST(Bvn, MatchesTwoDimensionalQuadrature) {
  const double oracle = bvn_by_2d_quadrature(1.0, -0.5, 0.3);
  EXPECT_NEAR(sp::bvn_cdf(1.0, -0.5, 0.3), oracle, 1e-10);
  for (double rho : {-0.97, -0.8, -0.4, 0.1, 0.5, 0.8, 0.93, 0.99}) {
    for (auto [h, k] : std::vector<std::pair<double, double>>{{-1.5, 0.3}, {0.8, 1.2}, {2.0, -2.0}, {-0.2, -0.7}}) {
      EXPECT_NEAR(sp::bvn_cdf(h, k, rho), bvn_by_2d_quadrature(h, k, rho), 1e-10)
          << rho << " " << h << " " << k;
    }
  }
}

TEST(Bvn, InfiniteLimitsAndDomain) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_NEAR(sp::bvn_cdf(inf, 0.4, 0.6), sp::norm_cdf(0.4), 1e-15);
  EXPECT_NEAR(sp::bvn_cdf(-0.3, inf, 0.6), sp::norm_cdf(-0.3), 1e-15);
  EXPECT_EQ(sp::bvn_cdf(-inf, 0.4, 0.6), 0.0);
  EXPECT_THROW(sp::bvn_cdf(0.0, 0.0, 1.0), std::domain_error);
  EXPECT_THROW(sp::bvn_cdf(0.0, 0.0, -1.2), std::domain_error);
}

TEST(Bvn, RectangleInequality) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pt(-3.0, 3.0);
  std::uniform_real_distribution<double> rr(-0.99, 0.99);
  for (int i = 0; i < 2000; ++i) {
    double h1 = pt(rng), h2 = pt(rng), k1 = pt(rng), k2 = pt(rng);
    if (h1 > h2) std::swap(h1, h2);
    if (k1 > k2) std::swap(k1, k2);
    const double r = rr(rng);
    const double vol = sp::bvn_cdf(h2, k2, r) - sp::bvn_cdf(h1, k2, r) - sp::bvn_cdf(h2, k1, r) +
                       sp::bvn_cdf(h1, k1, r);
    EXPECT_GE(vol, -1e-15);
  }
}

TEST(Bvn, MonotoneInRho) {
  for (double h : {-1.0, 0.5}) {
    double prev = 0.0;
    for (double rho = -0.99; rho <= 0.99; rho += 0.01) {
      const double v = sp::bvn_cdf(h, 0.2, rho);
      EXPECT_GE(v, prev - 1e-15);
      prev = v;
    }
  }
}

TEST(Bvt, OrthantIsDfFree) {
  for (double nu : {1.0, 2.0, 3.0, 4.0, 10.0, 2.5}) {
    for (double rho = -0.9; rho < 0.91; rho += 0.1) {
      EXPECT_NEAR(sp::bvt_cdf(0.0, 0.0, rho, nu), 0.25 + std::asin(rho) / (2 * kPi), 1e-12)
          << nu << " " << rho;
    }
  }
}

TEST(Bvt, MatchesConditionalIntegral) {
  const double oracle = bvt_by_conditional_integral(1.0, 0.5, 0.4, 4.0);
  EXPECT_NEAR(sp::bvt_cdf(1.0, 0.5, 0.4, 4.0), oracle, 1e-8);
  for (double nu : {1.0, 3.0, 4.0, 5.0, 12.0, 3.7}) {
    for (double rho : {-0.9, -0.3, 0.2, 0.75, 0.95}) {
      for (auto [h, k] : std::vector<std::pair<double, double>>{{-1.5, 0.3}, {0.8, 1.2}, {3.0, -2.0}, {-0.2, -0.7}}) {
        const double ref = bvt_by_conditional_integral(h, k, rho, nu);
        EXPECT_NEAR(sp::bvt_cdf(h, k, rho, nu), ref, 1e-8) << nu << " " << rho << " " << h << " " << k;
        EXPECT_NEAR(sp::bvt_cdf_quadrature(h, k, rho, nu), ref, 1e-8);
      }
    }
  }
}

TEST(Bvt, LargeDfApproachesBvn) {
  for (double rho : {-0.6, 0.0, 0.45, 0.9}) {
    for (auto [h, k] : std::vector<std::pair<double, double>>{{-1.0, 0.3}, {0.8, 1.2}, {1.5, -0.5}}) {
      EXPECT_NEAR(sp::bvt_cdf(h, k, rho, 1e6), sp::bvn_cdf(h, k, rho), 1e-4);
    }
  }
}

TEST(Bvt, RhoDerivativeMatchesFiniteDifference) {
  for (double nu : {3.0, 8.0, 4.5}) {
    for (double rho : {-0.6, 0.35, 0.9}) {
      const double h = 0.7, k = -0.4, eps = 1e-5;
      const double fd =
          (sp::bvt_cdf(h, k, rho + eps, nu) - sp::bvt_cdf(h, k, rho - eps, nu)) / (2 * eps);
      EXPECT_NEAR(fd, sp::bvt_cdf_drho(h, k, rho, nu), 1e-8) << nu << " " << rho;
    }
  }
  EXPECT_GT(std::abs(sp::bvt_cdf_drho(0.7, -0.4, 0.35, 4.0) - sp::bvt_pdf(0.7, -0.4, 0.35, 4.0)), 1e-3);
  const double fd = (sp::bvn_cdf(0.7, -0.4, 0.35 + 1e-6) - sp::bvn_cdf(0.7, -0.4, 0.35 - 1e-6)) / 2e-6;
  EXPECT_NEAR(fd, sp::bvn_pdf(0.7, -0.4, 0.35), 1e-8);
}

TEST(EllipticalLogpdf, StandardCases) {
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_NEAR(sp::mv_elliptical_logpdf(zero, CorrelationMatrix::identity(2), EllipticalFamily::gaussian()),
              -std::log(2 * kPi), 1e-14);

  const std::vector<double> z{0.3, -1.2, 2.0};
  const auto eye = CorrelationMatrix::identity(3);
  double sum = 0.0;
  for (double v : z) sum += std::log(sp::norm_pdf(v));
  EXPECT_NEAR(sp::mv_elliptical_logpdf(z, eye, EllipticalFamily::gaussian()), sum, 1e-13);

  // Multivariate t at identity scale: direct product-form density formula.
  const double nu = 5.0;
  const double q = 0.09 + 1.44 + 4.0;
  const double ref = std::lgamma((nu + 3) / 2) - std::lgamma(nu / 2) - 1.5 * std::log(nu * kPi) -
                     (nu + 3) / 2 * std::log(1 + q / nu);
  EXPECT_NEAR(sp::mv_elliptical_logpdf(z, eye, EllipticalFamily::student_t(nu)), ref, 1e-13);
}

TEST(EllipticalLogpdf, Ar1DenseOracle) {
  const double r = std::exp(-0.3);
  Eigen::Matrix3d m;
  m << 1, r, r * r, r, 1, r, r * r, r, 1;
  const CorrelationMatrix sigma(m);
  const std::vector<double> z{0.5, -0.25, 1.0};
  const Eigen::Vector3d zv(z[0], z[1], z[2]);
  const double ref = -1.5 * std::log(2 * kPi) - 0.5 * std::log(m.determinant()) -
                     0.5 * zv.dot(m.inverse() * zv);
  EXPECT_NEAR(sp::mv_elliptical_logpdf(z, sigma, EllipticalFamily::gaussian()), ref, 1e-12);
  EXPECT_THROW(sp::mv_elliptical_logpdf(std::vector<double>{1.0, 2.0}, sigma, EllipticalFamily::gaussian()),
               std::invalid_argument);
}

TEST(CorrelationMatrixType, RejectsInvalid) {
  Eigen::Matrix2d bad_diag;
  bad_diag << 1.0, 0.2, 0.2, 0.9;
  EXPECT_THROW(CorrelationMatrix{bad_diag}, std::domain_error);
  Eigen::Matrix2d asym;
  asym << 1.0, 0.2, 0.3, 1.0;
  EXPECT_THROW(CorrelationMatrix{asym}, std::domain_error);
  Eigen::Matrix3d not_pd;
  not_pd << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
  EXPECT_THROW(CorrelationMatrix{not_pd}, std::domain_error);
}

TEST(InvSqrt, Reconstruction) {
  const auto eye = CorrelationMatrix::identity(4);
  EXPECT_TRUE(sp::inv_sqrt(eye).isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-14));

  Eigen::Matrix2d ex;
  ex << 1.0, 0.5, 0.5, 1.0;
  const Eigen::MatrixXd a = sp::inv_sqrt(CorrelationMatrix(ex));
  EXPECT_LT((a * ex * a.transpose() - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-15);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd g(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) g(i, j) = n01(rng);
    Eigen::MatrixXd s = g * g.transpose() + 0.5 * Eigen::MatrixXd::Identity(6, 6);
    const Eigen::VectorXd d = s.diagonal().array().rsqrt();
    s = d.asDiagonal() * s * d.asDiagonal();
    for (int i = 0; i < 6; ++i) s(i, i) = 1.0;
    s = 0.5 * (s + s.transpose()).eval();
    const CorrelationMatrix sigma(s);
    const Eigen::MatrixXd w = sp::inv_sqrt(sigma);
    EXPECT_LT((w * s * w.transpose() - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const auto rule = sp::gauss_legendre(64);
  double s0 = 0.0, s10 = 0.0;
  for (size_t i = 0; i < rule.nodes.size(); ++i) {
    s0 += rule.weights[i];
    s10 += rule.weights[i] * std::pow(rule.nodes[i], 10);
  }
  EXPECT_NEAR(s0, 2.0, 1e-14);
  EXPECT_NEAR(s10, 2.0 / 11.0, 1e-14);
}
