#include "mixcop/special_fn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mixcop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

EllipticalFamily EllipticalFamily::student_t(double nu) {
  if (!(nu > 0.0)) {
    throw std::domain_error("Student-t degrees of freedom must be positive");
  }
  return {Kind::StudentT, nu};
}

CorrelationMatrix::CorrelationMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  const auto n = entries_.rows();
  if (n < 1 || entries_.cols() != n) {
    throw std::domain_error("correlation matrix must be square with dim >= 1");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (entries_(i, i) != 1.0) {
      throw std::domain_error("correlation matrix diagonal must be exactly 1");
    }
    for (Eigen::Index j = 0; j < i; ++j) {
      const double a = entries_(i, j);
      if (!std::isfinite(a) || std::abs(a - entries_(j, i)) > 1e-12) {
        throw std::domain_error("correlation matrix must be symmetric");
      }
      if (!(std::abs(a) < 1.0)) {
        throw std::domain_error("correlation matrix off-diagonal entries must lie in (-1, 1)");
      }
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(entries_);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("correlation matrix is not positive definite");
  }
  lower_ = llt.matrixL();
  log_det_ = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = lower_(i, i);
    if (!(d > 0.0)) {
      throw std::domain_error("correlation matrix is not positive definite");
    }
    log_det_ += 2.0 * std::log(d);
  }
}

CorrelationMatrix CorrelationMatrix::identity(int dim) {
  return CorrelationMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

namespace special {

double log_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

double log_gamma_ratio(double a, double b) {
  if (b >= 0.0 && b <= 64.0 && b == std::floor(b)) {
    double s = 0.0;
    for (int i = 0; i < static_cast<int>(b); ++i) {
      s += std::log(a + i);
    }
    return s;
  }
  if (a >= 10.0 && a + b >= 10.0) {
    // Stirling difference; avoids cancelling two huge lgamma values.
    const auto corr = [](double x) {
      const double r = 1.0 / (x * x);
      return (1.0 / 12.0 - r * (1.0 / 360.0 - r * (1.0 / 1260.0 - r * (1.0 / 1680.0)))) / x;
    };
    return (a - 0.5) * std::log1p(b / a) + b * std::log(a + b) - b + corr(a + b) - corr(a);
  }
  return log_gamma(a + b) - log_gamma(a);
}

double log_beta(double a, double b) {
  if (a < b) std::swap(a, b);
  // a >= b: the ratio helper is exact when b is a small integer.
  return log_gamma(b) - log_gamma_ratio(a, b);
}

double digamma(double x) {
  if (x <= 0.0 && x == std::floor(x)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double result = 0.0;
  if (x < 0.0) {
    // reflection
    result -= kPi / std::tan(kPi * x);
    x = 1.0 - x;
  }
  while (x < 12.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return result;
}

double digamma_difference(double a, double n) {
  if (n >= 0.0 && n <= 256.0 && n == std::floor(n)) {
    double s = 0.0;
    for (int i = 0; i < static_cast<int>(n); ++i) s += 1.0 / (a + i);
    return s;
  }
  return digamma(a + n) - digamma(a);
}

namespace {

constexpr int kMaxSeriesIter = 100000;
constexpr double kSeriesEps = 1e-16;
constexpr double kTiny = 1e-300;

double gamma_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < kMaxSeriesIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kSeriesEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
}

double gamma_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxSeriesIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kSeriesEps) break;
  }
  return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m < kMaxSeriesIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kSeriesEps) break;
  }
  return h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("gamma_p: invalid arguments");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("gamma_q: invalid arguments");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

std::pair<double, double> ibeta(double a, double b, double x, double y) {
  if (!(a > 0.0) || !(b > 0.0) || x < 0.0 || y < 0.0) {
    throw std::domain_error("ibeta: invalid arguments");
  }
  if (x == 0.0) return {0.0, 1.0};
  if (y == 0.0) return {1.0, 0.0};
  const double log_x = x < 0.5 ? std::log(x) : std::log1p(-y);
  const double log_y = y < 0.5 ? std::log(y) : std::log1p(-x);
  const double front = std::exp(a * log_x + b * log_y - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    const double lower = front * beta_continued_fraction(a, b, x) / a;
    return {lower, 1.0 - lower};
  }
  const double upper = front * beta_continued_fraction(b, a, y) / b;
  return {1.0 - upper, upper};
}

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(kTwoPi);
}

double norm_cdf(double x) {
  if (std::isnan(x)) return x;
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double norm_quantile(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0) {
    throw std::domain_error("norm_quantile: p must lie in [0, 1], got " + std::to_string(p));
  }
  if (p == 0.0) return -kInf;
  if (p == 1.0) return kInf;

  // Wichura (1988), algorithm AS 241 (PPND16).
  const double q = p - 0.5;
  double x = 0.0;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    x = q *
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
              6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
            1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
  } else {
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    if (r <= 5.0) {
      r -= 1.6;
      x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
              3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
            4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
            2.05319162663775882187e+0) * r + 1.0);
    } else {
      r -= 5.0;
      x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
            5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
    }
    if (q < 0.0) x = -x;
  }

  // One Newton step on the tail that is computed without cancellation.
  if (std::abs(x) < 37.0) {
    const double dens = norm_pdf(x);
    if (dens > 0.0) {
      const double err = x < 0.0 ? norm_cdf(x) - p : (1.0 - p) - norm_cdf(-x);
      x -= err / dens;
    }
  }
  return x;
}

double t_log_pdf(double x, double nu) {
  return log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) - 0.5 * std::log(nu * kPi) -
         0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

double t_pdf(double x, double nu) {
  if (std::isinf(x)) return 0.0;
  return std::exp(t_log_pdf(x, nu));
}

double t_cdf(double x, double nu) {
  if (!(nu > 0.0)) throw std::domain_error("t_cdf: degrees of freedom must be positive");
  if (std::isnan(x)) return x;
  if (x == -kInf) return 0.0;
  if (x == kInf) return 1.0;
  if (x == 0.0) return 0.5;
  const double x2 = x * x;
  double tail = 0.0;  // P(T > |x|)
  if (nu < x2) {
    const double z = nu / (nu + x2);
    tail = 0.5 * ibeta(0.5 * nu, 0.5, z, x2 / (nu + x2)).first;
  } else {
    const double z = x2 / (nu + x2);
    tail = 0.5 * ibeta(0.5, 0.5 * nu, z, nu / (nu + x2)).second;
  }
  return x > 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double nu) {
  if (!(nu > 0.0)) throw std::domain_error("t_quantile: degrees of freedom must be positive");
  if (std::isnan(p) || p < 0.0 || p > 1.0) {
    throw std::domain_error("t_quantile: p must lie in [0, 1], got " + std::to_string(p));
  }
  if (p == 0.0) return -kInf;
  if (p == 1.0) return kInf;
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -t_quantile(1.0 - p, nu);

  if (nu == 1.0) return std::tan(kPi * (p - 0.5));
  if (nu == 2.0) return (2.0 * p - 1.0) / std::sqrt(2.0 * p * (1.0 - p));

  // Starting point: Cornish-Fisher expansion or the power-law tail, whichever
  // lies further out, then bracketed Newton iterations on the cdf.
  const double z = norm_quantile(p);
  const double z2 = z * z;
  double guess = z + (z2 + 1.0) * z / (4.0 * nu) +
                 ((5.0 * z2 + 16.0) * z2 + 3.0) * z / (96.0 * nu * nu);
  const double log_c = log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) - 0.5 * std::log(nu * kPi) +
                       0.5 * (nu - 1.0) * std::log(nu) - std::log(nu);
  const double tail_guess = -std::exp((log_c - std::log(p)) / nu);
  if (std::isfinite(tail_guess) && tail_guess < guess) guess = tail_guess;
  if (!(guess < 0.0)) guess = -1e-3;

  double hi = 0.0;
  double lo = guess;
  while (t_cdf(lo, nu) > p) {
    hi = lo;
    lo *= 2.0;
    if (!std::isfinite(lo)) return -kInf;
  }
  double x = std::clamp(guess, lo, hi);
  for (int iter = 0; iter < 300; ++iter) {
    const double f = t_cdf(x, nu) - p;
    if (f == 0.0) return x;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double dens = t_pdf(x, nu);
    double next = dens > 0.0 ? x - f / dens : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

namespace {

struct GenzRule {
  std::array<double, 10> x{};
  std::array<double, 10> w{};
  int n = 0;
};

constexpr GenzRule kRule6{{0.9324695142031522, 0.6612093864662647, 0.2386191860831970},
                          {0.1713244923791705, 0.3607615730481384, 0.4679139345726904},
                          3};
constexpr GenzRule kRule12{{0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                            0.5873179542866171, 0.3678314989981802, 0.1252334085114692},
                           {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                            0.2031674267230659, 0.2334925365383547, 0.2491470458134029},
                           6};
constexpr GenzRule kRule20{{0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                            0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                            0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                            0.07652652113349733},
                           {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                            0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                            0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                            0.1527533871307259},
                           10};

// P(X > dh, Y > dk), Genz (2004) BVNU.
double bvn_upper(double dh, double dk, double r) {
  if (dh == kInf || dk == kInf) return 0.0;
  if (dh == -kInf) return dk == -kInf ? 1.0 : norm_cdf(-dk);
  if (dk == -kInf) return norm_cdf(-dh);

  const double ar = std::abs(r);
  const GenzRule& rule = ar < 0.3 ? kRule6 : (ar < 0.75 ? kRule12 : kRule20);
  double h = dh;
  double k = dk;
  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(r);
    for (int i = 0; i < rule.n; ++i) {
      for (const double sign : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sign * rule.x[i]));
        bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / kTwoPi + norm_cdf(-h) * norm_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (ar < 1.0) {
      const double as = 1.0 - r * r;
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 80.0;
      double asr = -0.5 * (bs / as + hk);
      if (asr > -100.0) {
        bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      }
      if (hk > -100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(kTwoPi) * norm_cdf(-b / a);
        bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      a *= 0.5;
      double sum = 0.0;
      for (int i = 0; i < rule.n; ++i) {
        for (const double sign : {-1.0, 1.0}) {
          const double ax = a * (1.0 + sign * rule.x[i]);
          const double xs = ax * ax;
          asr = -0.5 * (bs / xs + hk);
          if (asr > -100.0) {
            const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
            const double rs = std::sqrt(1.0 - xs);
            const double ep = std::exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
            sum += rule.w[i] * std::exp(asr) * (sp - ep);
          }
        }
      }
      bvn = (a * sum - bvn) / kTwoPi;
    }
    if (r > 0.0) {
      bvn += norm_cdf(-std::max(h, k));
    } else if (h >= k) {
      bvn = -bvn;
    } else {
      const double L = h < 0.0 ? norm_cdf(k) - norm_cdf(h) : norm_cdf(-h) - norm_cdf(-k);
      bvn = L - bvn;
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

void check_rho(double rho) {
  if (!(std::abs(rho) < 1.0)) {
    throw std::domain_error("bivariate cdf: correlation must lie in (-1, 1)");
  }
}

// Dunnett-Sobel closed form for integer degrees of freedom (Genz's BVTL).
double bvt_integer(int nu, double dh, double dk, double r) {
  const double snu = std::sqrt(static_cast<double>(nu));
  const double ors = 1.0 - r * r;
  const double hrk = dh - r * dk;
  const double krh = dk - r * dh;
  double xnhk = 0.0;
  double xnkh = 0.0;
  if (std::abs(hrk) + ors > 0.0) {
    xnhk = hrk * hrk / (hrk * hrk + ors * (nu + dk * dk));
    xnkh = krh * krh / (krh * krh + ors * (nu + dh * dh));
  }
  const double hs = hrk < 0.0 ? -1.0 : 1.0;
  const double ks = krh < 0.0 ? -1.0 : 1.0;
  double bvt = 0.0;
  if (nu % 2 == 0) {
    bvt = std::atan2(std::sqrt(ors), -r) / kTwoPi;
    double gmph = dh / std::sqrt(16.0 * (nu + dh * dh));
    double gmpk = dk / std::sqrt(16.0 * (nu + dk * dk));
    double btnckh = 2.0 * std::atan2(std::sqrt(xnkh), std::sqrt(1.0 - xnkh)) / kPi;
    double btpdkh = 2.0 * std::sqrt(xnkh * (1.0 - xnkh)) / kPi;
    double btnchk = 2.0 * std::atan2(std::sqrt(xnhk), std::sqrt(1.0 - xnhk)) / kPi;
    double btpdhk = 2.0 * std::sqrt(xnhk * (1.0 - xnhk)) / kPi;
    for (int j = 1; j <= nu / 2; ++j) {
      bvt += gmph * (1.0 + ks * btnckh);
      bvt += gmpk * (1.0 + hs * btnchk);
      btnckh += btpdkh;
      btpdkh = 2.0 * j * btpdkh * (1.0 - xnkh) / (2.0 * j + 1.0);
      btnchk += btpdhk;
      btpdhk = 2.0 * j * btpdhk * (1.0 - xnhk) / (2.0 * j + 1.0);
      gmph = gmph * (2.0 * j - 1.0) / (2.0 * j * (1.0 + dh * dh / nu));
      gmpk = gmpk * (2.0 * j - 1.0) / (2.0 * j * (1.0 + dk * dk / nu));
    }
  } else {
    const double qhrk = std::sqrt(dh * dh + dk * dk - 2.0 * r * dh * dk + nu * ors);
    const double hkrn = dh * dk + r * nu;
    const double hkn = dh * dk - nu;
    const double hpk = dh + dk;
    bvt = std::atan2(-snu * (hkn * qhrk + hpk * hkrn), hkn * hkrn - nu * hpk * qhrk) / kTwoPi;
    if (bvt < -1e-15) bvt += 1.0;
    double gmph = dh / (kTwoPi * snu * (1.0 + dh * dh / nu));
    double gmpk = dk / (kTwoPi * snu * (1.0 + dk * dk / nu));
    double btnckh = std::sqrt(xnkh);
    double btpdkh = btnckh;
    double btnchk = std::sqrt(xnhk);
    double btpdhk = btnchk;
    for (int j = 1; j <= (nu - 1) / 2; ++j) {
      bvt += gmph * (1.0 + ks * btnckh);
      bvt += gmpk * (1.0 + hs * btnchk);
      btpdkh = (2.0 * j - 1.0) * btpdkh * (1.0 - xnkh) / (2.0 * j);
      btnckh += btpdkh;
      btpdhk = (2.0 * j - 1.0) * btpdhk * (1.0 - xnhk) / (2.0 * j);
      btnchk += btpdhk;
      gmph = 2.0 * j * gmph / ((2.0 * j + 1.0) * (1.0 + dh * dh / nu));
      gmpk = 2.0 * j * gmpk / ((2.0 * j + 1.0) * (1.0 + dk * dk / nu));
    }
  }
  return std::clamp(bvt, 0.0, 1.0);
}

// Gauss-Kronrod 7/15 nodes and weights.
constexpr std::array<double, 8> kXgk{0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                     0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                     0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                     0.207784955007898467600689403773245, 0.0};
constexpr std::array<double, 8> kWgk{0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                     0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                     0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                     0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg{0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename F>
std::pair<double, double> gauss_kronrod15(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  return {kronrod * half, std::abs((kronrod - gauss) * half)};
}

template <typename F>
double adaptive_gk(const F& f, double a, double b, double tol, int depth) {
  const auto [value, err] = gauss_kronrod15(f, a, b);
  if (err <= std::max(tol, 1e-16) || depth >= 40) return value;
  const double mid = 0.5 * (a + b);
  return adaptive_gk(f, a, mid, 0.5 * tol, depth + 1) + adaptive_gk(f, mid, b, 0.5 * tol, depth + 1);
}

}  // namespace

double bvn_cdf(double h, double k, double rho) {
  check_rho(rho);
  if (std::isnan(h) || std::isnan(k)) return std::numeric_limits<double>::quiet_NaN();
  return bvn_upper(-h, -k, rho);
}

double bvn_pdf(double h, double k, double rho) {
  check_rho(rho);
  if (std::isinf(h) || std::isinf(k)) return 0.0;
  const double ors = 1.0 - rho * rho;
  const double q = (h * h - 2.0 * rho * h * k + k * k) / ors;
  return std::exp(-0.5 * q) / (kTwoPi * std::sqrt(ors));
}

double bvt_cdf_quadrature(double h, double k, double rho, double nu) {
  check_rho(rho);
  if (!(nu > 0.0)) throw std::domain_error("bvt_cdf: degrees of freedom must be positive");
  if (h == -kInf || k == -kInf) return 0.0;
  if (h == kInf) return t_cdf(k, nu);
  if (k == kInf) return t_cdf(h, nu);

  const double ors = 1.0 - rho * rho;
  const auto conditional = [&](double x) {
    const double scale = std::sqrt(ors * (nu + x * x) / (nu + 1.0));
    return t_cdf((k - rho * x) / scale, nu + 1.0);
  };
  double value = 0.0;
  if (nu > 50.0 && h > -50.0) {
    // Light tails: integrate in x directly, the mass below -50 is negligible.
    const auto integrand = [&](double x) { return t_pdf(x, nu) * conditional(x); };
    value = adaptive_gk(integrand, -50.0, h, 1e-13, 0);
  } else {
    // x = sqrt(nu) tan(theta) maps the t density to c * cos^(nu-1)(theta).
    const double snu = std::sqrt(nu);
    const double log_c = log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) - 0.5 * std::log(kPi);
    const auto integrand = [&](double theta) {
      const double ct = std::cos(theta);
      if (!(ct > 0.0)) return 0.0;
      return std::exp(log_c + (nu - 1.0) * std::log(ct)) * conditional(snu * std::tan(theta));
    };
    value = adaptive_gk(integrand, -0.5 * kPi, std::atan(h / snu), 1e-13, 0);
  }
  return std::clamp(value, 0.0, 1.0);
}

double bvt_cdf(double h, double k, double rho, double nu) {
  check_rho(rho);
  if (!(nu > 0.0)) throw std::domain_error("bvt_cdf: degrees of freedom must be positive");
  if (std::isnan(h) || std::isnan(k)) return std::numeric_limits<double>::quiet_NaN();
  if (h == -kInf || k == -kInf) return 0.0;
  if (h == kInf) return t_cdf(k, nu);
  if (k == kInf) return t_cdf(h, nu);
  if (nu == std::floor(nu) && nu <= 1000.0) {
    return bvt_integer(static_cast<int>(nu), h, k, rho);
  }
  return bvt_cdf_quadrature(h, k, rho, nu);
}

double bvt_pdf(double h, double k, double rho, double nu) {
  check_rho(rho);
  if (std::isinf(h) || std::isinf(k)) return 0.0;
  const double ors = 1.0 - rho * rho;
  const double q = (h * h - 2.0 * rho * h * k + k * k) / ors;
  return std::exp(-0.5 * (nu + 2.0) * std::log1p(q / nu)) / (kTwoPi * std::sqrt(ors));
}

double bvt_cdf_drho(double h, double k, double rho, double nu) {
  check_rho(rho);
  if (std::isinf(h) || std::isinf(k)) return 0.0;
  const double ors = 1.0 - rho * rho;
  const double q = (h * h - 2.0 * rho * h * k + k * k) / ors;
  return std::exp(-0.5 * nu * std::log1p(q / nu)) / (kTwoPi * std::sqrt(ors));
}

double mv_elliptical_logpdf(std::span<const double> z, const CorrelationMatrix& sigma,
                            const EllipticalFamily& family) {
  const int d = sigma.dim();
  if (static_cast<int>(z.size()) != d) {
    throw std::invalid_argument("mv_elliptical_logpdf: dimension mismatch");
  }
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), d);
  const Eigen::VectorXd w =
      sigma.cholesky_lower().triangularView<Eigen::Lower>().solve(zv);
  const double q = w.squaredNorm();
  const double dd = static_cast<double>(d);
  if (family.is_gaussian()) {
    return -0.5 * dd * std::log(kTwoPi) - 0.5 * sigma.log_determinant() - 0.5 * q;
  }
  const double nu = family.nu;
  return log_gamma(0.5 * (nu + dd)) - log_gamma(0.5 * nu) - 0.5 * dd * std::log(nu * kPi) -
         0.5 * sigma.log_determinant() - 0.5 * (nu + dd) * std::log1p(q / nu);
}

Eigen::MatrixXd inv_sqrt(const CorrelationMatrix& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma.matrix());
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0) {
    throw std::domain_error("inv_sqrt: matrix is not positive definite");
  }
  const Eigen::VectorXd scale = eig.eigenvalues().array().rsqrt();
  return eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
}

QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

}  // namespace special
}  // namespace mixcop
