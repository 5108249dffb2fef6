#include "mixcop/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include "mixcop/estimation.hpp"

namespace mixcop {

namespace {

constexpr double kPi = std::numbers::pi;

// Kendall cross term Q_lm = 4 int C_l dC_m - 1 for two elliptical components.
// Gaussian: (2/pi) asin((rho_l + rho_m) / 2). Student-t with a shared nu: given
// the two independent mixing variables, X - Y is Gaussian with correlation
// r rho_l + (1 - r) rho_m, r ~ Beta(nu/2, nu/2), so the arcsin is averaged over
// r (integrated on the probability scale of r). Beyond nu = 1e4 the Beta law is
// concentrated enough (variance 1 / (4 (nu + 1))) that the Gaussian value is used.
double tau_cross_continuous(const EllipticalFamily& family, double rho_l, double rho_m) {
  if (family.kind == EllipticalFamily::Kind::Gaussian || rho_l == rho_m || family.nu > 1e4) {
    return 2.0 / kPi * std::asin(0.5 * (rho_l + rho_m));
  }
  struct Params {
    double rho_l, rho_m, half_nu;
  } params{rho_l, rho_m, 0.5 * family.nu};
  gsl_function f;
  f.function = [](double p, void* raw) {
    const auto* q = static_cast<const Params*>(raw);
    const double r = gsl_cdf_beta_Pinv(p, q->half_nu, q->half_nu);
    return 2.0 / kPi * std::asin(std::clamp(r * q->rho_l + (1.0 - r) * q->rho_m, -1.0, 1.0));
  };
  f.params = &params;
  constexpr size_t kLimit = 200;
  gsl_integration_workspace* ws = gsl_integration_workspace_alloc(kLimit);
  gsl_error_handler_t* old = gsl_set_error_handler_off();
  double value = 0.0, error = 0.0;
  const int status = gsl_integration_qags(&f, 0.0, 1.0, 1e-12, 1e-10, kLimit, ws, &value, &error);
  gsl_set_error_handler(old);
  gsl_integration_workspace_free(ws);
  if (status != GSL_SUCCESS && error > 1e-7) {
    throw std::runtime_error("tau_continuous: cross-term quadrature failed");
  }
  return value;
}

// C(F1(x1), F2(x2)) for x1 in -1..B1, x2 in -1..B2, stored at (x1 + 1, x2 + 1).
Eigen::MatrixXd copula_grid(const DiscreteMarginPair& margins, const EllipticalFamily& family,
                            double rho) {
  const int n1 = margins.first.bound() + 2;
  const int n2 = margins.second.bound() + 2;
  Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(n1, n2);
  std::vector<double> u1(n1), u2(n2), q1(n1), q2(n2);
  for (int i = 0; i < n1; ++i) u1[i] = margins.first.cdf(i - 1);
  for (int j = 0; j < n2; ++j) u2[j] = margins.second.cdf(j - 1);
  const bool frechet = std::abs(rho) >= 1.0;
  if (!frechet) {
    for (int i = 0; i < n1; ++i) q1[i] = latent_quantile(u1[i], family);
    for (int j = 0; j < n2; ++j) q2[j] = latent_quantile(u2[j], family);
  }
  for (int i = 1; i < n1; ++i) {
    for (int j = 1; j < n2; ++j) {
      grid(i, j) = frechet ? biv_copula_cdf_closed(u1[i], u2[j], family, rho)
                           : latent_cdf2(q1[i], q2[j], family, rho);
    }
  }
  return grid;
}

// h(x1, x2) at (x1, x2) from a copula grid.
Eigen::MatrixXd rectangles(const Eigen::MatrixXd& grid) {
  const auto n1 = grid.rows() - 1;
  const auto n2 = grid.cols() - 1;
  return grid.bottomRightCorner(n1, n2) - grid.topRightCorner(n1, n2) -
         grid.bottomLeftCorner(n1, n2) + grid.topLeftCorner(n1, n2);
}

double tie_term(const DiscreteMarginPair& margins) {
  return margins.first.sum_squared_pmf() + margins.second.sum_squared_pmf() - 1.0;
}

// sum h_m {4 C_l(x1 - 1, x2 - 1) - h_l} + tie term
double tau_term(const Eigen::MatrixXd& grid_l, const Eigen::MatrixXd& h_l,
                const Eigen::MatrixXd& h_m, double ties) {
  const auto n1 = h_l.rows();
  const auto n2 = h_l.cols();
  const Eigen::MatrixXd lower = grid_l.topLeftCorner(n1, n2);
  return (h_m.array() * (4.0 * lower.array() - h_l.array())).sum() + ties;
}

void check_pair_rho(const MixtureCopulaSpec& spec, std::span<const double> pair_rho) {
  if (pair_rho.size() != spec.components.size() || spec.weights.size() != pair_rho.size()) {
    throw std::invalid_argument("one correlation and one weight per component required");
  }
}

}  // namespace

std::string to_string(ConcordanceMeasure measure) {
  return measure == ConcordanceMeasure::KendallTau ? "kendall_tau" : "spearman_rho";
}

ConcordanceMeasure concordance_measure_from_string(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "tau" || s == "kendall" || s == "kendall_tau") return ConcordanceMeasure::KendallTau;
  if (s == "rho" || s == "spearman" || s == "spearman_rho") return ConcordanceMeasure::SpearmanRho;
  throw std::invalid_argument("unknown concordance measure '" + name + "'");
}

DiscreteMargin DiscreteMargin::from_distribution(const CountDistribution& dist, double tail) {
  if (!(tail > 0.0 && tail < 1.0)) throw std::invalid_argument("DiscreteMargin: bad tail mass");
  const int bound = dist.quantile(1.0 - tail);
  if (bound > 10'000'000) throw std::domain_error("DiscreteMargin: truncation bound overflow");
  DiscreteMargin m;
  m.pmf_.resize(bound + 1);
  m.cdf_.resize(bound + 1);
  for (int y = 0; y <= bound; ++y) {
    m.pmf_[y] = dist.pmf(y);
    m.cdf_[y] = dist.cdf(y);
  }
  return m;
}

DiscreteMargin DiscreteMargin::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("DiscreteMargin: p outside [0, 1]");
  return from_pmf({1.0 - p, p});
}

DiscreteMargin DiscreteMargin::from_pmf(std::vector<double> pmf) {
  if (pmf.empty()) throw std::invalid_argument("DiscreteMargin: empty pmf");
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0)) throw std::invalid_argument("DiscreteMargin: negative mass");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("DiscreteMargin: pmf must sum to 1");
  DiscreteMargin m;
  m.pmf_ = std::move(pmf);
  m.cdf_.resize(m.pmf_.size());
  double run = 0.0;
  for (size_t y = 0; y < m.pmf_.size(); ++y) {
    run += m.pmf_[y];
    m.cdf_[y] = std::min(run, 1.0);
  }
  m.cdf_.back() = 1.0;
  return m;
}

double DiscreteMargin::pmf(int y) const {
  return (y < 0 || y > bound()) ? 0.0 : pmf_[static_cast<size_t>(y)];
}

double DiscreteMargin::cdf(int y) const {
  if (y < 0) return 0.0;
  if (y > bound()) return 1.0;
  return cdf_[static_cast<size_t>(y)];
}

double DiscreteMargin::sum_squared_pmf() const {
  double s = 0.0;
  for (double p : pmf_) s += p * p;
  return s;
}

double tau_continuous(const MixtureCopulaSpec& spec, std::span<const double> pair_rho) {
  check_pair_rho(spec, pair_rho);
  const size_t k = pair_rho.size();
  double tau = 0.0;
  for (size_t l = 0; l < k; ++l) {
    tau += 2.0 / kPi * spec.weights[l] * spec.weights[l] * std::asin(pair_rho[l]);
    for (size_t m = l + 1; m < k; ++m) {
      tau += 2.0 * spec.weights[l] * spec.weights[m] *
             tau_cross_continuous(spec.family, pair_rho[l], pair_rho[m]);
    }
  }
  return tau;
}

double rho_component_quadrature(const EllipticalFamily& family, double rho) {
  static const special::QuadratureRule rule = special::gauss_legendre(64);
  const size_t n = rule.nodes.size();
  std::vector<double> u(n), q(n);
  for (size_t i = 0; i < n; ++i) {
    u[i] = 0.5 * (rule.nodes[i] + 1.0);
    q[i] = latent_quantile(u[i], family);
  }
  const bool frechet = std::abs(rho) >= 1.0;
  double integral = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      const double c = frechet ? biv_copula_cdf_closed(u[i], u[j], family, rho)
                               : latent_cdf2(q[i], q[j], family, rho);
      integral += 0.25 * rule.weights[i] * rule.weights[j] * c;
    }
  }
  return 12.0 * integral - 3.0;
}

double rho_continuous(const MixtureCopulaSpec& spec, std::span<const double> pair_rho) {
  check_pair_rho(spec, pair_rho);
  double total = 0.0;
  for (size_t l = 0; l < pair_rho.size(); ++l) {
    if (spec.weights[l] == 0.0) continue;
    const double component = spec.family.is_gaussian()
                                 ? 6.0 / kPi * std::asin(0.5 * pair_rho[l])
                                 : rho_component_quadrature(spec.family, pair_rho[l]);
    total += spec.weights[l] * component;
  }
  return total;
}

double tau_discrete_component(const DiscreteMarginPair& margins, const EllipticalFamily& family,
                              double rho) {
  const Eigen::MatrixXd grid = copula_grid(margins, family, rho);
  const Eigen::MatrixXd h = rectangles(grid);
  return tau_term(grid, h, h, tie_term(margins));
}

double tau_discrete_cross(const DiscreteMarginPair& margins, const EllipticalFamily& family,
                          double rho_l, double rho_m) {
  const Eigen::MatrixXd grid_l = copula_grid(margins, family, rho_l);
  const Eigen::MatrixXd grid_m = copula_grid(margins, family, rho_m);
  return tau_term(grid_l, rectangles(grid_l), rectangles(grid_m), tie_term(margins));
}

double tau_discrete(const DiscreteMarginPair& margins, const MixtureCopulaSpec& spec,
                    std::span<const double> pair_rho) {
  check_pair_rho(spec, pair_rho);
  const size_t k = pair_rho.size();
  const double ties = tie_term(margins);
  std::vector<Eigen::MatrixXd> grids(k), hs(k);
  for (size_t l = 0; l < k; ++l) {
    if (spec.weights[l] == 0.0) continue;
    grids[l] = copula_grid(margins, spec.family, pair_rho[l]);
    hs[l] = rectangles(grids[l]);
  }
  double tau = 0.0;
  for (size_t l = 0; l < k; ++l) {
    if (spec.weights[l] == 0.0) continue;
    for (size_t m = 0; m < k; ++m) {
      if (spec.weights[m] == 0.0) continue;
      // l == m gives tau*(C_l); ordered pairs l != m give Q*_lm (not symmetric).
      tau += spec.weights[l] * spec.weights[m] * tau_term(grids[l], hs[l], hs[m], ties);
    }
  }
  return tau;
}

double rho_discrete_component(const DiscreteMarginPair& margins, const EllipticalFamily& family,
                              double rho) {
  const Eigen::MatrixXd h = rectangles(copula_grid(margins, family, rho));
  const auto& m1 = margins.first;
  const auto& m2 = margins.second;
  double total = 0.0;
  for (int x1 = 0; x1 <= m1.bound(); ++x1) {
    const double lo1 = m1.cdf(x1 - 1), up1 = 1.0 - m1.cdf(x1), f1 = m1.pmf(x1);
    for (int x2 = 0; x2 <= m2.bound(); ++x2) {
      const double lo2 = m2.cdf(x2 - 1), up2 = 1.0 - m2.cdf(x2), f2 = m2.pmf(x2);
      total += h(x1, x2) * (6.0 * lo1 * lo2 + 6.0 * up1 * up2 - 3.0 * f1 * f2);
    }
  }
  return total + 3.0 * tie_term(margins);
}

double rho_discrete(const DiscreteMarginPair& margins, const MixtureCopulaSpec& spec,
                    std::span<const double> pair_rho) {
  check_pair_rho(spec, pair_rho);
  double total = 0.0;
  for (size_t l = 0; l < pair_rho.size(); ++l) {
    if (spec.weights[l] == 0.0) continue;
    total += spec.weights[l] * rho_discrete_component(margins, spec.family, pair_rho[l]);
  }
  return total;
}

TailDependence tail_dependence(const MixtureCopulaSpec& spec, std::span<const double> pair_rho) {
  check_pair_rho(spec, pair_rho);
  if (spec.family.is_gaussian()) return {0.0, 0.0};
  const double nu = spec.family.nu;
  double lambda = 0.0;
  for (size_t l = 0; l < pair_rho.size(); ++l) {
    const double r = pair_rho[l];
    if (!(r > -1.0)) continue;  // countermonotone: no joint extremes
    const double arg = -std::sqrt((nu + 1.0) * (1.0 - r) / (1.0 + r));
    lambda += 2.0 * spec.weights[l] * special::t_cdf(arg, nu + 1.0);
  }
  return {lambda, lambda};
}

ConcordanceMatrix model_concordance_matrix(const LongitudinalDataset& data,
                                           const MarginalSpec& marginal,
                                           const MixtureCopulaSpec& copula,
                                           ConcordanceMeasure measure) {
  marginal.validate();
  copula.validate();
  std::vector<double> times;
  for (const auto& s : data.subjects()) times.insert(times.end(), s.times.begin(), s.times.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const int d = static_cast<int>(times.size());
  if (d < 2) throw std::invalid_argument("model_concordance_matrix: fewer than 2 distinct visits");

  ConcordanceMatrix out;
  out.measure = measure;
  out.visit_times = times;
  out.entries = Eigen::MatrixXd::Identity(d, d);

  const auto index_of = [&](double t) {
    return static_cast<int>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
  };
  std::vector<std::vector<double>> sums(d, std::vector<double>(d, 0.0));
  std::vector<std::vector<int>> counts(d, std::vector<int>(d, 0));
  std::map<std::tuple<int, int, double, double>, double> cache;

  for (const auto& s : data.subjects()) {
    std::vector<double> mus(s.size());
    for (int j = 0; j < s.size(); ++j) mus[j] = mean(s.covariates.row(j), marginal.beta);
    for (int a = 0; a < s.size(); ++a) {
      for (int b = a + 1; b < s.size(); ++b) {
        const int j = index_of(s.times[a]);
        const int k = index_of(s.times[b]);
        const auto key = std::make_tuple(j, k, mus[a], mus[b]);
        auto it = cache.find(key);
        if (it == cache.end()) {
          const DiscreteMarginPair pair{
              DiscreteMargin::from_distribution(CountDistribution(marginal.family, mus[a], marginal.psi)),
              DiscreteMargin::from_distribution(CountDistribution(marginal.family, mus[b], marginal.psi))};
          const auto rho = copula.pair_correlations(s.times[a], s.times[b]);
          const double value = measure == ConcordanceMeasure::KendallTau
                                   ? tau_discrete(pair, copula, rho)
                                   : rho_discrete(pair, copula, rho);
          it = cache.emplace(key, value).first;
        }
        sums[j][k] += it->second;
        counts[j][k] += 1;
      }
    }
  }
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      const double v = counts[j][k] > 0 ? sums[j][k] / counts[j][k]
                                        : std::numeric_limits<double>::quiet_NaN();
      out.entries(j, k) = out.entries(k, j) = v;
    }
  }
  return out;
}

ConcordanceMatrix model_concordance_matrix(const FitResult& fit, const LongitudinalDataset& data,
                                           ConcordanceMeasure measure) {
  return model_concordance_matrix(data, fit.marginal.spec, fit.copula, measure);
}

double sample_kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("sample_kendall_tau: length mismatch");
  const size_t n = a.size();
  if (n < 2) throw std::invalid_argument("sample_kendall_tau: need at least two observations");
  const auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
  long long s = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) s += sign(a[i] - a[j]) * sign(b[i] - b[j]);
  }
  return static_cast<double>(s) / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

namespace {

std::vector<double> midranks(std::span<const double> v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double sample_spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("sample_spearman_rho: length mismatch");
  const size_t n = a.size();
  if (n < 2) throw std::invalid_argument("sample_spearman_rho: need at least two observations");
  const auto ra = midranks(a);
  const auto rb = midranks(b);
  const double mid = 0.5 * static_cast<double>(n + 1);
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += (ra[i] - mid) * (rb[i] - mid);
  const double nd = static_cast<double>(n);
  return 12.0 * s / (nd * nd * nd - nd);
}

ConcordanceMatrix empirical_concordance_matrix(const LongitudinalDataset& data,
                                               ConcordanceMeasure measure,
                                               const MarginalSpec* residual_spec) {
  std::vector<double> times;
  for (const auto& s : data.subjects()) times.insert(times.end(), s.times.begin(), s.times.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const int d = static_cast<int>(times.size());
  if (d < 2) throw std::invalid_argument("empirical_concordance_matrix: fewer than 2 distinct visits");

  // value[subject][visit index], NaN when unobserved
  std::vector<std::vector<double>> values(data.subjects().size(),
                                          std::vector<double>(d, std::nan("")));
  for (size_t i = 0; i < data.subjects().size(); ++i) {
    const auto& s = data.subjects()[i];
    for (int j = 0; j < s.size(); ++j) {
      const int idx = static_cast<int>(std::lower_bound(times.begin(), times.end(), s.times[j]) -
                                       times.begin());
      double v = s.counts[j];
      if (residual_spec != nullptr) {
        const auto dist = distribution_at(*residual_spec, s.covariates.row(j));
        v = (v - dist.mu()) / std::sqrt(dist.variance());
      }
      values[i][idx] = v;
    }
  }

  ConcordanceMatrix out;
  out.measure = measure;
  out.visit_times = times;
  out.entries = Eigen::MatrixXd::Identity(d, d);
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      std::vector<double> a, b;
      for (const auto& row : values) {
        if (!std::isnan(row[j]) && !std::isnan(row[k])) {
          a.push_back(row[j]);
          b.push_back(row[k]);
        }
      }
      double v = std::numeric_limits<double>::quiet_NaN();
      if (a.size() >= 2) {
        v = measure == ConcordanceMeasure::KendallTau ? sample_kendall_tau(a, b)
                                                      : sample_spearman_rho(a, b);
      }
      out.entries(j, k) = out.entries(k, j) = v;
    }
  }
  return out;
}

std::string CurveMargin::label() const {
  std::ostringstream os;
  os << std::setprecision(6);
  switch (kind) {
    case Kind::Continuous: return "continuous";
    case Kind::Poisson: os << "poisson(" << param << ")"; break;
    case Kind::Bernoulli: os << "bernoulli(" << param << ")"; break;
    case Kind::NegBinomial: os << "negbinomial(" << param << ";" << psi << ")"; break;
  }
  return os.str();
}

std::string family_label(const EllipticalFamily& family) {
  if (family.is_gaussian()) return "gaussian";
  std::ostringstream os;
  os << "t(" << family.nu << ")";
  return os.str();
}

std::vector<CurvePoint> dependence_curves(const CurveOptions& options) {
  if (options.grid_points < 2) throw std::invalid_argument("dependence_curves: need >= 2 grid points");
  std::vector<CurvePoint> points;
  for (auto measure : options.measures) {
    for (const auto& family : options.families) {
      for (double w : options.first_weights) {
        MixtureCopulaSpec spec;
        spec.family = family;
        spec.components = {CorrelationStructure{StructureKind::EX, 1.0},
                           CorrelationStructure{StructureKind::EX, 1.0}};
        spec.weights = {w, 1.0 - w};
        for (const auto& margin : options.margins) {
          std::optional<DiscreteMarginPair> pair;
          switch (margin.kind) {
            case CurveMargin::Kind::Continuous: break;
            case CurveMargin::Kind::Poisson: {
              auto m = DiscreteMargin::from_distribution(CountDistribution::poisson(margin.param));
              pair = DiscreteMarginPair{m, m};
              break;
            }
            case CurveMargin::Kind::NegBinomial: {
              auto m = DiscreteMargin::from_distribution(
                  CountDistribution::neg_binomial(margin.param, margin.psi));
              pair = DiscreteMarginPair{m, m};
              break;
            }
            case CurveMargin::Kind::Bernoulli: {
              auto m = DiscreteMargin::bernoulli(margin.param);
              pair = DiscreteMarginPair{m, m};
              break;
            }
          }
          for (int g = 0; g < options.grid_points; ++g) {
            const double rho2 = -1.0 + 2.0 * g / (options.grid_points - 1);
            const std::vector<double> rho{0.0, rho2};
            double value = 0.0;
            if (!pair) {
              value = measure == ConcordanceMeasure::KendallTau ? tau_continuous(spec, rho)
                                                                : rho_continuous(spec, rho);
            } else {
              value = measure == ConcordanceMeasure::KendallTau ? tau_discrete(*pair, spec, rho)
                                                                : rho_discrete(*pair, spec, rho);
            }
            points.push_back({measure, family, w, margin.label(), rho2, value});
          }
        }
      }
    }
  }
  return points;
}

void write_curves_csv(std::ostream& out, const std::vector<CurvePoint>& points) {
  out << "# schema_version: 1\n";
  out << "measure,family,pi,marginal_param,rho2,value\n";
  out << std::setprecision(12);
  for (const auto& p : points) {
    out << to_string(p.measure) << ',' << family_label(p.family) << ',' << p.weight << ','
        << p.margin << ',' << p.rho2 << ',' << p.value << '\n';
  }
}

}  // namespace mixcop
