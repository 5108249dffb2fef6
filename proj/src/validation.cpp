#include "mixcop/validation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

#include "mixcop/special_fn.hpp"

namespace mixcop {

namespace {

double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Numeric ids compare numerically (so "2" < "10"), others lexicographically;
// numeric ids sort first.
bool id_less(const std::string& a, const std::string& b) {
  const auto numeric = [](const std::string& s) {
    return !s.empty() && s.size() < 19 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  const bool na = numeric(a), nb = numeric(b);
  if (na && nb) return std::stoll(a) < std::stoll(b) || (std::stoll(a) == std::stoll(b) && a < b);
  if (na != nb) return na;
  return a < b;
}

}  // namespace

KsResult ks_uniform(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("ks_uniform: empty sample");
  std::vector<double> s(v.begin(), v.end());
  for (double x : s) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("ks_uniform: value outside [0, 1]");
  }
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max({d, hi - s[i], s[i] - lo});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

std::vector<double> posterior_weights(std::span<const double> z, std::span<const double> times,
                                      const MixtureCopulaSpec& spec) {
  const size_t k = spec.components.size();
  std::vector<double> logw(k, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (size_t l = 0; l < k; ++l) {
    if (spec.weights[l] <= 0.0) continue;
    const CorrelationMatrix sigma = corr_matrix(spec.components[l], times);
    logw[l] = std::log(spec.weights[l]) + special::mv_elliptical_logpdf(z, sigma, spec.family);
    top = std::max(top, logw[l]);
  }
  double total = 0.0;
  std::vector<double> w(k, 0.0);
  for (size_t l = 0; l < k; ++l) {
    if (std::isfinite(logw[l])) {
      w[l] = std::exp(logw[l] - top);
      total += w[l];
    }
  }
  for (double& x : w) x /= total;
  return w;
}

double whitened_t_statistic(const Eigen::VectorXd& zstar) {
  const auto n = static_cast<double>(zstar.size());
  if (zstar.size() < 2) throw std::invalid_argument("whitened_t_statistic: need n >= 2");
  const double mean = zstar.mean();
  const double var = (zstar.array() - mean).square().sum() / (n - 1.0);
  return std::sqrt(n) * mean / std::sqrt(var);
}

TplotResult tplot(const LongitudinalDataset& data, const MarginalSpec& marginal,
                  const MixtureCopulaSpec& copula, const TplotOptions& options) {
  marginal.validate();
  copula.validate();
  TplotResult out;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<const Subject*> order;
  for (const auto& s : data.subjects()) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const Subject* a, const Subject* b) { return id_less(a->id, b->id); });

  for (const Subject* subject : order) {
    const Subject& s = *subject;
    const int n = s.size();
    if (n < 2) {
      ++out.excluded_subjects;
      continue;
    }
    std::vector<double> z(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
      const auto dist = distribution_at(marginal, s.covariates.row(j));
      const double hi = dist.cdf(s.counts[j]);
      const double lo = dist.cdf(s.counts[j] - 1);
      double u = hi;
      if (options.pit == PitMode::Mid) u = 0.5 * (lo + hi);
      if (options.pit == PitMode::Randomized) u = lo + (hi - lo) * unif(rng);
      u = std::clamp(u, options.clamp, 1.0 - options.clamp);
      z[static_cast<size_t>(j)] = latent_quantile(u, copula.family);
    }
    const auto w = posterior_weights(z, s.times, copula);
    const auto best = static_cast<size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    const CorrelationMatrix sigma = corr_matrix(copula.components[best], s.times);
    const Eigen::Map<const Eigen::VectorXd> zv(z.data(), n);
    const Eigen::VectorXd zstar = special::inv_sqrt(sigma) * zv;
    const double t = whitened_t_statistic(zstar);

    out.subject_ids.push_back(s.id);
    out.v.push_back(special::t_cdf(t, n - 1.0));
    out.component_assignment.push_back(static_cast<int>(best) + 1);
    out.posterior_weights.push_back(w);
  }
  if (out.v.empty()) throw std::invalid_argument("tplot: no subject with two or more visits");

  std::vector<double> sorted = out.v;
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  for (size_t i = 0; i < sorted.size(); ++i) {
    out.qq_pairs.emplace_back((static_cast<double>(i) + 0.5) / m, sorted[i]);
  }
  const KsResult ks = ks_uniform(out.v);
  out.ks_statistic = ks.statistic;
  out.ks_pvalue = ks.pvalue;
  return out;
}

TplotResult tplot(const LongitudinalDataset& data, const FitResult& fit, const TplotOptions& options) {
  return tplot(data, fit.marginal.spec, fit.copula, options);
}

void write_qq_csv(std::ostream& out, const TplotResult& result) {
  out << "# schema_version: 1\n";
  out << "# ks_statistic: " << std::setprecision(10) << result.ks_statistic
      << ", ks_pvalue: " << result.ks_pvalue << ", excluded_subjects: " << result.excluded_subjects
      << '\n';
  out << "theoretical,sample\n";
  out << std::setprecision(12);
  for (const auto& [t, s] : result.qq_pairs) out << t << ',' << s << '\n';
}

void write_qq_svg(std::ostream& out, const TplotResult& result, const std::string& title) {
  constexpr double size = 400.0, margin = 40.0;
  const auto px = [&](double x) { return margin + x * size; };
  const auto py = [&](double y) { return margin + (1.0 - y) * size; };
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<!-- schema_version: 1 -->\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\""
      << size + 2 * margin << "\">\n";
  out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\""
      << size << "\" fill=\"white\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& [t, s] : result.qq_pairs) {
    out << "<circle cx=\"" << px(t) << "\" cy=\"" << py(s) << "\" r=\"2\" fill=\"steelblue\"/>\n";
  }
  out << "<text x=\"" << margin << "\" y=\"" << margin - 12 << "\" font-family=\"sans-serif\" "
      << "font-size=\"14\">" << title << " (KS = " << std::setprecision(4) << result.ks_statistic
      << ")</text>\n";
  out << "<text x=\"" << margin + size / 2 << "\" y=\"" << size + 2 * margin - 8
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">uniform quantiles</text>\n";
  out << "</svg>\n";
}

}  // namespace mixcop
