#include "mixcop/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mixcop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMassFloor = 1e-300;
constexpr double kIndependenceXi = 27.631021115928547;  // -log(1e-12)

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

LatentInterval to_latent(double u_minus, double u, const EllipticalFamily& family) {
  LatentInterval iv;
  iv.lower = u_minus <= 0.0 ? -kInf : (u_minus >= 1.0 ? kInf : latent_quantile(u_minus, family));
  iv.upper = u >= 1.0 ? kInf : (u <= 0.0 ? -kInf : latent_quantile(u, family));
  return iv;
}

}  // namespace

UniformScores uniform_scores(const LongitudinalDataset& data, const MarginalSpec& spec) {
  spec.validate();
  UniformScores scores;
  scores.subjects.reserve(data.subjects().size());
  for (const auto& s : data.subjects()) {
    UniformScores::SubjectScores ss;
    ss.times = s.times;
    ss.u.resize(s.size());
    ss.u_minus.resize(s.size());
    for (int j = 0; j < s.size(); ++j) {
      const auto dist = distribution_at(spec, s.covariates.row(j));
      ss.u[j] = dist.cdf(s.counts[j]);
      ss.u_minus[j] = dist.cdf(s.counts[j] - 1);
    }
    scores.subjects.push_back(std::move(ss));
  }
  return scores;
}

CompositeEvaluator::CompositeEvaluator(const UniformScores& scores, const EllipticalFamily& family)
    : family_(family) {
  subjects_.reserve(scores.subjects.size());
  for (const auto& s : scores.subjects) {
    SubjectLatent sl;
    sl.times = s.times;
    sl.intervals.reserve(s.u.size());
    for (size_t j = 0; j < s.u.size(); ++j) {
      sl.intervals.push_back(to_latent(s.u_minus[j], s.u[j], family));
    }
    const int n = static_cast<int>(s.u.size());
    num_pairs_ += n * (n - 1) / 2;
    subjects_.push_back(std::move(sl));
  }
}

double CompositeEvaluator::subject_loglik(int subject, const MixtureCopulaSpec& spec) const {
  const auto& s = subjects_[static_cast<size_t>(subject)];
  const size_t n = s.intervals.size();
  const size_t k = spec.components.size();
  double total = 0.0;
  for (size_t a = 0; a < n; ++a) {
    for (size_t b = a + 1; b < n; ++b) {
      const double gap = s.times[b] - s.times[a];
      double mix = 0.0;
      for (size_t l = 0; l < k; ++l) {
        if (spec.weights[l] == 0.0) continue;
        const double rho = spec.components[l].correlation(gap);
        mix += spec.weights[l] * latent_rectangle(s.intervals[a], s.intervals[b], family_, rho);
      }
      if (std::isnan(mix)) return -kInf;
      total += std::log(std::max(mix, kMassFloor));
    }
  }
  return total;
}

double CompositeEvaluator::loglik(const MixtureCopulaSpec& spec) const {
  double total = 0.0;
  for (int i = 0; i < num_subjects(); ++i) {
    const double v = subject_loglik(i, spec);
    if (!std::isfinite(v)) return -kInf;
    total += v;
  }
  return total;
}

std::vector<double> CompositeEvaluator::pair_logliks(const MixtureCopulaSpec& spec) const {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(num_pairs_));
  const size_t k = spec.components.size();
  for (const auto& s : subjects_) {
    const size_t n = s.intervals.size();
    for (size_t a = 0; a < n; ++a) {
      for (size_t b = a + 1; b < n; ++b) {
        const double gap = s.times[b] - s.times[a];
        double mix = 0.0;
        for (size_t l = 0; l < k; ++l) {
          if (spec.weights[l] == 0.0) continue;
          mix += spec.weights[l] * latent_rectangle(s.intervals[a], s.intervals[b], family_,
                                                    spec.components[l].correlation(gap));
        }
        out.push_back(std::isnan(mix) ? -kInf : std::log(std::max(mix, kMassFloor)));
      }
    }
  }
  return out;
}

Eigen::VectorXd CompositeEvaluator::subject_score(int subject, const MixtureCopulaSpec& spec) const {
  const auto& s = subjects_[static_cast<size_t>(subject)];
  const size_t n = s.intervals.size();
  const auto k = static_cast<Eigen::Index>(spec.components.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * k - 1);
  Eigen::VectorXd rect(k), drect(k);
  for (size_t a = 0; a < n; ++a) {
    for (size_t b = a + 1; b < n; ++b) {
      const double gap = s.times[b] - s.times[a];
      double mix = 0.0;
      for (Eigen::Index l = 0; l < k; ++l) {
        const auto& c = spec.components[static_cast<size_t>(l)];
        const double rho = c.correlation(gap);
        rect[l] = latent_rectangle(s.intervals[a], s.intervals[b], family_, rho);
        drect[l] = latent_rectangle_drho(s.intervals[a], s.intervals[b], family_, rho) *
                   c.correlation_derivative(gap);
        mix += spec.weights[static_cast<size_t>(l)] * rect[l];
      }
      if (!(mix > kMassFloor)) continue;  // floored term is flat
      for (Eigen::Index l = 0; l + 1 < k; ++l) g[l] += (rect[l] - rect[k - 1]) / mix;
      for (Eigen::Index l = 0; l < k; ++l) {
        g[k - 1 + l] += spec.weights[static_cast<size_t>(l)] * drect[l] / mix;
      }
    }
  }
  return g;
}

double composite_loglik(const UniformScores& scores, const MixtureCopulaSpec& spec) {
  spec.validate();
  return CompositeEvaluator(scores, spec.family).loglik(spec);
}

Eigen::VectorXd dependence_parameters(const MixtureCopulaSpec& spec) {
  const auto k = static_cast<Eigen::Index>(spec.components.size());
  Eigen::VectorXd eta(2 * k - 1);
  for (Eigen::Index l = 0; l + 1 < k; ++l) eta[l] = spec.weights[static_cast<size_t>(l)];
  for (Eigen::Index l = 0; l < k; ++l) eta[k - 1 + l] = spec.components[static_cast<size_t>(l)].xi;
  return eta;
}

MixtureCopulaSpec with_dependence_parameters(const MixtureCopulaSpec& base, const Eigen::VectorXd& eta) {
  const auto k = static_cast<Eigen::Index>(base.components.size());
  if (eta.size() != 2 * k - 1) throw std::invalid_argument("dependence parameter length mismatch");
  MixtureCopulaSpec spec = base;
  double rest = 1.0;
  for (Eigen::Index l = 0; l + 1 < k; ++l) {
    spec.weights[static_cast<size_t>(l)] = eta[l];
    rest -= eta[l];
  }
  spec.weights[static_cast<size_t>(k - 1)] = rest;
  for (Eigen::Index l = 0; l < k; ++l) spec.components[static_cast<size_t>(l)].xi = eta[k - 1 + l];
  return spec;
}

std::vector<int> CopulaFitConfig::default_nu_grid() {
  std::vector<int> grid(28);
  std::iota(grid.begin(), grid.end(), 3);
  return grid;
}

void CopulaFitConfig::validate() const {
  if (structures.empty()) throw std::invalid_argument("copula config: K must be at least 1");
  if (starts < 1) throw std::invalid_argument("copula config: need at least one start");
  if (!(pi_min > 0.0 && pi_min < pi_max && pi_max < 1.0)) {
    throw std::invalid_argument("copula config: invalid weight box");
  }
  if (!(xi_min > 0.0 && xi_min < xi_max && std::isfinite(xi_max))) {
    throw std::invalid_argument("copula config: invalid xi box");
  }
  if (family == EllipticalFamily::Kind::StudentT) {
    if (nu) {
      if (!(*nu > 0.0)) throw std::invalid_argument("copula config: nu must be positive");
    } else {
      if (nu_grid.empty()) throw std::invalid_argument("copula config: empty nu grid");
      for (int v : nu_grid) {
        if (v < 1) throw std::invalid_argument("copula config: nu grid values must be >= 1");
      }
    }
  }
}

namespace {

// Maps optimizer coordinates to dependence parameters. Weights use stick
// breaking: pi_1 = s_1, pi_2 = (1 - s_1) s_2, ..., each s_l in the weight box.
class Stage2Coordinates {
 public:
  static constexpr double kZLimit = 20.0;

  Stage2Coordinates(const CopulaFitConfig& config, const MixtureCopulaSpec& base)
      : config_(config), base_(base), k_(config.num_components()) {}

  int dim() const { return 2 * k_ - 1; }

  // Clamped stick fractions and xi values from raw coordinates.
  std::pair<std::vector<double>, std::vector<double>> natural(const Eigen::VectorXd& x) const {
    std::vector<double> s(static_cast<size_t>(k_ - 1)), xi(static_cast<size_t>(k_));
    const double lxi_lo = std::log(config_.xi_min), lxi_hi = std::log(config_.xi_max);
    for (int l = 0; l + 1 < k_; ++l) {
      s[l] = config_.native_coordinates
                 ? std::clamp(x[l], config_.pi_min, config_.pi_max)
                 : config_.pi_min + (config_.pi_max - config_.pi_min) * sigmoid(x[l]);
    }
    for (int l = 0; l < k_; ++l) {
      const double v = x[k_ - 1 + l];
      xi[l] = config_.native_coordinates
                  ? std::clamp(v, config_.xi_min, config_.xi_max)
                  : std::exp(lxi_lo + (lxi_hi - lxi_lo) * sigmoid(v));
    }
    return {s, xi};
  }

  MixtureCopulaSpec spec(const Eigen::VectorXd& x) const {
    const auto [s, xi] = natural(x);
    MixtureCopulaSpec out = base_;
    double rest = 1.0;
    for (int l = 0; l + 1 < k_; ++l) {
      out.weights[l] = rest * s[l];
      rest -= out.weights[l];
    }
    out.weights[k_ - 1] = rest;
    for (int l = 0; l < k_; ++l) out.components[l].xi = xi[l];
    return out;
  }

  // Squared distance outside the box. Transformed coordinates are kept in
  // [-20, 20] so the simplex cannot wander along the flat logistic tails.
  double excess(const Eigen::VectorXd& x) const {
    double e = 0.0;
    if (!config_.native_coordinates) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double d = x[i] - std::clamp(x[i], -kZLimit, kZLimit);
        e += d * d;
      }
      return e;
    }
    for (int l = 0; l + 1 < k_; ++l) {
      const double d = x[l] - std::clamp(x[l], config_.pi_min, config_.pi_max);
      e += d * d;
    }
    for (int l = 0; l < k_; ++l) {
      const double v = x[k_ - 1 + l];
      const double d = v - std::clamp(v, config_.xi_min, config_.xi_max);
      e += d * d;
    }
    return e;
  }

  // Raw coordinates for a point given in transformed z-space.
  Eigen::VectorXd from_z(const Eigen::VectorXd& z) const {
    if (!config_.native_coordinates) return z;
    Eigen::VectorXd x(z.size());
    const double lxi_lo = std::log(config_.xi_min), lxi_hi = std::log(config_.xi_max);
    for (int l = 0; l + 1 < k_; ++l) {
      x[l] = config_.pi_min + (config_.pi_max - config_.pi_min) * sigmoid(z[l]);
    }
    for (int l = 0; l < k_; ++l) {
      x[k_ - 1 + l] = std::exp(lxi_lo + (lxi_hi - lxi_lo) * sigmoid(z[k_ - 1 + l]));
    }
    return x;
  }

  // Raw coordinates reproducing a given spec (used for warm starts).
  Eigen::VectorXd from_spec(const MixtureCopulaSpec& spec) const {
    Eigen::VectorXd z(dim());
    const double lxi_lo = std::log(config_.xi_min), lxi_hi = std::log(config_.xi_max);
    double rest = 1.0;
    for (int l = 0; l + 1 < k_; ++l) {
      const double s = rest > 0.0 ? spec.weights[l] / rest : 0.5;
      const double frac = std::clamp((s - config_.pi_min) / (config_.pi_max - config_.pi_min), 1e-8,
                                     1.0 - 1e-8);
      z[l] = logit(frac);
      rest -= spec.weights[l];
    }
    for (int l = 0; l < k_; ++l) {
      const double frac = std::clamp((std::log(spec.components[l].xi) - lxi_lo) / (lxi_hi - lxi_lo),
                                     1e-8, 1.0 - 1e-8);
      z[k_ - 1 + l] = logit(frac);
    }
    return from_z(z);
  }

  Eigen::VectorXd initial_step(const Eigen::VectorXd& x, double scale) const {
    Eigen::VectorXd step(dim());
    for (int i = 0; i < dim(); ++i) {
      if (!config_.native_coordinates) {
        step[i] = scale;
      } else if (i < k_ - 1) {
        step[i] = 0.2 * scale;
      } else {
        step[i] = std::max(0.05, 0.5 * std::abs(x[i])) * scale;
      }
    }
    return step;
  }

  bool at_boundary(const Eigen::VectorXd& x) const {
    const auto [s, xi] = natural(x);
    const double lxi_lo = std::log(config_.xi_min), lxi_hi = std::log(config_.xi_max);
    for (double v : s) {
      const double frac = (v - config_.pi_min) / (config_.pi_max - config_.pi_min);
      if (frac < 1e-3 || frac > 1.0 - 1e-3) return true;
    }
    for (double v : xi) {
      const double frac = (std::log(v) - lxi_lo) / (lxi_hi - lxi_lo);
      if (frac < 1e-3 || frac > 1.0 - 1e-3) return true;
      // exp(-xi) below 1e-12: the component is independence to working precision
      if (v > kIndependenceXi) return true;
    }
    return false;
  }

 private:
  const CopulaFitConfig& config_;
  MixtureCopulaSpec base_;
  int k_;
};

struct StartOutcome {
  Eigen::VectorXd x;
  double loglik = -kInf;
  bool converged = false;
  int iterations = 0;
  double size = 0.0;
};

StartOutcome run_from(const CompositeEvaluator& eval, const Stage2Coordinates& coords,
                      const CopulaFitConfig& config, const Eigen::VectorXd& x0) {
  const Objective objective = [&](const Eigen::VectorXd& x) {
    const double ll = eval.loglik(coords.spec(x));
    if (!std::isfinite(ll)) return kInf;
    return -ll + 1e4 * coords.excess(x);
  };
  SimplexOptions opts = config.simplex;
  StartOutcome out;
  Eigen::VectorXd x = x0;
  // First pass, then one restart with a fresh smaller simplex to guard
  // against premature collapse.
  for (double scale : {1.0, 0.25}) {
    const Eigen::VectorXd step = coords.initial_step(x, scale * opts.initial_step.front());
    opts.initial_step.assign(step.data(), step.data() + step.size());
    const OptimResult r = minimize_simplex(objective, x, opts);
    x = r.x;
    out.iterations += r.iterations;
    // A stall on the independence plateau is a boundary optimum, not a failure.
    out.converged = r.converged || (r.stalled && coords.at_boundary(x));
    out.size = r.final_measure;
    opts = config.simplex;
  }
  out.x = x;
  out.loglik = eval.loglik(coords.spec(x));
  return out;
}

std::vector<Eigen::VectorXd> start_points(int dim, int count) {
  std::vector<double> grid(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) grid[i] = count == 1 ? 0.0 : -1.5 + 3.0 * i / (count - 1);
  std::vector<Eigen::VectorXd> starts;
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd z(dim);
    for (int c = 0; c < dim; ++c) z[c] = grid[static_cast<size_t>((k + 2 * c) % count)];
    starts.push_back(z);
  }
  return starts;
}

bool better(const StartOutcome& a, const StartOutcome& b, const Stage2Coordinates& coords) {
  if (!std::isfinite(b.loglik)) return std::isfinite(a.loglik);
  const double tol = 1e-8 * (1.0 + std::abs(b.loglik));
  if (a.loglik > b.loglik + tol) return true;
  if (a.loglik < b.loglik - tol) return false;
  if (a.converged != b.converged) return a.converged;
  // tie: prefer the smaller xi_1
  return coords.natural(a.x).second[0] < coords.natural(b.x).second[0];
}

void canonicalize(MixtureCopulaSpec& spec) {
  // Components sharing a structure kind are ordered by xi ascending.
  const size_t k = spec.components.size();
  for (size_t i = 0; i < k; ++i) {
    for (size_t j = i + 1; j < k; ++j) {
      if (spec.components[i].kind == spec.components[j].kind &&
          spec.components[j].xi < spec.components[i].xi) {
        std::swap(spec.components[i], spec.components[j]);
        std::swap(spec.weights[i], spec.weights[j]);
      }
    }
  }
}

}  // namespace

Stage2Result fit_stage2(const UniformScores& scores, const CopulaFitConfig& config) {
  config.validate();
  int pairs = 0;
  for (const auto& s : scores.subjects) pairs += static_cast<int>(s.u.size() * (s.u.size() - 1) / 2);
  if (pairs == 0) throw std::invalid_argument("fit_stage2: no subject has two or more visits");

  const int k = config.num_components();
  MixtureCopulaSpec base;
  for (auto kind : config.structures) base.components.push_back({kind, 1.0});
  base.weights.assign(static_cast<size_t>(k), 1.0 / k);

  std::vector<double> nus;
  if (config.family == EllipticalFamily::Kind::Gaussian) {
    nus.push_back(0.0);
  } else if (config.nu) {
    nus.push_back(*config.nu);
  } else {
    for (int v : config.nu_grid) nus.push_back(v);
  }

  Stage2Result best;
  best.comp_loglik = -kInf;
  std::optional<MixtureCopulaSpec> warm;
  for (double nu : nus) {
    base.family = nu == 0.0 ? EllipticalFamily::gaussian() : EllipticalFamily::student_t(nu);
    const CompositeEvaluator eval(scores, base.family);
    const Stage2Coordinates coords(config, base);

    std::vector<Eigen::VectorXd> starts;
    for (const auto& z : start_points(coords.dim(), config.starts)) starts.push_back(coords.from_z(z));
    if (warm) {
      MixtureCopulaSpec w = *warm;
      w.family = base.family;
      starts.push_back(coords.from_spec(w));
    }

    StartOutcome winner;
    int iterations = 0;
    for (const auto& x0 : starts) {
      StartOutcome o = run_from(eval, coords, config, x0);
      iterations += o.iterations;
      if (better(o, winner, coords)) winner = o;
    }
    if (!std::isfinite(winner.loglik)) continue;

    MixtureCopulaSpec spec = coords.spec(winner.x);
    warm = spec;
    if (config.family == EllipticalFamily::Kind::StudentT) {
      best.diagnostics.nu_profile.emplace_back(nu, winner.loglik);
    }
    if (winner.loglik > best.comp_loglik) {
      canonicalize(spec);
      best.copula = spec;
      best.comp_loglik = winner.loglik;
      best.diagnostics.stage2_converged = winner.converged;
      best.diagnostics.stage2_simplex_size = winner.size;
      best.diagnostics.boundary = coords.at_boundary(winner.x);
    }
    best.diagnostics.stage2_iterations += iterations;
  }
  if (!std::isfinite(best.comp_loglik)) {
    throw std::runtime_error("fit_stage2: composite likelihood is not finite at any start");
  }
  return best;
}

Eigen::VectorXd full_parameters(const MarginalSpec& marginal, const MixtureCopulaSpec& copula) {
  const Eigen::VectorXd eta = dependence_parameters(copula);
  const bool nb = marginal.family == MarginalFamily::NegBinomial;
  Eigen::VectorXd theta(marginal.beta.size() + (nb ? 1 : 0) + eta.size());
  theta << marginal.beta, (nb ? Eigen::VectorXd::Constant(1, marginal.psi) : Eigen::VectorXd(0)), eta;
  return theta;
}

std::pair<MarginalSpec, MixtureCopulaSpec> split_parameters(const MarginalSpec& marginal_template,
                                                            const MixtureCopulaSpec& copula_template,
                                                            const Eigen::VectorXd& theta) {
  MarginalSpec m = marginal_template;
  const auto p = m.beta.size();
  const bool nb = m.family == MarginalFamily::NegBinomial;
  m.beta = theta.head(p);
  if (nb) m.psi = theta[p];
  const auto offset = p + (nb ? 1 : 0);
  const MixtureCopulaSpec c =
      with_dependence_parameters(copula_template, theta.segment(offset, theta.size() - offset));
  return {m, c};
}

namespace {

std::vector<int> reporting_permutation(int p, bool nb, int k, std::vector<std::string>& names,
                                       const std::vector<std::string>& covariate_names) {
  // estimation order: beta (p), psi, pi (k - 1), xi (k)
  std::vector<int> perm;
  const int psi_index = p;
  const int pi_offset = p + (nb ? 1 : 0);
  const int xi_offset = pi_offset + k - 1;
  for (int l = 0; l + 1 < k; ++l) {
    perm.push_back(pi_offset + l);
    names.push_back("pi_" + std::to_string(l + 1));
  }
  for (int j = 0; j < p; ++j) {
    perm.push_back(j);
    names.push_back(covariate_names.size() == static_cast<size_t>(p)
                        ? "beta_" + covariate_names[static_cast<size_t>(j)]
                        : "beta_" + std::to_string(j));
  }
  if (nb) {
    perm.push_back(psi_index);
    names.push_back("psi");
  }
  for (int l = 0; l < k; ++l) {
    perm.push_back(xi_offset + l);
    names.push_back("xi_" + std::to_string(l + 1));
  }
  return perm;
}

}  // namespace

Eigen::VectorXd reporting_parameters(const MarginalSpec& marginal, const MixtureCopulaSpec& copula) {
  std::vector<std::string> names;
  const auto perm = reporting_permutation(static_cast<int>(marginal.beta.size()),
                                          marginal.family == MarginalFamily::NegBinomial,
                                          copula.num_components(), names, {});
  const Eigen::VectorXd theta = full_parameters(marginal, copula);
  Eigen::VectorXd out(static_cast<Eigen::Index>(perm.size()));
  for (size_t i = 0; i < perm.size(); ++i) out[static_cast<Eigen::Index>(i)] = theta[perm[i]];
  return out;
}

std::vector<std::string> reporting_names(const MarginalSpec& marginal, const MixtureCopulaSpec& copula,
                                         const std::vector<std::string>& covariate_names) {
  std::vector<std::string> names;
  reporting_permutation(static_cast<int>(marginal.beta.size()),
                        marginal.family == MarginalFamily::NegBinomial, copula.num_components(),
                        names, covariate_names);
  return names;
}

namespace {

// Per-subject estimating functions (stage-1 score, stage-2 score) at theta.
Eigen::MatrixXd subject_estimating_functions(const LongitudinalDataset& data,
                                             const MarginalSpec& marginal_template,
                                             const MixtureCopulaSpec& copula_template,
                                             const Eigen::VectorXd& theta) {
  const auto [marginal, copula] = split_parameters(marginal_template, copula_template, theta);
  const CompositeEvaluator eval(uniform_scores(data, marginal), copula.family);
  const int m = data.num_subjects();
  Eigen::MatrixXd g(m, theta.size());
  const auto q = marginal.num_parameters();
  for (int i = 0; i < m; ++i) {
    g.row(i).head(q) = subject_marginal_score(data.subjects()[static_cast<size_t>(i)], marginal);
    g.row(i).tail(theta.size() - q) = eval.subject_score(i, copula);
  }
  return g;
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& d, const Eigen::MatrixXd& m, bool& pseudo) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(d);
  Eigen::MatrixXd dinv;
  if (lu.isInvertible()) {
    dinv = lu.inverse();
  } else {
    pseudo = true;
    dinv = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(d).pseudoInverse();
  }
  Eigen::MatrixXd cov = dinv * m * dinv.transpose();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

GodambeResult godambe_covariance(const LongitudinalDataset& data, const FitResult& fit,
                                 double step_scale) {
  const MarginalSpec& marginal = fit.marginal.spec;
  const MixtureCopulaSpec& copula = fit.copula;
  const Eigen::VectorXd theta = full_parameters(marginal, copula);
  const auto n = theta.size();

  GodambeResult out;
  const Eigen::MatrixXd g = subject_estimating_functions(data, marginal, copula, theta);
  out.variability = g.transpose() * g;

  out.sensitivity.resize(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const double h = step_scale * 1e-5 * (1.0 + std::abs(theta[p]));
    Eigen::VectorXd up = theta, down = theta;
    up[p] += h;
    down[p] -= h;
    const Eigen::VectorXd gp =
        subject_estimating_functions(data, marginal, copula, up).colwise().sum().transpose();
    const Eigen::VectorXd gm =
        subject_estimating_functions(data, marginal, copula, down).colwise().sum().transpose();
    out.sensitivity.col(p) = -(gp - gm) / (2.0 * h);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.variability);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1e-300))) out.pseudo_inverse = true;

  out.covariance = sandwich(out.sensitivity, out.variability, out.pseudo_inverse);
  out.standard_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

double composite_penalty(const Eigen::MatrixXd& variability, const Eigen::MatrixXd& sensitivity) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sensitivity);
  if (!lu.isInvertible()) throw std::domain_error("composite_penalty: singular sensitivity matrix");
  return (variability * lu.inverse()).trace();
}

InformationCriteria claic_clbic(const FitResult& fit, const LongitudinalDataset& data) {
  const MarginalSpec& marginal = fit.marginal.spec;
  const MixtureCopulaSpec& copula = fit.copula;
  const Eigen::VectorXd theta = full_parameters(marginal, copula);
  const auto n = theta.size();

  const auto pair_values = [&](const Eigen::VectorXd& t) {
    const auto [m, c] = split_parameters(marginal, copula, t);
    return CompositeEvaluator(uniform_scores(data, m), c.family).pair_logliks(c);
  };

  const std::vector<double> base = pair_values(theta);
  const auto pairs = static_cast<Eigen::Index>(base.size());
  Eigen::MatrixXd grad(pairs, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const double h = 1e-5 * (1.0 + std::abs(theta[p]));
    Eigen::VectorXd up = theta, down = theta;
    up[p] += h;
    down[p] -= h;
    const auto vp = pair_values(up);
    const auto vm = pair_values(down);
    for (Eigen::Index r = 0; r < pairs; ++r) grad(r, p) = (vp[r] - vm[r]) / (2.0 * h);
  }

  // H: sum of per-pair outer products (each pair term is a genuine bivariate
  // log-likelihood); J: outer products of per-subject sums.
  const Eigen::MatrixXd sensitivity = grad.transpose() * grad;
  Eigen::MatrixXd variability = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index row = 0;
  for (const auto& s : data.subjects()) {
    const Eigen::Index np = static_cast<Eigen::Index>(s.size()) * (s.size() - 1) / 2;
    if (np == 0) continue;
    const Eigen::VectorXd gi = grad.middleRows(row, np).colwise().sum().transpose();
    variability += gi * gi.transpose();
    row += np;
  }

  double lc = 0.0;
  for (double v : base) lc += v;
  InformationCriteria ic;
  ic.penalty = composite_penalty(variability, sensitivity);
  ic.claic = -2.0 * lc + 2.0 * ic.penalty;
  ic.clbic = -2.0 * lc + std::log(static_cast<double>(data.num_subjects())) * ic.penalty;
  return ic;
}

FitResult fit_two_stage(const LongitudinalDataset& data, MarginalFamily family,
                        const CopulaFitConfig& config) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("fit_two_stage: empty dataset");

  FitResult fit;
  fit.num_subjects = data.num_subjects();
  fit.marginal = fit_stage1(data, family, config.stage1);
  const UniformScores scores = uniform_scores(data, fit.marginal.spec);
  Stage2Result s2 = fit_stage2(scores, config);
  fit.copula = s2.copula;
  fit.comp_loglik = s2.comp_loglik;
  fit.diagnostics = s2.diagnostics;
  fit.diagnostics.stage1_converged = fit.marginal.converged;
  fit.diagnostics.stage1_gradient_norm = fit.marginal.gradient_norm;

  const int p = static_cast<int>(fit.marginal.spec.beta.size());
  const bool nb = family == MarginalFamily::NegBinomial;
  const int k = config.num_components();
  const auto perm = reporting_permutation(p, nb, k, fit.parameter_names, data.covariate_names());
  const Eigen::VectorXd theta = full_parameters(fit.marginal.spec, fit.copula);
  const auto n = static_cast<Eigen::Index>(perm.size());
  fit.estimates.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) fit.estimates[i] = theta[perm[static_cast<size_t>(i)]];

  fit.standard_errors = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  fit.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  if (config.standard_errors) {
    const GodambeResult g = godambe_covariance(data, fit);
    for (Eigen::Index i = 0; i < n; ++i) {
      fit.standard_errors[i] = g.standard_errors[perm[static_cast<size_t>(i)]];
      for (Eigen::Index j = 0; j < n; ++j) {
        fit.covariance(i, j) = g.covariance(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
      }
    }
    fit.diagnostics.pseudo_inverse = g.pseudo_inverse;
  }
  fit.claic = fit.clbic = fit.penalty = std::numeric_limits<double>::quiet_NaN();
  if (config.information_criteria) {
    try {
      const InformationCriteria ic = claic_clbic(fit, data);
      fit.claic = ic.claic;
      fit.clbic = ic.clbic;
      fit.penalty = ic.penalty;
    } catch (const std::domain_error&) {
      // too few subjects for an invertible sensitivity matrix; criteria stay NaN
    }
  }
  return fit;
}

}  // namespace mixcop
