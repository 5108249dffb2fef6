#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/poisson.hpp>

#include "mixcop/estimation.hpp"
#include "mixcop/simulation.hpp"

using namespace mixcop;

namespace {

StudyConfig standard_config(int m, double pi_ar1 = 0.25) {
  auto config = StudyConfig::standard(MarginalFamily::Poisson, EllipticalFamily::Kind::Gaussian, pi_ar1);
  config.m = m;
  return config;
}

CopulaFitConfig quick_fit(const StudyConfig& config) {
  auto fit = config.fit;
  fit.standard_errors = false;
  fit.information_criteria = false;
  return fit;
}

double poisson_cdf(int y, double mu) {
  return y < 0 ? 0.0 : boost::math::cdf(boost::math::poisson_distribution<>(mu), y);
}

// Fitted model shared by the covariance tests (one fit per test binary).
struct SharedFit {
  LongitudinalDataset data;
  FitResult fit;
};

const SharedFit& shared_fit() {
  static const SharedFit shared = [] {
    const auto config = standard_config(200);
    SharedFit s;
    s.data = simulate_dataset(config, 0);
    s.fit = fit_two_stage(s.data, MarginalFamily::Poisson, config.fit);
    return s;
  }();
  return shared;
}

}  // namespace

TEST(UniformScoresTest, MatchesPoissonCdf) {
  const auto config = standard_config(30);
  const auto data = simulate_dataset(config, 1);
  const auto scores = uniform_scores(data, config.marginal);
  ASSERT_EQ(scores.subjects.size(), data.subjects().size());
  for (size_t i = 0; i < data.subjects().size(); ++i) {
    const auto& s = data.subjects()[i];
    for (int j = 0; j < s.size(); ++j) {
      const double mu = std::exp(s.covariates.row(j).dot(config.marginal.beta));
      EXPECT_NEAR(scores.subjects[i].u[j], poisson_cdf(s.counts[j], mu), 1e-12);
      EXPECT_NEAR(scores.subjects[i].u_minus[j], poisson_cdf(s.counts[j] - 1, mu), 1e-12);
      EXPECT_LT(scores.subjects[i].u_minus[j], scores.subjects[i].u[j]);
    }
  }
}

TEST(CompositeLoglik, IndependenceFactorizes) {
  const auto config = standard_config(40);
  const auto data = simulate_dataset(config, 2);
  auto spec = config.copula;
  for (auto& c : spec.components) c.xi = 50.0;
  double expected = 0.0;
  for (const auto& s : data.subjects()) {
    std::vector<double> lp;
    for (int j = 0; j < s.size(); ++j) {
      const double mu = std::exp(s.covariates.row(j).dot(config.marginal.beta));
      lp.push_back(std::log(boost::math::pdf(boost::math::poisson_distribution<>(mu), s.counts[j])));
    }
    for (size_t j = 0; j < lp.size(); ++j) {
      for (size_t k = j + 1; k < lp.size(); ++k) expected += lp[j] + lp[k];
    }
  }
  EXPECT_NEAR(composite_loglik(uniform_scores(data, config.marginal), spec), expected, 1e-8);
}

TEST(CompositeLoglik, DegenerateMixtureAndDirectSum) {
  const auto config = standard_config(40);
  const auto data = simulate_dataset(config, 3);
  const auto scores = uniform_scores(data, config.marginal);
  auto spec = config.copula;
  spec.weights = {1.0, 0.0};
  MixtureCopulaSpec single;
  single.family = spec.family;
  single.components = {spec.components[0]};
  single.weights = {1.0};
  EXPECT_NEAR(composite_loglik(scores, spec), composite_loglik(scores, single), 1e-9);

  // Rectangle sums through the copula-scale cdf instead of the latent scale.
  const auto& mix = config.copula;
  double expected = 0.0;
  for (const auto& s : scores.subjects) {
    for (size_t j = 0; j < s.u.size(); ++j) {
      for (size_t k = j + 1; k < s.u.size(); ++k) {
        const auto rho = mix.pair_correlations(s.times[j], s.times[k]);
        double p = 0.0;
        for (int l = 0; l < mix.num_components(); ++l) {
          const auto c = [&](double a, double b) { return biv_copula_cdf(a, b, mix.family, rho[l]); };
          p += mix.weights[l] * (c(s.u[j], s.u[k]) - c(s.u_minus[j], s.u[k]) - c(s.u[j], s.u_minus[k]) +
                                 c(s.u_minus[j], s.u_minus[k]));
        }
        expected += std::log(p);
      }
    }
  }
  EXPECT_NEAR(composite_loglik(scores, mix), expected, 1e-8);
  const CompositeEvaluator eval(scores, mix.family);
  EXPECT_NEAR(eval.loglik(mix), expected, 1e-8);
}

TEST(CompositeEvaluatorTest, SubjectScoreMatchesFiniteDifference) {
  for (auto kind : {EllipticalFamily::Kind::Gaussian, EllipticalFamily::Kind::StudentT}) {
    auto config = StudyConfig::standard(MarginalFamily::Poisson, kind, 0.4);
    config.m = 10;
    const auto data = simulate_dataset(config, 4);
    const CompositeEvaluator eval(uniform_scores(data, config.marginal), config.copula.family);
    const Eigen::VectorXd eta = dependence_parameters(config.copula);
    for (int i = 0; i < eval.num_subjects(); ++i) {
      const Eigen::VectorXd score = eval.subject_score(i, config.copula);
      ASSERT_EQ(score.size(), eta.size());
      for (int p = 0; p < eta.size(); ++p) {
        const double h = 1e-6;
        Eigen::VectorXd up = eta, dn = eta;
        up[p] += h;
        dn[p] -= h;
        const double fd = (eval.subject_loglik(i, with_dependence_parameters(config.copula, up)) -
                           eval.subject_loglik(i, with_dependence_parameters(config.copula, dn))) / (2 * h);
        EXPECT_NEAR(score[p], fd, 1e-5 * (1.0 + std::abs(fd)));
      }
    }
  }
}

TEST(Parameters, RoundTripsAndReportingOrder) {
  auto config = StudyConfig::standard(MarginalFamily::NegBinomial, EllipticalFamily::Kind::Gaussian, 0.3);
  const Eigen::VectorXd eta = dependence_parameters(config.copula);
  ASSERT_EQ(eta.size(), 3);
  EXPECT_DOUBLE_EQ(eta[0], 0.3);
  EXPECT_DOUBLE_EQ(eta[1], 0.3);
  EXPECT_DOUBLE_EQ(eta[2], 0.7);
  const Eigen::VectorXd theta = full_parameters(config.marginal, config.copula);
  ASSERT_EQ(theta.size(), 4 + 1 + 3);
  const auto [m, c] = split_parameters(config.marginal, config.copula, theta);
  EXPECT_EQ(m.beta, config.marginal.beta);
  EXPECT_EQ(m.psi, config.marginal.psi);
  EXPECT_EQ(c.weights, config.copula.weights);
  const auto names = reporting_names(config.marginal, config.copula, CovariateDesign::column_names());
  const std::vector<std::string> expected{"pi_1", "beta_intercept", "beta_x1", "beta_x2", "beta_time", "psi", "xi_1", "xi_2"};
  EXPECT_EQ(names, expected);
  const Eigen::VectorXd rep = reporting_parameters(config.marginal, config.copula);
  EXPECT_DOUBLE_EQ(rep[0], 0.3);
  EXPECT_DOUBLE_EQ(rep[5], 4.0);
  EXPECT_DOUBLE_EQ(rep[7], 0.7);
}

TEST(FitConfig, ValidationErrors) {
  CopulaFitConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.structures.clear();
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = CopulaFitConfig{};
  cfg.starts = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = CopulaFitConfig{};
  cfg.xi_min = 2.0;
  cfg.xi_max = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(fit_two_stage(LongitudinalDataset{}, MarginalFamily::Poisson, CopulaFitConfig{}), std::invalid_argument);
}

TEST(Stage2, OptimumBeatsRandomFeasiblePoints) {
  const auto config = standard_config(100);
  const auto data = simulate_dataset(config, 5);
  const auto fit = fit_two_stage(data, MarginalFamily::Poisson, quick_fit(config));
  ASSERT_TRUE(fit.diagnostics.converged());
  const auto scores = uniform_scores(data, fit.marginal.spec);
  EXPECT_NEAR(composite_loglik(scores, fit.copula), fit.comp_loglik, 1e-8);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> pi(1e-4, 1 - 1e-4), lxi(std::log(1e-3), std::log(50.0));
  for (int i = 0; i < 100; ++i) {
    auto spec = fit.copula;
    const double p = pi(rng);
    spec.weights = {p, 1 - p};
    for (auto& c : spec.components) c.xi = std::exp(lxi(rng));
    EXPECT_GE(fit.comp_loglik, composite_loglik(scores, spec) - 1e-9);
  }
}

TEST(Stage2, IndependenceDataOptimality) {
  auto config = standard_config(100);
  for (auto& c : config.copula.components) c.xi = 50.0;
  const auto data = simulate_dataset(config, 6);
  const auto fit = fit_two_stage(data, MarginalFamily::Poisson, quick_fit(config));
  const auto scores = uniform_scores(data, fit.marginal.spec);
  for (double p : {0.1, 0.5, 0.9}) {
    for (double x1 : {0.05, 1.0, 10.0, 50.0}) {
      for (double x2 : {0.05, 1.0, 10.0, 50.0}) {
        auto spec = fit.copula;
        spec.weights = {p, 1 - p};
        spec.components[0].xi = x1;
        spec.components[1].xi = x2;
        EXPECT_GE(fit.comp_loglik, composite_loglik(scores, spec) - 1e-9);
      }
    }
  }
}

TEST(Stage2, TransformedAndNativeCoordinatesAgree) {
  const auto config = standard_config(100);
  const auto data = simulate_dataset(config, 7);
  const auto scores = uniform_scores(data, fit_stage1(data, MarginalFamily::Poisson).spec);
  auto cfg = quick_fit(config);
  const auto transformed = fit_stage2(scores, cfg);
  cfg.native_coordinates = true;
  const auto native = fit_stage2(scores, cfg);
  EXPECT_NEAR(transformed.comp_loglik, native.comp_loglik, 1e-4);
}

TEST(Stage2, StudentTProfileOverNu) {
  auto config = StudyConfig::standard(MarginalFamily::Poisson, EllipticalFamily::Kind::StudentT, 0.5);
  config.m = 60;
  const auto data = simulate_dataset(config, 8);
  auto cfg = quick_fit(config);
  cfg.nu.reset();
  cfg.nu_grid = {3, 6, 12};
  cfg.starts = 2;
  const auto fit = fit_two_stage(data, MarginalFamily::Poisson, cfg);
  ASSERT_EQ(fit.diagnostics.nu_profile.size(), 3u);
  double best = -INFINITY, best_nu = 0;
  for (const auto& [nu, ll] : fit.diagnostics.nu_profile) {
    if (ll > best) best = ll, best_nu = nu;
  }
  EXPECT_EQ(fit.copula.family.nu, best_nu);
  EXPECT_NEAR(fit.comp_loglik, best, 1e-9);
}

TEST(Stage2, SingleComponentConsistency) {
  auto config = standard_config(500, 1.0);
  config.copula.components = {{StructureKind::AR1, 0.3}};
  config.copula.weights = {1.0};
  config.fit.structures = {StructureKind::AR1};
  const auto data = simulate_dataset(config, 9);
  auto cfg = config.fit;
  cfg.information_criteria = false;
  const auto fit = fit_two_stage(data, MarginalFamily::Poisson, cfg);
  ASSERT_TRUE(fit.diagnostics.converged());
  const int last = static_cast<int>(fit.estimates.size()) - 1;
  EXPECT_EQ(fit.parameter_names[last], "xi_1");
  EXPECT_NEAR(fit.estimates[last], 0.3, 3.0 * fit.standard_errors[last]);
}

TEST(Godambe, SymmetricPositiveAndStepStable) {
  const auto& s = shared_fit();
  ASSERT_TRUE(s.fit.diagnostics.converged());
  const auto g = godambe_covariance(s.data, s.fit);
  EXPECT_LT((g.covariance - g.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((g.variability - g.variability.transpose()).cwiseAbs().maxCoeff(), 1e-8);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.variability);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-8 * eig.eigenvalues().maxCoeff());
  for (int i = 0; i < g.standard_errors.size(); ++i) EXPECT_GT(g.standard_errors[i], 0.0);
  const auto half = godambe_covariance(s.data, s.fit, 0.5);
  for (int i = 0; i < g.standard_errors.size(); ++i) {
    EXPECT_LT(std::abs(half.standard_errors[i] / g.standard_errors[i] - 1.0), 0.01) << i;
  }
  EXPECT_EQ(s.fit.standard_errors.size(), g.standard_errors.size());
}

TEST(Godambe, DuplicatedDataShrinksByRootTwo) {
  const auto& s = shared_fit();
  std::vector<Subject> twice;
  for (int copy = 0; copy < 2; ++copy) {
    for (auto subject : s.data.subjects()) {
      subject.id += copy == 0 ? "a" : "b";
      twice.push_back(std::move(subject));
    }
  }
  const LongitudinalDataset doubled(std::move(twice), s.data.covariate_names());
  const auto single = godambe_covariance(s.data, s.fit);
  const auto dup = godambe_covariance(doubled, s.fit);
  for (int i = 0; i < single.standard_errors.size(); ++i) {
    EXPECT_NEAR(dup.standard_errors[i] / single.standard_errors[i], 1.0 / std::sqrt(2.0), 0.05 / std::sqrt(2.0)) << i;
  }
}

TEST(InformationCriteriaTest, PenaltyAndDefinitions) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(5, 5);
  const Eigen::MatrixXd spd = a * a.transpose() + 5.0 * Eigen::MatrixXd::Identity(5, 5);
  EXPECT_NEAR(composite_penalty(spd, spd), 5.0, 1e-10);
  EXPECT_NEAR(composite_penalty(2.0 * spd, spd), 10.0, 1e-10);

  const auto& s = shared_fit();
  const auto ic = claic_clbic(s.fit, s.data);
  EXPECT_NEAR(ic.claic, -2.0 * s.fit.comp_loglik + 2.0 * ic.penalty, 1e-8);
  EXPECT_NEAR(ic.clbic, -2.0 * s.fit.comp_loglik + std::log(200.0) * ic.penalty, 1e-8);
  EXPECT_GT(ic.penalty, 0.0);
  EXPECT_NEAR(s.fit.claic, ic.claic, 1e-8);
}
