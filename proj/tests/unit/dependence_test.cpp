#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "mixcop/dependence.hpp"
#include "mixcop/simulation.hpp"
#include "support/oracles.hpp"

using namespace mixcop;

namespace {

const double kPi = std::numbers::pi;

MixtureCopulaSpec mixture(const EllipticalFamily& family, std::vector<double> weights) {
  MixtureCopulaSpec s;
  s.family = family;
  for (size_t l = 0; l < weights.size(); ++l) s.components.push_back({StructureKind::AR1, 1.0});
  s.weights = std::move(weights);
  return s;
}

DiscreteMarginPair poisson_pair(double mu) {
  return {DiscreteMargin::from_distribution(CountDistribution::poisson(mu)),
          DiscreteMargin::from_distribution(CountDistribution::poisson(mu))};
}

}  // namespace

TEST(TauContinuous, ClosedFormValues) {
  const auto g = EllipticalFamily::gaussian();
  EXPECT_NEAR(tau_continuous(mixture(g, {1.0}), std::vector<double>{0.5}), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(tau_continuous(mixture(g, {0.5, 0.5}), std::vector<double>{0.0, 1.0}), 5.0 / 12.0, 1e-14);
  const std::vector<double> rho{0.3, -0.6, 0.9};
  const auto spec = mixture(g, {0.2, 0.3, 0.5});
  const std::vector<double> flipped{-0.3, 0.6, -0.9};
  EXPECT_NEAR(tau_continuous(spec, flipped), -tau_continuous(spec, rho), 1e-14);
  EXPECT_EQ(tau_continuous(spec, std::vector<double>{0, 0, 0}), 0.0);
}

TEST(TauContinuous, MatchesMonteCarloCurve) {
  for (double nu : {0.0, 4.0}) {
    const auto fam = nu > 0 ? EllipticalFamily::student_t(nu) : EllipticalFamily::gaussian();
    for (double rho2 : {-1.0, -0.5, 0.2, 0.75, 1.0}) {
      const auto mc = oracle::continuous_concordance(nu, {0.75, 0.25}, {0.0, rho2}, 1'000'000, 11, false);
      EXPECT_NEAR(tau_continuous(mixture(fam, {0.75, 0.25}), std::vector<double>{0.0, rho2}), mc.tau, 0.005)
          << nu << " " << rho2;
    }
  }
}

TEST(TauContinuous, StudentTCrossTermLimits) {
  const std::vector<double> rho{-0.2, 0.9};
  EXPECT_NEAR(tau_continuous(mixture(EllipticalFamily::student_t(1e6), {0.3, 0.7}), rho),
              tau_continuous(mixture(EllipticalFamily::gaussian(), {0.3, 0.7}), rho), 1e-5);
  const auto t = EllipticalFamily::student_t(2.5);
  EXPECT_NEAR(tau_continuous(mixture(t, {0.5, 0.5}), std::vector<double>{0.4, 0.4}),
              2.0 / kPi * std::asin(0.4), 1e-14);
  EXPECT_NEAR(tau_continuous(mixture(t, {0.5, 0.5}), std::vector<double>{-0.6, 0.6}), 0.0, 1e-12);
}

TEST(RhoContinuous, GaussianClosedFormAndMonteCarlo) {
  const auto g = EllipticalFamily::gaussian();
  EXPECT_NEAR(rho_continuous(mixture(g, {1.0}), std::vector<double>{1.0}), 1.0, 1e-14);
  EXPECT_EQ(rho_continuous(mixture(g, {0.4, 0.6}), std::vector<double>{0.0, 0.0}), 0.0);
  const double expected = 0.5 * 6.0 / kPi * std::asin(0.15) + 0.5 * 6.0 / kPi * std::asin(0.4);
  EXPECT_NEAR(rho_continuous(mixture(g, {0.5, 0.5}), std::vector<double>{0.3, 0.8}), expected, 1e-14);
  const auto mc = oracle::continuous_concordance(0.0, {0.5, 0.5}, {0.3, 0.8}, 1'000'000, 5);
  EXPECT_NEAR(expected, mc.rho, 0.005);
}

TEST(RhoContinuous, StudentTQuadrature) {
  EXPECT_NEAR(rho_component_quadrature(EllipticalFamily::gaussian(), 0.6), 6.0 / kPi * std::asin(0.3), 1e-6);
  for (double rho : {-0.7, 0.3, 0.9}) {
    const auto mc = oracle::continuous_concordance(3.0, {1.0}, {rho}, 1'000'000, 17);
    EXPECT_NEAR(rho_component_quadrature(EllipticalFamily::student_t(3.0), rho), mc.rho, 0.005) << rho;
  }
  const auto t = EllipticalFamily::student_t(5.0);
  EXPECT_NEAR(rho_continuous(mixture(t, {0.3, 0.7}), std::vector<double>{0.2, 0.6}),
              0.3 * rho_component_quadrature(t, 0.2) + 0.7 * rho_component_quadrature(t, 0.6), 1e-12);
}

TEST(DiscreteMarginType, TruncationAndValidation) {
  const auto m = DiscreteMargin::from_distribution(CountDistribution::poisson(3.0));
  const auto table = oracle::poisson(3.0);
  EXPECT_GE(m.cdf(m.bound()), 1.0 - 1e-10);
  EXPECT_LT(table.F(m.bound() - 1), 1.0 - 1e-10);
  EXPECT_EQ(m.cdf(-1), 0.0);
  EXPECT_EQ(m.cdf(m.bound() + 5), 1.0);
  EXPECT_NEAR(m.pmf(4), table.f(4), 1e-14);
  EXPECT_THROW(DiscreteMargin::bernoulli(1.5), std::invalid_argument);
  EXPECT_THROW(DiscreteMargin::from_pmf({0.5, 0.2}), std::invalid_argument);
  EXPECT_THROW(DiscreteMargin::from_pmf({1.2, -0.2}), std::invalid_argument);
}

TEST(TauDiscrete, IndependenceIsZero) {
  const DiscreteMarginPair b{DiscreteMargin::bernoulli(0.5), DiscreteMargin::bernoulli(0.5)};
  const auto spec = mixture(EllipticalFamily::gaussian(), {0.3, 0.7});
  EXPECT_NEAR(tau_discrete(b, spec, std::vector<double>{0.0, 0.0}), 0.0, 1e-14);
  EXPECT_NEAR(rho_discrete(b, spec, std::vector<double>{0.0, 0.0}), 0.0, 1e-14);
}

TEST(TauDiscrete, MatchesMonteCarloPoissonOne) {
  const auto margins = poisson_pair(1.0);
  const auto table = oracle::poisson(1.0);
  const auto spec = mixture(EllipticalFamily::gaussian(), {1.0});
  const auto mc = oracle::discrete_concordance(table, table, 0.0, {1.0}, {0.5}, 1'000'000, 23);
  EXPECT_NEAR(tau_discrete(margins, spec, std::vector<double>{0.5}), mc.tau, 0.005);
  EXPECT_NEAR(rho_discrete(margins, spec, std::vector<double>{0.5}), mc.rho, 0.005);
}

TEST(TauDiscrete, MixtureMatchesMonteCarlo) {
  const DiscreteMarginPair margins{DiscreteMargin::from_distribution(CountDistribution::neg_binomial(2.0, 1.5)),
                                   DiscreteMargin::from_distribution(CountDistribution::poisson(0.7))};
  const auto m1 = oracle::neg_binomial(2.0, 1.5);
  const auto m2 = oracle::poisson(0.7);
  for (double nu : {0.0, 4.0}) {
    const auto fam = nu > 0 ? EllipticalFamily::student_t(nu) : EllipticalFamily::gaussian();
    const auto spec = mixture(fam, {0.4, 0.6});
    const std::vector<double> rho{-0.5, 0.8};
    const auto mc = oracle::discrete_concordance(m1, m2, nu, {0.4, 0.6}, rho, 1'000'000, 29);
    EXPECT_NEAR(tau_discrete(margins, spec, rho), mc.tau, 0.005) << nu;
    EXPECT_NEAR(rho_discrete(margins, spec, rho), mc.rho, 0.005) << nu;
  }
}

TEST(TauDiscrete, LargeMeanApproachesContinuous) {
  const auto margins = poisson_pair(30.0);
  const auto spec = mixture(EllipticalFamily::gaussian(), {1.0});
  const std::vector<double> rho{0.5};
  EXPECT_NEAR(tau_discrete(margins, spec, rho), 1.0 / 3.0, 0.01);
  EXPECT_NEAR(rho_discrete(margins, spec, rho), rho_continuous(spec, rho), 0.01);
}

TEST(TauDiscrete, CrossTermReducesToComponent) {
  const auto margins = poisson_pair(2.5);
  for (const auto& fam : {EllipticalFamily::gaussian(), EllipticalFamily::student_t(6.0)}) {
    for (double rho : {-0.4, 0.65}) {
      EXPECT_NEAR(tau_discrete_cross(margins, fam, rho, rho), tau_discrete_component(margins, fam, rho), 1e-12);
    }
  }
}

TEST(RhoDiscrete, ConvexCombinationOfComponents) {
  const DiscreteMarginPair margins{DiscreteMargin::from_distribution(CountDistribution::poisson(1.3)),
                                   DiscreteMargin::from_distribution(CountDistribution::neg_binomial(4.0, 2.0))};
  for (const auto& fam : {EllipticalFamily::gaussian(), EllipticalFamily::student_t(4.0)}) {
    const auto spec = mixture(fam, {0.2, 0.5, 0.3});
    const std::vector<double> rho{-0.3, 0.4, 0.95};
    double sum = 0.0;
    for (int l = 0; l < 3; ++l) sum += spec.weights[l] * rho_discrete_component(margins, fam, rho[l]);
    EXPECT_NEAR(rho_discrete(margins, spec, rho), sum, 1e-10);
  }
}

TEST(TailDependenceTest, GaussianZeroAndStudentTValues) {
  const auto g = tail_dependence(mixture(EllipticalFamily::gaussian(), {0.5, 0.5}), std::vector<double>{0.9, 0.99});
  EXPECT_EQ(g.lower, 0.0);
  EXPECT_EQ(g.upper, 0.0);
  const auto t = EllipticalFamily::student_t(4.0);
  EXPECT_NEAR(tail_dependence(mixture(t, {1.0}), std::vector<double>{1.0}).upper, 1.0, 1e-14);
  const double expected = 2.0 * boost::math::cdf(boost::math::students_t(5.0), -std::sqrt(5.0));
  const auto zero = tail_dependence(mixture(t, {1.0}), std::vector<double>{0.0});
  EXPECT_NEAR(zero.lower, expected, 1e-12);
  EXPECT_EQ(zero.lower, zero.upper);
  const auto a = tail_dependence(mixture(t, {1.0}), std::vector<double>{0.3}).upper;
  const auto b = tail_dependence(mixture(t, {1.0}), std::vector<double>{0.8}).upper;
  EXPECT_NEAR(tail_dependence(mixture(t, {0.35, 0.65}), std::vector<double>{0.3, 0.8}).upper, 0.35 * a + 0.65 * b, 1e-14);
}

TEST(TailDependenceTest, AgreesWithConditionalExceedanceLimit) {
  // P(U2 > q | U1 > q) at q near one, estimated by sampling far in the tail.
  const double rho = 0.5, nu = 4.0;
  const double q = 0.9995;
  const double z = boost::math::quantile(boost::math::students_t(nu), q);
  oracle::CopulaSampler sampler(nu, 41);
  long joint = 0, first = 0;
  for (int i = 0; i < 4'000'000; ++i) {
    const auto [z1, z2] = sampler.latent(rho);
    if (z1 > z) {
      ++first;
      if (z2 > z) ++joint;
    }
  }
  const double lambda = tail_dependence(mixture(EllipticalFamily::student_t(nu), {1.0}), std::vector<double>{rho}).upper;
  EXPECT_NEAR(static_cast<double>(joint) / first, lambda, 0.08);
}

TEST(SampleStatistics, KendallAndSpearman) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{2, 1, 4, 3, 5};
  // 10 pairs: 8 concordant, 2 discordant.
  EXPECT_NEAR(sample_kendall_tau(a, b), 0.6, 1e-14);
  EXPECT_NEAR(sample_spearman_rho(a, b), 0.8, 1e-14);
  const std::vector<double> tied{1, 1, 2, 2};
  EXPECT_NEAR(sample_kendall_tau(tied, tied), 4.0 / 6.0, 1e-14);
  // Midranks without tie normalization: 12 sum(r - rbar)^2 / (n (n^2 - 1)) = 48 / 60.
  EXPECT_NEAR(sample_spearman_rho(tied, tied), 0.8, 1e-14);
  EXPECT_THROW(sample_kendall_tau(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
}

TEST(ConcordanceMatrices, IndependenceModelAndSimulatedAgreement) {
  auto config = StudyConfig::standard(MarginalFamily::Poisson, EllipticalFamily::Kind::Gaussian, 0.25);
  config.m = 500;
  const auto data = simulate_dataset(config, 0);

  auto independent = config.copula;
  for (auto& c : independent.components) c.xi = 50.0;
  const auto ind = model_concordance_matrix(data, config.marginal, independent, ConcordanceMeasure::KendallTau);
  ASSERT_EQ(ind.dim(), 4);
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(ind.entries(j, k), j == k ? 1.0 : 0.0, 4e-10);
  }

  for (auto measure : {ConcordanceMeasure::KendallTau, ConcordanceMeasure::SpearmanRho}) {
    const auto model = model_concordance_matrix(data, config.marginal, config.copula, measure);
    const auto empirical = empirical_concordance_matrix(data, measure, &config.marginal);
    EXPECT_EQ(model.visit_times, empirical.visit_times);
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(model.entries(j, k), model.entries(k, j), 1e-14);
        EXPECT_NEAR(model.entries(j, k), empirical.entries(j, k), 0.05) << to_string(measure) << " " << j << "," << k;
      }
    }
  }
}

TEST(Curves, GridShapeAndCsv) {
  CurveOptions opt;
  opt.margins = {CurveMargin{}, CurveMargin{CurveMargin::Kind::Poisson, 2.0, 0.0}};
  const auto points = dependence_curves(opt);
  EXPECT_EQ(points.size(), 2u * 1u * 3u * 2u * 41u);
  for (const auto& p : points) {
    EXPECT_GE(p.rho2, -1.0);
    EXPECT_LE(p.rho2, 1.0);
    EXPECT_LE(std::abs(p.value), 1.0 + 1e-12);
  }
  EXPECT_EQ(points.front().rho2, -1.0);
  std::ostringstream out;
  write_curves_csv(out, points);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# schema_version: 1");
  std::getline(in, line);
  EXPECT_EQ(line, "measure,family,pi,marginal_param,rho2,value");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(points.size()));
  opt.grid_points = 1;
  EXPECT_THROW(dependence_curves(opt), std::invalid_argument);
}
