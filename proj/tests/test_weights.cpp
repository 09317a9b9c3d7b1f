#include <gtest/gtest.h>

#include <random>

#include "gacv/covariance.hpp"
#include "gacv/experiments.hpp"
#include "gacv/weights.hpp"
#include "oracle.hpp"

using namespace gacv;

namespace {

ModelEnsembleSpec spec_from(const Eigen::MatrixXd& cov)
{
  ModelEnsembleSpec s;
  s.cov = cov;
  s.costs = Eigen::VectorXd::Ones(cov.rows());
  return s;
}

struct Instance
{
  int highest = 0;
  oracle::Groups groups;
  oracle::Indices z;
  Eigen::MatrixXd cov;
  SampleDesign design;
  BlockCovariance c;
};

/// Random well-posed instance (L <= 4, K <= 6) with an invertible C.
Instance random_instance(std::mt19937_64& rng)
{
  for (;;) {
    Instance in;
    in.highest = std::uniform_int_distribution<int>(1, 4)(rng);
    const int k = std::uniform_int_distribution<int>(1, 6)(rng);
    in.groups = oracle::random_groups(in.highest, k, rng);
    in.z = oracle::random_indices(k, 40, rng);
    in.cov = oracle::random_spd(in.highest + 1, rng);
    in.design = SampleDesign{GroupScheme(in.highest, in.groups), {}};
    for (const auto& idx : in.z) {
      in.design.index_sets.push_back(IndexSet::from_indices(idx));
    }
    in.c = assemble_block_covariance(spec_from(in.cov), in.design);
    if (is_optimizable(in.c.matrix)) {
      return in;
    }
  }
}

}  // namespace

TEST(OptimalWeights, MatchesNullSpaceOracle)
{
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_instance(rng);
    const auto w = optimal_weights(in.c, in.design.scheme);
    const auto ref = oracle::null_space_minimizer(in.c.matrix, oracle::stacked_restriction(in.groups, in.highest));
    EXPECT_NEAR(w.variance, ref.variance, 1e-8 * ref.variance);
    EXPECT_NEAR(estimator_variance(w.weights, in.c), w.variance, 1e-9 * w.variance);
    EXPECT_LE(check_unbiased(w.weights, in.design.scheme).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(OptimalWeights, FeasiblePerturbationsIncreaseVariance)
{
  std::mt19937_64 rng(32);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_instance(rng);
    const auto w = optimal_weights(in.c, in.design.scheme);
    const auto null = oracle::null_space_minimizer(in.c.matrix, oracle::stacked_restriction(in.groups, in.highest))
                        .null_basis;
    if (null.cols() == 0) {
      continue;
    }
    const Eigen::VectorXd beta = w.weights.stacked();
    Eigen::VectorXd d(null.cols());
    for (Index i = 0; i < d.size(); ++i) {
      d(i) = z(rng);
    }
    const Eigen::VectorXd step = null * d;
    const Eigen::VectorXd perturbed = beta + 1e-3 * beta.norm() * step / step.norm();
    const auto pw = WeightSet::from_stacked(in.design.scheme, perturbed);
    EXPECT_TRUE(is_unbiased(pw, in.design.scheme));
    EXPECT_GT(estimator_variance(pw, in.c), w.variance);
  }
}

TEST(OptimalWeights, TwoModelControlVariateClosedForm)
{
  // Var = sigma0^2 / n * (1 - rho^2 (m - n) / m), for both reused and independent samples.
  const double s0 = 2.0;
  const double s1 = 0.5;
  const double rho = 0.9;
  ModelEnsembleSpec spec;
  spec.cov.resize(2, 2);
  spec.cov << s0 * s0, rho * s0 * s1, rho * s0 * s1, s1 * s1;
  spec.costs = Eigen::VectorXd::Ones(2);
  const GroupScheme scheme(1, {{0, 1}, {1}});
  for (std::int64_t n : {3, 10}) {
    for (std::int64_t m : {20, 100}) {
      const double expected = s0 * s0 / static_cast<double>(n) *
                              (1.0 - rho * rho * static_cast<double>(m - n) / static_cast<double>(m));
      const SampleDesign reused{scheme, {IndexSet::range(0, n), IndexSet::range(0, m)}};
      const SampleDesign indep{scheme, {IndexSet::range(0, n), IndexSet::range(n, m)}};
      EXPECT_NEAR(optimal_variance(assemble_block_covariance(spec, reused), scheme), expected, 1e-12);
      EXPECT_NEAR(optimal_variance(assemble_block_covariance(spec, indep), scheme), expected, 1e-12);
    }
  }
}

TEST(OptimalWeights, SpecializationsAgree)
{
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const int highest = std::uniform_int_distribution<int>(1, 4)(rng);
    const int k = std::uniform_int_distribution<int>(1, 6)(rng);
    const auto groups = oracle::random_groups(highest, k, rng);
    const auto spec = spec_from(oracle::random_spd(highest + 1, rng));
    const GroupScheme scheme(highest, groups);
    std::vector<double> m;
    for (int g = 0; g < k; ++g) {
      m.push_back(static_cast<double>(std::uniform_int_distribution<int>(1, 60)(rng)));
    }
    const auto general = optimal_weights(independent_block_covariance(spec, scheme, m), scheme);
    const auto indep = independent_optimal_weights(spec, scheme, m);
    const auto mlb = mlblue_optimal_weights(spec, scheme, m);
    EXPECT_NEAR(indep.variance, general.variance, 1e-10 * general.variance);
    EXPECT_NEAR(mlb.variance, general.variance, 1e-10 * general.variance);
    const double scale = general.weights.stacked().cwiseAbs().maxCoeff();
    EXPECT_LE((indep.weights.stacked() - general.weights.stacked()).cwiseAbs().maxCoeff(), 1e-8 * scale);
    EXPECT_LE((mlb.weights.stacked() - general.weights.stacked()).cwiseAbs().maxCoeff(), 1e-8 * scale);
    EXPECT_NEAR(oracle::mlblue_variance(spec.cov, groups, m), mlb.variance, 1e-10 * mlb.variance);
  }
}

TEST(OptimalWeights, AddingAnIndependentGroupNeverHurts)
{
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = random_instance(rng);
    const double before = optimal_variance(in.c, in.design.scheme);
    auto groups = in.groups;
    groups.push_back(oracle::random_groups(in.highest, 1, rng).front());
    SampleDesign d{GroupScheme(in.highest, groups), in.design.index_sets};
    const std::int64_t start = in.design.stream_length();
    d.index_sets.push_back(IndexSet::range(start, start + std::uniform_int_distribution<int>(1, 30)(rng)));
    const double after = optimal_variance(assemble_block_covariance(spec_from(in.cov), d), d.scheme);
    EXPECT_LE(after, before * (1 + 1e-12));
  }
}

TEST(OptimalWeights, ReportsInfeasibleAndDegenerateDesigns)
{
  const auto spec = three_model_spec(0.9, 0.8, 0.7);
  const GroupScheme uncovered(2, {{0, 1}, {1}});
  const auto c = BlockCovariance::for_scheme(uncovered, Eigen::MatrixXd::Identity(3, 3));
  try {
    optimal_weights(c, uncovered);
    FAIL() << "expected an infeasible-constraint error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible constraint"), std::string::npos);
  }

  const GroupScheme dup(2, {{0, 1, 2}, {2}, {2}});
  const SampleDesign d{dup, {IndexSet::range(0, 5), IndexSet::range(5, 9), IndexSet::range(5, 9)}};
  try {
    optimal_weights(assemble_block_covariance(spec, d), dup);
    FAIL() << "expected a degenerate-design error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate design"), std::string::npos);
    EXPECT_GT(e.condition_number(), 1e12);
  }
}

TEST(OptimalWeights, SingleGroupIsPlainMonteCarlo)
{
  const auto spec = three_model_spec(0.9, 0.8, 0.7);
  const GroupScheme one(2, {{0, 1, 2}});
  const SampleDesign d{one, {IndexSet::range(0, 8)}};
  const auto w = optimal_weights(assemble_block_covariance(spec, d), one);
  EXPECT_NEAR(w.variance, 1.0 / 8.0, 1e-14);
  EXPECT_NEAR(w.weights.per_group[0](0), 1.0, 1e-12);
  EXPECT_NEAR(w.weights.per_group[0](1), 0.0, 1e-12);
}

TEST(Unbiasedness, DetectsBiasedWeights)
{
  const GroupScheme s(2, {{0, 1, 2}, {1, 2}});
  WeightSet w{{(Eigen::VectorXd(3) << 1.0, 0.3, -0.2).finished(), (Eigen::VectorXd(2) << -0.3, 0.2).finished()}};
  EXPECT_TRUE(is_unbiased(w, s));
  w.per_group[1](0) = -0.2;
  EXPECT_FALSE(is_unbiased(w, s));
  EXPECT_NEAR(check_unbiased(w, s)(1), 0.1, 1e-15);
  WeightSet wrong{{Eigen::VectorXd::Ones(2)}};
  EXPECT_THROW(wrong.check_aligned(s), Error);
}

TEST(Decomposition, RoundTripOnRandomUnbiasedWeights)
{
  std::mt19937_64 rng(35);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 50; ++trial) {
    const int highest = std::uniform_int_distribution<int>(1, 4)(rng);
    const int k = std::uniform_int_distribution<int>(1, 6)(rng);
    const auto groups = oracle::random_groups(highest, k, rng);
    const GroupScheme scheme(highest, groups);
    const Eigen::MatrixXd r = oracle::stacked_restriction(groups, highest);
    Eigen::VectorXd beta(scheme.total_size());
    for (Index i = 0; i < beta.size(); ++i) {
      beta(i) = z(rng);
    }
    // Project onto R beta = e0.
    const Eigen::VectorXd resid = r * beta - Eigen::VectorXd::Unit(highest + 1, 0);
    beta -= r.transpose() * (r * r.transpose()).ldlt().solve(resid);
    const auto w = WeightSet::from_stacked(scheme, beta);
    ASSERT_TRUE(is_unbiased(w, scheme));

    const auto d = acv_decomposition(w, scheme);
    EXPECT_LE((d.alpha - alpha_from_negative_parts(w, scheme)).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::MatrixXd bt = w.zero_filled(scheme);
    const Eigen::MatrixXd rebuilt = d.reassemble();
    for (Index l = 1; l <= highest; ++l) {
      const auto& e = d.omega_e[static_cast<std::size_t>(l - 1)];
      const auto& mu = d.omega_mu[static_cast<std::size_t>(l - 1)];
      for (Index g = 0; g < k; ++g) {
        // Entries are rebuilt exactly up to one rounding of the division/multiplication pair.
        EXPECT_NEAR(rebuilt(l, g), bt(l, g), 4e-16 * std::abs(bt(l, g)));
      }
      if (d.alpha(l - 1) != 0.0) {
        EXPECT_NEAR(std::accumulate(e.begin(), e.end(), 0.0), 1.0, 1e-12);
        EXPECT_NEAR(std::accumulate(mu.begin(), mu.end(), 0.0), 1.0, 1e-12);
        for (Index g = 0; g < k; ++g) {
          EXPECT_GE(e[static_cast<std::size_t>(g)], 0.0);
          EXPECT_GE(mu[static_cast<std::size_t>(g)], 0.0);
          EXPECT_FALSE(e[static_cast<std::size_t>(g)] > 0.0 && mu[static_cast<std::size_t>(g)] > 0.0);
        }
      }
    }
    EXPECT_EQ(rebuilt.row(0), bt.row(0));
  }
}

TEST(Decomposition, RequiresUnbiasedWeights)
{
  const GroupScheme s(1, {{0, 1}, {1}});
  const WeightSet w{{(Eigen::VectorXd(2) << 1.0, 0.5).finished(), (Eigen::VectorXd(1) << -0.4).finished()}};
  EXPECT_THROW(acv_decomposition(w, s), Error);
}

TEST(Decomposition, ModelWithZeroWeightHasEmptyOmegas)
{
  const GroupScheme s(2, {{0, 1, 2}, {1}});
  const WeightSet w{{(Eigen::VectorXd(3) << 1.0, 0.5, 0.0).finished(), (Eigen::VectorXd(1) << -0.5).finished()}};
  const auto d = acv_decomposition(w, s);
  EXPECT_DOUBLE_EQ(d.alpha(0), 0.5);
  EXPECT_DOUBLE_EQ(d.alpha(1), 0.0);
  EXPECT_TRUE(d.omega_e[1].empty());
  EXPECT_EQ(d.omega_e[0], (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(d.omega_mu[0], (std::vector<double>{0.0, 1.0}));
}

TEST(EnsembleAcv, BuildsUnbiasedTwoKGroupEstimator)
{
  const Eigen::VectorXd alpha = (Eigen::VectorXd(3) << -0.4, 0.2, -0.1).finished();
  for (int k : {1, 2, 5}) {
    const auto e = ensemble_acv_weights(alpha, k);
    EXPECT_EQ(e.scheme.num_groups(), 2 * k);
    EXPECT_TRUE(is_unbiased(e.weights, e.scheme));
    const auto d = acv_decomposition(e.weights, e.scheme);
    EXPECT_LE((d.alpha - alpha.cwiseAbs()).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_THROW(ensemble_acv_weights(alpha, 0), Error);
}
