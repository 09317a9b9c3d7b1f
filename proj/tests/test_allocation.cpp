#include <gtest/gtest.h>

#include <random>

#include "gacv/allocation.hpp"
#include "gacv/experiments.hpp"
#include "gacv/simulate.hpp"
#include "oracle.hpp"

using namespace gacv;

namespace {

std::vector<std::int64_t> random_counts(std::size_t k, std::mt19937_64& rng, std::int64_t hi = 40)
{
  std::vector<std::int64_t> m(k);
  for (auto& v : m) {
    v = std::uniform_int_distribution<std::int64_t>(1, hi)(rng);
  }
  return m;
}

bool monotone(const std::vector<std::int64_t>& v)
{
  return std::is_sorted(v.begin(), v.end());
}

}  // namespace

TEST(Saob, GroupStructure)
{
  const auto s = saob_groups(4, 3);
  EXPECT_EQ(s.groups.to_lists(),
            (std::vector<std::vector<int>>{{0, 1, 2}, {1, 2, 3}, {2, 3, 4}, {3, 4}, {4}}));
  EXPECT_EQ(saob_groups(3, 4).groups.to_lists(),
            (std::vector<std::vector<int>>{{0, 1, 2, 3}, {1, 2, 3}, {2, 3}, {3}}));
  EXPECT_EQ(saob_groups(2, 1).groups.to_lists(), (std::vector<std::vector<int>>{{0}, {1}, {2}}));
  EXPECT_THROW(saob_groups(3, 0), Error);
  EXPECT_THROW(saob_groups(3, 5), Error);
}

TEST(NestedConversion, SaobThreeExample)
{
  const auto s = saob_groups(4, 3);
  const std::vector<std::int64_t> m{5, 5, 5, 7, 18};
  const auto m_hat = nested_conversion(m, s);
  EXPECT_EQ(m_hat, (std::vector<std::int64_t>{5, 10, 15, 17, 30}));
  EXPECT_EQ(model_eval_counts_mlblue(s.groups, m), (std::vector<std::int64_t>{5, 10, 15, 17, 30}));
  EXPECT_EQ(model_eval_counts_nested(s.groups, m_hat), (std::vector<std::int64_t>{5, 10, 15, 17, 30}));
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(5);
  EXPECT_EQ(total_cost<std::int64_t>(s.groups, m, unit), 77.0);
  EXPECT_EQ(model_cost(model_eval_counts_nested(s.groups, m_hat), unit), 77.0);
}

TEST(NestedConversion, EqualEvaluationsWhenNestedCountsAreMonotone)
{
  std::mt19937_64 rng(41);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int highest = std::uniform_int_distribution<int>(0, 6)(rng);
    const int max_size = std::uniform_int_distribution<int>(1, highest + 1)(rng);
    const auto s = saob_groups(highest, max_size);
    const auto m = random_counts(static_cast<std::size_t>(highest + 1), rng);
    const auto m_hat = nested_conversion(m, s);
    const auto n_mlb = model_eval_counts_mlblue(s.groups, m);
    if (!monotone(m_hat)) {
      continue;
    }
    ++checked;
    EXPECT_EQ(n_mlb, model_eval_counts_nested(s.groups, m_hat));
    Eigen::VectorXd costs(highest + 1);
    for (Index l = 0; l <= highest; ++l) {
      costs(l) = std::ldexp(1.0, -static_cast<int>(l));
    }
    EXPECT_EQ(total_cost<std::int64_t>(s.groups, m, costs), model_cost(model_eval_counts_nested(s.groups, m_hat), costs));
  }
  EXPECT_GT(checked, 100);
}

TEST(NestedConversion, SingletonsAndFullNestingAlwaysMatch)
{
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int highest = std::uniform_int_distribution<int>(0, 6)(rng);
    for (int max_size : {1, highest + 1}) {
      const auto s = saob_groups(highest, max_size);
      const auto m = random_counts(static_cast<std::size_t>(highest + 1), rng);
      const auto m_hat = nested_conversion(m, s);
      EXPECT_EQ(model_eval_counts_mlblue(s.groups, m), model_eval_counts_nested(s.groups, m_hat));
    }
  }
}

TEST(NestedConversion, NonMonotoneCountsBreakEvaluationParity)
{
  // m_hat = [10, 11, 2]: model 2 is read on the 11-sample prefix of group 1.
  const auto s = saob_groups(2, 2);
  const std::vector<std::int64_t> m{10, 1, 1};
  const auto m_hat = nested_conversion(m, s);
  EXPECT_EQ(m_hat, (std::vector<std::int64_t>{10, 11, 2}));
  EXPECT_EQ(model_eval_counts_mlblue(s.groups, m), (std::vector<std::int64_t>{10, 11, 2}));
  EXPECT_EQ(model_eval_counts_nested(s.groups, m_hat), (std::vector<std::int64_t>{10, 11, 11}));
}

TEST(NestedConversion, FullyRecursiveDesignMatchesMlblueVariance)
{
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const int highest = std::uniform_int_distribution<int>(1, 5)(rng);
    const auto s = saob_groups(highest, highest + 1);
    ModelEnsembleSpec spec;
    spec.cov = oracle::random_spd(highest + 1, rng);
    spec.costs = Eigen::VectorXd::Ones(highest + 1);
    const auto m = random_counts(static_cast<std::size_t>(highest + 1), rng);
    const std::vector<double> md(m.begin(), m.end());
    const double mlb = mlblue_optimal_weights(spec, s.groups, md).variance;
    const double gacv = nested_gacv_variance(spec, nested_sample_design(nested_conversion(m, s), s.groups));
    EXPECT_NEAR(gacv, mlb, 1e-8 * mlb);
  }
}

TEST(NestedDesign, PrefixIndexSets)
{
  const auto s = saob_groups(2, 2);
  const auto d = nested_sample_design(std::vector<std::int64_t>{4, 9, 12}, s.groups);
  EXPECT_EQ(d.index_sets[1], IndexSet::range(0, 9));
  EXPECT_EQ(d.stream_length(), 12);
  EXPECT_THROW(nested_sample_design(std::vector<std::int64_t>{4, 0, 12}, s.groups), Error);
}

TEST(MlblueObjective, GradientMatchesFiniteDifferences)
{
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const int highest = std::uniform_int_distribution<int>(1, 4)(rng);
    const auto s = saob_groups(highest, std::uniform_int_distribution<int>(1, highest + 1)(rng));
    const auto spec = random_problem(highest, 100 + static_cast<std::uint64_t>(trial));
    const MlblueObjective phi(spec, s.groups);
    Eigen::VectorXd m(s.groups.num_groups());
    for (Index k = 0; k < m.size(); ++k) {
      m(k) = std::uniform_real_distribution<double>(2.0, 30.0)(rng);
    }
    Eigen::VectorXd g;
    const double f = phi.value_and_gradient(m, g);
    EXPECT_DOUBLE_EQ(f, phi.value(m));
    std::vector<double> md(m.data(), m.data() + m.size());
    EXPECT_NEAR(f, oracle::mlblue_variance(spec.cov, s.groups.to_lists(), md), 1e-10 * f);
    for (Index k = 0; k < m.size(); ++k) {
      const double h = 1e-5 * m(k);
      Eigen::VectorXd up = m;
      Eigen::VectorXd dn = m;
      up(k) += h;
      dn(k) -= h;
      const double fd = (phi.value(up) - phi.value(dn)) / (2 * h);
      EXPECT_NEAR(g(k), fd, 1e-6 * std::abs(fd) + 1e-12);
    }
  }
}

TEST(MlblueObjective, MidpointConvexAlongFeasibleSegments)
{
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 200; ++trial) {
    const int highest = std::uniform_int_distribution<int>(1, 4)(rng);
    const auto s = saob_groups(highest, std::uniform_int_distribution<int>(1, highest + 1)(rng));
    const auto spec = random_problem(highest, 200 + static_cast<std::uint64_t>(trial));
    const MlblueObjective phi(spec, s.groups);
    Eigen::VectorXd a(s.groups.num_groups());
    Eigen::VectorXd b(s.groups.num_groups());
    for (Index k = 0; k < a.size(); ++k) {
      a(k) = std::uniform_real_distribution<double>(1.0, 50.0)(rng);
      b(k) = std::uniform_real_distribution<double>(1.0, 50.0)(rng);
    }
    const double mid = phi.value(0.5 * (a + b));
    const double avg = 0.5 * (phi.value(a) + phi.value(b));
    EXPECT_LE(mid, avg + 1e-9 * avg);
  }
}

TEST(Projection, CappedSimplexMatchesBisectionOracle)
{
  std::mt19937_64 rng(46);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 8)(rng);
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
      y(i) = std::uniform_real_distribution<double>(-2.0, 5.0)(rng);
    }
    const double cap = std::uniform_real_distribution<double>(0.5, 10.0)(rng);
    const Eigen::VectorXd x = detail::project_capped_simplex(y, cap);
    // Oracle: x = max(y - tau, 0) with tau >= 0 chosen by bisection so that sum <= cap.
    auto sum_at = [&](double tau) { return (y.array() - tau).cwiseMax(0.0).sum(); };
    double tau = 0.0;
    if (sum_at(0.0) > cap) {
      double lo = 0.0;
      double hi = y.maxCoeff();
      for (int it = 0; it < 200; ++it) {
        const double midp = 0.5 * (lo + hi);
        (sum_at(midp) > cap ? lo : hi) = midp;
      }
      tau = 0.5 * (lo + hi);
    }
    const Eigen::VectorXd expected = (y.array() - tau).cwiseMax(0.0).matrix();
    EXPECT_LE((x - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Allocation, NoIntegerPointBeatsTheOptimizer)
{
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    const int highest = std::uniform_int_distribution<int>(1, 2)(rng);
    const auto spec = random_problem(highest, 300 + static_cast<std::uint64_t>(trial));
    const auto s = saob_groups(highest, highest + 1);
    const Eigen::VectorXd gc = group_costs(s.groups, spec.costs);
    std::vector<double> gcv(gc.data(), gc.data() + gc.size());
    double budget = 12.0 * gc(0);
    auto ex = oracle::exhaustive_allocation(spec.cov, s.groups.to_lists(), gcv, budget);
    while (ex.points > 10000) {
      budget *= 0.8;
      ex = oracle::exhaustive_allocation(spec.cov, s.groups.to_lists(), gcv, budget);
    }
    const auto res = optimize_mlblue_allocation(spec, s.groups, budget);
    EXPECT_LE(res.cost, budget * (1 + 1e-12));
    EXPECT_LE(res.variance, ex.variance * (1 + 1e-12))
      << "optimizer " << res.variance << " vs exhaustive " << ex.variance;
  }
}

TEST(Allocation, RejectsInfeasibleBudgets)
{
  const auto spec = random_problem(2, 7);
  const auto s = saob_groups(2, 2);
  EXPECT_THROW(optimize_mlblue_allocation(spec, s.groups, 0.5), Error);
  EXPECT_THROW(optimize_mlblue_allocation(spec, s.groups, -1.0), Error);
  EXPECT_THROW(optimize_mlblue_allocation(spec, GroupScheme(2, {{0, 1}}), 100.0), Error);
}

TEST(Allocation, SpendsBudgetAndCoversEveryGroup)
{
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto spec = random_problem(4, seed);
    const auto s = saob_groups(4, 3);
    const auto res = optimize_mlblue_allocation(spec, s.groups, 100.0);
    EXPECT_LE(res.cost, 100.0 * (1 + 1e-12));
    for (auto v : res.m) {
      EXPECT_GE(v, 1);
    }
    EXPECT_GE(res.variance, res.continuous_variance * (1 - 1e-12));
    // Greedy fill: no group can be incremented within the budget remainder.
    const Eigen::VectorXd gc = group_costs(s.groups, spec.costs);
    EXPECT_LT(100.0 - res.cost, gc.minCoeff() + 1e-12);
  }
}
