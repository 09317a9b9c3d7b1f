#include <gtest/gtest.h>

#include <random>

#include "gacv/grouping.hpp"
#include "oracle.hpp"

using namespace gacv;

TEST(MultiIndex, SortsMembersAndReportsPositions)
{
  const auto mi = lex_multi_index({3, 1, 2}, 4);
  EXPECT_EQ(mi.entries(), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(mi.size(), 3);
  EXPECT_EQ(inverse_index(mi, 3), 2);
  EXPECT_EQ(inverse_index(mi, 1), 0);
  EXPECT_TRUE(mi.contains(2));
  EXPECT_FALSE(mi.contains(0));
  EXPECT_THROW(inverse_index(mi, 0), Error);
}

TEST(MultiIndex, RejectsInvalidGroups)
{
  EXPECT_THROW(lex_multi_index({}, 2), Error);
  EXPECT_THROW(lex_multi_index({0, 3}, 2), Error);
  EXPECT_THROW(lex_multi_index({-1}, 2), Error);
  EXPECT_THROW(lex_multi_index({1, 1}, 2), Error);
}

TEST(Restriction, SelectsGroupEntries)
{
  const auto mi = lex_multi_index({1, 3}, 3);
  const Eigen::MatrixXd r = restriction_matrix(mi, 3);
  ASSERT_EQ(r.rows(), 2);
  ASSERT_EQ(r.cols(), 4);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(2, 4);
  expected(0, 1) = 1.0;
  expected(1, 3) = 1.0;
  EXPECT_EQ(r, expected);

  const Eigen::VectorXd full = (Eigen::VectorXd(4) << 10, 11, 12, 13).finished();
  EXPECT_EQ(restrict_vector(full, mi), (Eigen::VectorXd(2) << 11, 13).finished());
  EXPECT_EQ(r * full, restrict_vector(full, mi));
}

TEST(Restriction, ZeroFillRejectsLengthMismatch)
{
  const auto mi = lex_multi_index({0, 2}, 2);
  EXPECT_THROW(zero_fill(Eigen::VectorXd::Ones(3), mi), Error);
}

TEST(Restriction, RowsAreOrthonormalAndZeroFillRoundTrips)
{
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int highest = std::uniform_int_distribution<int>(0, 6)(rng);
    const auto groups = oracle::random_groups(highest, 3, rng);
    for (const auto& g : groups) {
      const auto mi = lex_multi_index(g, highest);
      const Eigen::MatrixXd r = restriction_matrix(mi, highest);
      EXPECT_EQ(r * r.transpose(), Eigen::MatrixXd::Identity(mi.size(), mi.size()));
      const Eigen::VectorXd beta = Eigen::VectorXd::Random(mi.size());
      const Eigen::VectorXd filled = zero_fill(beta, mi);
      EXPECT_EQ(filled, r.transpose() * beta);
      EXPECT_EQ(restrict_vector(filled, mi), beta);
    }
  }
}

TEST(GroupScheme, OffsetsAndMembership)
{
  const GroupScheme s(4, {{0, 1, 2}, {1, 2, 3}, {2, 3, 4}, {3, 4}, {4}});
  EXPECT_EQ(s.num_models(), 5);
  EXPECT_EQ(s.num_groups(), 5);
  EXPECT_EQ(s.total_size(), 12);
  EXPECT_EQ(s.offset(0), 0);
  EXPECT_EQ(s.offset(3), 9);
  EXPECT_EQ(s.offset(4), 11);
  EXPECT_EQ(s.membership_counts(), (std::vector<int>{1, 2, 3, 3, 3}));
  EXPECT_TRUE(s.covers_all_models());
  EXPECT_FALSE(GroupScheme(2, {{0, 1}}).covers_all_models());
  EXPECT_EQ(s.to_lists()[3], (std::vector<int>{3, 4}));
  EXPECT_THROW(GroupScheme(2, {}), Error);
  EXPECT_THROW(GroupScheme(2, {{0}, {}}), Error);
}

TEST(GroupScheme, StackedRestrictionMatchesZeroFillSum)
{
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const int highest = std::uniform_int_distribution<int>(0, 5)(rng);
    const int k = std::uniform_int_distribution<int>(1, 6)(rng);
    const auto groups = oracle::random_groups(highest, k, rng);
    const GroupScheme scheme(highest, groups);
    const Eigen::MatrixXd r = stack_restrictions(scheme);
    ASSERT_EQ(r, oracle::stacked_restriction(groups, highest));

    const Eigen::VectorXd stacked = Eigen::VectorXd::Random(scheme.total_size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(highest + 1);
    for (Index g = 0; g < scheme.num_groups(); ++g) {
      sum += zero_fill(stacked.segment(scheme.offset(g), scheme.group(g).size()), scheme.group(g));
    }
    EXPECT_LE((r * stacked - sum).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((apply_stacked_restriction(scheme, stacked) - sum).cwiseAbs().maxCoeff(), 1e-14);

    const auto counts = scheme.membership_counts();
    for (int j = 0; j <= highest; ++j) {
      EXPECT_EQ(r.row(j).sum(), counts[static_cast<std::size_t>(j)]);
      EXPECT_EQ((r.row(j).array() == 1.0).count(), counts[static_cast<std::size_t>(j)]);
    }
  }
}
