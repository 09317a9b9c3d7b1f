#ifndef GACV_COVARIANCE_HPP
#define GACV_COVARIANCE_HPP

/**
 * @file
 * @brief Estimator-level covariance of grouped Monte Carlo mean estimators.
 *
 * Every group k averages its models over an index set Z^k drawn from one global
 * i.i.d. sample stream. For Monte Carlo means the covariance between the
 * estimator of model i in group k and model j in group k' is
 *
 *     |Z^k ∩ Z^k'| / (|Z^k| |Z^k'|) * Chat(i, j),
 *
 * which gives (1/m^k) Chat^k on the diagonal blocks, zero blocks for disjoint
 * groups and 1 / max(m^k, m^k') blocks for prefix-nested groups.
 */

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "gacv/error.hpp"
#include "gacv/grouping.hpp"

namespace gacv {

/// Model covariance Chat, per-evaluation costs w and (simulation-only) means.
struct ModelEnsembleSpec
{
  Eigen::MatrixXd cov;
  Eigen::VectorXd costs;
  Eigen::VectorXd means;

  Index num_models() const noexcept { return cov.rows(); }
  int highest_model() const noexcept { return static_cast<int>(cov.rows()) - 1; }

  /// Throws unless cov is symmetric positive definite and costs are positive.
  void validate() const
  {
    const Index n = cov.rows();
    if (n == 0 || cov.cols() != n) {
      throw Error("model covariance must be a non-empty square matrix");
    }
    if (costs.size() != n) {
      throw Error("cost vector length does not match covariance dimension");
    }
    if (means.size() != 0 && means.size() != n) {
      throw Error("mean vector length does not match covariance dimension");
    }
    if ((costs.array() <= 0.0).any()) {
      throw Error("model costs must be strictly positive");
    }
    const double scale = std::max(cov.cwiseAbs().maxCoeff(), 1e-300);
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw Error("model covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 1e-10 * cov.trace()) {
      throw Error("model covariance is not positive definite");
    }
  }

  Eigen::VectorXd mean_vector() const
  {
    return means.size() == 0 ? Eigen::VectorXd::Zero(num_models()) : means;
  }
};

/// Finite set of sample indices stored as sorted, disjoint, non-adjacent [lo, hi) ranges.
class IndexSet
{
public:
  using Range = std::pair<std::int64_t, std::int64_t>;

  IndexSet() = default;

  static IndexSet range(std::int64_t lo, std::int64_t hi)
  {
    if (lo < 0 || hi < lo) {
      throw Error("invalid index range");
    }
    IndexSet s;
    if (hi > lo) {
      s.ranges_.emplace_back(lo, hi);
    }
    return s;
  }

  static IndexSet from_ranges(std::vector<Range> ranges)
  {
    std::sort(ranges.begin(), ranges.end());
    IndexSet s;
    for (const auto& [lo, hi] : ranges) {
      if (lo < 0 || hi < lo) {
        throw Error("invalid index range");
      }
      if (hi == lo) {
        continue;
      }
      if (!s.ranges_.empty() && lo <= s.ranges_.back().second) {
        s.ranges_.back().second = std::max(s.ranges_.back().second, hi);
      } else {
        s.ranges_.emplace_back(lo, hi);
      }
    }
    return s;
  }

  static IndexSet from_indices(std::vector<std::int64_t> indices)
  {
    std::vector<Range> ranges;
    ranges.reserve(indices.size());
    for (auto i : indices) {
      if (i < 0) {
        throw Error("negative sample index");
      }
      ranges.emplace_back(i, i + 1);
    }
    return from_ranges(std::move(ranges));
  }

  const std::vector<Range>& ranges() const noexcept { return ranges_; }
  bool empty() const noexcept { return ranges_.empty(); }

  std::int64_t size() const noexcept
  {
    std::int64_t n = 0;
    for (const auto& [lo, hi] : ranges_) {
      n += hi - lo;
    }
    return n;
  }

  /// One past the largest index, or 0 when empty.
  std::int64_t end() const noexcept { return ranges_.empty() ? 0 : ranges_.back().second; }

  std::int64_t intersection_size(const IndexSet& other) const noexcept
  {
    std::int64_t n = 0;
    std::size_t a = 0;
    std::size_t b = 0;
    while (a < ranges_.size() && b < other.ranges_.size()) {
      const auto lo = std::max(ranges_[a].first, other.ranges_[b].first);
      const auto hi = std::min(ranges_[a].second, other.ranges_[b].second);
      if (hi > lo) {
        n += hi - lo;
      }
      if (ranges_[a].second < other.ranges_[b].second) {
        ++a;
      } else {
        ++b;
      }
    }
    return n;
  }

  friend bool operator==(const IndexSet&, const IndexSet&) = default;

private:
  std::vector<Range> ranges_;
};

/// A group scheme plus the sample index set each group averages over.
struct SampleDesign
{
  GroupScheme scheme;
  std::vector<IndexSet> index_sets;

  Index num_groups() const noexcept { return scheme.num_groups(); }

  std::vector<std::int64_t> counts() const
  {
    std::vector<std::int64_t> m;
    m.reserve(index_sets.size());
    for (const auto& s : index_sets) {
      m.push_back(s.size());
    }
    return m;
  }

  std::int64_t stream_length() const noexcept
  {
    std::int64_t n = 0;
    for (const auto& s : index_sets) {
      n = std::max(n, s.end());
    }
    return n;
  }

  void validate() const
  {
    if (static_cast<Index>(index_sets.size()) != scheme.num_groups()) {
      throw Error("sample design needs one index set per group");
    }
    for (const auto& s : index_sets) {
      if (s.empty()) {
        throw Error("empty group");
      }
    }
  }
};

/// Estimator covariance with its group-block layout.
struct BlockCovariance
{
  Eigen::MatrixXd matrix;
  std::vector<Index> offsets;  // size K + 1

  Index dim() const noexcept { return matrix.rows(); }
  Index num_groups() const noexcept
  {
    return offsets.empty() ? 0 : static_cast<Index>(offsets.size()) - 1;
  }

  auto block(Index k, Index kp) const
  {
    const auto uk = static_cast<std::size_t>(k);
    const auto ukp = static_cast<std::size_t>(kp);
    return matrix.block(offsets[uk], offsets[ukp], offsets[uk + 1] - offsets[uk],
                        offsets[ukp + 1] - offsets[ukp]);
  }

  static BlockCovariance for_scheme(const GroupScheme& scheme, Eigen::MatrixXd matrix)
  {
    if (matrix.rows() != scheme.total_size() || matrix.cols() != scheme.total_size()) {
      throw Error("estimator covariance dimension does not match the group scheme");
    }
    BlockCovariance c;
    c.matrix = std::move(matrix);
    for (Index k = 0; k <= scheme.num_groups(); ++k) {
      c.offsets.push_back(scheme.offset(k));
    }
    return c;
  }
};

/// o(k, k') = |Z^k ∩ Z^k'|.
inline Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>
overlap_counts(const SampleDesign& design)
{
  const Index k_count = static_cast<Index>(design.index_sets.size());
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> o(k_count, k_count);
  for (Index a = 0; a < k_count; ++a) {
    for (Index b = a; b < k_count; ++b) {
      const auto n = design.index_sets[static_cast<std::size_t>(a)].intersection_size(
        design.index_sets[static_cast<std::size_t>(b)]);
      o(a, b) = n;
      o(b, a) = n;
    }
  }
  return o;
}

namespace detail {

inline void check_spec_matches(const ModelEnsembleSpec& spec, const GroupScheme& scheme)
{
  if (spec.num_models() != scheme.num_models()) {
    throw Error("group scheme and model covariance disagree on the number of models");
  }
}

}  // namespace detail

inline BlockCovariance assemble_block_covariance(const ModelEnsembleSpec& spec,
                                                 const SampleDesign& design)
{
  design.validate();
  detail::check_spec_matches(spec, design.scheme);
  const auto& scheme = design.scheme;
  const auto o = overlap_counts(design);
  const auto m = design.counts();
  const Eigen::MatrixXd cov = 0.5 * (spec.cov + spec.cov.transpose());

  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(scheme.total_size(), scheme.total_size());
  for (Index a = 0; a < scheme.num_groups(); ++a) {
    for (Index b = a; b < scheme.num_groups(); ++b) {
      if (o(a, b) == 0) {
        continue;
      }
      const double scale = static_cast<double>(o(a, b)) /
                           (static_cast<double>(m[static_cast<std::size_t>(a)]) *
                            static_cast<double>(m[static_cast<std::size_t>(b)]));
      const Eigen::MatrixXd blk = scale * restrict_matrix(cov, scheme.group(a), scheme.group(b));
      c.block(scheme.offset(a), scheme.offset(b), blk.rows(), blk.cols()) = blk;
      if (b != a) {
        c.block(scheme.offset(b), scheme.offset(a), blk.cols(), blk.rows()) = blk.transpose();
      }
    }
  }
  return BlockCovariance::for_scheme(scheme, std::move(c));
}

/// Block-diagonal C for independent groups: blocks (1/m^k) R^k Chat R^k^T.
inline BlockCovariance independent_block_covariance(const ModelEnsembleSpec& spec,
                                                    const GroupScheme& scheme,
                                                    std::span<const double> m)
{
  detail::check_spec_matches(spec, scheme);
  if (static_cast<Index>(m.size()) != scheme.num_groups()) {
    throw Error("one sample count per group is required");
  }
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(scheme.total_size(), scheme.total_size());
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    const double mk = m[static_cast<std::size_t>(k)];
    if (!(mk > 0.0)) {
      throw Error("empty group");
    }
    const auto& g = scheme.group(k);
    c.block(scheme.offset(k), scheme.offset(k), g.size(), g.size()) =
      restrict_matrix(spec.cov, g, g) / mk;
  }
  return BlockCovariance::for_scheme(scheme, std::move(c));
}

/// Smallest eigenvalue of a symmetric matrix.
inline double spd_check(const Eigen::MatrixXd& c)
{
  if (c.rows() != c.cols()) {
    throw Error("matrix is not square");
  }
  if (c.size() == 0) {
    throw Error("empty matrix");
  }
  const double scale = std::max(c.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error("matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Scale-invariant invertibility cutoff: lambda_min > 1e-10 * trace / dim.
inline bool is_optimizable(const Eigen::MatrixXd& c)
{
  return spd_check(c) > 1e-10 * c.trace() / static_cast<double>(c.rows());
}

/**
 * Removes estimators that are exact duplicates of an earlier one: the same model
 * averaged over an identical index set in two groups. Such pairs make C
 * singular without adding information; the reduced design spans the same set
 * of linear estimators, so its optimal variance is the original's.
 * Groups left empty are dropped.
 */
inline SampleDesign merge_duplicate_estimators(const SampleDesign& design)
{
  design.validate();
  const auto& scheme = design.scheme;
  std::vector<std::vector<int>> groups;
  std::vector<IndexSet> sets;
  std::vector<std::pair<int, std::size_t>> seen;  // (model, representative group)
  std::vector<std::size_t> kept_index;
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    const auto& set = design.index_sets[static_cast<std::size_t>(k)];
    std::vector<int> keep;
    for (int model : scheme.group(k).entries()) {
      bool duplicate = false;
      for (const auto& [seen_model, seen_group] : seen) {
        if (seen_model == model && sets[seen_group] == set) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) {
        keep.push_back(model);
      }
    }
    if (keep.empty()) {
      continue;
    }
    groups.push_back(keep);
    sets.push_back(set);
    for (int model : keep) {
      seen.emplace_back(model, sets.size() - 1);
    }
  }
  return SampleDesign{GroupScheme(scheme.highest_model(), groups), std::move(sets)};
}

}  // namespace gacv

#endif  // GACV_COVARIANCE_HPP
