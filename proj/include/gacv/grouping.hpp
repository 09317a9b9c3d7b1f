#ifndef GACV_GROUPING_HPP
#define GACV_GROUPING_HPP

/**
 * @file
 * @brief Model groups: multi-indices, restriction operators and zero filling.
 *
 * Models are numbered 0..L with model 0 the high-fidelity model. A group is a
 * non-empty subset of {0..L}; its multi-index lists the members in increasing
 * order. The restriction matrix R (n_k x (L+1)) has R(i, lambda_i) = 1 and
 * zeros elsewhere. It is never stored: all work is gather/scatter through the
 * multi-index, and the dense form is only built on request.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gacv/error.hpp"

namespace gacv {

using Index = Eigen::Index;

/// Strictly increasing list of model indices in {0..L}.
class MultiIndex
{
public:
  MultiIndex() = default;

  const std::vector<int>& entries() const noexcept { return entries_; }
  Index size() const noexcept { return static_cast<Index>(entries_.size()); }
  int operator[](Index i) const { return entries_[static_cast<std::size_t>(i)]; }
  int highest_model() const noexcept { return highest_model_; }

  bool contains(int model) const
  {
    return std::binary_search(entries_.begin(), entries_.end(), model);
  }

  /// Position of `model` inside the group (the inverse of the multi-index).
  Index position_of(int model) const
  {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), model);
    if (it == entries_.end() || *it != model) {
      throw Error("model not in group: " + std::to_string(model));
    }
    return static_cast<Index>(it - entries_.begin());
  }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

private:
  friend MultiIndex lex_multi_index(std::span<const int> members, int highest_model);

  std::vector<int> entries_;
  int highest_model_ = 0;
};

/// Sorts a model subset into its multi-index. Members must be distinct and in {0..L}.
inline MultiIndex lex_multi_index(std::span<const int> members, int highest_model)
{
  if (highest_model < 0) {
    throw Error("highest model index must be non-negative");
  }
  if (members.empty()) {
    throw Error("empty group");
  }
  MultiIndex mi;
  mi.highest_model_ = highest_model;
  mi.entries_.assign(members.begin(), members.end());
  std::sort(mi.entries_.begin(), mi.entries_.end());
  if (mi.entries_.front() < 0 || mi.entries_.back() > highest_model) {
    throw Error("group member outside 0.." + std::to_string(highest_model));
  }
  if (std::adjacent_find(mi.entries_.begin(), mi.entries_.end()) != mi.entries_.end()) {
    throw Error("duplicate model in group");
  }
  return mi;
}

inline MultiIndex lex_multi_index(std::initializer_list<int> members, int highest_model)
{
  return lex_multi_index(std::span<const int>(members.begin(), members.size()), highest_model);
}

inline Index inverse_index(const MultiIndex& mi, int model) { return mi.position_of(model); }

/// Dense n_k x (L+1) restriction matrix.
inline Eigen::MatrixXd restriction_matrix(const MultiIndex& mi, int highest_model)
{
  if (mi.size() > 0 && mi.entries().back() > highest_model) {
    throw Error("multi-index entry exceeds L");
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(mi.size(), highest_model + 1);
  for (Index i = 0; i < mi.size(); ++i) {
    r(i, mi[i]) = 1.0;
  }
  return r;
}

/// R^T beta: scatter group weights into a length-(L+1) vector.
inline Eigen::VectorXd zero_fill(const Eigen::VectorXd& beta, const MultiIndex& mi)
{
  if (beta.size() != mi.size()) {
    throw Error("weight vector length " + std::to_string(beta.size()) +
                " does not match group size " + std::to_string(mi.size()));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mi.highest_model() + 1);
  for (Index i = 0; i < mi.size(); ++i) {
    out(mi[i]) = beta(i);
  }
  return out;
}

/// R x: gather the group's entries from a length-(L+1) vector.
inline Eigen::VectorXd restrict_vector(const Eigen::VectorXd& full, const MultiIndex& mi)
{
  Eigen::VectorXd out(mi.size());
  for (Index i = 0; i < mi.size(); ++i) {
    out(i) = full(mi[i]);
  }
  return out;
}

/// R A R'^T: the sub-matrix with rows from `rows` and columns from `cols`.
inline Eigen::MatrixXd restrict_matrix(const Eigen::MatrixXd& full,
                                       const MultiIndex& rows,
                                       const MultiIndex& cols)
{
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (Index i = 0; i < rows.size(); ++i) {
    for (Index j = 0; j < cols.size(); ++j) {
      out(i, j) = full(rows[i], cols[j]);
    }
  }
  return out;
}

/// Ordered list of groups over models 0..L. Order is the caller's and is preserved.
class GroupScheme
{
public:
  GroupScheme() = default;

  GroupScheme(int highest_model, const std::vector<std::vector<int>>& groups)
    : highest_model_(highest_model)
  {
    if (groups.empty()) {
      throw Error("empty group scheme");
    }
    groups_.reserve(groups.size());
    offsets_.assign(1, 0);
    for (const auto& g : groups) {
      groups_.push_back(lex_multi_index(g, highest_model));
      offsets_.push_back(offsets_.back() + groups_.back().size());
    }
  }

  int highest_model() const noexcept { return highest_model_; }
  Index num_models() const noexcept { return highest_model_ + 1; }
  Index num_groups() const noexcept { return static_cast<Index>(groups_.size()); }
  const MultiIndex& group(Index k) const { return groups_[static_cast<std::size_t>(k)]; }
  const std::vector<MultiIndex>& groups() const noexcept { return groups_; }

  /// Sum of group sizes, i.e. the length of the stacked weight vector.
  Index total_size() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }

  /// Start of group k inside the stacked vector; offset(num_groups()) == total_size().
  Index offset(Index k) const { return offsets_[static_cast<std::size_t>(k)]; }

  /// Number of groups containing each model.
  std::vector<int> membership_counts() const
  {
    std::vector<int> counts(static_cast<std::size_t>(num_models()), 0);
    for (const auto& g : groups_) {
      for (int model : g.entries()) {
        ++counts[static_cast<std::size_t>(model)];
      }
    }
    return counts;
  }

  bool covers_all_models() const
  {
    auto counts = membership_counts();
    return std::none_of(counts.begin(), counts.end(), [](int c) { return c == 0; });
  }

  std::vector<std::vector<int>> to_lists() const
  {
    std::vector<std::vector<int>> out;
    out.reserve(groups_.size());
    for (const auto& g : groups_) {
      out.push_back(g.entries());
    }
    return out;
  }

  friend bool operator==(const GroupScheme&, const GroupScheme&) = default;

private:
  int highest_model_ = 0;
  std::vector<MultiIndex> groups_;
  std::vector<Index> offsets_;
};

/// Horizontal concatenation [R^1^T ... R^K^T], shape (L+1) x sum(n_k).
inline Eigen::MatrixXd stack_restrictions(const GroupScheme& scheme)
{
  if (scheme.num_groups() == 0) {
    throw Error("empty group scheme");
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(scheme.num_models(), scheme.total_size());
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    const auto& g = scheme.group(k);
    for (Index i = 0; i < g.size(); ++i) {
      r(g[i], scheme.offset(k) + i) = 1.0;
    }
  }
  return r;
}

/// R beta for a stacked vector: per-model sums of weights across groups.
inline Eigen::VectorXd apply_stacked_restriction(const GroupScheme& scheme,
                                                 const Eigen::VectorXd& stacked)
{
  if (stacked.size() != scheme.total_size()) {
    throw Error("stacked vector length does not match the group scheme");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(scheme.num_models());
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    const auto& g = scheme.group(k);
    for (Index i = 0; i < g.size(); ++i) {
      out(g[i]) += stacked(scheme.offset(k) + i);
    }
  }
  return out;
}

}  // namespace gacv

#endif  // GACV_GROUPING_HPP
