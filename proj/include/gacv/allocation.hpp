#ifndef GACV_ALLOCATION_HPP
#define GACV_ALLOCATION_HPP

/**
 * @file
 * @brief SAOB-M groupings, nested-sample conversion and ML-BLUE sample allocation.
 *
 * SAOB-M groups consecutive models: S^1 = {0..M-1} and S^k = {k-1..min(k+M-2, L)}
 * for k = 2..L+1 (0-based below: group 0 = {0..M-1}, group k = {k..min(k+M-1, L)}).
 *
 * The optimal ML-BLUE allocation minimizes
 *
 *     phi(m) = e0^T (sum_k m^k R^k^T Chat^k^-1 R^k)^-1 e0
 *
 * subject to a cost budget. Minimizing the epigraph variable t under the
 * Schur-complement constraint [Psi(m) e0; e0^T t] >= 0 is the same problem,
 * because that LMI holds iff t >= phi(m); phi is a matrix-fractional function
 * of an affine argument and therefore convex. We minimize it directly by
 * projected gradient descent on the cost shares x^k = c^k m^k, where c^k is
 * the per-sample cost of group k, so the budget is the simplex sum(x) <= W.
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "gacv/covariance.hpp"
#include "gacv/error.hpp"
#include "gacv/grouping.hpp"

namespace gacv {

struct SaobScheme
{
  int highest_model = 0;
  int max_group_size = 1;
  GroupScheme groups;
};

inline SaobScheme saob_groups(int highest_model, int max_group_size)
{
  if (highest_model < 0) {
    throw Error("L must be non-negative");
  }
  if (max_group_size < 1 || max_group_size > highest_model + 1) {
    throw Error("M must lie in 1..L+1");
  }
  std::vector<std::vector<int>> groups;
  std::vector<int> first(static_cast<std::size_t>(max_group_size));
  std::iota(first.begin(), first.end(), 0);
  groups.push_back(first);
  for (int k = 1; k <= highest_model; ++k) {
    std::vector<int> g;
    for (int l = k; l <= std::min(k + max_group_size - 1, highest_model); ++l) {
      g.push_back(l);
    }
    groups.push_back(g);
  }
  return {highest_model, max_group_size, GroupScheme(highest_model, groups)};
}

/// n^l = sum of m^k over the groups containing model l (independent-sample accounting).
inline std::vector<std::int64_t> model_eval_counts_mlblue(const GroupScheme& scheme,
                                                          std::span<const std::int64_t> m)
{
  if (static_cast<Index>(m.size()) != scheme.num_groups()) {
    throw Error("one sample count per group is required");
  }
  std::vector<std::int64_t> n(static_cast<std::size_t>(scheme.num_models()), 0);
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    for (int model : scheme.group(k).entries()) {
      n[static_cast<std::size_t>(model)] += m[static_cast<std::size_t>(k)];
    }
  }
  return n;
}

/**
 * Evaluations per model when every group averages over a prefix [0, mhat^k)
 * of one shared stream: model l is evaluated on the union of its groups'
 * prefixes, i.e. max{mhat^k : l in S^k} times.
 */
inline std::vector<std::int64_t> model_eval_counts_nested(const GroupScheme& scheme,
                                                          std::span<const std::int64_t> m_hat)
{
  if (static_cast<Index>(m_hat.size()) != scheme.num_groups()) {
    throw Error("one sample count per group is required");
  }
  std::vector<std::int64_t> n(static_cast<std::size_t>(scheme.num_models()), 0);
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    for (int model : scheme.group(k).entries()) {
      auto& nl = n[static_cast<std::size_t>(model)];
      nl = std::max(nl, m_hat[static_cast<std::size_t>(k)]);
    }
  }
  return n;
}

/**
 * Nested-sample allocation with the same per-model evaluation counts as the
 * ML-BLUE allocation m: mhat^0 = m^0 and mhat^l = sum_{k=max(l-M+1,0)}^{l} m^k.
 *
 * The counts match only when every model's own group (group l for model l)
 * has the largest mhat among the groups containing it; check with
 * model_eval_counts_nested.
 */
inline std::vector<std::int64_t> nested_conversion(std::span<const std::int64_t> m,
                                                   const SaobScheme& saob)
{
  if (static_cast<Index>(m.size()) != saob.groups.num_groups()) {
    throw Error("one sample count per group is required");
  }
  const int big_m = saob.max_group_size;
  std::vector<std::int64_t> m_hat(m.size(), 0);
  for (int l = 0; l <= saob.highest_model; ++l) {
    for (int k = std::max(l - big_m + 1, 0); k <= l; ++k) {
      m_hat[static_cast<std::size_t>(l)] += m[static_cast<std::size_t>(k)];
    }
  }
  return m_hat;
}

/// Prefix design: group k averages over samples [0, mhat^k), so |Z^k ∩ Z^k'| = min(mhat^k, mhat^k').
inline SampleDesign nested_sample_design(std::span<const std::int64_t> m_hat,
                                         const GroupScheme& scheme)
{
  if (static_cast<Index>(m_hat.size()) != scheme.num_groups()) {
    throw Error("one sample count per group is required");
  }
  SampleDesign d{scheme, {}};
  for (auto mk : m_hat) {
    if (mk < 1) {
      throw Error("empty group");
    }
    d.index_sets.push_back(IndexSet::range(0, mk));
  }
  return d;
}

/// Per-sample cost of each group: sum of its members' costs.
inline Eigen::VectorXd group_costs(const GroupScheme& scheme, const Eigen::VectorXd& costs)
{
  if (costs.size() != scheme.num_models()) {
    throw Error("cost vector length does not match the number of models");
  }
  Eigen::VectorXd c(scheme.num_groups());
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    c(k) = 0.0;
    for (int model : scheme.group(k).entries()) {
      c(k) += costs(model);
    }
  }
  return c;
}

/// sum_k m^k * sum_{l in S^k} w_l.
template <typename Count>
double total_cost(const GroupScheme& scheme, std::span<const Count> m, const Eigen::VectorXd& costs)
{
  if (static_cast<Index>(m.size()) != scheme.num_groups()) {
    throw Error("one sample count per group is required");
  }
  const Eigen::VectorXd c = group_costs(scheme, costs);
  double total = 0.0;
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    total += static_cast<double>(m[static_cast<std::size_t>(k)]) * c(k);
  }
  return total;
}

/// sum_l n^l w_l.
inline double model_cost(std::span<const std::int64_t> evaluations, const Eigen::VectorXd& costs)
{
  if (static_cast<Index>(evaluations.size()) != costs.size()) {
    throw Error("evaluation count length does not match the number of models");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < evaluations.size(); ++l) {
    total += static_cast<double>(evaluations[l]) * costs(static_cast<Index>(l));
  }
  return total;
}

/// phi(m) and its gradient for independent Monte Carlo groups.
class MlblueObjective
{
public:
  MlblueObjective(const ModelEnsembleSpec& spec, const GroupScheme& scheme)
    : n_models_(scheme.num_models())
  {
    if (spec.num_models() != scheme.num_models()) {
      throw Error("group scheme and model covariance disagree on the number of models");
    }
    for (Index k = 0; k < scheme.num_groups(); ++k) {
      const auto& g = scheme.group(k);
      const Eigen::MatrixXd inv = restrict_matrix(spec.cov, g, g).llt().solve(
        Eigen::MatrixXd::Identity(g.size(), g.size()));
      Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n_models_, n_models_);
      for (Index i = 0; i < g.size(); ++i) {
        for (Index j = 0; j < g.size(); ++j) {
          psi(g[i], g[j]) = inv(i, j);
        }
      }
      psi_.push_back(std::move(psi));
    }
  }

  Index num_groups() const noexcept { return static_cast<Index>(psi_.size()); }

  /// phi(m); +infinity when sum_k m^k Psi_k is singular.
  double value(const Eigen::VectorXd& m) const
  {
    Eigen::VectorXd v;
    return solve(m, v);
  }

  /// phi(m) with d phi / d m^k = -v^T Psi_k v, v = Psi(m)^-1 e0.
  double value_and_gradient(const Eigen::VectorXd& m, Eigen::VectorXd& grad) const
  {
    Eigen::VectorXd v;
    const double phi = solve(m, v);
    grad.resize(num_groups());
    if (!std::isfinite(phi)) {
      grad.setZero();
      return phi;
    }
    for (Index k = 0; k < num_groups(); ++k) {
      grad(k) = -v.dot(psi_[static_cast<std::size_t>(k)] * v);
    }
    return phi;
  }

private:
  double solve(const Eigen::VectorXd& m, Eigen::VectorXd& v) const
  {
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(n_models_, n_models_);
    for (Index k = 0; k < num_groups(); ++k) {
      if (m(k) != 0.0) {
        total += m(k) * psi_[static_cast<std::size_t>(k)];
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(total);
    if (llt.info() != Eigen::Success) {
      return std::numeric_limits<double>::infinity();
    }
    v = llt.solve(Eigen::VectorXd::Unit(n_models_, 0));
    if (!(v(0) > 0.0) || !std::isfinite(v(0))) {
      return std::numeric_limits<double>::infinity();
    }
    return v(0);
  }

  Index n_models_;
  std::vector<Eigen::MatrixXd> psi_;
};

struct AllocationOptions
{
  double min_samples = 1.0;
  int max_iterations = 100000;
  double relative_tolerance = 1e-10;
  int stall_window = 10;
  int max_exchange_rounds = 1000;
};

struct AllocationResult
{
  std::vector<std::int64_t> m;
  Eigen::VectorXd continuous_m;
  double variance = 0.0;             // phi at the integer allocation
  double continuous_variance = 0.0;  // phi at the continuous optimum
  double cost = 0.0;
  int iterations = 0;
};

namespace detail {

/// Euclidean projection onto {y >= 0, sum(y) <= cap}.
inline Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& y, double cap)
{
  Eigen::VectorXd clipped = y.cwiseMax(0.0);
  if (clipped.sum() <= cap) {
    return clipped;
  }
  std::vector<double> sorted(y.data(), y.data() + y.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double tau = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    running += sorted[i];
    const double candidate = (running - cap) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) {
      tau = candidate;
    }
  }
  return (y.array() - tau).cwiseMax(0.0).matrix();
}

}  // namespace detail

/**
 * Optimal ML-BLUE allocation under sum_k m^k c^k <= budget and m^k >= min_samples.
 *
 * The continuous problem is solved by projected gradient with backtracking
 * (Armijo) steps; the result is floored, the leftover budget is spent
 * greedily on the group with the largest variance decrease per unit cost, and
 * single-sample exchanges between groups are applied while they help.
 */
inline AllocationResult optimize_mlblue_allocation(const ModelEnsembleSpec& spec,
                                                   const GroupScheme& scheme,
                                                   double budget,
                                                   const AllocationOptions& options = {})
{
  spec.validate();
  detail::check_spec_matches(spec, scheme);
  if (!scheme.covers_all_models()) {
    throw Error("every model must belong to at least one group");
  }
  if (!(budget > 0.0)) {
    throw Error("budget must be positive");
  }
  if (!(options.min_samples >= 0.0)) {
    throw Error("minimum samples per group must be non-negative");
  }

  const Index k_count = scheme.num_groups();
  const Eigen::VectorXd c = group_costs(scheme, spec.costs);
  const double int_min = std::ceil(options.min_samples - 1e-12);
  const double slack = 1e-12 * budget;
  const Eigen::VectorXd lower = c * options.min_samples;
  if (lower.sum() > budget + slack || int_min * c.sum() > budget + slack) {
    throw Error("budget below minimum allocation");
  }

  const MlblueObjective objective(spec, scheme);
  const double free_budget = std::max(budget - lower.sum(), 0.0);

  // Cost shares above the lower bound: y = x - lower, y >= 0, sum(y) <= free_budget.
  Eigen::VectorXd y = Eigen::VectorXd::Constant(k_count, free_budget / static_cast<double>(k_count));
  auto to_m = [&](const Eigen::VectorXd& yy) -> Eigen::VectorXd {
    return ((yy + lower).array() / c.array()).matrix();
  };

  Eigen::VectorXd grad_m;
  double f = objective.value_and_gradient(to_m(y), grad_m);
  if (!std::isfinite(f)) {
    throw NumericalError("initial allocation gives a singular ML-BLUE system");
  }
  std::deque<double> history{f};
  double step = free_budget / std::max(grad_m.cwiseQuotient(c).norm(), 1e-300);
  int iterations = 0;
  for (; iterations < options.max_iterations && free_budget > 0.0; ++iterations) {
    const Eigen::VectorXd g = grad_m.cwiseQuotient(c);
    bool accepted = false;
    Eigen::VectorXd y_new;
    double f_new = f;
    Eigen::VectorXd grad_new;
    for (int ls = 0; ls < 60; ++ls) {
      y_new = detail::project_capped_simplex(y - step * g, free_budget);
      const Eigen::VectorXd d = y_new - y;
      if (d.norm() <= 1e-15 * (1.0 + y.norm())) {
        break;
      }
      f_new = objective.value_and_gradient(to_m(y_new), grad_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(d)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      break;
    }
    y = y_new;
    f = f_new;
    grad_m = grad_new;
    step *= 2.0;
    history.push_back(f);
    if (static_cast<int>(history.size()) > options.stall_window) {
      const double old = history.front();
      history.pop_front();
      if ((old - f) <= options.relative_tolerance * std::abs(f)) {
        break;
      }
    }
  }

  AllocationResult result;
  result.continuous_m = to_m(y);
  result.continuous_variance = f;
  result.iterations = iterations;

  Eigen::VectorXd m_int(k_count);
  for (Index k = 0; k < k_count; ++k) {
    m_int(k) = std::max(std::floor(result.continuous_m(k) + 1e-9), int_min);
  }
  // Greedy fill: buy one more sample for the best group per unit cost while affordable.
  auto fill = [&](Eigen::VectorXd& m, double& value) {
    double spent = m.dot(c);
    for (;;) {
      Index best = -1;
      double best_gain = -std::numeric_limits<double>::infinity();
      double best_value = value;
      for (Index k = 0; k < k_count; ++k) {
        if (spent + c(k) > budget + slack) {
          continue;
        }
        Eigen::VectorXd trial = m;
        trial(k) += 1.0;
        const double v = objective.value(trial);
        const double gain = std::isfinite(value) ? (value - v) / c(k) : -v;
        if (gain > best_gain) {
          best_gain = gain;
          best = k;
          best_value = v;
        }
      }
      if (best < 0) {
        return;
      }
      m(best) += 1.0;
      spent += c(best);
      value = best_value;
    }
  };
  // Greedy drop: release the sample (outside group keep) whose loss per unit cost is smallest
  // until the allocation is affordable. Returns false if no feasible allocation is reached.
  auto drop = [&](Eigen::VectorXd& m, Index keep) {
    while (m.dot(c) > budget + slack) {
      Index best = -1;
      double best_loss = std::numeric_limits<double>::infinity();
      for (Index k = 0; k < k_count; ++k) {
        if (k == keep || m(k) - 1.0 < int_min) {
          continue;
        }
        Eigen::VectorXd trial = m;
        trial(k) -= 1.0;
        const double v = objective.value(trial);
        if (std::isfinite(v) && v / c(k) < best_loss) {
          best_loss = v / c(k);
          best = k;
        }
      }
      if (best < 0) {
        return false;
      }
      m(best) -= 1.0;
    }
    return true;
  };
  double current = objective.value(m_int);
  fill(m_int, current);

  // Local search: add one sample to group i, release just enough samples of group j
  // to pay for it, refill, and keep the best improvement.
  for (int round = 0; round < options.max_exchange_rounds; ++round) {
    Eigen::VectorXd best_m = m_int;
    double best_value = current;
    auto consider = [&](Eigen::VectorXd trial) {
      double v = objective.value(trial);
      fill(trial, v);
      if (std::isfinite(v) && (v < best_value * (1.0 - 1e-14) || !std::isfinite(best_value))) {
        best_value = v;
        best_m = trial;
      }
    };
    for (Index i = 0; i < k_count; ++i) {
      Eigen::VectorXd grown = m_int;
      grown(i) += 1.0;
      if (drop(grown, i)) {
        consider(grown);
      }
      for (Index j = 0; j < k_count; ++j) {
        if (i == j) {
          continue;
        }
        Eigen::VectorXd trial = m_int;
        trial(i) += 1.0;
        const double deficit = trial.dot(c) - budget - slack;
        if (deficit > 0.0) {
          trial(j) -= std::ceil(deficit / c(j) - 1e-12);
          while (trial.dot(c) > budget + slack) {
            trial(j) -= 1.0;
          }
        }
        if (trial(j) >= int_min) {
          consider(trial);
        }
      }
    }
    if (best_m == m_int) {
      break;
    }
    m_int = best_m;
    current = best_value;
  }
  const double spent = m_int.dot(c);
  double high_fidelity_samples = 0.0;
  for (Index k = 0; k < k_count; ++k) {
    if (scheme.group(k).contains(0)) {
      high_fidelity_samples += m_int(k);
    }
  }
  if (!std::isfinite(current) || high_fidelity_samples < 1.0) {
    throw NumericalError("integer allocation leaves the high-fidelity model unsampled");
  }

  result.m.resize(static_cast<std::size_t>(k_count));
  for (Index k = 0; k < k_count; ++k) {
    result.m[static_cast<std::size_t>(k)] = static_cast<std::int64_t>(m_int(k));
  }
  result.variance = current;
  result.cost = spent;
  return result;
}

}  // namespace gacv

#endif  // GACV_ALLOCATION_HPP
