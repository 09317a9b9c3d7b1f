#ifndef GACV_WEIGHTS_HPP
#define GACV_WEIGHTS_HPP

/**
 * @file
 * @brief Weight algebra of the grouped approximate control variate (GACV).
 *
 * A GACV estimate is sum_k beta^k . Qhat^k where Qhat^k stacks the estimators of
 * the models in group k. With the stacked weight vector beta and estimator
 * covariance C its variance is beta^T C beta, and it is unbiased for every
 * model ensemble iff R beta = e0 (total weight one on model 0, zero on every
 * other model). The variance-minimizing weights under that constraint are
 *
 *     beta* = C^-1 R^T (R C^-1 R^T)^-1 e0,   Var* = e0^T (R C^-1 R^T)^-1 e0.
 *
 * The model-specific condition sum_l E[Q_l] beta_l = E[Q_0] (1 - beta_0) is
 * weaker, but it depends on the unknown means and is not checked here.
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gacv/covariance.hpp"
#include "gacv/error.hpp"
#include "gacv/grouping.hpp"

namespace gacv {

inline constexpr double kUnbiasedTolerance = 1e-10;
inline constexpr double kIllConditioned = 1e12;

/// Per-group coefficient vectors beta^k, aligned with a GroupScheme.
struct WeightSet
{
  std::vector<Eigen::VectorXd> per_group;

  Index num_groups() const noexcept { return static_cast<Index>(per_group.size()); }

  void check_aligned(const GroupScheme& scheme) const
  {
    if (num_groups() != scheme.num_groups()) {
      throw Error("weight set has " + std::to_string(num_groups()) + " groups, scheme has " +
                  std::to_string(scheme.num_groups()));
    }
    for (Index k = 0; k < num_groups(); ++k) {
      if (per_group[static_cast<std::size_t>(k)].size() != scheme.group(k).size()) {
        throw Error("weights for group " + std::to_string(k) + " do not match the group size");
      }
    }
  }

  Eigen::VectorXd stacked() const
  {
    Index n = 0;
    for (const auto& b : per_group) {
      n += b.size();
    }
    Eigen::VectorXd out(n);
    Index pos = 0;
    for (const auto& b : per_group) {
      out.segment(pos, b.size()) = b;
      pos += b.size();
    }
    return out;
  }

  static WeightSet from_stacked(const GroupScheme& scheme, const Eigen::VectorXd& stacked)
  {
    if (stacked.size() != scheme.total_size()) {
      throw Error("stacked weight length does not match the group scheme");
    }
    WeightSet w;
    w.per_group.reserve(static_cast<std::size_t>(scheme.num_groups()));
    for (Index k = 0; k < scheme.num_groups(); ++k) {
      w.per_group.emplace_back(stacked.segment(scheme.offset(k), scheme.group(k).size()));
    }
    return w;
  }

  /// Zero-filled weights as an (L+1) x K matrix; column k is R^k^T beta^k.
  Eigen::MatrixXd zero_filled(const GroupScheme& scheme) const
  {
    check_aligned(scheme);
    Eigen::MatrixXd out(scheme.num_models(), scheme.num_groups());
    for (Index k = 0; k < scheme.num_groups(); ++k) {
      out.col(k) = zero_fill(per_group[static_cast<std::size_t>(k)], scheme.group(k));
    }
    return out;
  }
};

/// beta^T C beta.
inline double estimator_variance(const WeightSet& weights, const BlockCovariance& c)
{
  const Eigen::VectorXd beta = weights.stacked();
  if (beta.size() != c.dim()) {
    throw Error("weight set dimension " + std::to_string(beta.size()) +
                " does not match covariance dimension " + std::to_string(c.dim()));
  }
  return beta.dot(c.matrix * beta);
}

/// r = sum_k R^k^T beta^k - e0. The weights are unbiased for any ensemble iff r = 0.
inline Eigen::VectorXd check_unbiased(const WeightSet& weights, const GroupScheme& scheme)
{
  weights.check_aligned(scheme);
  Eigen::VectorXd r = apply_stacked_restriction(scheme, weights.stacked());
  r(0) -= 1.0;
  return r;
}

inline bool is_unbiased(const WeightSet& weights, const GroupScheme& scheme,
                        double tol = kUnbiasedTolerance)
{
  return check_unbiased(weights, scheme).lpNorm<Eigen::Infinity>() <= tol;
}

struct OptimalWeights
{
  WeightSet weights;
  double variance = 0.0;
  double condition_number = 1.0;
  /// Set when cond(C) > 1e12; the result is still returned.
  bool ill_conditioned = false;
};

namespace detail {

inline double condition_number(const Eigen::MatrixXd& c, double* min_eig = nullptr)
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (min_eig != nullptr) {
    *min_eig = lo;
  }
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

inline std::string format_condition(double cond)
{
  std::ostringstream os;
  os << " (condition number " << cond << ")";
  return os.str();
}

inline void require_coverage(const GroupScheme& scheme)
{
  const auto counts = scheme.membership_counts();
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) {
      throw NumericalError("infeasible constraint: model " + std::to_string(j) +
                           " appears in no group");
    }
  }
}

/// Cholesky of the (L+1) x (L+1) Gram matrix, rejecting numerically singular ones.
inline Eigen::LLT<Eigen::MatrixXd> factor_gram(const Eigen::MatrixXd& gram)
{
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  double lo = 0.0;
  const double cond = condition_number(gram, &lo);
  if (llt.info() != Eigen::Success || !(lo > 0.0) || cond > 1e14) {
    throw NumericalError("infeasible constraint: R C^-1 R^T is singular" +
                         format_condition(cond), cond);
  }
  return llt;
}

}  // namespace detail

/// Minimum-variance unbiased weights for an arbitrary estimator covariance C.
inline OptimalWeights optimal_weights(const BlockCovariance& c, const GroupScheme& scheme)
{
  if (c.dim() != scheme.total_size()) {
    throw Error("covariance dimension does not match the group scheme");
  }
  detail::require_coverage(scheme);

  double min_eig = 0.0;
  const double cond = detail::condition_number(c.matrix, &min_eig);
  if (!(min_eig > 1e-10 * c.matrix.trace() / static_cast<double>(c.dim()))) {
    throw NumericalError("degenerate design: estimator covariance is singular" +
                         detail::format_condition(cond), cond);
  }
  Eigen::LLT<Eigen::MatrixXd> c_llt(c.matrix);
  if (c_llt.info() != Eigen::Success) {
    throw NumericalError("degenerate design: Cholesky factorization failed" +
                         detail::format_condition(cond), cond);
  }

  const Eigen::MatrixXd r = stack_restrictions(scheme);
  const Eigen::MatrixXd c_inv_rt = c_llt.solve(r.transpose());
  Eigen::MatrixXd gram = r * c_inv_rt;
  gram = 0.5 * (gram + gram.transpose()).eval();
  const auto gram_llt = detail::factor_gram(gram);

  const Eigen::VectorXd gamma = gram_llt.solve(Eigen::VectorXd::Unit(scheme.num_models(), 0));
  OptimalWeights out;
  out.weights = WeightSet::from_stacked(scheme, c_inv_rt * gamma);
  out.variance = gamma(0);
  out.condition_number = cond;
  out.ill_conditioned = cond > kIllConditioned;
  return out;
}

/// e0^T (R C^-1 R^T)^-1 e0.
inline double optimal_variance(const BlockCovariance& c, const GroupScheme& scheme)
{
  return optimal_weights(c, scheme).variance;
}

/**
 * Optimal weights when the groups are mutually independent, from the per-group
 * estimator covariances C^k alone:
 *
 *     beta^k = C^k^-1 R^k (sum_j R^j^T C^j^-1 R^j)^-1 e0.
 */
inline OptimalWeights independent_optimal_weights(const std::vector<Eigen::MatrixXd>& blocks,
                                                  const GroupScheme& scheme)
{
  if (static_cast<Index>(blocks.size()) != scheme.num_groups()) {
    throw Error("one covariance block per group is required");
  }
  detail::require_coverage(scheme);
  const Index n_models = scheme.num_models();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n_models, n_models);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors;
  factors.reserve(blocks.size());
  double worst_cond = 1.0;
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    const auto& g = scheme.group(k);
    const auto& ck = blocks[static_cast<std::size_t>(k)];
    if (ck.rows() != g.size() || ck.cols() != g.size()) {
      throw Error("covariance block " + std::to_string(k) + " does not match the group size");
    }
    double lo = 0.0;
    const double cond = detail::condition_number(ck, &lo);
    worst_cond = std::max(worst_cond, cond);
    factors.emplace_back(ck);
    if (!(lo > 1e-10 * ck.trace() / static_cast<double>(ck.rows())) ||
        factors.back().info() != Eigen::Success) {
      throw NumericalError("degenerate design: covariance block " + std::to_string(k) +
                           " is singular" + detail::format_condition(cond), cond);
    }
    const Eigen::MatrixXd inv = factors.back().solve(Eigen::MatrixXd::Identity(g.size(), g.size()));
    for (Index i = 0; i < g.size(); ++i) {
      for (Index j = 0; j < g.size(); ++j) {
        gram(g[i], g[j]) += inv(i, j);
      }
    }
  }
  const auto gram_llt = detail::factor_gram(gram);
  const Eigen::VectorXd gamma = gram_llt.solve(Eigen::VectorXd::Unit(n_models, 0));

  OptimalWeights out;
  out.weights.per_group.reserve(blocks.size());
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    out.weights.per_group.push_back(
      factors[static_cast<std::size_t>(k)].solve(restrict_vector(gamma, scheme.group(k))));
  }
  out.variance = gamma(0);
  out.condition_number = worst_cond;
  out.ill_conditioned = worst_cond > kIllConditioned;
  return out;
}

/// Independent Monte Carlo groups: C^k = Chat^k / m^k.
inline OptimalWeights independent_optimal_weights(const ModelEnsembleSpec& spec,
                                                  const GroupScheme& scheme,
                                                  std::span<const double> m)
{
  detail::check_spec_matches(spec, scheme);
  if (static_cast<Index>(m.size()) != scheme.num_groups()) {
    throw Error("one sample count per group is required");
  }
  std::vector<Eigen::MatrixXd> blocks;
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    const double mk = m[static_cast<std::size_t>(k)];
    if (!(mk > 0.0)) {
      throw Error("empty group");
    }
    blocks.push_back(restrict_matrix(spec.cov, scheme.group(k), scheme.group(k)) / mk);
  }
  return independent_optimal_weights(blocks, scheme);
}

/**
 * ML-BLUE in its sample-count form: with Psi = sum_k m^k R^k^T Chat^k^-1 R^k,
 * beta^k = m^k Chat^k^-1 R^k Psi^-1 e0 and the variance is (Psi^-1)_00.
 */
inline OptimalWeights mlblue_optimal_weights(const ModelEnsembleSpec& spec,
                                             const GroupScheme& scheme,
                                             std::span<const double> m)
{
  detail::check_spec_matches(spec, scheme);
  detail::require_coverage(scheme);
  if (static_cast<Index>(m.size()) != scheme.num_groups()) {
    throw Error("one sample count per group is required");
  }
  const Index n_models = scheme.num_models();
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n_models, n_models);
  std::vector<Eigen::MatrixXd> chat_inv;
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    const auto& g = scheme.group(k);
    const double mk = m[static_cast<std::size_t>(k)];
    if (!(mk > 0.0)) {
      throw Error("empty group");
    }
    chat_inv.push_back(restrict_matrix(spec.cov, g, g).inverse());
    const Eigen::MatrixXd r = restriction_matrix(g, scheme.highest_model());
    psi += mk * r.transpose() * chat_inv.back() * r;
  }
  const auto psi_llt = detail::factor_gram(psi);
  const Eigen::VectorXd gamma = psi_llt.solve(Eigen::VectorXd::Unit(n_models, 0));

  OptimalWeights out;
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    const auto& g = scheme.group(k);
    const Eigen::MatrixXd r = restriction_matrix(g, scheme.highest_model());
    out.weights.per_group.push_back(m[static_cast<std::size_t>(k)] *
                                    chat_inv[static_cast<std::size_t>(k)] * r * gamma);
  }
  out.variance = gamma(0);
  return out;
}

/**
 * Approximate control variate form of unbiased grouped weights.
 *
 * For each low-fidelity model l the positive zero-filled weights form the
 * correlated-mean estimator and the negative ones the control-mean estimator:
 * alpha_l = sum_k max(bt_l^k, 0), omega_e = max(bt, 0) / alpha_l and
 * omega_mu = -min(bt, 0) / alpha_l. Models with alpha_l == 0 carry empty
 * omega lists.
 */
struct AcvDecomposition
{
  /// bt_0^k per group; sums to one.
  std::vector<double> baseline_weights;
  /// alpha(l - 1) is the control variate weight of model l, l = 1..L.
  Eigen::VectorXd alpha;
  /// omega_e[l - 1][k]; empty when alpha_l == 0.
  std::vector<std::vector<double>> omega_e;
  std::vector<std::vector<double>> omega_mu;

  /// Rebuilds the zero-filled (L+1) x K weight matrix bt_l^k = alpha_l (omega_e - omega_mu).
  Eigen::MatrixXd reassemble() const
  {
    const Index k_count = static_cast<Index>(baseline_weights.size());
    const Index n_low = alpha.size();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_low + 1, k_count);
    for (Index k = 0; k < k_count; ++k) {
      out(0, k) = baseline_weights[static_cast<std::size_t>(k)];
    }
    for (Index l = 0; l < n_low; ++l) {
      const auto& e = omega_e[static_cast<std::size_t>(l)];
      const auto& mu = omega_mu[static_cast<std::size_t>(l)];
      if (e.empty()) {
        continue;
      }
      for (Index k = 0; k < k_count; ++k) {
        out(l + 1, k) = alpha(l) * (e[static_cast<std::size_t>(k)] - mu[static_cast<std::size_t>(k)]);
      }
    }
    return out;
  }
};

/// -sum_k min(bt_l^k, 0) for l = 1..L; equals the decomposition's alpha when unbiased.
inline Eigen::VectorXd alpha_from_negative_parts(const WeightSet& weights, const GroupScheme& scheme)
{
  const Eigen::MatrixXd bt = weights.zero_filled(scheme);
  return -bt.bottomRows(bt.rows() - 1).cwiseMin(0.0).rowwise().sum();
}

inline AcvDecomposition acv_decomposition(const WeightSet& weights, const GroupScheme& scheme)
{
  if (!is_unbiased(weights, scheme)) {
    throw Error("decomposition requires unbiased weights");
  }
  const Eigen::MatrixXd bt = weights.zero_filled(scheme);
  const Index n_low = scheme.num_models() - 1;
  const Index k_count = scheme.num_groups();

  AcvDecomposition d;
  d.baseline_weights.resize(static_cast<std::size_t>(k_count));
  for (Index k = 0; k < k_count; ++k) {
    d.baseline_weights[static_cast<std::size_t>(k)] = bt(0, k);
  }
  d.alpha = bt.bottomRows(n_low).cwiseMax(0.0).rowwise().sum();
  d.omega_e.resize(static_cast<std::size_t>(n_low));
  d.omega_mu.resize(static_cast<std::size_t>(n_low));
  for (Index l = 0; l < n_low; ++l) {
    const double a = d.alpha(l);
    if (a == 0.0) {
      continue;
    }
    auto& e = d.omega_e[static_cast<std::size_t>(l)];
    auto& mu = d.omega_mu[static_cast<std::size_t>(l)];
    e.resize(static_cast<std::size_t>(k_count));
    mu.resize(static_cast<std::size_t>(k_count));
    for (Index k = 0; k < k_count; ++k) {
      const double b = bt(l + 1, k);
      e[static_cast<std::size_t>(k)] = b >= 0.0 ? b / a : 0.0;
      mu[static_cast<std::size_t>(k)] = b < 0.0 ? -b / a : 0.0;
    }
  }
  return d;
}

struct GroupedWeights
{
  GroupScheme scheme;
  WeightSet weights;
};

/**
 * Ensemble ACV as a 2K-group GACV. Groups 0..K-1 hold all models with weights
 * (1/K, alpha_1/K, ..., alpha_L/K); groups K..2K-1 hold models 1..L with
 * weights -alpha_l/K.
 */
inline GroupedWeights ensemble_acv_weights(const Eigen::VectorXd& alpha, int num_ensembles)
{
  if (num_ensembles < 1) {
    throw Error("ensemble ACV needs at least one group");
  }
  const int highest = static_cast<int>(alpha.size());
  const double inv_k = 1.0 / num_ensembles;
  std::vector<std::vector<int>> groups;
  std::vector<int> all(static_cast<std::size_t>(highest) + 1);
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> low(all.begin() + 1, all.end());

  GroupedWeights out;
  for (int k = 0; k < num_ensembles; ++k) {
    groups.push_back(all);
    Eigen::VectorXd b(highest + 1);
    b(0) = inv_k;
    b.tail(highest) = alpha * inv_k;
    out.weights.per_group.push_back(b);
  }
  if (highest > 0) {
    for (int k = 0; k < num_ensembles; ++k) {
      groups.push_back(low);
      out.weights.per_group.push_back(-alpha * inv_k);
    }
  }
  out.scheme = GroupScheme(highest, groups);
  return out;
}

}  // namespace gacv

#endif  // GACV_WEIGHTS_HPP
