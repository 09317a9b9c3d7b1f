#ifndef GACV_SIMULATE_HPP
#define GACV_SIMULATE_HPP

/**
 * @file
 * @brief Monte Carlo realization of grouped estimators on jointly Gaussian model ensembles.
 *
 * One input sample z yields the correlated outputs (Q_0(z), ..., Q_L(z)) ~ N(mu, Chat).
 * A replicate draws a stream of such rows, averages each group's models over
 * the group's index set and combines the averages with the weights. Replicate
 * i is seeded with seed ^ i, so results do not depend on the thread count.
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "gacv/covariance.hpp"
#include "gacv/error.hpp"
#include "gacv/grouping.hpp"
#include "gacv/weights.hpp"

namespace gacv {

/// 64-bit Mersenne Twister with a fixed uniform and normal transform.
class Rng
{
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal (Box-Muller). std::normal_distribution is not
  /// specified bit-for-bit, so the transform is spelled out here.
  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
      u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate)
{
  return seed ^ replicate;
}

/// Runs body(i) for i in [0, n) over `threads` workers with static chunking.
template <typename Body>
void parallel_for(std::int64_t n, int threads, Body&& body)
{
  const int workers = static_cast<int>(std::clamp<std::int64_t>(threads, 1, std::max<std::int64_t>(n, 1)));
  if (workers == 1) {
    for (std::int64_t i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = n * w / workers;
    const std::int64_t hi = n * (w + 1) / workers;
    pool.emplace_back([lo, hi, &body] {
      for (std::int64_t i = lo; i < hi; ++i) {
        body(i);
      }
    });
  }
}

inline int default_threads()
{
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Pairwise summation; the result depends only on the order of `values`.
inline double pairwise_sum(std::span<const double> values)
{
  if (values.size() <= 16) {
    double s = 0.0;
    for (double v : values) {
      s += v;
    }
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

class GaussianEnsemble
{
public:
  explicit GaussianEnsemble(ModelEnsembleSpec spec) : spec_(std::move(spec))
  {
    if (spec_.cov.rows() == 0 || spec_.cov.rows() != spec_.cov.cols()) {
      throw Error("model covariance must be a non-empty square matrix");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(spec_.cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("model covariance is not positive definite");
    }
    chol_ = llt.matrixL();
    mean_ = spec_.mean_vector();
  }

  const ModelEnsembleSpec& spec() const noexcept { return spec_; }
  Index num_models() const noexcept { return spec_.cov.rows(); }
  const Eigen::MatrixXd& cholesky() const noexcept { return chol_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }

  /// n x (L+1) table of i.i.d. rows ~ N(mu, Chat), drawn from `rng`.
  Eigen::MatrixXd draw(std::int64_t n, Rng& rng) const
  {
    if (n < 1) {
      throw Error("stream length must be at least one");
    }
    const Index d = num_models();
    Eigen::MatrixXd z(n, d);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) {
        z(i, j) = rng.normal();
      }
    }
    Eigen::MatrixXd out = z * chol_.transpose();
    out.rowwise() += mean_.transpose();
    return out;
  }

private:
  ModelEnsembleSpec spec_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd mean_;
};

inline Eigen::MatrixXd draw_stream(const GaussianEnsemble& ensemble, std::int64_t n, std::uint64_t seed)
{
  Rng rng(seed);
  return ensemble.draw(n, rng);
}

struct EstimateReplicate
{
  double value = 0.0;
  std::vector<Eigen::VectorXd> per_group_means;
};

/// Per-group Monte Carlo means over each group's index set.
inline std::vector<Eigen::VectorXd> group_means(const SampleDesign& design, const Eigen::MatrixXd& stream)
{
  design.validate();
  if (stream.rows() < design.stream_length()) {
    throw Error("sample index out of range: design needs " + std::to_string(design.stream_length()) +
                " rows, stream has " + std::to_string(stream.rows()));
  }
  if (stream.cols() != design.scheme.num_models()) {
    throw Error("stream column count does not match the number of models");
  }
  std::vector<Eigen::VectorXd> means;
  means.reserve(design.index_sets.size());
  for (Index k = 0; k < design.num_groups(); ++k) {
    const auto& g = design.scheme.group(k);
    const auto& set = design.index_sets[static_cast<std::size_t>(k)];
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(g.size());
    for (const auto& [lo, hi] : set.ranges()) {
      for (auto i = lo; i < hi; ++i) {
        for (Index j = 0; j < g.size(); ++j) {
          acc(j) += stream(static_cast<Index>(i), g[j]);
        }
      }
    }
    means.push_back(acc / static_cast<double>(set.size()));
  }
  return means;
}

/// sum_k beta^k . Qhat^k on one realized stream.
inline EstimateReplicate realize_gacv(const SampleDesign& design, const WeightSet& weights,
                                      const Eigen::MatrixXd& stream)
{
  weights.check_aligned(design.scheme);
  EstimateReplicate r;
  r.per_group_means = group_means(design, stream);
  for (std::size_t k = 0; k < r.per_group_means.size(); ++k) {
    r.value += weights.per_group[k].dot(r.per_group_means[k]);
  }
  return r;
}

struct EmpiricalMoments
{
  double mean = 0.0;
  double variance = 0.0;
  double se_mean = 0.0;
  double se_variance = 0.0;
  std::int64_t trials = 0;
  std::vector<double> values;  // per-replicate estimates, in replicate order
};

/// Mean and unbiased variance over replicates, with Gaussian standard errors.
inline EmpiricalMoments summarize(std::vector<double> values)
{
  const auto n = static_cast<std::int64_t>(values.size());
  if (n < 2) {
    throw Error("at least two replicates are required");
  }
  EmpiricalMoments out;
  out.trials = n;
  out.mean = pairwise_sum(values) / static_cast<double>(n);
  std::vector<double> sq(values.size());
  std::transform(values.begin(), values.end(), sq.begin(),
                 [m = out.mean](double v) { return (v - m) * (v - m); });
  out.variance = pairwise_sum(sq) / static_cast<double>(n - 1);
  out.se_mean = std::sqrt(out.variance / static_cast<double>(n));
  out.se_variance = out.variance * std::sqrt(2.0 / static_cast<double>(n - 1));
  out.values = std::move(values);
  return out;
}

inline EmpiricalMoments empirical_moments(const SampleDesign& design, const WeightSet& weights,
                                          const GaussianEnsemble& ensemble, std::int64_t trials,
                                          std::uint64_t seed, int threads = 1)
{
  if (trials < 100) {
    throw Error("at least 100 trials are required");
  }
  design.validate();
  weights.check_aligned(design.scheme);
  const std::int64_t rows = design.stream_length();
  std::vector<double> values(static_cast<std::size_t>(trials));
  parallel_for(trials, threads, [&](std::int64_t i) {
    Rng rng(replicate_seed(seed, static_cast<std::uint64_t>(i)));
    const Eigen::MatrixXd stream = ensemble.draw(rows, rng);
    values[static_cast<std::size_t>(i)] = realize_gacv(design, weights, stream).value;
  });
  return summarize(std::move(values));
}

/// trials x sum(n_k) matrix of stacked group means, one row per replicate.
inline Eigen::MatrixXd simulate_group_estimators(const SampleDesign& design,
                                                 const GaussianEnsemble& ensemble,
                                                 std::int64_t trials, std::uint64_t seed,
                                                 int threads = 1)
{
  design.validate();
  const std::int64_t rows = design.stream_length();
  Eigen::MatrixXd out(trials, design.scheme.total_size());
  parallel_for(trials, threads, [&](std::int64_t i) {
    Rng rng(replicate_seed(seed, static_cast<std::uint64_t>(i)));
    const auto means = group_means(design, ensemble.draw(rows, rng));
    for (Index k = 0; k < design.num_groups(); ++k) {
      out.row(static_cast<Index>(i)).segment(design.scheme.offset(k), means[static_cast<std::size_t>(k)].size()) =
        means[static_cast<std::size_t>(k)].transpose();
    }
  });
  return out;
}

/**
 * Settings of the random correlation generator
 *
 *     Chat = (1 - mix) J + mix W,
 *
 * where J has unit diagonal and `base_correlation` off the diagonal and W is
 * the correlation matrix of A A^T with A = 1 f^T + E (f, E standard normal,
 * `extra_columns` more columns than models). Draws are rejected until every
 * off-diagonal entry lies in [min_off_diagonal, max_off_diagonal] and the
 * smallest eigenvalue exceeds min_eigenvalue.
 */
struct RandomProblemOptions
{
  double mix = 0.15;
  double base_correlation = 0.9;
  double min_off_diagonal = 0.78;
  double max_off_diagonal = 0.995;
  double min_eigenvalue = 1e-6;
  int extra_columns = 2;
  int max_attempts = 10000;
  double min_cost = 0.01;
};

/**
 * Random correlation matrix and costs. Low-fidelity models are ordered so their
 * correlation with model 0 decreases with the index; model 0 costs 1 and the
 * others are log-uniform on [min_cost, 1], sorted from most to least expensive.
 */
inline ModelEnsembleSpec random_problem(int highest_model, std::uint64_t seed,
                                        const RandomProblemOptions& options = {})
{
  if (highest_model < 1) {
    throw Error("random problems need at least one low-fidelity model");
  }
  Rng rng(seed);
  const Index d = highest_model + 1;
  const Index cols = d + options.extra_columns;
  Eigen::MatrixXd corr;
  bool accepted = false;
  for (int attempt = 0; attempt < options.max_attempts && !accepted; ++attempt) {
    Eigen::RowVectorXd common(cols);
    for (Index j = 0; j < cols; ++j) {
      common(j) = rng.normal();
    }
    Eigen::MatrixXd a(d, cols);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < cols; ++j) {
        a(i, j) = common(j) + rng.normal();
      }
    }
    Eigen::MatrixXd w = a * a.transpose();
    const Eigen::VectorXd inv_sd = w.diagonal().cwiseSqrt().cwiseInverse();
    w = inv_sd.asDiagonal() * w * inv_sd.asDiagonal();

    Eigen::MatrixXd base = Eigen::MatrixXd::Constant(d, d, options.base_correlation);
    base.diagonal().setOnes();
    corr = (1.0 - options.mix) * base + options.mix * w;
    corr.diagonal().setOnes();

    double lo = 1.0;
    double hi = -1.0;
    for (Index i = 0; i < d; ++i) {
      for (Index j = i + 1; j < d; ++j) {
        lo = std::min(lo, corr(i, j));
        hi = std::max(hi, corr(i, j));
      }
    }
    if (lo < options.min_off_diagonal || hi > options.max_off_diagonal) {
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr, Eigen::EigenvaluesOnly);
    accepted = es.eigenvalues().minCoeff() > options.min_eigenvalue;
  }
  if (!accepted) {
    throw NumericalError("random correlation generator exceeded its attempt limit");
  }

  std::vector<int> order(static_cast<std::size_t>(highest_model));
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return corr(0, a) > corr(0, b); });
  order.insert(order.begin(), 0);
  ModelEnsembleSpec spec;
  spec.cov.resize(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      spec.cov(i, j) = corr(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
  }

  std::vector<double> low_costs(static_cast<std::size_t>(highest_model));
  const double log_lo = std::log(options.min_cost);
  for (auto& c : low_costs) {
    c = std::exp(rng.uniform(log_lo, 0.0));
  }
  std::sort(low_costs.begin(), low_costs.end(), std::greater<>());
  spec.costs.resize(d);
  spec.costs(0) = 1.0;
  for (Index l = 1; l < d; ++l) {
    spec.costs(l) = low_costs[static_cast<std::size_t>(l - 1)];
  }
  spec.means = Eigen::VectorXd::Zero(d);
  return spec;
}

}  // namespace gacv

#endif  // GACV_SIMULATE_HPP
