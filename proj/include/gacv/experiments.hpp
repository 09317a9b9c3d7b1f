#ifndef GACV_EXPERIMENTS_HPP
#define GACV_EXPERIMENTS_HPP

/**
 * @file
 * @brief Batch experiments: ACV-IS vs ACV-MF grid, SAOB-M vs nested GACV sweep,
 *        the SAOB-3 conversion table and the empirical validation fixtures.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gacv/allocation.hpp"
#include "gacv/covariance.hpp"
#include "gacv/error.hpp"
#include "gacv/grouping.hpp"
#include "gacv/simulate.hpp"
#include "gacv/weights.hpp"

namespace gacv {

// ---------------------------------------------------------------------------
// ACV-IS vs ACV-MF

struct IsVsMfConfig
{
  double rho01 = 0.95;
  double rho02 = 0.8;
  double rho12 = 0.9;
  std::int64_t n = 5;
  std::vector<std::int64_t> m1_values;
  std::vector<std::int64_t> extra_values;

  static IsVsMfConfig defaults()
  {
    IsVsMfConfig c;
    for (std::int64_t m1 = 10; m1 <= 200; m1 += 10) {
      c.m1_values.push_back(m1);
    }
    c.extra_values = {10, 30, 100, 300, 1000, 3000};
    return c;
  }
};

/// Unit-variance three-model covariance with the given correlations.
inline ModelEnsembleSpec three_model_spec(double rho01, double rho02, double rho12)
{
  ModelEnsembleSpec spec;
  spec.cov.resize(3, 3);
  spec.cov << 1.0, rho01, rho02, rho01, 1.0, rho12, rho02, rho12, 1.0;
  spec.costs = Eigen::VectorXd::Ones(3);
  spec.means = Eigen::VectorXd::Zero(3);
  return spec;
}

inline GroupScheme acv_groups() { return GroupScheme(2, {{0, 1, 2}, {1}, {2}}); }

/// Independent samples: group sizes n, m1 - n, m2 - n on disjoint index ranges.
inline SampleDesign acv_is_design(std::int64_t n, std::int64_t m1, std::int64_t m2)
{
  if (n < 1 || m1 <= n || m2 <= n) {
    throw Error("ACV-IS needs m1 > n and m2 > n");
  }
  return {acv_groups(),
          {IndexSet::range(0, n), IndexSet::range(n, m1), IndexSet::range(m1, m1 + m2 - n)}};
}

/// Reused samples: prefixes of length n, m1, m2 (Z^1 ⊂ Z^2 ⊂ Z^3).
inline SampleDesign acv_mf_design(std::int64_t n, std::int64_t m1, std::int64_t m2)
{
  if (n < 1 || m1 < n || m2 < m1) {
    throw Error("ACV-MF needs n <= m1 <= m2");
  }
  return {acv_groups(), {IndexSet::range(0, n), IndexSet::range(0, m1), IndexSet::range(0, m2)}};
}

struct IsVsMfCell
{
  std::int64_t m1 = 0;
  std::int64_t extra = 0;  // m2 - m1
  bool valid = false;
  double variance_is = std::numeric_limits<double>::quiet_NaN();
  double variance_mf = std::numeric_limits<double>::quiet_NaN();
  double ratio = std::numeric_limits<double>::quiet_NaN();

  std::int64_t m2() const noexcept { return m1 + extra; }
};

/// Grid in row-major (m1, extra) order. Cells with m1 <= n or extra < 0 are invalid.
inline std::vector<IsVsMfCell> run_is_vs_mf(const IsVsMfConfig& config, int threads = 1)
{
  if (config.m1_values.empty() || config.extra_values.empty()) {
    throw Error("is-vs-mf grid ranges must be non-empty");
  }
  const ModelEnsembleSpec spec = three_model_spec(config.rho01, config.rho02, config.rho12);
  spec.validate();
  const auto scheme = acv_groups();
  std::vector<IsVsMfCell> cells;
  for (auto m1 : config.m1_values) {
    for (auto extra : config.extra_values) {
      IsVsMfCell cell;
      cell.m1 = m1;
      cell.extra = extra;
      cells.push_back(cell);
    }
  }
  parallel_for(static_cast<std::int64_t>(cells.size()), threads, [&](std::int64_t i) {
    auto& cell = cells[static_cast<std::size_t>(i)];
    if (cell.m1 <= config.n || cell.extra < 0) {
      return;
    }
    const auto is = acv_is_design(config.n, cell.m1, cell.m2());
    const auto mf = acv_mf_design(config.n, cell.m1, cell.m2());
    cell.variance_is = optimal_variance(assemble_block_covariance(spec, is), scheme);
    cell.variance_mf = optimal_variance(assemble_block_covariance(spec, mf), scheme);
    cell.ratio = cell.variance_is / cell.variance_mf;
    cell.valid = true;
  });
  return cells;
}

// ---------------------------------------------------------------------------
// SAOB-M sweep

struct SaobSweepConfig
{
  std::vector<std::pair<int, int>> pairs{{2, 2}, {3, 2}, {4, 2}, {4, 3}, {4, 5}};
  int instances = 200;
  std::uint64_t seed = 1;
  double budget = 100.0;
  int max_regenerations = 100;
  RandomProblemOptions problem;
  AllocationOptions allocation;
  double histogram_min = 0.5;
  double histogram_max = 2.5;
  double histogram_width = 0.05;
};

struct SweepRecord
{
  int highest_model = 0;
  int max_group_size = 0;
  int instance = 0;
  std::uint64_t problem_seed = 0;
  std::vector<std::int64_t> m;
  std::vector<std::int64_t> m_hat;
  double variance_mlblue = 0.0;
  double variance_gacv = 0.0;
  double ratio = 0.0;
  double cost_mlblue = 0.0;
  double cost_gacv = 0.0;  // model evaluations actually made by the nested design
  bool cost_parity = false;
};

struct SweepPairSummary
{
  int highest_model = 0;
  int max_group_size = 0;
  int completed = 0;
  int failures = 0;
  double fraction_above_one = 0.0;
  double max_ratio = 0.0;
  double min_ratio = 0.0;
  double median_ratio = 0.0;
  int cost_parity_violations = 0;
};

struct SweepResult
{
  std::vector<SweepRecord> records;
  std::vector<SweepPairSummary> summaries;
  std::vector<std::string> failure_messages;
};

inline std::uint64_t sweep_problem_seed(std::uint64_t seed, int highest_model, int max_group_size,
                                        int instance, int attempt)
{
  return seed ^ (static_cast<std::uint64_t>(highest_model) << 56) ^
         (static_cast<std::uint64_t>(max_group_size) << 48) ^
         (static_cast<std::uint64_t>(instance) << 16) ^ static_cast<std::uint64_t>(attempt);
}

/**
 * Optimal GACV variance of a sample design. Estimators duplicated verbatim
 * (same model, identical index set) are merged first; this happens in nested
 * designs whenever two overlapping groups receive equal counts.
 */
inline double nested_gacv_variance(const ModelEnsembleSpec& spec, const SampleDesign& design)
{
  const SampleDesign reduced = merge_duplicate_estimators(design);
  return optimal_variance(assemble_block_covariance(spec, reduced), reduced.scheme);
}

/// One sweep instance: optimal ML-BLUE allocation, nested conversion and both variances.
inline SweepRecord compare_saob_instance(const ModelEnsembleSpec& spec, const SaobScheme& saob,
                                         double budget, const AllocationOptions& allocation)
{
  const auto alloc = optimize_mlblue_allocation(spec, saob.groups, budget, allocation);
  if (std::any_of(alloc.m.begin(), alloc.m.end(), [](std::int64_t v) { return v < 1; })) {
    throw Error("allocation leaves a group without samples");
  }
  SweepRecord r;
  r.highest_model = saob.highest_model;
  r.max_group_size = saob.max_group_size;
  r.m = alloc.m;
  r.m_hat = nested_conversion(alloc.m, saob);

  std::vector<double> m_real(r.m.begin(), r.m.end());
  r.variance_mlblue = mlblue_optimal_weights(spec, saob.groups, m_real).variance;
  r.variance_gacv = nested_gacv_variance(spec, nested_sample_design(r.m_hat, saob.groups));
  r.ratio = r.variance_mlblue / r.variance_gacv;

  const auto n_mlb = model_eval_counts_mlblue(saob.groups, r.m);
  const auto n_gacv = model_eval_counts_nested(saob.groups, r.m_hat);
  r.cost_mlblue = total_cost<std::int64_t>(saob.groups, r.m, spec.costs);
  r.cost_gacv = model_cost(n_gacv, spec.costs);
  r.cost_parity = n_mlb == n_gacv;
  return r;
}

inline SweepPairSummary summarize_pair(int highest_model, int max_group_size,
                                       const std::vector<SweepRecord>& records, int failures)
{
  SweepPairSummary s;
  s.highest_model = highest_model;
  s.max_group_size = max_group_size;
  s.failures = failures;
  std::vector<double> ratios;
  for (const auto& r : records) {
    if (r.highest_model == highest_model && r.max_group_size == max_group_size) {
      ratios.push_back(r.ratio);
      s.cost_parity_violations += r.cost_parity ? 0 : 1;
    }
  }
  s.completed = static_cast<int>(ratios.size());
  if (ratios.empty()) {
    return s;
  }
  std::sort(ratios.begin(), ratios.end());
  const auto above = std::count_if(ratios.begin(), ratios.end(), [](double v) { return v > 1.0 + 1e-9; });
  s.fraction_above_one = static_cast<double>(above) / static_cast<double>(ratios.size());
  s.min_ratio = ratios.front();
  s.max_ratio = ratios.back();
  const std::size_t mid = ratios.size() / 2;
  s.median_ratio = ratios.size() % 2 == 1 ? ratios[mid] : 0.5 * (ratios[mid - 1] + ratios[mid]);
  return s;
}

inline SweepResult run_saob_sweep(const SaobSweepConfig& config, int threads = 1)
{
  if (config.pairs.empty()) {
    throw Error("saob sweep needs at least one (L, M) pair");
  }
  if (config.instances < 0) {
    throw Error("instance count must be non-negative");
  }
  struct Slot
  {
    std::optional<SweepRecord> record;
    std::string failure;
  };
  const auto per_pair = static_cast<std::int64_t>(config.instances);
  std::vector<Slot> slots(config.pairs.size() * static_cast<std::size_t>(per_pair));
  std::vector<SaobScheme> schemes;
  for (const auto& [l, m] : config.pairs) {
    schemes.push_back(saob_groups(l, m));
  }

  parallel_for(static_cast<std::int64_t>(slots.size()), threads, [&](std::int64_t i) {
    const auto pair_index = static_cast<std::size_t>(i / std::max<std::int64_t>(per_pair, 1));
    const int instance = static_cast<int>(i % std::max<std::int64_t>(per_pair, 1));
    const auto& saob = schemes[pair_index];
    auto& slot = slots[static_cast<std::size_t>(i)];
    for (int attempt = 0; attempt < config.max_regenerations; ++attempt) {
      const auto seed = sweep_problem_seed(config.seed, saob.highest_model, saob.max_group_size,
                                           instance, attempt);
      try {
        const auto spec = random_problem(saob.highest_model, seed, config.problem);
        auto rec = compare_saob_instance(spec, saob, config.budget, config.allocation);
        rec.instance = instance;
        rec.problem_seed = seed;
        slot.record = std::move(rec);
        return;
      } catch (const Error& e) {
        slot.failure = "L=" + std::to_string(saob.highest_model) + " M=" +
                       std::to_string(saob.max_group_size) + " instance " + std::to_string(instance) +
                       ": " + e.what();
      }
    }
  });

  SweepResult result;
  std::vector<int> failures(config.pairs.size(), 0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].record) {
      result.records.push_back(std::move(*slots[i].record));
    } else {
      ++failures[i / static_cast<std::size_t>(std::max<std::int64_t>(per_pair, 1))];
      result.failure_messages.push_back(slots[i].failure);
    }
  }
  for (std::size_t p = 0; p < config.pairs.size(); ++p) {
    result.summaries.push_back(
      summarize_pair(config.pairs[p].first, config.pairs[p].second, result.records, failures[p]));
  }
  return result;
}

struct Histogram
{
  std::vector<double> edges;
  std::vector<int> counts;
  int underflow = 0;
  int overflow = 0;
};

inline Histogram make_histogram(const std::vector<double>& values, double lo, double hi, double width)
{
  if (!(width > 0.0) || !(hi > lo)) {
    throw Error("invalid histogram range");
  }
  Histogram h;
  const auto bins = static_cast<std::size_t>(std::ceil((hi - lo) / width - 1e-9));
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges.push_back(lo + width * static_cast<double>(b));
  }
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (v < lo) {
      ++h.underflow;
    } else if (v >= h.edges.back()) {
      ++h.overflow;
    } else {
      auto b = static_cast<std::size_t>((v - lo) / width);
      b = std::min(b, bins - 1);
      // Keep the bin consistent with the stored edges.
      if (b > 0 && v < h.edges[b]) {
        --b;
      } else if (b + 1 < bins && v >= h.edges[b + 1]) {
        ++b;
      }
      ++h.counts[b];
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// SAOB-3 conversion table

struct ConversionTable
{
  SaobScheme saob;
  std::vector<std::int64_t> m;
  std::vector<std::int64_t> m_hat;
  /// Evaluations of model l in group k: mlblue[k][l], gacv[k][l].
  std::vector<std::vector<std::int64_t>> mlblue;
  std::vector<std::vector<std::int64_t>> gacv;
  std::vector<std::int64_t> evals_mlblue;
  std::vector<std::int64_t> evals_gacv;
  double cost_mlblue = 0.0;
  double cost_gacv = 0.0;
};

inline ConversionTable conversion_table(int highest_model, int max_group_size,
                                        std::vector<std::int64_t> m, const Eigen::VectorXd& costs)
{
  ConversionTable t;
  t.saob = saob_groups(highest_model, max_group_size);
  t.m = std::move(m);
  t.m_hat = nested_conversion(t.m, t.saob);
  const auto& scheme = t.saob.groups;
  for (Index k = 0; k < scheme.num_groups(); ++k) {
    std::vector<std::int64_t> row_mlb(static_cast<std::size_t>(scheme.num_models()), 0);
    std::vector<std::int64_t> row_gacv(row_mlb.size(), 0);
    for (int l : scheme.group(k).entries()) {
      row_mlb[static_cast<std::size_t>(l)] = t.m[static_cast<std::size_t>(k)];
      row_gacv[static_cast<std::size_t>(l)] = t.m_hat[static_cast<std::size_t>(k)];
    }
    t.mlblue.push_back(std::move(row_mlb));
    t.gacv.push_back(std::move(row_gacv));
  }
  t.evals_mlblue = model_eval_counts_mlblue(scheme, t.m);
  t.evals_gacv = model_eval_counts_nested(scheme, t.m_hat);
  t.cost_mlblue = total_cost<std::int64_t>(scheme, t.m, costs);
  t.cost_gacv = model_cost(t.evals_gacv, costs);
  return t;
}

/// The five-model SAOB-3 example with allocation [5, 5, 5, 7, 18] and unit costs.
inline ConversionTable run_table1_demo()
{
  return conversion_table(4, 3, {5, 5, 5, 7, 18}, Eigen::VectorXd::Ones(5));
}

// ---------------------------------------------------------------------------
// Empirical validation fixtures

struct ValidationFixture
{
  std::string name;
  ModelEnsembleSpec spec;
  SampleDesign design;
  WeightSet weights;
};

struct ValidationReport
{
  std::string name;
  EmpiricalMoments moments;
  double analytic_mean = 0.0;
  double analytic_variance = 0.0;
  double mean_z = 0.0;
  double variance_z = 0.0;
  double tolerance = 4.0;
  bool unbiased_weights = false;
  bool mean_ok = false;
  bool variance_ok = false;

  bool passed() const noexcept { return mean_ok && variance_ok; }
};

namespace detail {

/// Fixed five-model ensemble used by the fixtures.
inline ModelEnsembleSpec fixture_spec_5()
{
  ModelEnsembleSpec s;
  s.cov.resize(5, 5);
  s.cov << 1.00, 0.92, 0.88, 0.84, 0.80,
           0.92, 1.10, 0.90, 0.86, 0.82,
           0.88, 0.90, 0.95, 0.87, 0.83,
           0.84, 0.86, 0.87, 1.05, 0.85,
           0.80, 0.82, 0.83, 0.85, 0.90;
  s.costs = (Eigen::VectorXd(5) << 1.0, 0.3, 0.1, 0.03, 0.01).finished();
  s.means = (Eigen::VectorXd(5) << 1.5, 1.0, -0.5, 2.0, 0.7).finished();
  return s;
}

inline ModelEnsembleSpec fixture_spec_3()
{
  auto s = three_model_spec(0.95, 0.8, 0.9);
  s.means = (Eigen::VectorXd(3) << 2.0, 1.0, -1.0).finished();
  return s;
}

/// Feasible, non-optimal weights: optimal weights plus a fixed null-space perturbation of R.
inline WeightSet perturbed_weights(const WeightSet& base, const GroupScheme& scheme, double size)
{
  const Eigen::MatrixXd r = stack_restrictions(scheme);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(r);
  const Eigen::MatrixXd null = lu.kernel();
  Eigen::VectorXd beta = base.stacked();
  for (Index j = 0; j < null.cols(); ++j) {
    beta += size * (j % 2 == 0 ? 1.0 : -0.5) * null.col(j) / null.col(j).norm();
  }
  return WeightSet::from_stacked(scheme, beta);
}

inline ValidationFixture optimal_fixture(std::string name, ModelEnsembleSpec spec, SampleDesign design)
{
  const auto c = assemble_block_covariance(spec, design);
  auto w = optimal_weights(c, design.scheme).weights;
  return {std::move(name), std::move(spec), std::move(design), std::move(w)};
}

}  // namespace detail

inline std::vector<std::string> validation_fixture_names()
{
  return {"single-group",      "table1-nested",       "table1-independent", "acv-is",
          "acv-mf",            "partial-overlap",     "scattered-indices",  "fully-nested",
          "ensemble-acv",      "perturbed-overlap",   "biased-weights"};
}

inline ValidationFixture make_validation_fixture(const std::string& name)
{
  using detail::fixture_spec_3;
  using detail::fixture_spec_5;
  if (name == "single-group") {
    ModelEnsembleSpec spec = fixture_spec_5();
    SampleDesign d{GroupScheme(4, {{0, 1, 2, 3, 4}}), {IndexSet::range(0, 10)}};
    WeightSet w{{Eigen::VectorXd::Unit(5, 0)}};
    return {name, spec, d, w};
  }
  if (name == "table1-nested") {
    const auto saob = saob_groups(4, 3);
    const std::vector<std::int64_t> m{5, 5, 5, 7, 18};
    return detail::optimal_fixture(name, fixture_spec_5(),
                                   nested_sample_design(nested_conversion(m, saob), saob.groups));
  }
  if (name == "table1-independent") {
    const auto saob = saob_groups(4, 3);
    SampleDesign d{saob.groups,
                   {IndexSet::range(0, 5), IndexSet::range(5, 10), IndexSet::range(10, 15),
                    IndexSet::range(15, 22), IndexSet::range(22, 40)}};
    return detail::optimal_fixture(name, fixture_spec_5(), d);
  }
  if (name == "acv-is") {
    return detail::optimal_fixture(name, fixture_spec_3(), acv_is_design(5, 20, 60));
  }
  if (name == "acv-mf") {
    return detail::optimal_fixture(name, fixture_spec_3(), acv_mf_design(5, 20, 60));
  }
  if (name == "partial-overlap") {
    SampleDesign d{GroupScheme(4, {{0, 1, 2}, {1, 2, 3}, {2, 3, 4}, {4}}),
                   {IndexSet::range(0, 8), IndexSet::range(4, 12), IndexSet::range(6, 20),
                    IndexSet::range(10, 30)}};
    return detail::optimal_fixture(name, fixture_spec_5(), d);
  }
  if (name == "scattered-indices") {
    SampleDesign d{GroupScheme(2, {{0, 1}, {1, 2}, {2}}),
                   {IndexSet::from_indices({0, 2, 4, 6, 8, 10}),
                    IndexSet::from_indices({1, 2, 3, 4, 5, 11, 12, 13}),
                    IndexSet::from_indices({0, 3, 6, 9, 12, 15, 18, 21, 24})}};
    return detail::optimal_fixture(name, fixture_spec_3(), d);
  }
  if (name == "fully-nested") {
    const auto saob = saob_groups(4, 5);
    const std::vector<std::int64_t> m{4, 3, 5, 6, 10};
    return detail::optimal_fixture(name, fixture_spec_5(),
                                   nested_sample_design(nested_conversion(m, saob), saob.groups));
  }
  if (name == "ensemble-acv") {
    const auto ens = ensemble_acv_weights((Eigen::VectorXd(2) << -0.6, -0.2).finished(), 2);
    SampleDesign d{ens.scheme,
                   {IndexSet::range(0, 6), IndexSet::range(6, 12), IndexSet::range(0, 20),
                    IndexSet::range(6, 26)}};
    return {name, fixture_spec_3(), d, ens.weights};
  }
  if (name == "perturbed-overlap") {
    auto f = make_validation_fixture("partial-overlap");
    f.name = name;
    f.weights = detail::perturbed_weights(f.weights, f.design.scheme, 0.3);
    return f;
  }
  if (name == "biased-weights") {
    auto f = make_validation_fixture("table1-nested");
    f.name = name;
    // Total weight 0.1 on model 1 instead of 0.
    f.weights.per_group[0](1) += 0.1;
    return f;
  }
  throw Error("unknown validation fixture: " + name);
}

/**
 * Compares replicate mean and variance with mu_0 and beta^T C beta in
 * standard-error units. The mean check always targets mu_0, so biased
 * weights fail it.
 */
inline ValidationReport run_validate(const ValidationFixture& fixture, std::int64_t trials,
                                     std::uint64_t seed, int threads = 1, double tolerance = 4.0)
{
  ValidationReport report;
  report.name = fixture.name;
  report.tolerance = tolerance;
  const auto c = assemble_block_covariance(fixture.spec, fixture.design);
  report.analytic_variance = estimator_variance(fixture.weights, c);
  report.analytic_mean = fixture.spec.mean_vector()(0);
  report.unbiased_weights = is_unbiased(fixture.weights, fixture.design.scheme);

  const GaussianEnsemble ensemble(fixture.spec);
  report.moments = empirical_moments(fixture.design, fixture.weights, ensemble, trials, seed, threads);
  report.mean_z = std::abs(report.moments.mean - report.analytic_mean) / report.moments.se_mean;
  report.variance_z =
    std::abs(report.moments.variance - report.analytic_variance) / report.moments.se_variance;
  report.mean_ok = report.mean_z <= tolerance;
  report.variance_ok = report.variance_z <= tolerance;
  return report;
}

}  // namespace gacv

#endif  // GACV_EXPERIMENTS_HPP
