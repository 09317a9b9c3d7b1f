#ifndef GACV_IO_HPP
#define GACV_IO_HPP

// JSON (de)serialization of specs, designs, weights, allocations and experiment configs.
// Requires nlohmann/json on the include path.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gacv/allocation.hpp"
#include "gacv/covariance.hpp"
#include "gacv/error.hpp"
#include "gacv/experiments.hpp"
#include "gacv/grouping.hpp"
#include "gacv/simulate.hpp"
#include "gacv/weights.hpp"

namespace gacv::io {

using Json = nlohmann::json;

namespace detail {

template <typename T>
T get(const Json& j, const char* key)
{
  if (!j.contains(key)) {
    throw Error(std::string("missing key \"") + key + "\"");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

template <typename T>
void get_optional(const Json& j, const char* key, T& out)
{
  if (j.contains(key)) {
    out = get<T>(j, key);
  }
}

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known, const std::string& what)
{
  if (!j.is_object()) {
    throw Error(what + " must be a JSON object");
  }
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw Error("unknown key \"" + item.key() + "\" in " + what);
    }
  }
}

}  // namespace detail

// --- numeric arrays ---------------------------------------------------------

inline Json to_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Json to_json(const Eigen::MatrixXd& m)
{
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) {
      row.push_back(m(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::VectorXd vector_from_json(const Json& j)
{
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

inline Eigen::MatrixXd matrix_from_json(const Json& j)
{
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) {
    return {};
  }
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw Error("ragged matrix");
    }
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
    }
  }
  return m;
}

// --- model ensemble ---------------------------------------------------------

inline Json to_json(const ModelEnsembleSpec& spec)
{
  Json j{{"cov", to_json(spec.cov)}, {"costs", to_json(spec.costs)}};
  if (spec.means.size() != 0) {
    j["means"] = to_json(spec.means);
  }
  return j;
}

inline ModelEnsembleSpec spec_from_json(const Json& j)
{
  detail::reject_unknown_keys(j, {"cov", "costs", "means"}, "model ensemble");
  ModelEnsembleSpec s;
  try {
    s.cov = matrix_from_json(j.at("cov"));
    s.costs = vector_from_json(j.at("costs"));
    if (j.contains("means")) {
      s.means = vector_from_json(j.at("means"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed model ensemble: ") + e.what());
  }
  s.validate();
  return s;
}

// --- groups and sample designs ---------------------------------------------

inline Json to_json(const GroupScheme& scheme) { return Json(scheme.to_lists()); }

inline GroupScheme scheme_from_json(const Json& j, int highest_model)
{
  try {
    return GroupScheme(highest_model, j.get<std::vector<std::vector<int>>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed group scheme: ") + e.what());
  }
}

inline Json to_json(const SampleDesign& design)
{
  Json ranges = Json::array();
  for (const auto& z : design.index_sets) {
    Json r = Json::array();
    for (const auto& [lo, hi] : z.ranges()) {
      r.push_back({lo, hi});
    }
    ranges.push_back(std::move(r));
  }
  return {{"groups", to_json(design.scheme)}, {"index_ranges", std::move(ranges)}};
}

/**
 * "index_ranges" holds, per group, either one [lo, hi) pair or a list of them;
 * "index_sets" holds explicit index arrays.
 */
inline SampleDesign design_from_json(const Json& j, int highest_model)
{
  detail::reject_unknown_keys(j, {"groups", "index_ranges", "index_sets"}, "sample design");
  if (j.contains("index_ranges") == j.contains("index_sets")) {
    throw Error("sample design needs exactly one of \"index_ranges\" and \"index_sets\"");
  }
  SampleDesign d{scheme_from_json(j.at("groups"), highest_model), {}};
  try {
    if (j.contains("index_sets")) {
      for (const auto& s : j.at("index_sets")) {
        d.index_sets.push_back(IndexSet::from_indices(s.get<std::vector<std::int64_t>>()));
      }
    } else {
      for (const auto& r : j.at("index_ranges")) {
        if (r.size() == 2 && r[0].is_number()) {
          d.index_sets.push_back(IndexSet::range(r[0].get<std::int64_t>(), r[1].get<std::int64_t>()));
          continue;
        }
        std::vector<IndexSet::Range> parts;
        for (const auto& p : r) {
          const auto pair = p.get<std::vector<std::int64_t>>();
          if (pair.size() != 2) {
            throw Error("index range must be [lo, hi]");
          }
          parts.push_back({pair[0], pair[1]});
        }
        d.index_sets.push_back(IndexSet::from_ranges(std::move(parts)));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed index sets: ") + e.what());
  }
  d.validate();
  return d;
}

// --- weights ------------------------------------------------------------------

inline Json to_json(const WeightSet& w)
{
  Json j = Json::array();
  for (const auto& b : w.per_group) {
    j.push_back(to_json(b));
  }
  return j;
}

inline WeightSet weights_from_json(const Json& j, const GroupScheme& scheme)
{
  WeightSet w;
  try {
    for (const auto& b : j) {
      w.per_group.push_back(vector_from_json(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed weight set: ") + e.what());
  }
  w.check_aligned(scheme);
  return w;
}

inline Json to_json(const AcvDecomposition& d)
{
  return {{"baseline_weights", d.baseline_weights},
          {"alpha", to_json(d.alpha)},
          {"omega_e", d.omega_e},
          {"omega_mu", d.omega_mu}};
}

inline Json to_json(const OptimalWeights& w)
{
  return {{"weights", to_json(w.weights)},
          {"variance", w.variance},
          {"condition_number", w.condition_number},
          {"ill_conditioned", w.ill_conditioned}};
}

// --- allocation -----------------------------------------------------------------

inline Json to_json(const SweepRecord& r)
{
  return {{"m", r.m},
          {"m_hat", r.m_hat},
          {"variance_mlblue", r.variance_mlblue},
          {"variance_gacv", r.variance_gacv},
          {"cost", r.cost_mlblue}};
}

// --- experiment configs ----------------------------------------------------------

inline Json to_json(const IsVsMfConfig& c, std::uint64_t seed)
{
  return {{"experiment", "is-vs-mf"}, {"seed", seed},       {"rho01", c.rho01},
          {"rho02", c.rho02},         {"rho12", c.rho12},   {"n", c.n},
          {"m1_values", c.m1_values}, {"extra_values", c.extra_values}};
}

inline IsVsMfConfig is_vs_mf_from_json(const Json& j, std::uint64_t& seed)
{
  detail::reject_unknown_keys(
    j, {"experiment", "seed", "rho01", "rho02", "rho12", "n", "m1_values", "extra_values"},
    "is-vs-mf config");
  auto c = IsVsMfConfig::defaults();
  detail::get_optional(j, "seed", seed);
  detail::get_optional(j, "rho01", c.rho01);
  detail::get_optional(j, "rho02", c.rho02);
  detail::get_optional(j, "rho12", c.rho12);
  detail::get_optional(j, "n", c.n);
  detail::get_optional(j, "m1_values", c.m1_values);
  detail::get_optional(j, "extra_values", c.extra_values);
  if (c.m1_values.empty() || c.extra_values.empty()) {
    throw Error("is-vs-mf grid ranges must be non-empty");
  }
  return c;
}

inline Json to_json(const SaobSweepConfig& c)
{
  Json pairs = Json::array();
  for (const auto& [l, m] : c.pairs) {
    pairs.push_back({l, m});
  }
  return {{"experiment", "saob-sweep"},
          {"seed", c.seed},
          {"pairs", std::move(pairs)},
          {"instances", c.instances},
          {"budget", c.budget},
          {"max_regenerations", c.max_regenerations},
          {"problem",
           {{"mix", c.problem.mix},
            {"base_correlation", c.problem.base_correlation},
            {"min_off_diagonal", c.problem.min_off_diagonal},
            {"max_off_diagonal", c.problem.max_off_diagonal},
            {"min_eigenvalue", c.problem.min_eigenvalue},
            {"extra_columns", c.problem.extra_columns},
            {"max_attempts", c.problem.max_attempts},
            {"min_cost", c.problem.min_cost}}},
          {"allocation",
           {{"min_samples", c.allocation.min_samples},
            {"max_iterations", c.allocation.max_iterations},
            {"relative_tolerance", c.allocation.relative_tolerance},
            {"stall_window", c.allocation.stall_window},
            {"max_exchange_rounds", c.allocation.max_exchange_rounds}}},
          {"histogram", {{"min", c.histogram_min}, {"max", c.histogram_max}, {"width", c.histogram_width}}}};
}

inline SaobSweepConfig saob_sweep_from_json(const Json& j)
{
  detail::reject_unknown_keys(j,
                              {"experiment", "seed", "pairs", "instances", "budget",
                               "max_regenerations", "problem", "allocation", "histogram"},
                              "saob-sweep config");
  SaobSweepConfig c;
  detail::get_optional(j, "seed", c.seed);
  if (j.contains("pairs")) {
    c.pairs.clear();
    for (const auto& p : detail::get<std::vector<std::vector<int>>>(j, "pairs")) {
      if (p.size() != 2) {
        throw Error("each sweep pair must be [L, M]");
      }
      c.pairs.emplace_back(p[0], p[1]);
    }
  }
  if (c.pairs.empty()) {
    throw Error("saob sweep needs at least one (L, M) pair");
  }
  detail::get_optional(j, "instances", c.instances);
  detail::get_optional(j, "budget", c.budget);
  detail::get_optional(j, "max_regenerations", c.max_regenerations);
  if (j.contains("problem")) {
    const auto& p = j.at("problem");
    detail::reject_unknown_keys(p,
                                {"mix", "base_correlation", "min_off_diagonal", "max_off_diagonal",
                                 "min_eigenvalue", "extra_columns", "max_attempts", "min_cost"},
                                "problem settings");
    detail::get_optional(p, "mix", c.problem.mix);
    detail::get_optional(p, "base_correlation", c.problem.base_correlation);
    detail::get_optional(p, "min_off_diagonal", c.problem.min_off_diagonal);
    detail::get_optional(p, "max_off_diagonal", c.problem.max_off_diagonal);
    detail::get_optional(p, "min_eigenvalue", c.problem.min_eigenvalue);
    detail::get_optional(p, "extra_columns", c.problem.extra_columns);
    detail::get_optional(p, "max_attempts", c.problem.max_attempts);
    detail::get_optional(p, "min_cost", c.problem.min_cost);
  }
  if (j.contains("allocation")) {
    const auto& a = j.at("allocation");
    detail::reject_unknown_keys(a, {"min_samples", "max_iterations", "relative_tolerance", "stall_window", "max_exchange_rounds"},
                                "allocation settings");
    detail::get_optional(a, "min_samples", c.allocation.min_samples);
    detail::get_optional(a, "max_iterations", c.allocation.max_iterations);
    detail::get_optional(a, "relative_tolerance", c.allocation.relative_tolerance);
    detail::get_optional(a, "stall_window", c.allocation.stall_window);
    detail::get_optional(a, "max_exchange_rounds", c.allocation.max_exchange_rounds);
  }
  if (j.contains("histogram")) {
    const auto& h = j.at("histogram");
    detail::reject_unknown_keys(h, {"min", "max", "width"}, "histogram settings");
    detail::get_optional(h, "min", c.histogram_min);
    detail::get_optional(h, "max", c.histogram_max);
    detail::get_optional(h, "width", c.histogram_width);
  }
  return c;
}

struct ValidateConfig
{
  std::string fixture = "table1-nested";
  std::uint64_t seed = 2024;
  std::int64_t trials = 100000;
  double tolerance = 4.0;
  /// Set when the config carries its own spec/design/weights instead of a named fixture.
  std::optional<ValidationFixture> custom;
};

inline Json to_json(const ValidateConfig& c)
{
  Json j{{"experiment", "validate"}, {"seed", c.seed}, {"trials", c.trials}, {"tolerance", c.tolerance}};
  if (c.custom) {
    j["spec"] = to_json(c.custom->spec);
    j["design"] = to_json(c.custom->design);
    j["weights"] = to_json(c.custom->weights);
    j["name"] = c.custom->name;
  } else {
    j["fixture"] = c.fixture;
  }
  return j;
}

inline ValidateConfig validate_from_json(const Json& j)
{
  detail::reject_unknown_keys(
    j, {"experiment", "seed", "trials", "tolerance", "fixture", "name", "spec", "design", "weights"},
    "validate config");
  ValidateConfig c;
  detail::get_optional(j, "seed", c.seed);
  detail::get_optional(j, "trials", c.trials);
  detail::get_optional(j, "tolerance", c.tolerance);
  if (j.contains("spec")) {
    if (j.contains("fixture")) {
      throw Error("validate config takes either \"fixture\" or \"spec\"/\"design\"/\"weights\"");
    }
    ValidationFixture f;
    f.name = j.value("name", std::string("custom"));
    f.spec = spec_from_json(j.at("spec"));
    if (!j.contains("design") || !j.contains("weights")) {
      throw Error("custom validation needs \"design\" and \"weights\"");
    }
    f.design = design_from_json(j.at("design"), f.spec.highest_model());
    f.weights = weights_from_json(j.at("weights"), f.design.scheme);
    c.custom = std::move(f);
  } else {
    detail::get_optional(j, "fixture", c.fixture);
  }
  return c;
}

// --- files --------------------------------------------------------------------------

inline Json read_json_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path);
  }
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path);
  }
  out << text;
  if (!out) {
    throw Error("write failed: " + path);
  }
}

}  // namespace gacv::io

#endif  // GACV_IO_HPP
