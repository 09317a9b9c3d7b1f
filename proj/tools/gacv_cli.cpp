// gacv command-line experiment runner.
//
// Exit codes: 0 ok, 1 usage/config error, 2 validation failure, 3 numerical failure.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gacv/error.hpp"
#include "gacv/experiments.hpp"
#include "gacv/io.hpp"
#include "gacv/report.hpp"
#include "gacv/weights.hpp"

namespace fs = std::filesystem;
using gacv::io::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions
{
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> trials;
  int threads = gacv::default_threads();
};

void setup_logging()
{
  auto logger = spdlog::stderr_color_mt("gacv");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("GACV_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("GACV_LOG={} not recognized; keeping level 'warn'", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

Json load_config(const CommonOptions& opt)
{
  return opt.config.empty() ? Json::object() : gacv::io::read_json_file(opt.config);
}

fs::path output_dir(const CommonOptions& opt)
{
  fs::path dir(opt.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw gacv::Error("cannot create output directory " + dir.string() + ": " + ec.message());
  }
  return dir;
}

void write(const fs::path& path, const std::string& text)
{
  gacv::io::write_text_file(path.string(), text);
  spdlog::info("wrote {}", path.string());
}

int run_is_vs_mf(const CommonOptions& opt)
{
  std::uint64_t seed = 0;
  auto cfg = gacv::io::is_vs_mf_from_json(load_config(opt), seed);
  if (opt.seed) {
    seed = *opt.seed;
  }
  const auto cells = gacv::run_is_vs_mf(cfg, opt.threads);
  const auto dir = output_dir(opt);
  write(dir / "is_vs_mf.csv", gacv::report::is_vs_mf_csv(cfg, seed, cells));
  write(dir / "is_vs_mf.svg", gacv::report::is_vs_mf_svg(cfg, cells));
  write(dir / "is_vs_mf.config.json", gacv::io::to_json(cfg, seed).dump(2) + "\n");

  const gacv::IsVsMfCell* best = nullptr;
  int above = 0;
  int valid = 0;
  for (const auto& c : cells) {
    if (!c.valid) {
      continue;
    }
    ++valid;
    above += c.ratio > 1.0 ? 1 : 0;
    if (best == nullptr || c.ratio > best->ratio) {
      best = &c;
    }
  }
  std::cout << "valid cells: " << valid << ", cells with ratio > 1: " << above << "\n";
  if (best != nullptr) {
    std::cout << "max ratio " << gacv::report::num(best->ratio) << " at m1=" << best->m1
              << ", m2=" << best->m2() << "\n";
  }
  return kExitOk;
}

int run_saob_sweep(const CommonOptions& opt)
{
  auto cfg = gacv::io::saob_sweep_from_json(load_config(opt));
  if (opt.seed) {
    cfg.seed = *opt.seed;
  }
  const auto result = gacv::run_saob_sweep(cfg, opt.threads);
  for (const auto& msg : result.failure_messages) {
    spdlog::warn("skipped {}", msg);
  }
  if (result.records.empty()) {
    spdlog::warn("sweep produced no instances");
  }
  const auto dir = output_dir(opt);
  write(dir / "saob_sweep.csv", gacv::report::saob_sweep_csv(cfg, result.records));
  write(dir / "saob_sweep_summary.csv", gacv::report::sweep_summary_csv(result.summaries));
  write(dir / "saob_sweep.config.json", gacv::io::to_json(cfg).dump(2) + "\n");

  std::cout << "  L  M  done fail  frac>1     min       median    max\n";
  for (const auto& s : result.summaries) {
    std::vector<double> ratios;
    for (const auto& r : result.records) {
      if (r.highest_model == s.highest_model && r.max_group_size == s.max_group_size) {
        ratios.push_back(r.ratio);
      }
    }
    const auto hist =
      gacv::make_histogram(ratios, cfg.histogram_min, cfg.histogram_max, cfg.histogram_width);
    const std::string stem =
      "saob_sweep_hist_L" + std::to_string(s.highest_model) + "_M" + std::to_string(s.max_group_size);
    write(dir / (stem + ".csv"), gacv::report::histogram_csv(s.highest_model, s.max_group_size, hist));
    write(dir / (stem + ".svg"),
          gacv::report::histogram_svg("SAOB-" + std::to_string(s.max_group_size) + ", L = " +
                                        std::to_string(s.highest_model),
                                      hist));
    std::printf("%3d %2d %5d %4d  %7.4f  %9.5f  %9.5f  %9.5f\n", s.highest_model, s.max_group_size,
                s.completed, s.failures, s.fraction_above_one, s.min_ratio, s.median_ratio, s.max_ratio);
    if (s.cost_parity_violations > 0) {
      spdlog::warn("L={} M={}: {} instances with unequal per-model evaluation counts", s.highest_model,
                   s.max_group_size, s.cost_parity_violations);
    }
  }
  return kExitOk;
}

int run_table1(const CommonOptions& opt)
{
  const Json j = load_config(opt);
  gacv::io::detail::reject_unknown_keys(j, {"experiment", "highest_model", "max_group_size", "m", "costs"},
                                        "table1 config");
  int highest = j.value("highest_model", 4);
  int max_size = j.value("max_group_size", 3);
  auto m = j.value("m", std::vector<std::int64_t>{5, 5, 5, 7, 18});
  Eigen::VectorXd costs = j.contains("costs") ? gacv::io::vector_from_json(j.at("costs"))
                                              : Eigen::VectorXd::Ones(highest + 1);
  const auto table = gacv::conversion_table(highest, max_size, m, costs);
  std::cout << gacv::report::table1_text(table);
  if (!opt.out.empty()) {
    const auto dir = output_dir(opt);
    write(dir / "table1.csv", gacv::report::table1_csv(table));
  }
  return table.evals_mlblue == table.evals_gacv ? kExitOk : kExitValidation;
}

int run_validate(const CommonOptions& opt, const std::string& fixture_flag)
{
  auto cfg = gacv::io::validate_from_json(load_config(opt));
  if (!fixture_flag.empty()) {
    cfg.fixture = fixture_flag;
    cfg.custom.reset();
  }
  if (opt.seed) {
    cfg.seed = *opt.seed;
  }
  if (opt.trials) {
    cfg.trials = *opt.trials;
  }
  const auto fixture = cfg.custom ? *cfg.custom : gacv::make_validation_fixture(cfg.fixture);
  const auto rep = gacv::run_validate(fixture, cfg.trials, cfg.seed, opt.threads, cfg.tolerance);

  const auto dir = output_dir(opt);
  const std::string stem = "validate_" + fixture.name;
  write(dir / (stem + ".csv"), gacv::report::replicates_csv(rep.moments.values));
  const Json summary{{"mean", rep.moments.mean},
                     {"var", rep.moments.variance},
                     {"se_mean", rep.moments.se_mean},
                     {"se_var", rep.moments.se_variance},
                     {"analytic_mean", rep.analytic_mean},
                     {"analytic_var", rep.analytic_variance},
                     {"mean_z", rep.mean_z},
                     {"var_z", rep.variance_z},
                     {"unbiased_weights", rep.unbiased_weights},
                     {"passed", rep.passed()}};
  write(dir / (stem + ".json"), summary.dump(2) + "\n");
  write(dir / (stem + ".config.json"), gacv::io::to_json(cfg).dump(2) + "\n");

  std::cout << fixture.name << ": mean " << (rep.mean_ok ? "ok" : "FAIL") << " (" << rep.mean_z
            << " SE), variance " << (rep.variance_ok ? "ok" : "FAIL") << " (" << rep.variance_z
            << " SE)\n";
  return rep.passed() ? kExitOk : kExitValidation;
}

int run_weights(const CommonOptions& opt)
{
  if (opt.config.empty()) {
    throw gacv::Error("weights needs --config with \"spec\" and \"design\"");
  }
  const Json j = load_config(opt);
  gacv::io::detail::reject_unknown_keys(j, {"experiment", "spec", "design"}, "weights config");
  if (!j.contains("spec") || !j.contains("design")) {
    throw gacv::Error("weights config needs \"spec\" and \"design\"");
  }
  const auto spec = gacv::io::spec_from_json(j.at("spec"));
  const auto design = gacv::io::design_from_json(j.at("design"), spec.highest_model());
  const auto c = gacv::assemble_block_covariance(spec, design);
  const auto opt_w = gacv::optimal_weights(c, design.scheme);
  if (opt_w.ill_conditioned) {
    spdlog::warn("block covariance is ill-conditioned (condition number {:.3e})", opt_w.condition_number);
  }
  Json out = gacv::io::to_json(opt_w);
  out["decomposition"] = gacv::io::to_json(gacv::acv_decomposition(opt_w.weights, design.scheme));
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
  setup_logging();
  CLI::App app{"Grouped approximate control variate estimators: weights, allocations and experiments"};
  app.require_subcommand(1);

  CommonOptions opt;
  std::string fixture;
  auto add_common = [&](CLI::App* sub, bool trials) {
    sub->add_option("--config", opt.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "random seed (overrides config)");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    if (trials) {
      sub->add_option("--trials", opt.trials, "Monte Carlo replicates (overrides config)")
        ->check(CLI::Range(std::int64_t{100}, std::numeric_limits<std::int64_t>::max()));
    }
  };
  auto* is_vs_mf = app.add_subcommand("is-vs-mf", "ACV-IS / ACV-MF variance ratio grid");
  auto* sweep = app.add_subcommand("saob-sweep", "SAOB-M ML-BLUE vs nested GACV variance sweep");
  auto* table1 = app.add_subcommand("table1", "SAOB allocation to nested GACV conversion table");
  auto* validate = app.add_subcommand("validate", "Monte Carlo check of analytic mean and variance");
  auto* weights = app.add_subcommand("weights", "optimal weights for a spec + design");
  add_common(is_vs_mf, false);
  add_common(sweep, false);
  add_common(table1, false);
  add_common(validate, true);
  add_common(weights, false);
  validate->add_option("--fixture", fixture, "named fixture (overrides config)")
    ->check(CLI::IsMember(gacv::validation_fixture_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*is_vs_mf) {
      return run_is_vs_mf(opt);
    }
    if (*sweep) {
      return run_saob_sweep(opt);
    }
    if (*table1) {
      return run_table1(opt);
    }
    if (*validate) {
      return run_validate(opt, fixture);
    }
    if (*weights) {
      return run_weights(opt);
    }
  } catch (const gacv::NumericalError& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  } catch (const gacv::Error& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
