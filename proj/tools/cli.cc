#include "ope/cli.h"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "ope/bench.h"
#include "ope/dataset_io.h"
#include "ope/sampling.h"

namespace ope {

namespace {

struct Flags {
  std::string config_path;
  std::optional<std::string> env;
  std::optional<std::string> alphas;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_eval;
  std::optional<std::string> estimators;
  std::optional<std::size_t> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> splits;
  std::optional<std::string> per_run_out;
  std::optional<std::string> sizes;
  std::optional<std::string> c_values;
  std::optional<std::string> objective;
  std::string out;
  std::size_t fixtures = 20;
};

// Config file first, then command-line flags on top.
ExperimentConfig build_config(const Flags& f) {
  ExperimentConfig c;
  if (!f.config_path.empty()) c = load_config(f.config_path, c);
  if (f.env) apply_config_value(c, "env", *f.env);
  if (f.alphas) apply_config_value(c, "alphas", *f.alphas);
  if (f.n_train) c.n_train = *f.n_train;
  if (f.n_eval) c.n_eval = *f.n_eval;
  if (f.runs) c.runs = *f.runs;
  if (f.seed) c.seed = *f.seed;
  if (f.splits) apply_config_value(c, "splits", *f.splits);
  if (f.per_run_out) c.per_run_out = *f.per_run_out;
  if (f.sizes) apply_config_value(c, "sizes", *f.sizes);
  if (f.c_values) apply_config_value(c, "c_values", *f.c_values);
  if (f.objective) apply_config_value(c, "objective", *f.objective);
  return c;
}

// Writes to --out, or to `out` when no path was given.
template <typename F>
void emit(const std::string& path, std::ostream& out, F&& write) {
  if (path.empty()) {
    write(out);
    return;
  }
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot write " + path);
  write(file);
  if (!file) throw std::runtime_error("write failed for " + path);
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Off-policy value evaluation benchmarks", "ope_bench"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--env", f.env, "mountain_car, sailing, tree, dag, factored, t2");
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--out", f.out, "output path (default: standard output)");
  };

  auto* run = app.add_subcommand("run", "relative RMSE per estimator, alpha and split");
  common(run);
  run->add_option("--alpha", f.alphas, "comma-separated mixing rates");
  run->add_option("--n-train", f.n_train);
  run->add_option("--n-eval", f.n_eval);
  run->add_option("--estimators", f.estimators, "comma-separated method ids");
  run->add_option("--runs", f.runs);
  run->add_option("--splits", f.splits, "comma-separated |D_test| grid");
  run->add_option("--per-run-out", f.per_run_out, "per-run estimates CSV");

  auto* safe = app.add_subcommand("safe-improve", "LCB-based policy selection");
  common(safe);
  safe->add_option("--estimators", f.estimators, "selector method ids");
  safe->add_option("--runs", f.runs);
  safe->add_option("--sizes", f.sizes, "comma-separated |D| schedule");
  safe->add_option("--C", f.c_values, "comma-separated LCB multipliers");
  safe->add_option("--objective", f.objective, "maximize or minimize");

  auto* theory = app.add_subcommand("theory-check", "enumeration checks of the variance recursion and the tree bound");
  theory->add_option("--seed", f.seed, "master seed");
  theory->add_option("--fixtures", f.fixtures, "number of random trees")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "sample a behavior dataset (uniform policy)");
  common(gen);
  gen->add_option("--n-eval", f.n_eval, "number of trajectories");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*theory) {
      const auto r = run_theory_check(f.seed.value_or(1), f.fixtures);
      out << "fixtures " << r.fixtures << '\n'
          << "max_variance_deviation " << format_real(r.max_variance_deviation) << '\n'
          << "max_bound_deviation " << format_real(r.max_bound_deviation) << '\n';
      const bool ok = r.max_variance_deviation <= 1e-10 && r.max_bound_deviation <= 1e-10;
      out << (ok ? "ok" : "deviation above 1e-10") << '\n';
      return ok ? 0 : 2;
    }
    ExperimentConfig config = build_config(f);
    if (*run) {
      if (f.estimators) apply_config_value(config, "estimators", *f.estimators);
      validate(config);
      const auto result = run_rmse_experiment(config);
      emit(f.out, out, [&](std::ostream& o) { write_rmse_csv(o, result.rows); });
    } else if (*safe) {
      if (f.estimators) apply_config_value(config, "selectors", *f.estimators);
      validate(config);
      const auto result = run_safe_improvement(config);
      emit(f.out, out, [&](std::ostream& o) { write_safe_csv(o, result.rows); });
    } else if (*gen) {
      if (config.n_eval < 1) throw ConfigError(0, "n_eval must be at least 1");
      const auto setup = make_env_setup(config);
      const auto data = sample_dataset(*setup.env, *make_uniform_policy(setup.n_actions), config.n_eval,
                                       config.seed, "uniform");
      emit(f.out, out, [&](std::ostream& o) { write_dataset(o, data); });
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace ope
