#include "ope/bench.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "ope/bellman.h"
#include "ope/dataset_io.h"
#include "ope/enumeration.h"
#include "ope/generators.h"
#include "ope/rng.h"
#include "ope/sampling.h"
#include "ope/stats.h"
#include "ope/theory.h"

namespace ope {

namespace {

// Seed streams below the master seed.
constexpr std::uint64_t kTrainStream = 0x7472;
constexpr std::uint64_t kEvalStream = 0x6576;
constexpr std::uint64_t kTruthStream = 0x7472757468;
constexpr std::uint64_t kSafeStream = 0x73616665;
constexpr std::uint64_t kCandidateStream = 0x63616e64;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text, std::size_t line) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(line, key + ": expected an integer, got '" + text + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& text, std::size_t line) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(line, key + ": expected a number, got '" + text + "'");
  return v;
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& value, std::size_t line, F&& parse_one) {
  std::vector<T> out;
  for (const auto& item : split_list(value)) out.push_back(parse_one(key, item, line));
  if (out.empty()) throw ConfigError(line, key + ": empty list");
  return out;
}

std::vector<Method> parse_method_list(const std::string& key, const std::string& value, std::size_t line) {
  try {
    return parse_methods(value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(line, key + ": " + e.what());
  }
}

double sum_discount(double gamma, int horizon) {
  double total = 0.0;
  double g = 1.0;
  for (int t = 0; t < horizon; ++t) {
    total += g;
    g *= gamma;
  }
  return total;
}

// Uniform random policy table with rows bounded away from 0.
PolicyPtr random_table_policy(Rng& rng, int n_states, int n_actions) {
  std::vector<std::vector<double>> table;
  for (int s = 0; s < n_states; ++s) {
    auto row = rng.dirichlet(static_cast<std::size_t>(n_actions), 2.0);
    for (auto& p : row) p = (p + 0.05) / (1.0 + 0.05 * n_actions);
    double sum = 0.0;
    for (std::size_t a = 0; a + 1 < row.size(); ++a) sum += row[a];
    row.back() = 1.0 - sum;
    table.push_back(std::move(row));
  }
  return make_tabular_policy(std::move(table));
}

CropBounds crop_bounds(const ExperimentConfig& c, const EnvSetup& setup) {
  if (c.crop_auto) return {setup.return_lo, setup.return_hi, c.crop_level};
  return {c.crop_lo, c.crop_hi, c.crop_level};
}

bool needs_model(Method m) { return m == Method::kReg || m == Method::kDr || m == Method::kDrV2; }

}  // namespace

ConfigError::ConfigError(std::size_t line, const std::string& what)
    : std::invalid_argument(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

void apply_config_value(ExperimentConfig& c, const std::string& key, const std::string& value, std::size_t line) {
  auto as_int = [&] { return parse_integer<int>(key, value, line); };
  auto as_size = [&] { return parse_integer<std::size_t>(key, value, line); };
  auto as_u64 = [&] { return parse_integer<std::uint64_t>(key, value, line); };
  auto doubles = [&] { return parse_list<double>(key, value, line, parse_double); };
  auto sizes = [&] { return parse_list<std::size_t>(key, value, line, parse_integer<std::size_t>); };

  if (key == "env") {
    static const std::vector<std::string> known{"mountain_car", "sailing", "tree", "dag", "factored", "t2"};
    if (std::find(known.begin(), known.end(), value) == known.end()) {
      throw ConfigError(line, "env: unknown environment '" + value +
                                  "' (expected mountain_car, sailing, tree, dag, factored, t2)");
    }
    c.env = value;
  } else if (key == "env_seed") {
    c.env_seed = as_u64();
  } else if (key == "grid") {
    c.grid = as_int();
  } else if (key == "tree_branch") {
    c.tree_branch = as_int();
  } else if (key == "tree_actions") {
    c.tree_actions = as_int();
  } else if (key == "tree_horizon") {
    c.tree_horizon = as_int();
  } else if (key == "dag_layers") {
    c.dag_layers = parse_list<int>(key, value, line, parse_integer<int>);
  } else if (key == "dag_actions") {
    c.dag_actions = as_int();
  } else if (key == "factored_vars") {
    c.factored_vars = as_int();
  } else if (key == "factored_arity") {
    c.factored_arity = as_int();
  } else if (key == "factored_actions") {
    c.factored_actions = as_int();
  } else if (key == "factored_horizon") {
    c.factored_horizon = as_int();
  } else if (key == "n_train") {
    c.n_train = as_size();
  } else if (key == "n_eval") {
    c.n_eval = as_size();
  } else if (key == "alpha" || key == "alphas") {
    c.alphas = doubles();
  } else if (key == "splits") {
    c.splits = sizes();
  } else if (key == "estimators") {
    c.estimators = parse_method_list(key, value, line);
  } else if (key == "runs") {
    c.runs = as_size();
  } else if (key == "seed") {
    c.seed = as_u64();
  } else if (key == "crop") {
    if (value == "auto") {
      c.crop_auto = true;
    } else if (value == "none") {
      c.crop_auto = false;
      c.crop_lo = -std::numeric_limits<double>::infinity();
      c.crop_hi = std::numeric_limits<double>::infinity();
    } else {
      const auto b = doubles();
      if (b.size() != 2 || !(b[0] <= b[1])) throw ConfigError(line, "crop: expected auto, none or lo,hi with lo <= hi");
      c.crop_auto = false;
      c.crop_lo = b[0];
      c.crop_hi = b[1];
    }
  } else if (key == "crop_level") {
    if (value == "estimate") {
      c.crop_level = CropLevel::kEstimate;
    } else if (value == "trajectory") {
      c.crop_level = CropLevel::kTrajectory;
    } else {
      throw ConfigError(line, "crop_level: expected estimate or trajectory");
    }
  } else if (key == "folds") {
    c.folds = as_int();
  } else if (key == "truth_rollouts") {
    c.truth_rollouts = as_size();
  } else if (key == "q_fitter") {
    if (value != "model" && value != "exact" && value != "zero") {
      throw ConfigError(line, "q_fitter: expected model, exact or zero");
    }
    c.q_fitter = value;
  } else if (key == "per_run_out") {
    c.per_run_out = value;
  } else if (key == "sizes") {
    c.sizes = sizes();
  } else if (key == "train_fractions") {
    c.train_fractions = doubles();
  } else if (key == "safe_alphas") {
    c.safe_alphas = doubles();
  } else if (key == "c_values" || key == "C") {
    c.c_values = doubles();
  } else if (key == "selectors") {
    c.selectors = parse_method_list(key, value, line);
  } else if (key == "objective") {
    if (value == "maximize") {
      c.objective = Objective::kMaximize;
    } else if (value == "minimize") {
      c.objective = Objective::kMinimize;
    } else {
      throw ConfigError(line, "objective: expected maximize or minimize");
    }
  } else if (key == "candidate_rollouts") {
    c.candidate_rollouts = as_size();
  } else {
    throw ConfigError(line, "unknown key '" + key + "'");
  }
}

void parse_config(std::istream& in, ExperimentConfig& config) {
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value', got '" + text + "'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "missing key");
    if (value.empty()) throw ConfigError(line, key + ": missing value");
    apply_config_value(config, key, value, line);
  }
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config file '" + path + "'");
  parse_config(in, base);
  return base;
}

void validate(const ExperimentConfig& c) {
  if (c.runs < 1) throw ConfigError(0, "runs must be at least 1");
  if (c.n_train < 1) throw ConfigError(0, "n_train must be at least 1");
  if (c.n_eval < 1) throw ConfigError(0, "n_eval must be at least 1");
  for (double a : c.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(0, "alpha " + format_real(a) + " outside [0, 1]");
  }
  for (double a : c.safe_alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(0, "safe_alphas entry " + format_real(a) + " outside [0, 1]");
  }
  for (auto m : c.splits) {
    if (m < 1 || m > c.n_eval) {
      throw ConfigError(0, "split " + std::to_string(m) + " outside [1, n_eval = " + std::to_string(c.n_eval) + "]");
    }
  }
  for (double f : c.train_fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError(0, "train fraction " + format_real(f) + " outside (0, 1)");
  }
  for (double x : c.c_values) {
    if (!(x >= 0.0)) throw ConfigError(0, "C values must be nonnegative");
  }
  for (auto s : c.sizes) {
    if (s < 2) throw ConfigError(0, "safe-improvement sizes must be at least 2");
  }
  if (c.alphas.empty() || c.splits.empty() || c.estimators.empty()) throw ConfigError(0, "empty grid");
  if (c.sizes.empty() || c.train_fractions.empty() || c.safe_alphas.empty() || c.c_values.empty() ||
      c.selectors.empty()) {
    throw ConfigError(0, "empty safe-improvement grid");
  }
  const bool kfold = std::find(c.estimators.begin(), c.estimators.end(), Method::kKfoldDr) != c.estimators.end();
  if (kfold && (c.folds < 2 || static_cast<std::size_t>(c.folds) > c.n_eval)) {
    throw ConfigError(0, "folds must lie in [2, n_eval]");
  }
  if (c.truth_rollouts < 2 || c.candidate_rollouts < 2) throw ConfigError(0, "rollout counts must be at least 2");
  if (c.env == "sailing" && c.grid < 2) throw ConfigError(0, "grid must be at least 2");
}

EnvSetup make_env_setup(const ExperimentConfig& c) {
  EnvSetup s;
  s.id = c.env;
  auto tabular = [&](TabularMDP mdp) {
    auto ptr = std::make_shared<const TabularMDP>(std::move(mdp));
    s.env = ptr;
    s.tabular = ptr;
    double lo = 0.0;
    double hi = 0.0;
    for (StateId x = 0; x < ptr->num_states(); ++x) {
      for (Action a = 0; a < ptr->num_actions(); ++a) {
        const auto outcomes = ptr->reward_outcomes(x, a);
        if (outcomes.empty()) {
          lo = std::min(lo, ptr->mean_reward(x, a));
          hi = std::max(hi, ptr->mean_reward(x, a));
        }
        for (const auto& o : outcomes) {
          lo = std::min(lo, o.value);
          hi = std::max(hi, o.value);
        }
      }
    }
    const double g = sum_discount(ptr->gamma(), ptr->horizon());
    s.reward_floor = lo;
    s.return_lo = lo * g;
    s.return_hi = hi * g;
  };
  if (c.env == "mountain_car") {
    auto env = std::make_shared<const MountainCar>();
    s.env = env;
    s.discretizer = Discretizer({64.0, 256.0});
    s.reward_floor = env->reward_min();
    s.return_lo = min_return(*env);
    s.return_hi = max_return(*env);
  } else if (c.env == "sailing") {
    SailingConfig sc;
    sc.grid = c.grid;
    auto env = std::make_shared<const Sailing>(sc);
    s.env = env;
    s.discretizer = Discretizer({1.0, 1.0, 1.0, 1.0});
    s.reward_floor = env->reward_min();
    s.baseline_scale = 0.5;
    s.return_lo = min_return(*env);
    s.return_hi = max_return(*env);
    s.kernel = true;
  } else if (c.env == "tree") {
    tabular(make_random_tree_mdp(c.tree_branch, c.tree_actions, c.tree_horizon, c.env_seed));
  } else if (c.env == "dag") {
    tabular(make_random_dag_mdp(c.dag_layers, c.dag_actions, c.env_seed));
  } else if (c.env == "t2") {
    tabular(make_t2());
  } else if (c.env == "factored") {
    FactoredConfig fc;
    fc.n_vars = c.factored_vars;
    fc.arity = c.factored_arity;
    fc.actions = c.factored_actions;
    fc.horizon = c.factored_horizon;
    fc.reward_vars = std::min(fc.reward_vars, fc.n_vars);
    const FactoredSim sim(fc, c.env_seed);
    tabular(sim.joint());
    s.factored = true;
    s.n_vars = fc.n_vars;
    s.arity = fc.arity;
    for (int i = 0; i < fc.reward_vars; ++i) s.reward_features.push_back(i);
  } else {
    throw ConfigError(0, "unknown environment '" + c.env + "'");
  }
  s.n_actions = s.env->num_actions();
  s.horizon = s.env->horizon();
  s.gamma = s.env->gamma();
  return s;
}

FittedModel fit_env_model(const EnvSetup& setup, const Dataset& data) {
  if (setup.discretizer) {
    return fit_tabular_model(data, *setup.discretizer, setup.n_actions, setup.reward_floor, setup.gamma);
  }
  if (setup.factored) {
    return fit_factored_model(data, setup.n_vars, setup.arity, setup.n_actions, setup.reward_features,
                              setup.gamma);
  }
  auto mapping = std::make_shared<IdentityMapping>(static_cast<std::size_t>(setup.tabular->num_states()));
  return fit_tabular_model(data, std::move(mapping), setup.n_actions, setup.reward_floor, setup.gamma);
}

QPtr fit_env_q(const EnvSetup& setup, const Dataset& data, const FittedModel& model, const PolicyPtr& pi1) {
  if (setup.kernel) {
    KernelConfig kc;
    kc.direction_dims = {false, false, true, true};
    return kernel_q(data, setup.n_actions, setup.gamma, *pi1, setup.horizon, kc);
  }
  return q_from_model(model, *pi1, setup.horizon);
}

double true_value(const EnvSetup& setup, const Policy& pi, std::size_t rollouts, std::uint64_t seed) {
  if (setup.tabular) return exact_value(*setup.tabular, pi, setup.horizon);
  return monte_carlo_value(*setup.env, pi, rollouts, seed).mean;
}

// ---------------------------------------------------------------------------
// RMSE experiment

RmseResult run_rmse_experiment(const ExperimentConfig& config) {
  validate(config);
  const EnvSetup setup = make_env_setup(config);
  const Environment& env = *setup.env;
  const auto pi0 = make_uniform_policy(setup.n_actions);
  const CropBounds crop = crop_bounds(config, setup);
  if (config.q_fitter == "exact" && !setup.tabular) {
    throw ConfigError(0, "q_fitter = exact needs a tabular environment");
  }

  // pi_train comes from one training set per seed; runs redraw D_eval only.
  const Dataset d_train = sample_dataset(env, *pi0, config.n_train, derive_seed(config.seed, kTrainStream));
  const FittedModel train_model = fit_env_model(setup, d_train);
  const PolicyPtr pi_train = optimal_policy(train_model, setup.horizon);

  RmseResult result;
  std::vector<PolicyPtr> pi1s;
  for (std::size_t i = 0; i < config.alphas.size(); ++i) {
    const double alpha = config.alphas[i];
    pi1s.push_back(mix_policies(pi_train, pi0, alpha));
    if (!result.truth.count(alpha)) {
      result.truth[alpha] = true_value(setup, *pi1s.back(), config.truth_rollouts,
                                       derive_seed(config.seed, kTruthStream + i));
    }
  }

  const auto& methods = config.estimators;
  const bool any_model = std::any_of(methods.begin(), methods.end(), needs_model);
  const bool kfold = std::find(methods.begin(), methods.end(), Method::kKfoldDr) != methods.end();
  const auto baseline =
      constant_baseline_q(setup.reward_floor, setup.baseline_scale, setup.gamma, setup.horizon, setup.n_actions);

  auto q_for = [&](const Dataset& data, const FittedModel& model, const PolicyPtr& pi1) -> QPtr {
    if (config.q_fitter == "exact") return exact_q(*setup.tabular, *pi1, setup.horizon);
    if (config.q_fitter == "zero") return std::make_shared<ZeroQ>(setup.horizon, setup.n_actions);
    return fit_env_q(setup, data, model, pi1);
  };

  const std::uint64_t eval_seed = derive_seed(config.seed, kEvalStream);
  for (std::size_t run = 0; run < config.runs; ++run) {
    const Dataset d_eval = sample_dataset(env, *pi0, config.n_eval, derive_seed(eval_seed, run));
    // Models depend on the split only, so they are shared across alphas.
    std::vector<std::optional<FittedModel>> models(config.splits.size());
    for (std::size_t ai = 0; ai < config.alphas.size(); ++ai) {
      const double alpha = config.alphas[ai];
      const PolicyPtr& pi1 = pi1s[ai];
      const double truth = result.truth[alpha];
      for (std::size_t si = 0; si < config.splits.size(); ++si) {
        const std::size_t m = config.splits[si];
        const std::size_t n_reg = config.n_eval - m;
        const Dataset d_test = n_reg == 0 ? d_eval : d_eval.slice(n_reg, m);
        std::optional<Dataset> d_reg;
        if (n_reg > 0) d_reg.emplace(d_eval.slice(0, n_reg));
        if (d_reg && any_model && !models[si]) models[si].emplace(fit_env_model(setup, *d_reg));

        EstimatorInputs in;
        in.pi1 = pi1;
        in.gamma = setup.gamma;
        in.baseline_q = baseline;
        for (Method method : methods) {
          if (method == Method::kKfoldDr) continue;
          if (needs_model(method) && !d_reg) continue;
          if (needs_model(method)) {
            in.model = &*models[si];
            if (!in.model_q) in.model_q = q_from_model(*models[si], *pi1, setup.horizon);
            if (method == Method::kDr && !in.q) {
              in.q = (config.q_fitter == "model" && !setup.kernel) ? in.model_q : q_for(*d_reg, *models[si], pi1);
            }
          }
          const EstimatorReport r =
              method == Method::kReg ? evaluate(*d_reg, method, in) : evaluate(d_test, method, in, crop);
          result.per_run.push_back({run, std::string(method_name(method)), alpha, m, r.point, truth});
        }
      }
      if (kfold) {
        EstimatorInputs in;
        in.pi1 = pi1;
        in.gamma = setup.gamma;
        in.folds = config.folds;
        in.fitter = [&](const Dataset& train) { return q_for(train, fit_env_model(setup, train), pi1); };
        const auto r = evaluate(d_eval, Method::kKfoldDr, in, crop);
        result.per_run.push_back({run, "kfold_dr", alpha, config.n_eval, r.point, truth});
      }
    }
  }
  result.rows = summarize_rmse(result.per_run);
  if (!config.per_run_out.empty()) {
    std::ofstream out(config.per_run_out);
    if (!out) throw std::runtime_error("cannot write " + config.per_run_out);
    write_per_run_csv(out, result.per_run);
  }
  return result;
}

std::vector<RmseRow> summarize_rmse(const std::vector<PerRunEstimate>& per_run) {
  struct Group {
    RmseRow row;
    double truth = 0.0;
    std::vector<double> errors;
  };
  std::vector<Group> groups;
  for (const auto& e : per_run) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.row.method == e.method && g.row.alpha == e.alpha && g.row.split == e.split;
    });
    if (it == groups.end()) {
      groups.push_back({RmseRow{e.method, e.alpha, e.split, 0, 0.0, 0.0, 0.0}, e.truth, {}});
      it = std::prev(groups.end());
    }
    it->errors.push_back(e.estimate - e.truth);
  }
  std::vector<RmseRow> rows;
  for (auto& g : groups) {
    const double scale = g.truth == 0.0 ? 1.0 : std::abs(g.truth);
    std::vector<double> sq;
    for (double e : g.errors) sq.push_back(e * e);
    const auto st = summarize(sq);
    const double rmse = std::sqrt(st.mean);
    g.row.n = g.errors.size();
    g.row.rel_rmse = rmse / scale;
    g.row.bias = summarize(g.errors).mean / scale;
    g.row.std_error = (rmse > 0.0 && g.errors.size() > 1) ? st.std_error / (2.0 * rmse) / scale : 0.0;
    rows.push_back(g.row);
  }
  return rows;
}

std::string rmse_csv_header() { return "method,alpha,split,n,rel_rmse,bias,stderr"; }

void write_rmse_csv(std::ostream& out, const std::vector<RmseRow>& rows) {
  out << rmse_csv_header() << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << format_real(r.alpha) << ',' << r.split << ',' << r.n << ',' << format_real(r.rel_rmse)
        << ',' << format_real(r.bias) << ',' << format_real(r.std_error) << '\n';
  }
}

void write_per_run_csv(std::ostream& out, const std::vector<PerRunEstimate>& per_run) {
  out << "run,method,alpha,split,estimate,truth\n";
  for (const auto& e : per_run) {
    out << e.run << ',' << e.method << ',' << format_real(e.alpha) << ',' << e.split << ','
        << format_real(e.estimate) << ',' << format_real(e.truth) << '\n';
  }
}

std::vector<PerRunEstimate> read_per_run_csv(std::istream& in) {
  std::vector<PerRunEstimate> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 || trim(line).empty()) continue;
    const auto f = split_list(line);
    if (f.size() != 6) throw ConfigError(number, "per-run CSV: expected 6 fields");
    PerRunEstimate e;
    e.run = parse_integer<std::size_t>("run", f[0], number);
    e.method = f[1];
    e.alpha = parse_double("alpha", f[2], number);
    e.split = parse_integer<std::size_t>("split", f[3], number);
    e.estimate = parse_double("estimate", f[4], number);
    e.truth = parse_double("truth", f[5], number);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Safe improvement

SafeResult run_safe_improvement(const ExperimentConfig& config) {
  validate(config);
  const EnvSetup setup = make_env_setup(config);
  const Environment& env = *setup.env;
  const auto pi0 = make_uniform_policy(setup.n_actions);
  const CropBounds crop = crop_bounds(config, setup);
  const bool minimize = config.objective == Objective::kMinimize;
  const std::size_t n_sel = config.selectors.size();
  const std::size_t n_c = config.c_values.size();

  SafeResult result;
  result.behavior_value = true_value(setup, *pi0, config.truth_rollouts, derive_seed(config.seed, kTruthStream));

  struct Candidate {
    PolicyPtr policy;
    std::vector<double> point;  // per selector
    std::vector<double> se;
    std::optional<double> truth;
  };

  for (std::size_t size : config.sizes) {
    // improvements[sel][c] over runs
    std::vector<std::vector<std::vector<double>>> improvements(n_sel, std::vector<std::vector<double>>(n_c));
    std::vector<std::vector<std::size_t>> fallbacks(n_sel, std::vector<std::size_t>(n_c, 0));
    const std::uint64_t size_seed = derive_seed(derive_seed(config.seed, kSafeStream), size);
    for (std::size_t run = 0; run < config.runs; ++run) {
      const std::uint64_t run_seed = derive_seed(size_seed, run);
      const Dataset d = sample_dataset(env, *pi0, size, run_seed);
      // On-policy estimate of the behavior value from all the data.
      std::vector<double> returns;
      for (const auto& t : d.trajectories()) returns.push_back(t.discounted_return(setup.gamma));
      const double behavior_hat = summarize(returns).mean;

      std::vector<Candidate> candidates;
      for (double f : config.train_fractions) {
        const auto n_tr = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(f * static_cast<double>(size))),
                                                  1, size - 1);
        const Dataset d_train = d.slice(0, n_tr);
        const Dataset d_rest = d.slice(n_tr, size - n_tr);
        const FittedModel model = fit_env_model(setup, d_train);
        const PolicyPtr pi_train = optimal_policy(model, setup.horizon, minimize);
        for (double alpha : config.safe_alphas) {
          Candidate cand;
          cand.policy = mix_policies(pi_train, pi0, alpha);
          EstimatorInputs in;
          in.pi1 = cand.policy;
          in.gamma = setup.gamma;
          in.model = &model;
          in.baseline_q =
              constant_baseline_q(setup.reward_floor, setup.baseline_scale, setup.gamma, setup.horizon, setup.n_actions);
          for (Method sel : config.selectors) {
            if (needs_model(sel)) {
              // D_train is reused to fit Q-hat.
              if (!in.model_q) in.model_q = q_from_model(model, *cand.policy, setup.horizon);
              if (!in.q) in.q = setup.kernel ? fit_env_q(setup, d_train, model, cand.policy) : in.model_q;
            }
            const auto r = sel == Method::kReg ? evaluate(d_train, sel, in) : evaluate(d_rest, sel, in, crop);
            cand.point.push_back(r.point);
            cand.se.push_back(r.std_error);
          }
          candidates.push_back(std::move(cand));
        }
      }

      for (std::size_t si = 0; si < n_sel; ++si) {
        for (std::size_t ci = 0; ci < n_c; ++ci) {
          const double c = config.c_values[ci];
          std::size_t best = 0;
          double best_lcb = -std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < candidates.size(); ++k) {
            const double lcb = candidates[k].point[si] - c * candidates[k].se[si];
            if (lcb > best_lcb) {
              best_lcb = lcb;
              best = k;
            }
          }
          if (!(best_lcb > behavior_hat)) {
            ++fallbacks[si][ci];
            improvements[si][ci].push_back(0.0);
            continue;
          }
          auto& cand = candidates[best];
          if (!cand.truth) {
            cand.truth = true_value(setup, *cand.policy, config.candidate_rollouts,
                                    derive_seed(derive_seed(run_seed, kCandidateStream), best));
          }
          improvements[si][ci].push_back(*cand.truth - result.behavior_value);
        }
      }
    }
    for (std::size_t si = 0; si < n_sel; ++si) {
      for (std::size_t ci = 0; ci < n_c; ++ci) {
        const auto st = summarize(improvements[si][ci]);
        SafeRow row;
        row.selector = std::string(method_name(config.selectors[si]));
        row.objective = config.objective;
        row.c = config.c_values[ci];
        row.size = size;
        row.runs = config.runs;
        row.mean_improvement = st.mean;
        row.std_error = st.std_error;
        row.fallback_rate = static_cast<double>(fallbacks[si][ci]) / static_cast<double>(config.runs);
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

std::string safe_csv_header() { return "selector,objective,C,size,runs,mean_improvement,stderr,fallback_rate"; }

void write_safe_csv(std::ostream& out, const std::vector<SafeRow>& rows) {
  out << safe_csv_header() << '\n';
  for (const auto& r : rows) {
    out << r.selector << ',' << (r.objective == Objective::kMaximize ? "maximize" : "minimize") << ','
        << format_real(r.c) << ',' << r.size << ',' << r.runs << ',' << format_real(r.mean_improvement) << ','
        << format_real(r.std_error) << ',' << format_real(r.fallback_rate) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Theory check

TheoryCheck run_theory_check(std::uint64_t seed, std::size_t fixtures) {
  TheoryCheck out;
  for (std::size_t i = 0; i < fixtures; ++i) {
    Rng rng(derive_seed(seed, i));
    const int actions = 2 + static_cast<int>(i % 2);
    const auto mdp = make_random_tree_mdp(3, actions, 3, derive_seed(seed, 1000 + i));
    const int S = mdp.num_states();
    const auto pi0 = random_table_policy(rng, S, actions);
    const auto pi1 = random_table_policy(rng, S, actions);
    const auto truth = exact_q(mdp, *pi1, 3);
    std::vector<double> noisy;
    for (int t = 1; t <= 3; ++t) {
      for (StateId s = 0; s < S; ++s) {
        for (Action a = 0; a < actions; ++a) {
          noisy.push_back(truth->at(t, static_cast<std::size_t>(s), a) + rng.uniform(-0.5, 0.5));
        }
      }
    }
    const TabularQ qhat(static_cast<std::size_t>(S), 3, actions, std::move(noisy));

    const auto all = enumerate_trajectories(mdp, *pi0, 3);
    double m1 = 0.0;
    double m2 = 0.0;
    for (const auto& w : all) {
      const double v = dr(w.traj, qhat, *pi1, mdp.gamma());
      m1 += w.prob * v;
      m2 += w.prob * v * v;
    }
    const double enumerated = m2 - m1 * m1;
    const double recursion = dr_variance_exact(mdp, *pi0, *pi1, qhat, 3).total;
    out.max_variance_deviation = std::max(out.max_variance_deviation, std::abs(enumerated - recursion));

    const double bound = cr_bound_tree(mdp, *pi0, *pi1, 3);
    const double at_truth = dr_variance_exact(mdp, *pi0, *pi1, *truth, 3).total;
    out.max_bound_deviation = std::max(out.max_bound_deviation, std::abs(bound - at_truth));
    ++out.fixtures;
  }
  return out;
}

}  // namespace ope
