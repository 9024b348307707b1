#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ope/environments.h"
#include "ope/estimators.h"
#include "ope/mdp.h"
#include "ope/model_fit.h"
#include "ope/policy.h"
#include "ope/trajectory.h"

namespace ope {

// Invalid configuration. `line` is 0 when the problem is not tied to a line
// of a config file (e.g. a command-line flag or a cross-field check).
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class Objective { kMaximize, kMinimize };

struct ExperimentConfig {
  // Environment: mountain_car, sailing, tree, dag, factored, t2.
  std::string env = "mountain_car";
  std::uint64_t env_seed = 1;
  int grid = 10;                       // sailing
  int tree_branch = 2;                 // tree
  int tree_actions = 2;
  int tree_horizon = 3;
  std::vector<int> dag_layers{1, 3, 3};  // dag
  int dag_actions = 2;
  int factored_vars = 5;               // factored
  int factored_arity = 4;
  int factored_actions = 12;
  int factored_horizon = 22;

  // RMSE experiment.
  std::size_t n_train = 2000;
  std::size_t n_eval = 5000;
  std::vector<double> alphas{0.5};
  // |D_test| grid. A split equal to n_eval leaves D_reg empty; methods that
  // need a model are skipped there.
  std::vector<std::size_t> splits{10, 100, 1000, 2000, 3000, 4000, 4900, 4990};
  std::vector<Method> estimators{Method::kIs,  Method::kStepIs, Method::kWis,   Method::kStepWis,
                                 Method::kReg, Method::kDr,     Method::kDrBsl, Method::kKfoldDr};
  std::size_t runs = 10;
  std::uint64_t seed = 1;
  // Crop range; "auto" derives it from the environment's return range.
  bool crop_auto = true;
  double crop_lo = -std::numeric_limits<double>::infinity();
  double crop_hi = std::numeric_limits<double>::infinity();
  // Crop the per-run estimate (default) or every per-trajectory value.
  CropLevel crop_level = CropLevel::kEstimate;
  int folds = 2;
  std::size_t truth_rollouts = 100000;
  // Q-hat for DR on tabular environments: model (fit on D_reg), exact, zero.
  std::string q_fitter = "model";
  std::string per_run_out;  // optional per-run estimates CSV

  // Safe improvement.
  std::vector<std::size_t> sizes{5000};
  std::vector<double> train_fractions{0.2, 0.4, 0.6, 0.8};
  std::vector<double> safe_alphas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> c_values{0.0, 1.645};
  std::vector<Method> selectors{Method::kStepIs, Method::kDr};
  Objective objective = Objective::kMaximize;
  std::size_t candidate_rollouts = 10000;
};

// Applies one `key = value` assignment. Throws ConfigError naming `line`.
void apply_config_value(ExperimentConfig& config, const std::string& key, const std::string& value,
                        std::size_t line = 0);
// Plain `key = value` lines; `#` starts a comment; blank lines are ignored.
void parse_config(std::istream& in, ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});
// Cross-field checks (splits within n_eval, runs >= 1, ...).
void validate(const ExperimentConfig& config);

// Everything the drivers need to know about one environment.
struct EnvSetup {
  std::shared_ptr<const Environment> env;
  std::shared_ptr<const TabularMDP> tabular;  // set when exact ground truth exists
  std::string id;
  int n_actions = 0;
  int horizon = 0;
  double gamma = 1.0;
  double reward_floor = 0.0;
  double baseline_scale = 1.0;
  double return_lo = 0.0;
  double return_hi = 0.0;
  // Discretizer for continuous state spaces; empty for tabular ones.
  std::optional<Discretizer> discretizer;
  // Factored environments fit the factored model instead of a tabular one.
  bool factored = false;
  int n_vars = 0;
  int arity = 0;
  std::vector<int> reward_features;
  // Sailing fits Q-hat with KernelQ.
  bool kernel = false;
};

EnvSetup make_env_setup(const ExperimentConfig& config);

// Model of `data` as the environment prescribes (discretized, tabular or factored).
FittedModel fit_env_model(const EnvSetup& setup, const Dataset& data);
// Q-hat for DR under pi1, fitted on `data` (model-based, or KernelQ for sailing).
QPtr fit_env_q(const EnvSetup& setup, const Dataset& data, const FittedModel& model, const PolicyPtr& pi1);
// True value of pi: exact on tabular environments, Monte Carlo otherwise.
double true_value(const EnvSetup& setup, const Policy& pi, std::size_t rollouts, std::uint64_t seed);

struct RmseRow {
  std::string method;
  double alpha = 0.0;
  std::size_t split = 0;
  std::size_t n = 0;         // runs
  double rel_rmse = 0.0;     // sqrt(mean err^2) / |truth|
  double bias = 0.0;         // mean err / |truth|
  double std_error = 0.0;    // delta-method standard error of rel_rmse
};

struct PerRunEstimate {
  std::size_t run = 0;
  std::string method;
  double alpha = 0.0;
  std::size_t split = 0;
  double estimate = 0.0;
  double truth = 0.0;
};

struct RmseResult {
  std::vector<RmseRow> rows;
  std::vector<PerRunEstimate> per_run;
  std::map<double, double> truth;  // per alpha
};

RmseResult run_rmse_experiment(const ExperimentConfig& config);

// Aggregates per-run estimates into rows (the same reduction the driver
// uses), in first-seen (method, alpha, split) order.
std::vector<RmseRow> summarize_rmse(const std::vector<PerRunEstimate>& per_run);

std::string rmse_csv_header();
void write_rmse_csv(std::ostream& out, const std::vector<RmseRow>& rows);
void write_per_run_csv(std::ostream& out, const std::vector<PerRunEstimate>& per_run);
std::vector<PerRunEstimate> read_per_run_csv(std::istream& in);

struct SafeRow {
  std::string selector;
  Objective objective = Objective::kMaximize;
  double c = 0.0;
  std::size_t size = 0;
  std::size_t runs = 0;
  double mean_improvement = 0.0;  // true value of the pick minus the behavior value
  double std_error = 0.0;
  double fallback_rate = 0.0;     // share of runs that kept the behavior policy
};

struct SafeResult {
  std::vector<SafeRow> rows;
  double behavior_value = 0.0;
};

SafeResult run_safe_improvement(const ExperimentConfig& config);

std::string safe_csv_header();
void write_safe_csv(std::ostream& out, const std::vector<SafeRow>& rows);

// Enumeration cross-checks of the variance recursion and the tree bound on
// random fixtures; returns the largest absolute deviation.
struct TheoryCheck {
  double max_variance_deviation = 0.0;
  double max_bound_deviation = 0.0;
  std::size_t fixtures = 0;
};
TheoryCheck run_theory_check(std::uint64_t seed, std::size_t fixtures = 20);

}  // namespace ope
