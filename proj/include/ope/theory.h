#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ope/mdp.h"
#include "ope/model_fit.h"
#include "ope/policy.h"
#include "ope/q_function.h"

namespace ope {

// Variance of DR split by source. Entry t - 1 of each vector belongs to step
// t, already weighted by the squared discounted importance ratio that reaches
// it:
//   state_value[0]    Var_mu V(s_1)
//   state_value[t-1]  E[gamma^2(t-1) rho_{1:t-1}^2 Var(V(s_t) | s_{t-1}, a_{t-1})], t >= 2
//   delta[t-1]        E[gamma^2(t-1) rho_{1:t-1}^2 Var_{pi0}(rho_t Delta_t | s_t)]
//   reward[t-1]       E[gamma^2(t-1) rho_{1:t}^2 Var(r_t | s_t, a_t)]
// with Delta_t = Q-hat - Q. The recursion folds the future term into these.
struct VarianceBreakdown {
  std::vector<double> state_value;
  std::vector<double> delta;
  std::vector<double> reward;
  double total = 0.0;

  double state_value_total() const;
  double delta_total() const;
  double reward_total() const;
};

// Cell count limit shared by the exact routines below (states * actions * H).
inline constexpr std::size_t kExactCellLimit = 1000000;

// Exact variance of dr() for trajectories drawn from (mdp, pi0), computed by
// the backward recursion
//   G_t(s) = Var_{pi0}(rho Delta | s)
//          + sum_a pi0 rho^2 [Var r + gamma^2 (Var_P V_{t+1} + E_P G_{t+1})],
//   Var = Var_mu V_1 + E_mu G_1.
// Q-hat is queried at State::discrete(s). Throws std::length_error past
// kExactCellLimit and SupportViolation when pi1 leaves pi0's support.
VarianceBreakdown dr_variance_exact(const TabularMDP& mdp, const Policy& pi0, const Policy& pi1,
                                    const QFunction& qhat, int horizon);

// Marginal state-action occupancies per layer under both policies:
// p0[t - 1][s * A + a] = P0(s_t = s, a_t = a), same for p1.
struct OccupancyTable {
  int n_states = 0;
  int n_actions = 0;
  std::vector<std::vector<double>> p0;
  std::vector<std::vector<double>> p1;

  double at0(int t, StateId s, Action a) const;
  double at1(int t, StateId s, Action a) const;
};

OccupancyTable occupancy(const TabularMDP& mdp, const Policy& pi0, const Policy& pi1, int horizon);

// Lower bound on the variance of unbiased estimators for tree MDPs, by a
// walk over every history:
//   Var_mu V_1 + sum_t E_{pi0}[gamma^2(t-1) rho_{1:t}^2 Var(r_t + gamma V_{t+1}(s_{t+1}) | s_t, a_t)].
// Throws std::invalid_argument when the MDP is not a tree over `horizon`.
double cr_bound_tree(const TabularMDP& tree, const Policy& pi0, const Policy& pi1, int horizon);

// DAG version: the cumulative ratio is replaced by the occupancy ratio
// P1(s_t, a_t) / P0(s_t, a_t). Throws std::invalid_argument when a state
// occurs at two steps.
double cr_bound_dag(const TabularMDP& dag, const Policy& pi0, const Policy& pi1, int horizon);

// epsilon * v_max * sum_{t=1}^{H} gamma^t
double drv2_bias_bound(double epsilon, double v_max, double gamma, int horizon);

// max_{s,a} || P-hat(.|s,a) - P(.|s,a) ||_1. Throws std::invalid_argument on
// mismatched state or action counts.
double model_l1_epsilon(const TabularMDP& model, const TabularMDP& truth);
double model_l1_epsilon(const FittedModel& model, const TabularMDP& truth);

// Largest |V-hat_t(s)| over the states the model can reach at step t from its
// initial distribution (any action), t = 1..H.
double model_v_max(const FittedModel& model, const TabularQ& model_q, const Policy& pi1);

// Exact E[dr_v2] under (truth, pi0), by
//   e_t(s) = V-hat_t(s) + sum_a pi1 (R - R-hat + gamma sum_s' P(s')(e_{t+1}(s') - V-hat_{t+1}(s'))),
// e_{H+1} = V-hat_{H+1} = 0. The model is queried at State::discrete(s).
double dr_v2_expectation(const TabularMDP& truth, const FittedModel& model, const QFunction& model_q,
                         const Policy& pi1, int horizon);

struct ErrorSummary {
  double rmse = 0.0;
  double relative_rmse = 0.0;  // rmse / |truth|
  double bias = 0.0;
  double variance = 0.0;       // n - 1 denominator
  double bias_stderr = 0.0;
  std::size_t runs = 0;
};

// Errors of repeated estimates against a known value. Needs at least 2.
ErrorSummary summarize_errors(std::span<const double> estimates, double truth);

// Runs `draw(derive_seed(seed, r))` for r = 0..runs-1 and summarizes.
ErrorSummary estimator_mse(const std::function<double(std::uint64_t)>& draw, double truth, std::size_t runs,
                           std::uint64_t seed);

}  // namespace ope
