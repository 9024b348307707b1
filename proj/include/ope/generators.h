#pragma once

#include <cstdint>
#include <vector>

#include "ope/mdp.h"

namespace ope {

// Two-step fixture with actions a = 0 and b = 1. State 0 is the only start;
// action a leads to state 1, b to state 2; state 3 is absorbing. The first
// step pays 0, the second pays 1 for action a and 0 for b, so every
// trajectory is (a|b, a|b) and gamma = 1. With `noisy_leaf`, the reward of
// (state 1, a) is 1 +- 0.5 with equal probability.
TabularMDP make_t2(bool noisy_leaf = false);

// History-indexed tree: every state at step t is one observation history.
// `branch` observations per (history, action), including the terminal
// observation that carries the only non-zero reward. gamma = 1; the last
// state index is the absorbing terminal.
TabularMDP make_random_tree_mdp(int branch, int actions, int horizon, std::uint64_t seed);

// Closed-form number of non-terminal states of make_random_tree_mdp.
std::size_t tree_state_count(int branch, int actions, int horizon);

// Layered DAG: layer t holds layer_sizes[t] states and every (s, a) in layer t
// moves to a Dirichlet row over layer t + 1. Terminal rewards as for trees.
TabularMDP make_random_dag_mdp(const std::vector<int>& layer_sizes, int actions,
                               std::uint64_t seed);

// Two layers: start state 0, both actions lead to state 1 where action 0
// pays 0 or 2 with equal probability and action 1 pays 1. Four trajectories
// per behavior draw; two histories reunite at state 1.
TabularMDP make_reunion_dag();

// Re-expands a layered MDP into its history tree over `horizon` steps. States
// reachable with zero probability are dropped.
TabularMDP unroll_to_tree(const TabularMDP& mdp, int horizon);

// layer[s] = the unique step t in 1..horizon at which s can occur, or 0 when
// s is unreachable within the horizon. Throws std::invalid_argument when a
// state occurs at two steps.
std::vector<int> layer_of_states(const TabularMDP& mdp, int horizon);

// Layered, and every reachable state has exactly one (parent, action)
// predecessor (or is a start state with no predecessor).
bool is_tree(const TabularMDP& mdp, int horizon);

// Moves epsilon/2 of every row's mass onto a state outside its support, so
// the max-row L1 distance to the original is exactly epsilon (rows with full
// support are left unchanged). Absorbing states are untouched.
TabularMDP perturb_transitions(const TabularMDP& mdp, double epsilon, std::uint64_t seed);

struct FactoredConfig {
  int n_vars = 5;
  int arity = 4;
  int actions = 12;
  int horizon = 22;
  double gamma = 1.0;
  int reward_vars = 3;          // mean reward is linear in the first reward_vars variables
  double action_effect = 0.5;   // per-action reward offsets drawn from [-effect, effect]
};

// Factored-transition simulator: each state variable evolves independently
// given the action. The joint MDP is materialized for ground truth; states
// are joint ids with variable 0 least significant.
class FactoredSim {
 public:
  FactoredSim(const FactoredConfig& config, std::uint64_t seed);

  const FactoredConfig& config() const { return config_; }
  const TabularMDP& joint() const { return joint_; }
  // Sparse marginal row P_i(. | v, a).
  const std::vector<NextState>& marginal(int var, Action a, int value) const;
  std::vector<int> features(StateId id) const;
  StateId encode(const std::vector<int>& features) const;
  const std::vector<double>& reward_weights() const { return weights_; }
  const std::vector<double>& action_offsets() const { return offsets_; }

 private:
  FactoredConfig config_;
  std::vector<std::vector<NextState>> marginals_;  // [(var * A + a) * arity + v]
  std::vector<double> weights_;
  std::vector<double> offsets_;
  TabularMDP joint_;
};

}  // namespace ope
