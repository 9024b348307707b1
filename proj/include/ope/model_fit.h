#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ope/environments.h"
#include "ope/mdp.h"
#include "ope/policy.h"
#include "ope/q_function.h"
#include "ope/trajectory.h"

namespace ope {

// Rows for the discretized states seen in a dataset, in first-seen order,
// plus one trailing row for every state never seen. States of the wrong
// dimension (including the empty state) map to the unseen row.
class DiscretizedMapping final : public StateMapping {
 public:
  DiscretizedMapping(Discretizer discretizer, const Dataset& data);

  std::size_t size() const override { return centers_.size() + 1; }
  std::size_t map(const State& s) const override;
  // Cell center; the empty state for the unseen row.
  State representative(std::size_t row) const override;

  std::size_t unseen_row() const { return centers_.size(); }
  const Discretizer& discretizer() const { return discretizer_; }

 private:
  Discretizer discretizer_;
  std::unordered_map<Discretizer::Key, std::size_t, Discretizer::KeyHash> index_;
  std::vector<State> centers_;
};

// Estimated MDP over the rows of a StateMapping. Unseen (row, action) pairs
// pay reward_floor and loop back to their own row.
struct FittedModel {
  TabularMDP mdp;
  std::shared_ptr<const StateMapping> mapping;
  std::vector<std::size_t> pair_counts;  // [row * A + a]
  double reward_floor = 0.0;
  // Factored fits only.
  double reward_residual = 0.0;  // RMS residual of the reward regression
  bool regression_fallback = false;

  std::size_t row(const State& s) const { return mapping->map(s); }
  double reward(const State& s, Action a) const {
    return mdp.mean_reward(static_cast<StateId>(row(s)), a);
  }
  std::size_t count(std::size_t row, Action a) const {
    return pair_counts[row * static_cast<std::size_t>(mdp.num_actions()) + static_cast<std::size_t>(a)];
  }
};

// MLE counts over the rows of `mapping`; the model's initial distribution is
// the empirical distribution of first states.
FittedModel fit_tabular_model(const Dataset& data, std::shared_ptr<const StateMapping> mapping,
                              int n_actions, double reward_floor, double gamma);
// Discretized rows learned from the dataset itself.
FittedModel fit_tabular_model(const Dataset& data, const Discretizer& discretizer, int n_actions,
                              double reward_floor, double gamma);

// Wraps a known MDP (identity mapping, every pair treated as seen).
FittedModel model_from_mdp(TabularMDP mdp);

// Finite-horizon Bellman recursion on the model under pi1, queried through
// the model's mapping.
std::shared_ptr<TabularQ> q_from_model(const FittedModel& model, const Policy& pi1, int horizon);

// Greedy, stationary policy from the first step of the H-step optimal
// (or pessimal) Q of the model.
PolicyPtr optimal_policy(const FittedModel& model, int horizon, bool minimize = false);

// scale * r_floor * (1 - gamma^(H - t + 1)) / (1 - gamma), and
// (H - t + 1) * scale * r_floor at gamma = 1.
std::shared_ptr<ConstantQ> constant_baseline_q(double r_floor, double scale, double gamma, int horizon,
                                               int n_actions);

struct KernelConfig {
  double bandwidth = 0.25;
  int particles = 5;
  // State dimensions holding a direction 0..7 (difference = angle / 45 deg).
  std::vector<bool> direction_dims;
  // Whether the action itself is one of the 8 directions.
  bool action_is_direction = true;
  std::uint64_t seed = 0;
};

// Kernel-based RL over integer-valued states. Support pairs are the distinct
// (state, action) pairs of the data; each keeps its mean reward and
// `particles` next states resampled from its observed successors. The kernel
// exp(-d / b) over the l2 distance in S x A is cut to 0 whenever any
// coordinate deviates by more than 1, and weights are normalized per query.
// A query with no support pair in range has value 0.
class KernelQ final : public QFunction {
 public:
  KernelQ(const Dataset& data, int n_actions, double gamma, const Policy& pi1, int horizon,
          KernelConfig config);

  int horizon() const override { return horizon_; }
  int num_actions() const override { return n_actions_; }
  double q(int t, const State& s, Action a) const override;

  std::size_t num_support() const { return rewards_.size(); }

 private:
  using Key = Discretizer::Key;
  using KeyHash = Discretizer::KeyHash;

  struct Neighbor {
    std::size_t pair;
    double weight;
  };

  Key pair_key(const State& s, Action a) const;
  std::vector<Neighbor> neighbors(const State& s, Action a) const;

  int n_actions_;
  int horizon_;
  double gamma_;
  KernelConfig config_;
  std::size_t dims_;
  std::vector<std::vector<int>> offsets_;
  std::unordered_map<Key, std::size_t, KeyHash> pair_index_;
  std::vector<Key> pair_keys_;
  std::vector<double> rewards_;
  // g_[(t - 1) * pairs + p] = mean reward + gamma * particle average of V(t + 1)
  std::vector<double> g_;
};

std::shared_ptr<KernelQ> kernel_q(const Dataset& data, int n_actions, double gamma, const Policy& pi1,
                                  int horizon, KernelConfig config);

// Factored fit on joint state ids (variable 0 least significant): per-variable
// marginal MLE (unseen (variable, action, value) stays put) and least squares
// with intercept of the reward on `reward_features`. A rank-deficient design
// falls back to the mean reward and sets regression_fallback.
FittedModel fit_factored_model(const Dataset& data, int n_vars, int arity, int n_actions,
                               const std::vector<int>& reward_features, double gamma);

// Text table of counts, rewards and transition rows for debugging.
std::string model_summary(const FittedModel& model, std::size_t max_rows = 50);

}  // namespace ope
