#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ope/rng.h"
#include "ope/state.h"

namespace ope {

struct StepOutcome {
  State next;
  double reward = 0.0;
  bool terminal = false;
};

// Anything that can be rolled out for a fixed number of steps. Step
// functions are pure given the rng, so one instance may serve concurrent
// rollouts.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string_view id() const = 0;
  virtual int num_actions() const = 0;
  virtual int horizon() const = 0;
  virtual double gamma() const = 0;
  virtual State initial_state(Rng& rng) const = 0;
  // Stepping a terminal state returns it unchanged with reward 0.
  virtual StepOutcome step(const State& s, Action a, Rng& rng) const = 0;
  virtual bool is_terminal(const State& s) const = 0;
};

struct NextState {
  StateId state;
  double prob;
};

struct RewardOutcome {
  double value;
  double prob;
};

// Finite MDP with sparse transition rows and optional discrete reward
// distributions. Construct through TabularMDP::Builder, which validates.
class TabularMDP final : public Environment {
 public:
  class Builder;

  std::string_view id() const override { return id_; }
  int num_actions() const override { return n_actions_; }
  int horizon() const override { return horizon_; }
  double gamma() const override { return gamma_; }
  State initial_state(Rng& rng) const override;
  StepOutcome step(const State& s, Action a, Rng& rng) const override;
  bool is_terminal(const State& s) const override;

  int num_states() const { return n_states_; }
  std::span<const NextState> transitions(StateId s, Action a) const;
  double transition_prob(StateId s, Action a, StateId next) const;
  double mean_reward(StateId s, Action a) const { return mean_reward_[index(s, a)]; }
  // Empty when the reward of (s, a) is deterministic.
  std::span<const RewardOutcome> reward_outcomes(StateId s, Action a) const;
  double reward_variance(StateId s, Action a) const;
  std::span<const double> initial_distribution() const { return initial_; }
  bool terminal(StateId s) const { return terminal_[static_cast<std::size_t>(s)]; }

  // Same MDP with a different evaluation horizon.
  TabularMDP with_horizon(int horizon) const;

 private:
  TabularMDP() = default;
  std::size_t index(StateId s, Action a) const;
  void check_state(StateId s) const;

  std::string id_ = "tabular";
  int n_states_ = 0;
  int n_actions_ = 0;
  double gamma_ = 1.0;
  int horizon_ = 1;
  std::vector<std::size_t> row_begin_;  // n_states * n_actions + 1 offsets
  std::vector<NextState> next_;
  std::vector<double> mean_reward_;
  std::vector<std::size_t> reward_begin_;
  std::vector<RewardOutcome> reward_outcomes_;
  std::vector<double> initial_;
  std::vector<bool> terminal_;
};

class TabularMDP::Builder {
 public:
  Builder(int n_states, int n_actions, double gamma, int horizon);

  Builder& set_id(std::string id);
  Builder& set_transition(StateId s, Action a, std::vector<NextState> row);
  Builder& set_reward(StateId s, Action a, double mean);
  // The mean reward becomes the distribution's mean.
  Builder& set_reward_distribution(StateId s, Action a,
                                   std::vector<RewardOutcome> outcomes);
  Builder& set_initial(std::vector<double> mu);
  // Absorbing: self-loop with probability 1 and reward 0 under every action.
  Builder& set_terminal(StateId s);

  // Throws std::invalid_argument naming the first violated invariant.
  TabularMDP build() const;

 private:
  std::size_t index(StateId s, Action a) const;

  std::string id_ = "tabular";
  int n_states_;
  int n_actions_;
  double gamma_;
  int horizon_;
  std::vector<std::vector<NextState>> rows_;
  std::vector<double> mean_reward_;
  std::vector<std::vector<RewardOutcome>> outcomes_;
  std::vector<double> initial_;
  std::vector<bool> terminal_;
};

}  // namespace ope
