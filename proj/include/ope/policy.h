#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ope/rng.h"
#include "ope/state.h"

namespace ope {

class QFunction;

// State-conditional action distribution. Implementations are immutable and
// shared through PolicyPtr.
class Policy {
 public:
  enum class Kind { kTabular, kUniform, kGreedy, kMixture };

  virtual ~Policy() = default;

  virtual Kind kind() const = 0;
  virtual int num_actions() const = 0;
  // Writes pi(.|s) into out[0, num_actions()).
  virtual void probs(const State& s, std::span<double> out) const = 0;

  double prob(const State& s, Action a) const;
  Action sample(const State& s, Rng& rng) const;
};

using PolicyPtr = std::shared_ptr<const Policy>;

PolicyPtr make_uniform_policy(int n_actions);

// One row per state id; each row must be a distribution.
PolicyPtr make_tabular_policy(std::vector<std::vector<double>> table);

// One-hot tabular policy.
PolicyPtr make_deterministic_policy(const std::vector<Action>& actions, int n_actions);

// Puts all mass on argmax_a q(step, s, a) (argmin when `minimize`); ties go to
// the lowest action index.
PolicyPtr make_greedy_policy(std::shared_ptr<const QFunction> q, int step = 1,
                             bool minimize = false);

// (1 - alpha) * pi_train + alpha * pi0. Throws for alpha outside [0, 1] or
// mismatched action counts.
PolicyPtr mix_policies(PolicyPtr pi_train, PolicyPtr pi0, double alpha);

// Per-state probability table of `pi` on discrete states 0..n_states-1.
std::vector<std::vector<double>> tabulate(const Policy& pi, int n_states);

}  // namespace ope
