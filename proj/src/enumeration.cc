#include "ope/enumeration.h"

#include <stdexcept>
#include <string>

namespace ope {

namespace {

struct Walker {
  const TabularMDP& mdp;
  const Policy& behavior;
  int horizon;
  std::size_t limit;
  std::vector<WeightedTrajectory> out;
  std::vector<Step> steps;

  void emit(StateId final_state, double prob) {
    if (out.size() >= limit) {
      throw std::length_error("enumeration exceeds " + std::to_string(limit) + " trajectories");
    }
    Trajectory traj;
    traj.steps = steps;
    traj.final_state = State::discrete(final_state);
    out.push_back({std::move(traj), prob});
  }

  void walk(StateId s, double prob) {
    if (static_cast<int>(steps.size()) == horizon) {
      emit(s, prob);
      return;
    }
    const State state = State::discrete(s);
    std::vector<double> pi(static_cast<std::size_t>(behavior.num_actions()));
    behavior.probs(state, pi);
    for (Action a = 0; a < mdp.num_actions(); ++a) {
      const double pa = pi[static_cast<std::size_t>(a)];
      if (pa <= 0.0) continue;
      auto outcomes = mdp.reward_outcomes(s, a);
      const RewardOutcome deterministic{mdp.mean_reward(s, a), 1.0};
      if (outcomes.empty()) outcomes = std::span<const RewardOutcome>(&deterministic, 1);
      for (const auto& r : outcomes) {
        if (r.prob <= 0.0) continue;
        steps.push_back({state, a, r.value, pa});
        for (const auto& ns : mdp.transitions(s, a)) {
          if (ns.prob > 0.0) walk(ns.state, prob * pa * r.prob * ns.prob);
        }
        steps.pop_back();
      }
    }
  }
};

}  // namespace

std::vector<WeightedTrajectory> enumerate_trajectories(const TabularMDP& mdp, const Policy& behavior,
                                                       int horizon, std::size_t limit) {
  if (horizon < 0) throw std::invalid_argument("enumerate_trajectories: negative horizon");
  if (behavior.num_actions() != mdp.num_actions()) {
    throw std::invalid_argument("enumerate_trajectories: policy/MDP action count mismatch");
  }
  Walker w{mdp, behavior, horizon, limit, {}, {}};
  const auto mu = mdp.initial_distribution();
  for (std::size_t s = 0; s < mu.size(); ++s) {
    if (mu[s] > 0.0) w.walk(static_cast<StateId>(s), mu[s]);
  }
  return std::move(w.out);
}

}  // namespace ope
