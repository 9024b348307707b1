#include "ope/sampling.h"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ope/stats.h"

namespace ope {

namespace {

std::pair<Action, double> draw_action(const Policy& policy, const State& s, Rng& rng) {
  std::array<double, kMaxActions> p{};
  const auto n = static_cast<std::size_t>(policy.num_actions());
  policy.probs(s, std::span<double>(p.data(), n));
  const auto a = rng.categorical(std::span<const double>(p.data(), n));
  return {static_cast<Action>(a), p[a]};
}

void check_policy(const Environment& env, const Policy& policy) {
  if (policy.num_actions() != env.num_actions()) {
    throw std::invalid_argument("sampling: policy has " + std::to_string(policy.num_actions()) +
                                " actions, environment " + std::string(env.id()) + " has " +
                                std::to_string(env.num_actions()));
  }
}

}  // namespace

Trajectory sample_trajectory(const Environment& env, const Policy& policy, Rng& rng) {
  check_policy(env, policy);
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(env.horizon()));
  State s = env.initial_state(rng);
  for (int t = 0; t < env.horizon(); ++t) {
    const auto [a, p] = draw_action(policy, s, rng);
    const StepOutcome out = env.step(s, a, rng);
    traj.steps.push_back({s, a, out.reward, p});
    s = out.next;
  }
  traj.final_state = s;
  return traj;
}

Trajectory sample_trajectory(const Environment& env, const Policy& policy, std::uint64_t seed) {
  Rng rng(seed);
  return sample_trajectory(env, policy, rng);
}

Dataset sample_dataset(const Environment& env, const Policy& policy, std::size_t n,
                       std::uint64_t seed, std::string behavior_id) {
  if (n == 0) throw std::invalid_argument("sample_dataset: n must be at least 1");
  std::vector<Trajectory> trajs;
  trajs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    trajs.push_back(sample_trajectory(env, policy, rng));
  }
  return Dataset(std::move(trajs), env.horizon(),
                 DatasetMeta{seed, std::string(env.id()), std::move(behavior_id)});
}

double rollout_return(const Environment& env, const Policy& policy, Rng& rng) {
  State s = env.initial_state(rng);
  double ret = 0.0;
  double discount = 1.0;
  for (int t = 0; t < env.horizon(); ++t) {
    if (env.is_terminal(s)) break;  // absorbing, zero reward from here on
    const auto [a, p] = draw_action(policy, s, rng);
    const StepOutcome out = env.step(s, a, rng);
    ret += discount * out.reward;
    discount *= env.gamma();
    s = out.next;
  }
  return ret;
}

MonteCarloEstimate monte_carlo_value(const Environment& env, const Policy& policy, std::size_t n,
                                     std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("monte_carlo_value: need at least 2 rollouts");
  check_policy(env, policy);
  std::vector<double> returns(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    returns[i] = rollout_return(env, policy, rng);
  }
  const auto stats = summarize(returns);
  return {stats.mean, stats.std_error};
}

}  // namespace ope
