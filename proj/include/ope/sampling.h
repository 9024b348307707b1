#pragma once

#include <cstdint>

#include "ope/mdp.h"
#include "ope/policy.h"
#include "ope/trajectory.h"

namespace ope {

// One horizon-length rollout; behavior_prob records policy(a_t | s_t).
Trajectory sample_trajectory(const Environment& env, const Policy& policy, Rng& rng);
Trajectory sample_trajectory(const Environment& env, const Policy& policy, std::uint64_t seed);

// Trajectory i is drawn from derive_seed(seed, i), so the result does not
// depend on how the draws are scheduled.
Dataset sample_dataset(const Environment& env, const Policy& policy, std::size_t n,
                       std::uint64_t seed, std::string behavior_id = "behavior");

// Discounted return of one rollout without materializing the trajectory.
double rollout_return(const Environment& env, const Policy& policy, Rng& rng);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

MonteCarloEstimate monte_carlo_value(const Environment& env, const Policy& policy, std::size_t n,
                                     std::uint64_t seed);

}  // namespace ope
