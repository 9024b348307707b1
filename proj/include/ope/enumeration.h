#pragma once

#include <cstddef>
#include <vector>

#include "ope/mdp.h"
#include "ope/policy.h"
#include "ope/trajectory.h"

namespace ope {

// A fully specified trajectory (including realized rewards) with its
// probability under (mu, pi0, P, reward distributions).
struct WeightedTrajectory {
  Trajectory traj;
  double prob = 0.0;
};

// Every positive-probability H-step trajectory of `mdp` under `behavior`.
// Throws std::length_error once more than `limit` trajectories would be
// produced.
std::vector<WeightedTrajectory> enumerate_trajectories(const TabularMDP& mdp, const Policy& behavior,
                                                       int horizon, std::size_t limit = 1000000);

}  // namespace ope
