#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ope/state.h"

namespace ope {

struct Step {
  State state;
  Action action = 0;
  double reward = 0.0;
  // pi0(action | state) as logged at collection time.
  double behavior_prob = 1.0;
};

// Fixed-length rollout: early termination is padded with absorbing steps.
struct Trajectory {
  std::vector<Step> steps;
  State final_state;

  int horizon() const { return static_cast<int>(steps.size()); }
  double discounted_return(double gamma) const;
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  std::string env_id = "unknown";
  std::string behavior_id = "unknown";
};

// Non-empty collection of i.i.d. trajectories sharing one horizon.
class Dataset {
 public:
  // Throws std::invalid_argument on an empty list, a horizon mismatch or a
  // behavior probability outside (0, 1].
  Dataset(std::vector<Trajectory> trajectories, int horizon, DatasetMeta meta = {});

  int horizon() const { return horizon_; }
  std::size_t size() const { return trajectories_.size(); }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  std::span<const Trajectory> trajectories() const { return trajectories_; }
  const DatasetMeta& meta() const { return meta_; }

  // Contiguous sub-range [first, first + count) as a new dataset.
  Dataset slice(std::size_t first, std::size_t count) const;
  // All trajectories outside [first, first + count).
  Dataset complement(std::size_t first, std::size_t count) const;

 private:
  std::vector<Trajectory> trajectories_;
  int horizon_;
  DatasetMeta meta_;
};

}  // namespace ope
