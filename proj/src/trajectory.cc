#include "ope/trajectory.h"

#include <stdexcept>

namespace ope {

double Trajectory::discounted_return(double gamma) const {
  double ret = 0.0;
  double discount = 1.0;
  for (const auto& step : steps) {
    ret += discount * step.reward;
    discount *= gamma;
  }
  return ret;
}

Dataset::Dataset(std::vector<Trajectory> trajectories, int horizon, DatasetMeta meta)
    : trajectories_(std::move(trajectories)), horizon_(horizon), meta_(std::move(meta)) {
  if (trajectories_.empty()) throw std::invalid_argument("Dataset: no trajectories");
  for (std::size_t i = 0; i < trajectories_.size(); ++i) {
    const auto& traj = trajectories_[i];
    if (traj.horizon() != horizon_) {
      throw std::invalid_argument("Dataset: trajectory " + std::to_string(i) + " has length " +
                                  std::to_string(traj.horizon()) + ", expected " +
                                  std::to_string(horizon_));
    }
    for (const auto& step : traj.steps) {
      if (!(step.behavior_prob > 0.0 && step.behavior_prob <= 1.0)) {
        throw std::invalid_argument("Dataset: trajectory " + std::to_string(i) +
                                    " logs behavior probability " +
                                    std::to_string(step.behavior_prob) + " outside (0, 1]");
      }
    }
  }
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > trajectories_.size()) throw std::out_of_range("Dataset::slice");
  std::vector<Trajectory> part(trajectories_.begin() + static_cast<std::ptrdiff_t>(first),
                               trajectories_.begin() + static_cast<std::ptrdiff_t>(first + count));
  return Dataset(std::move(part), horizon_, meta_);
}

Dataset Dataset::complement(std::size_t first, std::size_t count) const {
  if (first + count > trajectories_.size()) throw std::out_of_range("Dataset::complement");
  std::vector<Trajectory> rest;
  rest.reserve(trajectories_.size() - count);
  for (std::size_t i = 0; i < trajectories_.size(); ++i) {
    if (i < first || i >= first + count) rest.push_back(trajectories_[i]);
  }
  return Dataset(std::move(rest), horizon_, meta_);
}

}  // namespace ope
