#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ope/mdp.h"

namespace ope {

// Environment with a fixed-dimension box state space and a declared reward
// range. Steps clip states into the box.
class ContinuousEnv : public Environment {
 public:
  virtual std::size_t dimension() const = 0;
  virtual double state_lower(std::size_t dim) const = 0;
  virtual double state_upper(std::size_t dim) const = 0;
  virtual double reward_min() const = 0;
  virtual double reward_max() const = 0;
};

// Range of discounted H-step returns when every step pays a reward in
// [reward_min, reward_max].
double min_return(const ContinuousEnv& env);
double max_return(const ContinuousEnv& env);

// Mountain Car with macro-steps of four micro-steps (action held fixed).
// State (position, velocity); actions 0 = push left, 1 = coast, 2 = push
// right. Each macro-step costs -1 until the car reaches position 0.6, after
// which the state is absorbing with reward 0.
class MountainCar final : public ContinuousEnv {
 public:
  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr int kMicroSteps = 4;

  std::string_view id() const override { return "mountain_car"; }
  int num_actions() const override { return 3; }
  int horizon() const override { return 100; }
  double gamma() const override { return 0.99; }
  State initial_state(Rng& rng) const override;
  StepOutcome step(const State& s, Action a, Rng& rng) const override;
  bool is_terminal(const State& s) const override { return s[0] >= kMaxPosition; }

  std::size_t dimension() const override { return 2; }
  double state_lower(std::size_t dim) const override;
  double state_upper(std::size_t dim) const override;
  double reward_min() const override { return -1.0; }
  double reward_max() const override { return 0.0; }

  // One step of the underlying benchmark dynamics.
  static State micro_step(const State& s, Action a);
};

MountainCar make_mountain_car();

struct SailingConfig {
  int grid = 10;
  int horizon = 50;
  double gamma = 0.99;
  double wind_stay = 0.4;    // wind keeps its direction
  double wind_rotate = 0.3;  // probability of each 45 degree rotation
};

// Sailing on a grid x grid map towards the top-right corner. State
// (x, y, boat direction, wind direction), directions 0..7 clockwise from
// north; action d moves one cell in direction d. The wind direction is where
// the wind blows from. Moving into the wind or off the grid leaves the boat in
// place at the maximum cost 3 + 4 sqrt(2). An allowed move costs its length
// (1 or sqrt(2)) times a point-of-sail factor (4, 2, 1.5, 1 for 45..180
// degrees off the wind), plus 2 when it changes tack.
class Sailing final : public ContinuousEnv {
 public:
  explicit Sailing(SailingConfig config = {});

  std::string_view id() const override { return "sailing"; }
  int num_actions() const override { return 8; }
  int horizon() const override { return config_.horizon; }
  double gamma() const override { return config_.gamma; }
  State initial_state(Rng& rng) const override;
  StepOutcome step(const State& s, Action a, Rng& rng) const override;
  bool is_terminal(const State& s) const override;

  std::size_t dimension() const override { return 4; }
  double state_lower(std::size_t) const override { return 0.0; }
  double state_upper(std::size_t dim) const override;
  double reward_min() const override;
  double reward_max() const override { return 0.0; }

  const SailingConfig& config() const { return config_; }
  // Cost (positive) of moving in direction a from boat direction `boat`
  // under wind `wind`, ignoring the grid edge.
  static double move_cost(int boat, int wind, Action a);
  // Angle between two directions in units of 45 degrees, in 0..4.
  static int angle_units(int d1, int d2);

 private:
  SailingConfig config_;
};

Sailing make_sailing(int grid);

// Rounds each state component after scaling: key_i = round(state_i * scale_i).
class Discretizer {
 public:
  struct Key {
    std::array<std::int64_t, State::kMaxDims> v{};
    std::size_t size = 0;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const { return static_cast<std::size_t>(stable_hash(k)); }
  };

  explicit Discretizer(std::vector<double> scales);

  const std::vector<double>& scales() const { return scales_; }
  Key key(const State& s) const;
  // Cell center of a key.
  State center(const Key& k) const;
  // Stable across runs and platforms.
  static std::uint64_t stable_hash(const Key& k);

 private:
  std::vector<double> scales_;
};

// discretize() from the environments contract: stable id of the rounded tuple.
std::uint64_t discretize(const State& s, const Discretizer& d);

}  // namespace ope
