#include "ope/environments.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ope {

namespace {

constexpr int kDx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr int kDy[8] = {1, 1, 0, -1, -1, -1, 0, 1};

// Point-of-sail cost factor by angle off the wind, in 45 degree units.
constexpr double kSailFactor[5] = {0.0, 4.0, 2.0, 1.5, 1.0};
constexpr double kTackPenalty = 2.0;

double prohibited_cost() { return 3.0 + 4.0 * std::sqrt(2.0); }

// +1 or -1 for the two tacks, 0 when running straight downwind.
int tack(int heading, int wind) {
  const int rel = ((heading - wind) % 8 + 8) % 8;
  if (rel == 0 || rel == 4) return 0;
  return rel < 4 ? 1 : -1;
}

double discounted_steps(double gamma, int horizon) {
  if (gamma == 1.0) return static_cast<double>(horizon);
  return (1.0 - std::pow(gamma, horizon)) / (1.0 - gamma);
}

}  // namespace

double min_return(const ContinuousEnv& env) {
  return env.reward_min() * discounted_steps(env.gamma(), env.horizon());
}

double max_return(const ContinuousEnv& env) {
  return env.reward_max() * discounted_steps(env.gamma(), env.horizon());
}

State MountainCar::initial_state(Rng& rng) const {
  return State{rng.uniform(kMinPosition, kMaxPosition), rng.uniform(-kMaxSpeed, kMaxSpeed)};
}

State MountainCar::micro_step(const State& s, Action a) {
  double position = s[0];
  double velocity = s[1] + 0.001 * (a - 1) - 0.0025 * std::cos(3.0 * position);
  velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
  position = std::clamp(position + velocity, kMinPosition, kMaxPosition);
  if (position == kMinPosition && velocity < 0.0) velocity = 0.0;
  return State{position, velocity};
}

StepOutcome MountainCar::step(const State& s, Action a, Rng&) const {
  if (a < 0 || a >= 3) throw std::out_of_range("mountain_car: invalid action " + std::to_string(a));
  if (is_terminal(s)) return {s, 0.0, true};
  State next = s;
  for (int i = 0; i < kMicroSteps && !is_terminal(next); ++i) next = micro_step(next, a);
  return {next, -1.0, is_terminal(next)};
}

double MountainCar::state_lower(std::size_t dim) const { return dim == 0 ? kMinPosition : -kMaxSpeed; }

double MountainCar::state_upper(std::size_t dim) const { return dim == 0 ? kMaxPosition : kMaxSpeed; }

MountainCar make_mountain_car() { return MountainCar{}; }

Sailing::Sailing(SailingConfig config) : config_(config) {
  if (config_.grid < 2) throw std::invalid_argument("sailing: grid must be at least 2");
  if (config_.horizon < 1) throw std::invalid_argument("sailing: horizon must be positive");
  if (config_.wind_stay < 0.0 || config_.wind_rotate < 0.0 ||
      std::abs(config_.wind_stay + 2.0 * config_.wind_rotate - 1.0) > 1e-12) {
    throw std::invalid_argument("sailing: wind probabilities must be a distribution");
  }
}

int Sailing::angle_units(int d1, int d2) {
  const int diff = std::abs(d1 - d2) % 8;
  return std::min(diff, 8 - diff);
}

double Sailing::move_cost(int boat, int wind, Action a) {
  const int angle = angle_units(a, wind);
  if (angle == 0) return prohibited_cost();
  const double length = (a % 2 == 0) ? 1.0 : std::sqrt(2.0);
  double cost = length * kSailFactor[angle];
  const int before = tack(boat, wind);
  const int after = tack(a, wind);
  if (before != 0 && after != 0 && before != after) cost += kTackPenalty;
  return cost;
}

State Sailing::initial_state(Rng& rng) const {
  const int g = config_.grid;
  // Uniform over non-goal cells.
  const int cell = rng.uniform_int(g * g - 1);
  const int x = cell % g;
  const int y = cell / g;
  return State{static_cast<double>(x), static_cast<double>(y),
               static_cast<double>(rng.uniform_int(8)), static_cast<double>(rng.uniform_int(8))};
}

bool Sailing::is_terminal(const State& s) const {
  const double corner = config_.grid - 1;
  return s[0] == corner && s[1] == corner;
}

StepOutcome Sailing::step(const State& s, Action a, Rng& rng) const {
  if (a < 0 || a >= 8) throw std::out_of_range("sailing: invalid action " + std::to_string(a));
  if (is_terminal(s)) return {s, 0.0, true};
  int x = static_cast<int>(s[0]);
  int y = static_cast<int>(s[1]);
  int boat = static_cast<int>(s[2]);
  int wind = static_cast<int>(s[3]);
  const int nx = x + kDx[a];
  const int ny = y + kDy[a];
  const bool off_grid = nx < 0 || ny < 0 || nx >= config_.grid || ny >= config_.grid;
  double cost;
  if (off_grid || angle_units(a, wind) == 0) {
    cost = prohibited_cost();
  } else {
    cost = move_cost(boat, wind, a);
    x = nx;
    y = ny;
    boat = a;
  }
  const double u = rng.uniform();
  if (u < config_.wind_rotate) {
    wind = (wind + 1) % 8;
  } else if (u < 2.0 * config_.wind_rotate) {
    wind = (wind + 7) % 8;
  }
  State next{static_cast<double>(x), static_cast<double>(y), static_cast<double>(boat),
             static_cast<double>(wind)};
  return {next, -cost, is_terminal(next)};
}

double Sailing::state_upper(std::size_t dim) const {
  return dim < 2 ? static_cast<double>(config_.grid - 1) : 7.0;
}

double Sailing::reward_min() const { return -prohibited_cost(); }

Sailing make_sailing(int grid) {
  SailingConfig config;
  config.grid = grid;
  return Sailing(config);
}

Discretizer::Discretizer(std::vector<double> scales) : scales_(std::move(scales)) {
  if (scales_.empty() || scales_.size() > State::kMaxDims) {
    throw std::invalid_argument("discretizer: need 1.." + std::to_string(State::kMaxDims) + " scales");
  }
  for (double c : scales_) {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("discretizer: scales must be positive");
  }
}

Discretizer::Key Discretizer::key(const State& s) const {
  if (s.size() != scales_.size()) {
    throw std::invalid_argument("discretizer: state has " + std::to_string(s.size()) +
                                " components, expected " + std::to_string(scales_.size()));
  }
  Key k;
  k.size = s.size();
  for (std::size_t i = 0; i < k.size; ++i) k.v[i] = std::llround(s[i] * scales_[i]);
  return k;
}

State Discretizer::center(const Key& k) const {
  double values[State::kMaxDims];
  for (std::size_t i = 0; i < k.size; ++i) values[i] = static_cast<double>(k.v[i]) / scales_[i];
  return State(std::span<const double>(values, k.size));
}

std::uint64_t Discretizer::stable_hash(const Key& k) {
  std::uint64_t h = derive_seed(0x9e3779b97f4a7c15ULL, k.size);
  for (std::size_t i = 0; i < k.size; ++i) h = derive_seed(h, static_cast<std::uint64_t>(k.v[i]));
  return h;
}

std::uint64_t discretize(const State& s, const Discretizer& d) { return Discretizer::stable_hash(d.key(s)); }

}  // namespace ope
