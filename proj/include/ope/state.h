#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace ope {

using Action = int;
using StateId = std::int64_t;

// Upper bound on the number of actions any environment in this library
// exposes. Policies fill fixed-size buffers of this length.
inline constexpr int kMaxActions = 16;

// A state is a short feature vector stored inline. Discrete states carry a
// single integral component holding the state id.
class State {
 public:
  static constexpr std::size_t kMaxDims = 6;

  State() = default;
  State(std::initializer_list<double> values);
  explicit State(std::span<const double> values);

  static State discrete(StateId id);

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const { return {values_.data(), size_}; }

  // True for a single integral component.
  bool is_discrete() const;
  // Throws std::logic_error unless is_discrete().
  StateId id() const;

  friend bool operator==(const State& a, const State& b);

 private:
  std::array<double, kMaxDims> values_{};
  std::size_t size_ = 0;
};

}  // namespace ope
