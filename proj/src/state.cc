#include "ope/state.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ope {

State::State(std::initializer_list<double> values)
    : State(std::span<const double>(values.begin(), values.size())) {}

State::State(std::span<const double> values) {
  if (values.size() > kMaxDims) {
    throw std::invalid_argument("State: at most " + std::to_string(kMaxDims) +
                                " components, got " +
                                std::to_string(values.size()));
  }
  size_ = values.size();
  for (std::size_t i = 0; i < size_; ++i) values_[i] = values[i];
}

State State::discrete(StateId id) {
  State s;
  s.size_ = 1;
  s.values_[0] = static_cast<double>(id);
  return s;
}

bool State::is_discrete() const {
  return size_ == 1 && std::nearbyint(values_[0]) == values_[0];
}

StateId State::id() const {
  if (!is_discrete()) {
    throw std::logic_error("State::id: state is not a discrete id");
  }
  return static_cast<StateId>(values_[0]);
}

bool operator==(const State& a, const State& b) {
  if (a.size_ != b.size_) return false;
  for (std::size_t i = 0; i < a.size_; ++i) {
    if (a.values_[i] != b.values_[i]) return false;
  }
  return true;
}

}  // namespace ope
