#include "ope/q_function.h"

#include <array>
#include <stdexcept>
#include <string>

namespace ope {

void QFunction::q_row(int t, const State& s, std::span<double> out) const {
  for (int a = 0; a < num_actions(); ++a) out[static_cast<std::size_t>(a)] = q(t, s, a);
}

double state_value(const QFunction& q, const Policy& pi, int t, const State& s) {
  if (t > q.horizon()) return 0.0;
  const auto n = static_cast<std::size_t>(q.num_actions());
  std::array<double, kMaxActions> values{};
  std::array<double, kMaxActions> probs{};
  q.q_row(t, s, std::span<double>(values.data(), n));
  pi.probs(s, std::span<double>(probs.data(), n));
  double v = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    if (probs[a] != 0.0) v += probs[a] * values[a];
  }
  return v;
}

ConstantQ::ConstantQ(std::vector<double> per_step, int n_actions)
    : per_step_(std::move(per_step)), n_actions_(n_actions) {}

double ConstantQ::q(int t, const State&, Action) const {
  if (t < 1) throw std::out_of_range("ConstantQ: step must be >= 1");
  if (t > horizon()) return 0.0;
  return per_step_[static_cast<std::size_t>(t - 1)];
}

std::size_t IdentityMapping::map(const State& s) const {
  const StateId id = s.id();
  if (id < 0 || static_cast<std::size_t>(id) >= n_states_) {
    throw std::out_of_range("IdentityMapping: state " + std::to_string(id) + " out of range");
  }
  return static_cast<std::size_t>(id);
}

State IdentityMapping::representative(std::size_t row) const {
  return State::discrete(static_cast<StateId>(row));
}

TabularQ::TabularQ(std::shared_ptr<const StateMapping> mapping, int horizon, int n_actions,
                   std::vector<double> values)
    : mapping_(std::move(mapping)), horizon_(horizon), n_actions_(n_actions),
      values_(std::move(values)) {
  const std::size_t expected = static_cast<std::size_t>(horizon) * mapping_->size() *
                               static_cast<std::size_t>(n_actions);
  if (values_.size() != expected) {
    throw std::invalid_argument("TabularQ: expected " + std::to_string(expected) +
                                " values, got " + std::to_string(values_.size()));
  }
}

TabularQ::TabularQ(std::size_t n_states, int horizon, int n_actions, std::vector<double> values)
    : TabularQ(std::make_shared<IdentityMapping>(n_states), horizon, n_actions,
               std::move(values)) {}

double TabularQ::at(int t, std::size_t row, Action a) const {
  if (t < 1) throw std::out_of_range("TabularQ: step must be >= 1");
  if (t > horizon_) return 0.0;
  const std::size_t rows = mapping_->size();
  return values_[(static_cast<std::size_t>(t - 1) * rows + row) * static_cast<std::size_t>(n_actions_) +
                 static_cast<std::size_t>(a)];
}

double TabularQ::q(int t, const State& s, Action a) const {
  if (t > horizon_) return 0.0;
  return at(t, mapping_->map(s), a);
}

void TabularQ::q_row(int t, const State& s, std::span<double> out) const {
  if (t > horizon_) {
    for (int a = 0; a < n_actions_; ++a) out[static_cast<std::size_t>(a)] = 0.0;
    return;
  }
  if (t < 1) throw std::out_of_range("TabularQ: step must be >= 1");
  const std::size_t row = mapping_->map(s);
  const std::size_t base = (static_cast<std::size_t>(t - 1) * mapping_->size() + row) *
                           static_cast<std::size_t>(n_actions_);
  for (int a = 0; a < n_actions_; ++a) {
    out[static_cast<std::size_t>(a)] = values_[base + static_cast<std::size_t>(a)];
  }
}

}  // namespace ope
