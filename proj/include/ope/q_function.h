#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ope/policy.h"
#include "ope/state.h"

namespace ope {

// Horizon-indexed action-value estimate. q(t, s, a) is the value with
// horizon() + 1 - t steps remaining; t runs over 1..horizon() and any t past
// the horizon yields 0.
class QFunction {
 public:
  virtual ~QFunction() = default;

  virtual int horizon() const = 0;
  virtual int num_actions() const = 0;
  virtual double q(int t, const State& s, Action a) const = 0;
  // q(t, s, .) for every action; override when a row is cheaper than
  // num_actions() separate lookups.
  virtual void q_row(int t, const State& s, std::span<double> out) const;
};

using QPtr = std::shared_ptr<const QFunction>;

// V-hat(t, s) = sum_a pi(a|s) q(t, s, a). Always derived, never stored.
double state_value(const QFunction& q, const Policy& pi, int t, const State& s);

class ZeroQ final : public QFunction {
 public:
  ZeroQ(int horizon, int n_actions) : horizon_(horizon), n_actions_(n_actions) {}
  int horizon() const override { return horizon_; }
  int num_actions() const override { return n_actions_; }
  double q(int, const State&, Action) const override { return 0.0; }

 private:
  int horizon_;
  int n_actions_;
};

// State-action independent, step-dependent values: per_step[t - 1].
class ConstantQ final : public QFunction {
 public:
  ConstantQ(std::vector<double> per_step, int n_actions);
  int horizon() const override { return static_cast<int>(per_step_.size()); }
  int num_actions() const override { return n_actions_; }
  double q(int t, const State& s, Action a) const override;

 private:
  std::vector<double> per_step_;
  int n_actions_;
};

// Maps environment states onto dense table rows.
class StateMapping {
 public:
  virtual ~StateMapping() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t map(const State& s) const = 0;
  // A state that maps back to `row`, used to query policies on table rows.
  virtual State representative(std::size_t row) const = 0;
};

// Discrete state ids are the rows.
class IdentityMapping final : public StateMapping {
 public:
  explicit IdentityMapping(std::size_t n_states) : n_states_(n_states) {}
  std::size_t size() const override { return n_states_; }
  std::size_t map(const State& s) const override;
  State representative(std::size_t row) const override;

 private:
  std::size_t n_states_;
};

// Dense table q[t - 1][row][a] behind a StateMapping.
class TabularQ final : public QFunction {
 public:
  TabularQ(std::shared_ptr<const StateMapping> mapping, int horizon, int n_actions,
           std::vector<double> values);
  // Identity mapping over n_states discrete states.
  TabularQ(std::size_t n_states, int horizon, int n_actions, std::vector<double> values);

  int horizon() const override { return horizon_; }
  int num_actions() const override { return n_actions_; }
  double q(int t, const State& s, Action a) const override;
  void q_row(int t, const State& s, std::span<double> out) const override;

  // Direct row access, bypassing the mapping.
  double at(int t, std::size_t row, Action a) const;
  const StateMapping& mapping() const { return *mapping_; }
  std::size_t num_rows() const { return mapping_->size(); }

 private:
  std::shared_ptr<const StateMapping> mapping_;
  int horizon_;
  int n_actions_;
  std::vector<double> values_;
};

}  // namespace ope
