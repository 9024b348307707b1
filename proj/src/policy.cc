#include "ope/policy.h"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ope/q_function.h"

namespace ope {

namespace {

constexpr double kRowTolerance = 1e-12;

void check_row(std::span<const double> row, std::size_t s) {
  double total = 0.0;
  for (double p : row) {
    if (p < 0.0) {
      throw std::invalid_argument("policy: negative probability at state " + std::to_string(s));
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kRowTolerance) {
    throw std::invalid_argument("policy: row for state " + std::to_string(s) + " sums to " +
                                std::to_string(total));
  }
}

class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(int n) : n_(n) {}
  Kind kind() const override { return Kind::kUniform; }
  int num_actions() const override { return n_; }
  void probs(const State&, std::span<double> out) const override {
    for (int a = 0; a < n_; ++a) out[static_cast<std::size_t>(a)] = 1.0 / n_;
  }

 private:
  int n_;
};

class TabularPolicy final : public Policy {
 public:
  TabularPolicy(std::vector<std::vector<double>> table, int n)
      : table_(std::move(table)), n_(n) {}
  Kind kind() const override { return Kind::kTabular; }
  int num_actions() const override { return n_; }
  void probs(const State& s, std::span<double> out) const override {
    const StateId id = s.id();
    if (id < 0 || static_cast<std::size_t>(id) >= table_.size()) {
      throw std::out_of_range("tabular policy: state " + std::to_string(id) +
                              " outside the table of " + std::to_string(table_.size()));
    }
    const auto& row = table_[static_cast<std::size_t>(id)];
    for (int a = 0; a < n_; ++a) out[static_cast<std::size_t>(a)] = row[static_cast<std::size_t>(a)];
  }

 private:
  std::vector<std::vector<double>> table_;
  int n_;
};

class GreedyPolicy final : public Policy {
 public:
  GreedyPolicy(QPtr q, int step, bool minimize)
      : q_(std::move(q)), step_(step), minimize_(minimize) {}
  Kind kind() const override { return Kind::kGreedy; }
  int num_actions() const override { return q_->num_actions(); }
  void probs(const State& s, std::span<double> out) const override {
    const int n = q_->num_actions();
    std::array<double, kMaxActions> values{};
    q_->q_row(step_, s, std::span<double>(values.data(), static_cast<std::size_t>(n)));
    int best = 0;
    for (int a = 1; a < n; ++a) {
      const bool better = minimize_ ? values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(best)]
                                    : values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(best)];
      if (better) best = a;
    }
    for (int a = 0; a < n; ++a) out[static_cast<std::size_t>(a)] = a == best ? 1.0 : 0.0;
  }

 private:
  QPtr q_;
  int step_;
  bool minimize_;
};

class MixturePolicy final : public Policy {
 public:
  MixturePolicy(PolicyPtr train, PolicyPtr base, double alpha)
      : train_(std::move(train)), base_(std::move(base)), alpha_(alpha) {}
  Kind kind() const override { return Kind::kMixture; }
  int num_actions() const override { return train_->num_actions(); }
  void probs(const State& s, std::span<double> out) const override {
    const int n = num_actions();
    std::array<double, kMaxActions> base{};
    train_->probs(s, out);
    base_->probs(s, std::span<double>(base.data(), static_cast<std::size_t>(n)));
    for (int a = 0; a < n; ++a) {
      const auto i = static_cast<std::size_t>(a);
      out[i] = (1.0 - alpha_) * out[i] + alpha_ * base[i];
    }
  }

 private:
  PolicyPtr train_;
  PolicyPtr base_;
  double alpha_;
};

}  // namespace

double Policy::prob(const State& s, Action a) const {
  std::array<double, kMaxActions> p{};
  probs(s, std::span<double>(p.data(), static_cast<std::size_t>(num_actions())));
  return p[static_cast<std::size_t>(a)];
}

Action Policy::sample(const State& s, Rng& rng) const {
  std::array<double, kMaxActions> p{};
  const auto n = static_cast<std::size_t>(num_actions());
  probs(s, std::span<double>(p.data(), n));
  return static_cast<Action>(rng.categorical(std::span<const double>(p.data(), n)));
}

PolicyPtr make_uniform_policy(int n_actions) {
  if (n_actions <= 0 || n_actions > kMaxActions) {
    throw std::invalid_argument("uniform policy: action count out of range");
  }
  return std::make_shared<UniformPolicy>(n_actions);
}

PolicyPtr make_tabular_policy(std::vector<std::vector<double>> table) {
  if (table.empty() || table[0].empty()) {
    throw std::invalid_argument("tabular policy: empty table");
  }
  const auto n = table[0].size();
  if (n > static_cast<std::size_t>(kMaxActions)) {
    throw std::invalid_argument("tabular policy: too many actions");
  }
  for (std::size_t s = 0; s < table.size(); ++s) {
    if (table[s].size() != n) {
      throw std::invalid_argument("tabular policy: ragged table at state " + std::to_string(s));
    }
    check_row(table[s], s);
  }
  return std::make_shared<TabularPolicy>(std::move(table), static_cast<int>(n));
}

PolicyPtr make_deterministic_policy(const std::vector<Action>& actions, int n_actions) {
  std::vector<std::vector<double>> table(actions.size(),
                                         std::vector<double>(static_cast<std::size_t>(n_actions), 0.0));
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) {
      throw std::invalid_argument("deterministic policy: invalid action at state " +
                                  std::to_string(s));
    }
    table[s][static_cast<std::size_t>(actions[s])] = 1.0;
  }
  return make_tabular_policy(std::move(table));
}

PolicyPtr make_greedy_policy(QPtr q, int step, bool minimize) {
  if (!q) throw std::invalid_argument("greedy policy: null Q-function");
  if (step < 1 || step > q->horizon()) {
    throw std::invalid_argument("greedy policy: step outside the Q-function horizon");
  }
  return std::make_shared<GreedyPolicy>(std::move(q), step, minimize);
}

PolicyPtr mix_policies(PolicyPtr pi_train, PolicyPtr pi0, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("mix_policies: alpha must lie in [0, 1], got " +
                                std::to_string(alpha));
  }
  if (!pi_train || !pi0) throw std::invalid_argument("mix_policies: null policy");
  if (pi_train->num_actions() != pi0->num_actions()) {
    throw std::invalid_argument("mix_policies: action counts differ");
  }
  return std::make_shared<MixturePolicy>(std::move(pi_train), std::move(pi0), alpha);
}

std::vector<std::vector<double>> tabulate(const Policy& pi, int n_states) {
  const auto n = static_cast<std::size_t>(pi.num_actions());
  std::vector<std::vector<double>> table(static_cast<std::size_t>(n_states), std::vector<double>(n));
  for (int s = 0; s < n_states; ++s) pi.probs(State::discrete(s), table[static_cast<std::size_t>(s)]);
  return table;
}

}  // namespace ope
