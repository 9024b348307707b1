#include "ope/mdp.h"

#include <cmath>
#include <stdexcept>

namespace ope {

namespace {

constexpr double kSumTolerance = 1e-12;

std::string pair_name(StateId s, Action a) {
  return "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
}

}  // namespace

TabularMDP::Builder::Builder(int n_states, int n_actions, double gamma, int horizon)
    : n_states_(n_states), n_actions_(n_actions), gamma_(gamma), horizon_(horizon) {
  if (n_states <= 0 || n_actions <= 0) {
    throw std::invalid_argument("TabularMDP: need at least one state and one action");
  }
  if (n_actions > kMaxActions) {
    throw std::invalid_argument("TabularMDP: at most " + std::to_string(kMaxActions) +
                                " actions");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("TabularMDP: gamma must lie in [0, 1]");
  }
  if (horizon < 0) throw std::invalid_argument("TabularMDP: negative horizon");
  const auto cells = static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_actions);
  rows_.resize(cells);
  mean_reward_.assign(cells, 0.0);
  outcomes_.resize(cells);
  initial_.assign(static_cast<std::size_t>(n_states), 0.0);
  terminal_.assign(static_cast<std::size_t>(n_states), false);
}

std::size_t TabularMDP::Builder::index(StateId s, Action a) const {
  if (s < 0 || s >= n_states_ || a < 0 || a >= n_actions_) {
    throw std::out_of_range("TabularMDP::Builder: invalid pair " + pair_name(s, a));
  }
  return static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions_) +
         static_cast<std::size_t>(a);
}

TabularMDP::Builder& TabularMDP::Builder::set_id(std::string id) {
  id_ = std::move(id);
  return *this;
}

TabularMDP::Builder& TabularMDP::Builder::set_transition(StateId s, Action a,
                                                         std::vector<NextState> row) {
  rows_[index(s, a)] = std::move(row);
  return *this;
}

TabularMDP::Builder& TabularMDP::Builder::set_reward(StateId s, Action a, double mean) {
  const auto i = index(s, a);
  mean_reward_[i] = mean;
  outcomes_[i].clear();
  return *this;
}

TabularMDP::Builder& TabularMDP::Builder::set_reward_distribution(
    StateId s, Action a, std::vector<RewardOutcome> outcomes) {
  const auto i = index(s, a);
  double mean = 0.0;
  for (const auto& o : outcomes) mean += o.prob * o.value;
  mean_reward_[i] = mean;
  outcomes_[i] = std::move(outcomes);
  return *this;
}

TabularMDP::Builder& TabularMDP::Builder::set_initial(std::vector<double> mu) {
  if (mu.size() != initial_.size()) {
    throw std::invalid_argument("TabularMDP::Builder: initial distribution has wrong size");
  }
  initial_ = std::move(mu);
  return *this;
}

TabularMDP::Builder& TabularMDP::Builder::set_terminal(StateId s) {
  for (Action a = 0; a < n_actions_; ++a) {
    const auto i = index(s, a);
    rows_[i] = {{s, 1.0}};
    mean_reward_[i] = 0.0;
    outcomes_[i].clear();
  }
  terminal_[static_cast<std::size_t>(s)] = true;
  return *this;
}

TabularMDP TabularMDP::Builder::build() const {
  TabularMDP m;
  m.id_ = id_;
  m.n_states_ = n_states_;
  m.n_actions_ = n_actions_;
  m.gamma_ = gamma_;
  m.horizon_ = horizon_;

  double mu_total = 0.0;
  for (double p : initial_) {
    if (p < 0.0) throw std::invalid_argument("TabularMDP: negative initial probability");
    mu_total += p;
  }
  if (std::abs(mu_total - 1.0) > kSumTolerance) {
    throw std::invalid_argument("TabularMDP: initial distribution sums to " +
                                std::to_string(mu_total));
  }
  m.initial_ = initial_;
  m.terminal_ = terminal_;

  m.row_begin_.reserve(rows_.size() + 1);
  m.reward_begin_.reserve(rows_.size() + 1);
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const StateId s = static_cast<StateId>(i / static_cast<std::size_t>(n_actions_));
    const Action a = static_cast<Action>(i % static_cast<std::size_t>(n_actions_));
    double total = 0.0;
    for (const auto& ns : rows_[i]) {
      if (ns.state < 0 || ns.state >= n_states_) {
        throw std::invalid_argument("TabularMDP: transition to invalid state from " +
                                    pair_name(s, a));
      }
      if (ns.prob < 0.0) {
        throw std::invalid_argument("TabularMDP: negative transition probability at " +
                                    pair_name(s, a));
      }
      total += ns.prob;
    }
    if (std::abs(total - 1.0) > kSumTolerance) {
      throw std::invalid_argument("TabularMDP: transition row " + pair_name(s, a) +
                                  " sums to " + std::to_string(total));
    }
    double reward_total = 0.0;
    for (const auto& o : outcomes_[i]) {
      if (o.prob < 0.0) {
        throw std::invalid_argument("TabularMDP: negative reward probability at " +
                                    pair_name(s, a));
      }
      reward_total += o.prob;
    }
    if (!outcomes_[i].empty() && std::abs(reward_total - 1.0) > kSumTolerance) {
      throw std::invalid_argument("TabularMDP: reward distribution at " + pair_name(s, a) +
                                  " sums to " + std::to_string(reward_total));
    }
    if (terminal_[static_cast<std::size_t>(s)]) {
      if (rows_[i].size() != 1 || rows_[i][0].state != s || mean_reward_[i] != 0.0) {
        throw std::invalid_argument("TabularMDP: absorbing state " + std::to_string(s) +
                                    " must self-loop with reward 0");
      }
    }
    m.row_begin_.push_back(m.next_.size());
    m.next_.insert(m.next_.end(), rows_[i].begin(), rows_[i].end());
    m.reward_begin_.push_back(m.reward_outcomes_.size());
    m.reward_outcomes_.insert(m.reward_outcomes_.end(), outcomes_[i].begin(),
                              outcomes_[i].end());
  }
  m.row_begin_.push_back(m.next_.size());
  m.reward_begin_.push_back(m.reward_outcomes_.size());
  m.mean_reward_ = mean_reward_;
  return m;
}

void TabularMDP::check_state(StateId s) const {
  if (s < 0 || s >= n_states_) {
    throw std::out_of_range("TabularMDP(" + id_ + "): invalid state index " +
                            std::to_string(s));
  }
}

std::size_t TabularMDP::index(StateId s, Action a) const {
  check_state(s);
  if (a < 0 || a >= n_actions_) {
    throw std::out_of_range("TabularMDP(" + id_ + "): invalid action " + std::to_string(a));
  }
  return static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions_) +
         static_cast<std::size_t>(a);
}

std::span<const NextState> TabularMDP::transitions(StateId s, Action a) const {
  const auto i = index(s, a);
  return {next_.data() + row_begin_[i], row_begin_[i + 1] - row_begin_[i]};
}

double TabularMDP::transition_prob(StateId s, Action a, StateId next) const {
  double p = 0.0;
  for (const auto& ns : transitions(s, a)) {
    if (ns.state == next) p += ns.prob;
  }
  return p;
}

std::span<const RewardOutcome> TabularMDP::reward_outcomes(StateId s, Action a) const {
  const auto i = index(s, a);
  return {reward_outcomes_.data() + reward_begin_[i], reward_begin_[i + 1] - reward_begin_[i]};
}

double TabularMDP::reward_variance(StateId s, Action a) const {
  const double mean = mean_reward(s, a);
  double var = 0.0;
  for (const auto& o : reward_outcomes(s, a)) var += o.prob * (o.value - mean) * (o.value - mean);
  return var;
}

State TabularMDP::initial_state(Rng& rng) const {
  return State::discrete(static_cast<StateId>(rng.categorical(initial_)));
}

StepOutcome TabularMDP::step(const State& s, Action a, Rng& rng) const {
  const StateId id = s.id();
  const auto row = transitions(id, a);
  StepOutcome out;
  const auto outcomes = reward_outcomes(id, a);
  if (outcomes.empty()) {
    out.reward = mean_reward(id, a);
  } else {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& o : outcomes) {
      if (o.prob <= 0.0) continue;
      acc += o.prob;
      out.reward = o.value;
      if (u < acc) break;
    }
  }
  if (row.size() == 1) {
    out.next = State::discrete(row[0].state);
  } else {
    const double u = rng.uniform();
    double acc = 0.0;
    StateId chosen = -1;
    for (const auto& ns : row) {
      if (ns.prob <= 0.0) continue;
      acc += ns.prob;
      chosen = ns.state;
      if (u < acc) break;
    }
    out.next = State::discrete(chosen);
  }
  out.terminal = terminal(out.next.id());
  return out;
}

bool TabularMDP::is_terminal(const State& s) const {
  const StateId id = s.id();
  check_state(id);
  return terminal(id);
}

TabularMDP TabularMDP::with_horizon(int horizon) const {
  if (horizon < 0) throw std::invalid_argument("TabularMDP::with_horizon: negative horizon");
  TabularMDP copy = *this;
  copy.horizon_ = horizon;
  return copy;
}

}  // namespace ope
