#include "ope/bellman.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ope {

namespace {

void check_table(const TabularMDP& mdp, const std::vector<std::vector<double>>& table) {
  if (table.size() != static_cast<std::size_t>(mdp.num_states())) {
    throw std::invalid_argument("backward induction: policy table has " +
                                std::to_string(table.size()) + " rows for " +
                                std::to_string(mdp.num_states()) + " states");
  }
}

template <typename Combine>
std::vector<double> backward(const TabularMDP& mdp, int horizon, Combine combine) {
  if (horizon < 0) throw std::invalid_argument("backward induction: negative horizon");
  const auto S = static_cast<std::size_t>(mdp.num_states());
  const auto A = static_cast<std::size_t>(mdp.num_actions());
  const auto H = static_cast<std::size_t>(horizon);
  std::vector<double> q(H * S * A, 0.0);
  std::vector<double> v_next(S, 0.0);  // V^{h-1}
  for (std::size_t h = 1; h <= H; ++h) {
    const std::size_t t = H + 1 - h;
    double* q_t = q.data() + (t - 1) * S * A;
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        double future = 0.0;
        for (const auto& ns : mdp.transitions(static_cast<StateId>(s), static_cast<Action>(a))) {
          future += ns.prob * v_next[static_cast<std::size_t>(ns.state)];
        }
        q_t[s * A + a] =
            mdp.mean_reward(static_cast<StateId>(s), static_cast<Action>(a)) + mdp.gamma() * future;
      }
    }
    for (std::size_t s = 0; s < S; ++s) v_next[s] = combine(s, q_t + s * A, A);
  }
  return q;
}

}  // namespace

std::vector<double> backward_q_values(const TabularMDP& mdp,
                                      const std::vector<std::vector<double>>& policy_table,
                                      int horizon) {
  check_table(mdp, policy_table);
  return backward(mdp, horizon, [&](std::size_t s, const double* q_row, std::size_t A) {
    double v = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      const double p = policy_table[s][a];
      if (p != 0.0) v += p * q_row[a];
    }
    return v;
  });
}

std::vector<double> optimal_q_values(const TabularMDP& mdp, int horizon, bool minimize) {
  return backward(mdp, horizon, [&](std::size_t, const double* q_row, std::size_t A) {
    return minimize ? *std::min_element(q_row, q_row + A) : *std::max_element(q_row, q_row + A);
  });
}

std::shared_ptr<TabularQ> exact_q(const TabularMDP& mdp, const Policy& policy, int horizon) {
  if (horizon > mdp.horizon()) {
    throw std::invalid_argument("exact_q: horizon exceeds the MDP horizon");
  }
  auto values = backward_q_values(mdp, tabulate(policy, mdp.num_states()), horizon);
  return std::make_shared<TabularQ>(static_cast<std::size_t>(mdp.num_states()), horizon,
                                    mdp.num_actions(), std::move(values));
}

double exact_value(const TabularMDP& mdp, const Policy& policy, int horizon) {
  if (horizon > mdp.horizon()) {
    throw std::invalid_argument("exact_value: horizon exceeds the MDP horizon");
  }
  if (horizon == 0) return 0.0;
  const auto table = tabulate(policy, mdp.num_states());
  const auto q = exact_q(mdp, policy, horizon);
  const auto v1 = state_values(*q, table, 1);
  double value = 0.0;
  const auto mu = mdp.initial_distribution();
  for (std::size_t s = 0; s < mu.size(); ++s) value += mu[s] * v1[s];
  return value;
}

std::vector<double> state_values(const TabularQ& q, const std::vector<std::vector<double>>& policy_table,
                                 int t) {
  std::vector<double> v(q.num_rows(), 0.0);
  if (t > q.horizon()) return v;
  for (std::size_t s = 0; s < v.size(); ++s) {
    for (int a = 0; a < q.num_actions(); ++a) {
      const double p = policy_table[s][static_cast<std::size_t>(a)];
      if (p != 0.0) v[s] += p * q.at(t, s, a);
    }
  }
  return v;
}

}  // namespace ope
