#include "ope/theory.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ope/bellman.h"
#include "ope/estimators.h"
#include "ope/generators.h"
#include "ope/rng.h"
#include "ope/stats.h"

namespace ope {

namespace {

using Table = std::vector<std::vector<double>>;

void guard_size(const TabularMDP& mdp, int horizon, const char* who) {
  if (horizon < 1) throw std::invalid_argument(std::string(who) + ": horizon must be positive");
  const std::size_t cells = static_cast<std::size_t>(mdp.num_states()) *
                            static_cast<std::size_t>(mdp.num_actions()) * static_cast<std::size_t>(horizon);
  if (cells > kExactCellLimit) {
    throw std::length_error(std::string(who) + ": " + std::to_string(cells) + " cells exceed the exact limit");
  }
}

void check_policy(const TabularMDP& mdp, const Policy& pi, const char* who) {
  if (pi.num_actions() != mdp.num_actions()) {
    throw std::invalid_argument(std::string(who) + ": policy/MDP action count mismatch");
  }
}

// pi1^2 / pi0 = pi0 * rho^2, i.e. the second moment weight of one step.
double second_moment(double p0, double p1, StateId s, Action a) {
  if (p1 == 0.0) return 0.0;
  if (p0 <= 0.0) {
    throw SupportViolation("state " + std::to_string(s) + ", action " + std::to_string(a) +
                           ": target policy leaves the behavior support");
  }
  return p1 * p1 / p0;
}

// True V_t(s) under pi, t = 1..H+1 (row H is all zeros).
Table true_values(const TabularMDP& mdp, const Table& pi, int horizon) {
  const auto q = backward_q_values(mdp, pi, horizon);
  const auto S = static_cast<std::size_t>(mdp.num_states());
  const auto A = static_cast<std::size_t>(mdp.num_actions());
  Table v(static_cast<std::size_t>(horizon) + 1, std::vector<double>(S, 0.0));
  for (std::size_t t = 0; t < static_cast<std::size_t>(horizon); ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double total = 0.0;
      for (std::size_t a = 0; a < A; ++a) total += pi[s][a] * q[(t * S + s) * A + a];
      v[t][s] = total;
    }
  }
  return v;
}

// Mean and variance of f(s') under P(.|s,a).
std::pair<double, double> next_moments(const TabularMDP& mdp, StateId s, Action a, const std::vector<double>& f) {
  double m = 0.0;
  double m2 = 0.0;
  for (const auto& n : mdp.transitions(s, a)) {
    const double x = f[static_cast<std::size_t>(n.state)];
    m += n.prob * x;
    m2 += n.prob * x * x;
  }
  return {m, std::max(0.0, m2 - m * m)};
}

double initial_variance(const TabularMDP& mdp, const std::vector<double>& v1) {
  const auto mu = mdp.initial_distribution();
  double m = 0.0;
  double m2 = 0.0;
  for (std::size_t s = 0; s < mu.size(); ++s) {
    m += mu[s] * v1[s];
    m2 += mu[s] * v1[s] * v1[s];
  }
  return std::max(0.0, m2 - m * m);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

double VarianceBreakdown::state_value_total() const { return sum(state_value); }
double VarianceBreakdown::delta_total() const { return sum(delta); }
double VarianceBreakdown::reward_total() const { return sum(reward); }

VarianceBreakdown dr_variance_exact(const TabularMDP& mdp, const Policy& pi0, const Policy& pi1,
                                    const QFunction& qhat, int horizon) {
  guard_size(mdp, horizon, "dr_variance_exact");
  check_policy(mdp, pi0, "dr_variance_exact");
  check_policy(mdp, pi1, "dr_variance_exact");
  if (qhat.num_actions() != mdp.num_actions()) {
    throw std::invalid_argument("dr_variance_exact: Q-hat action count mismatch");
  }
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  const auto H = static_cast<std::size_t>(horizon);
  const double g2 = mdp.gamma() * mdp.gamma();
  const Table p0 = tabulate(pi0, S);
  const Table p1 = tabulate(pi1, S);
  const Table v = true_values(mdp, p1, horizon);
  const auto q = exact_q(mdp, pi1, horizon);

  // Per step and state: the local pieces of G_t(s).
  Table delta_var(H, std::vector<double>(static_cast<std::size_t>(S), 0.0));
  Table reward_var(H, std::vector<double>(static_cast<std::size_t>(S), 0.0));
  // sum_a pi1^2/pi0 * gamma^2 Var_P V_{t+1}
  Table next_var(H, std::vector<double>(static_cast<std::size_t>(S), 0.0));
  for (std::size_t t = 0; t < H; ++t) {
    const int step = static_cast<int>(t + 1);
    for (StateId s = 0; s < S; ++s) {
      const auto si = static_cast<std::size_t>(s);
      const State st = State::discrete(s);
      double m1 = 0.0;  // sum pi1 Delta
      double m2 = 0.0;  // sum pi1^2/pi0 Delta^2
      for (Action a = 0; a < A; ++a) {
        const auto ai = static_cast<std::size_t>(a);
        const double w = second_moment(p0[si][ai], p1[si][ai], s, a);
        if (p1[si][ai] == 0.0) continue;
        const double d = qhat.q(step, st, a) - q->at(step, si, a);
        m1 += p1[si][ai] * d;
        m2 += w * d * d;
        reward_var[t][si] += w * mdp.reward_variance(s, a);
        next_var[t][si] += w * g2 * next_moments(mdp, s, a, v[t + 1]).second;
      }
      delta_var[t][si] = std::max(0.0, m2 - m1 * m1);
    }
  }

  // Backward: G_t(s) = delta + reward + next_var + sum_a pi1^2/pi0 gamma^2 E_P G_{t+1}.
  std::vector<double> g_next(static_cast<std::size_t>(S), 0.0);
  for (std::size_t t = H; t-- > 0;) {
    std::vector<double> g(static_cast<std::size_t>(S), 0.0);
    for (StateId s = 0; s < S; ++s) {
      const auto si = static_cast<std::size_t>(s);
      double future = 0.0;
      for (Action a = 0; a < A; ++a) {
        const auto ai = static_cast<std::size_t>(a);
        if (p1[si][ai] == 0.0) continue;
        future += second_moment(p0[si][ai], p1[si][ai], s, a) * g2 * next_moments(mdp, s, a, g_next).first;
      }
      g[si] = delta_var[t][si] + reward_var[t][si] + next_var[t][si] + future;
    }
    g_next = std::move(g);
  }

  VarianceBreakdown out;
  out.state_value.assign(H, 0.0);
  out.delta.assign(H, 0.0);
  out.reward.assign(H, 0.0);
  out.state_value[0] = initial_variance(mdp, v[0]);
  // Forward weights w_t(s) = E[gamma^2(t-1) rho_{1:t-1}^2 1{s_t = s}].
  std::vector<double> w(mdp.initial_distribution().begin(), mdp.initial_distribution().end());
  for (std::size_t t = 0; t < H; ++t) {
    std::vector<double> w_next(static_cast<std::size_t>(S), 0.0);
    for (StateId s = 0; s < S; ++s) {
      const auto si = static_cast<std::size_t>(s);
      if (w[si] == 0.0) continue;
      out.delta[t] += w[si] * delta_var[t][si];
      out.reward[t] += w[si] * reward_var[t][si];
      if (t + 1 < H) out.state_value[t + 1] += w[si] * next_var[t][si];
      for (Action a = 0; a < A; ++a) {
        const auto ai = static_cast<std::size_t>(a);
        if (p1[si][ai] == 0.0) continue;
        const double m = w[si] * second_moment(p0[si][ai], p1[si][ai], s, a) * g2;
        for (const auto& n : mdp.transitions(s, a)) w_next[static_cast<std::size_t>(n.state)] += m * n.prob;
      }
    }
    w = std::move(w_next);
  }
  const auto mu = mdp.initial_distribution();
  double eg = 0.0;
  for (std::size_t s = 0; s < mu.size(); ++s) eg += mu[s] * g_next[s];
  out.total = out.state_value[0] + eg;
  return out;
}

double OccupancyTable::at0(int t, StateId s, Action a) const {
  return p0.at(static_cast<std::size_t>(t - 1))[static_cast<std::size_t>(s * n_actions + a)];
}

double OccupancyTable::at1(int t, StateId s, Action a) const {
  return p1.at(static_cast<std::size_t>(t - 1))[static_cast<std::size_t>(s * n_actions + a)];
}

OccupancyTable occupancy(const TabularMDP& mdp, const Policy& pi0, const Policy& pi1, int horizon) {
  guard_size(mdp, horizon, "occupancy");
  check_policy(mdp, pi0, "occupancy");
  check_policy(mdp, pi1, "occupancy");
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  OccupancyTable occ;
  occ.n_states = S;
  occ.n_actions = A;
  const Table tables[2] = {tabulate(pi0, S), tabulate(pi1, S)};
  for (int which = 0; which < 2; ++which) {
    auto& layers = which == 0 ? occ.p0 : occ.p1;
    std::vector<double> d(mdp.initial_distribution().begin(), mdp.initial_distribution().end());
    for (int t = 0; t < horizon; ++t) {
      std::vector<double> layer(static_cast<std::size_t>(S * A), 0.0);
      std::vector<double> next(static_cast<std::size_t>(S), 0.0);
      for (StateId s = 0; s < S; ++s) {
        const auto si = static_cast<std::size_t>(s);
        if (d[si] == 0.0) continue;
        for (Action a = 0; a < A; ++a) {
          const double p = d[si] * tables[which][si][static_cast<std::size_t>(a)];
          layer[static_cast<std::size_t>(s * A + a)] = p;
          if (p == 0.0) continue;
          for (const auto& n : mdp.transitions(s, a)) next[static_cast<std::size_t>(n.state)] += p * n.prob;
        }
      }
      layers.push_back(std::move(layer));
      d = std::move(next);
    }
  }
  return occ;
}

double cr_bound_tree(const TabularMDP& tree, const Policy& pi0, const Policy& pi1, int horizon) {
  guard_size(tree, horizon, "cr_bound_tree");
  check_policy(tree, pi0, "cr_bound_tree");
  check_policy(tree, pi1, "cr_bound_tree");
  if (!is_tree(tree, horizon)) {
    throw std::invalid_argument("cr_bound_tree: the MDP is not a tree over the horizon; use cr_bound_dag");
  }
  const int A = tree.num_actions();
  const double g2 = tree.gamma() * tree.gamma();
  const Table p0 = tabulate(pi0, tree.num_states());
  const Table p1 = tabulate(pi1, tree.num_states());
  const Table v = true_values(tree, p1, horizon);

  // m = P0(history) * gamma^2(t-1) * rho_{1:t-1}^2 for the history ending in s at step t.
  double bound = initial_variance(tree, v[0]);
  auto visit = [&](auto&& self, StateId s, int t, double m) -> void {
    const auto si = static_cast<std::size_t>(s);
    for (Action a = 0; a < A; ++a) {
      const auto ai = static_cast<std::size_t>(a);
      const double w = second_moment(p0[si][ai], p1[si][ai], s, a);
      if (w == 0.0) continue;
      const double ma = m * w;
      double cond = tree.reward_variance(s, a);
      if (t < horizon) cond += g2 * next_moments(tree, s, a, v[static_cast<std::size_t>(t)]).second;
      bound += ma * cond;
      if (t == horizon) continue;
      for (const auto& n : tree.transitions(s, a)) {
        if (n.prob > 0.0) self(self, n.state, t + 1, ma * g2 * n.prob);
      }
    }
  };
  const auto mu = tree.initial_distribution();
  for (std::size_t s = 0; s < mu.size(); ++s) {
    if (mu[s] > 0.0) visit(visit, static_cast<StateId>(s), 1, mu[s]);
  }
  return bound;
}

double cr_bound_dag(const TabularMDP& dag, const Policy& pi0, const Policy& pi1, int horizon) {
  guard_size(dag, horizon, "cr_bound_dag");
  layer_of_states(dag, horizon);  // throws on a state shared by two steps
  const auto occ = occupancy(dag, pi0, pi1, horizon);
  const Table p1 = tabulate(pi1, dag.num_states());
  const Table v = true_values(dag, p1, horizon);
  const double g2 = dag.gamma() * dag.gamma();
  double bound = initial_variance(dag, v[0]);
  double discount = 1.0;
  for (int t = 1; t <= horizon; ++t) {
    for (StateId s = 0; s < dag.num_states(); ++s) {
      for (Action a = 0; a < dag.num_actions(); ++a) {
        const double w = second_moment(occ.at0(t, s, a), occ.at1(t, s, a), s, a);
        if (w == 0.0) continue;
        double cond = dag.reward_variance(s, a);
        if (t < horizon) cond += g2 * next_moments(dag, s, a, v[static_cast<std::size_t>(t)]).second;
        bound += discount * w * cond;
      }
    }
    discount *= g2;
  }
  return bound;
}

double drv2_bias_bound(double epsilon, double v_max, double gamma, int horizon) {
  if (!(epsilon >= 0.0) || !(v_max >= 0.0)) {
    throw std::invalid_argument("drv2_bias_bound: epsilon and v_max must be nonnegative");
  }
  double total = 0.0;
  double g = 1.0;
  for (int t = 1; t <= horizon; ++t) {
    g *= gamma;
    total += g;
  }
  return epsilon * v_max * total;
}

double model_l1_epsilon(const TabularMDP& model, const TabularMDP& truth) {
  if (model.num_states() != truth.num_states() || model.num_actions() != truth.num_actions()) {
    throw std::invalid_argument("model_l1_epsilon: state/action spaces differ (" +
                                std::to_string(model.num_states()) + "x" + std::to_string(model.num_actions()) +
                                " vs " + std::to_string(truth.num_states()) + "x" +
                                std::to_string(truth.num_actions()) + ")");
  }
  std::vector<double> diff(static_cast<std::size_t>(truth.num_states()), 0.0);
  double worst = 0.0;
  for (StateId s = 0; s < truth.num_states(); ++s) {
    for (Action a = 0; a < truth.num_actions(); ++a) {
      for (const auto& n : model.transitions(s, a)) diff[static_cast<std::size_t>(n.state)] += n.prob;
      for (const auto& n : truth.transitions(s, a)) diff[static_cast<std::size_t>(n.state)] -= n.prob;
      double l1 = 0.0;
      for (const auto& n : model.transitions(s, a)) {
        auto& d = diff[static_cast<std::size_t>(n.state)];
        l1 += std::abs(d);
        d = 0.0;
      }
      for (const auto& n : truth.transitions(s, a)) {
        auto& d = diff[static_cast<std::size_t>(n.state)];
        l1 += std::abs(d);
        d = 0.0;
      }
      worst = std::max(worst, l1);
    }
  }
  return worst;
}

double model_l1_epsilon(const FittedModel& model, const TabularMDP& truth) {
  return model_l1_epsilon(model.mdp, truth);
}

double model_v_max(const FittedModel& model, const TabularQ& model_q, const Policy& pi1) {
  const auto& mdp = model.mdp;
  const auto S = static_cast<std::size_t>(mdp.num_states());
  const int A = mdp.num_actions();
  std::vector<char> reach(S, 0);
  const auto mu = mdp.initial_distribution();
  for (std::size_t s = 0; s < S; ++s) reach[s] = mu[s] > 0.0;
  std::vector<double> probs(static_cast<std::size_t>(A));
  double worst = 0.0;
  for (int t = 1; t <= model_q.horizon(); ++t) {
    std::vector<char> next(S, 0);
    for (std::size_t row = 0; row < S; ++row) {
      if (!reach[row]) continue;
      pi1.probs(model.mapping->representative(row), probs);
      double v = 0.0;
      for (Action a = 0; a < A; ++a) v += probs[static_cast<std::size_t>(a)] * model_q.at(t, row, a);
      worst = std::max(worst, std::abs(v));
      for (Action a = 0; a < A; ++a) {
        for (const auto& n : mdp.transitions(static_cast<StateId>(row), a)) {
          if (n.prob > 0.0) next[static_cast<std::size_t>(n.state)] = 1;
        }
      }
    }
    reach = std::move(next);
  }
  return worst;
}

double dr_v2_expectation(const TabularMDP& truth, const FittedModel& model, const QFunction& model_q,
                         const Policy& pi1, int horizon) {
  guard_size(truth, horizon, "dr_v2_expectation");
  check_policy(truth, pi1, "dr_v2_expectation");
  const int S = truth.num_states();
  const int A = truth.num_actions();
  const Table p1 = tabulate(pi1, S);
  // e_{t+1} - V-hat_{t+1}, per state
  std::vector<double> gap(static_cast<std::size_t>(S), 0.0);
  std::vector<double> e(static_cast<std::size_t>(S), 0.0);
  for (int t = horizon; t >= 1; --t) {
    std::vector<double> next_gap(static_cast<std::size_t>(S), 0.0);
    for (StateId s = 0; s < S; ++s) {
      const auto si = static_cast<std::size_t>(s);
      const State st = State::discrete(s);
      double v_hat = 0.0;
      double corr = 0.0;
      for (Action a = 0; a < A; ++a) {
        const double p = p1[si][static_cast<std::size_t>(a)];
        if (p == 0.0) continue;
        v_hat += p * model_q.q(t, st, a);
        double c = truth.mean_reward(s, a) - model.reward(st, a);
        for (const auto& n : truth.transitions(s, a)) c += truth.gamma() * n.prob * gap[static_cast<std::size_t>(n.state)];
        corr += p * c;
      }
      e[si] = v_hat + corr;
      next_gap[si] = corr;
    }
    gap = std::move(next_gap);
  }
  const auto mu = truth.initial_distribution();
  double total = 0.0;
  for (std::size_t s = 0; s < mu.size(); ++s) total += mu[s] * e[s];
  return total;
}

ErrorSummary summarize_errors(std::span<const double> estimates, double truth) {
  if (estimates.size() < 2) throw std::invalid_argument("summarize_errors: needs at least 2 estimates");
  const auto st = summarize(estimates);
  ErrorSummary out;
  out.runs = estimates.size();
  out.bias = st.mean - truth;
  out.variance = st.stddev * st.stddev;
  out.bias_stderr = st.std_error;
  std::vector<double> sq(estimates.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (estimates[i] - truth) * (estimates[i] - truth);
  out.rmse = std::sqrt(pairwise_sum(sq) / static_cast<double>(sq.size()));
  out.relative_rmse = truth == 0.0 ? std::numeric_limits<double>::infinity() : out.rmse / std::abs(truth);
  return out;
}

ErrorSummary estimator_mse(const std::function<double(std::uint64_t)>& draw, double truth, std::size_t runs,
                           std::uint64_t seed) {
  std::vector<double> est;
  est.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r) est.push_back(draw(derive_seed(seed, r)));
  return summarize_errors(est, truth);
}

}  // namespace ope
