#include "ope/generators.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

#include "ope/rng.h"

namespace ope {

namespace {

constexpr std::size_t kMaxTreeStates = 1000000;

std::vector<NextState> dirichlet_row(Rng& rng, StateId first, std::size_t count) {
  const auto p = rng.dirichlet(count, 1.0);
  std::vector<NextState> row;
  row.reserve(count);
  for (std::size_t i = 0; i < count; ++i) row.push_back({first + static_cast<StateId>(i), p[i]});
  return row;
}

std::vector<RewardOutcome> random_reward(Rng& rng, std::size_t outcomes) {
  const auto p = rng.dirichlet(outcomes, 1.0);
  std::vector<RewardOutcome> out;
  for (std::size_t i = 0; i < outcomes; ++i) out.push_back({rng.uniform(), p[i]});
  return out;
}

void copy_rewards(const TabularMDP& mdp, StateId from, Action a, TabularMDP::Builder& b, StateId to) {
  const auto outcomes = mdp.reward_outcomes(from, a);
  if (outcomes.empty()) {
    b.set_reward(to, a, mdp.mean_reward(from, a));
  } else {
    b.set_reward_distribution(to, a, {outcomes.begin(), outcomes.end()});
  }
}

}  // namespace

TabularMDP make_t2(bool noisy_leaf) {
  TabularMDP::Builder b(4, 2, 1.0, 2);
  b.set_id("t2");
  b.set_transition(0, 0, {{1, 1.0}});
  b.set_transition(0, 1, {{2, 1.0}});
  for (StateId s : {1, 2}) {
    for (Action a : {0, 1}) b.set_transition(s, a, {{3, 1.0}});
    b.set_reward(s, 0, 1.0);
  }
  if (noisy_leaf) b.set_reward_distribution(1, 0, {{0.5, 0.5}, {1.5, 0.5}});
  b.set_terminal(3);
  b.set_initial({1.0, 0.0, 0.0, 0.0});
  return b.build();
}

std::size_t tree_state_count(int branch, int actions, int horizon) {
  if (branch < 1 || actions < 1 || horizon < 1) {
    throw std::invalid_argument("tree: branch, actions and horizon must be positive");
  }
  std::size_t total = 0;
  std::size_t layer = static_cast<std::size_t>(branch);
  for (int t = 1; t <= horizon; ++t) {
    total += layer;
    if (total > kMaxTreeStates) return total;
    layer *= static_cast<std::size_t>(branch) * static_cast<std::size_t>(actions);
  }
  return total;
}

TabularMDP make_random_tree_mdp(int branch, int actions, int horizon, std::uint64_t seed) {
  const std::size_t n = tree_state_count(branch, actions, horizon);
  if (n > kMaxTreeStates) {
    throw std::invalid_argument("tree: more than " + std::to_string(kMaxTreeStates) + " histories");
  }
  const auto B = static_cast<std::size_t>(branch);
  const auto terminal = static_cast<StateId>(n);
  Rng rng(seed);
  TabularMDP::Builder b(static_cast<int>(n) + 1, actions, 1.0, horizon);
  b.set_id("tree");

  std::vector<double> mu(n + 1, 0.0);
  const auto mu0 = rng.dirichlet(B, 1.0);
  std::copy(mu0.begin(), mu0.end(), mu.begin());
  b.set_initial(std::move(mu));

  std::size_t layer_begin = 0;
  std::size_t layer_size = B;
  for (int t = 1; t <= horizon; ++t) {
    const std::size_t next_begin = layer_begin + layer_size;
    for (std::size_t i = 0; i < layer_size; ++i) {
      const auto s = static_cast<StateId>(layer_begin + i);
      for (Action a = 0; a < actions; ++a) {
        if (t < horizon) {
          const auto first = next_begin + (i * static_cast<std::size_t>(actions) + static_cast<std::size_t>(a)) * B;
          b.set_transition(s, a, dirichlet_row(rng, static_cast<StateId>(first), B));
        } else {
          b.set_transition(s, a, {{terminal, 1.0}});
          b.set_reward_distribution(s, a, random_reward(rng, B));
        }
      }
    }
    layer_begin = next_begin;
    layer_size *= B * static_cast<std::size_t>(actions);
  }
  b.set_terminal(terminal);
  return b.build();
}

TabularMDP make_random_dag_mdp(const std::vector<int>& layer_sizes, int actions, std::uint64_t seed) {
  if (layer_sizes.empty()) throw std::invalid_argument("dag: no layers");
  if (actions < 1) throw std::invalid_argument("dag: actions must be positive");
  std::vector<std::size_t> begin;
  std::size_t n = 0;
  for (int size : layer_sizes) {
    if (size < 1) throw std::invalid_argument("dag: layer sizes must be positive");
    begin.push_back(n);
    n += static_cast<std::size_t>(size);
  }
  if (n > kMaxTreeStates) throw std::invalid_argument("dag: too many states");
  const int H = static_cast<int>(layer_sizes.size());
  const auto terminal = static_cast<StateId>(n);
  Rng rng(seed);
  TabularMDP::Builder b(static_cast<int>(n) + 1, actions, 1.0, H);
  b.set_id("dag");

  std::vector<double> mu(n + 1, 0.0);
  const auto mu0 = rng.dirichlet(static_cast<std::size_t>(layer_sizes[0]), 1.0);
  std::copy(mu0.begin(), mu0.end(), mu.begin());
  b.set_initial(std::move(mu));

  for (int layer = 0; layer < H; ++layer) {
    for (int i = 0; i < layer_sizes[static_cast<std::size_t>(layer)]; ++i) {
      const auto s = static_cast<StateId>(begin[static_cast<std::size_t>(layer)] + static_cast<std::size_t>(i));
      for (Action a = 0; a < actions; ++a) {
        if (layer + 1 < H) {
          const auto next = static_cast<std::size_t>(layer + 1);
          b.set_transition(s, a, dirichlet_row(rng, static_cast<StateId>(begin[next]),
                                               static_cast<std::size_t>(layer_sizes[next])));
        } else {
          b.set_transition(s, a, {{terminal, 1.0}});
          b.set_reward_distribution(s, a, random_reward(rng, 2));
        }
      }
    }
  }
  b.set_terminal(terminal);
  return b.build();
}

TabularMDP make_reunion_dag() {
  TabularMDP::Builder b(3, 2, 1.0, 2);
  b.set_id("reunion");
  b.set_transition(0, 0, {{1, 1.0}});
  b.set_transition(0, 1, {{1, 1.0}});
  b.set_transition(1, 0, {{2, 1.0}});
  b.set_transition(1, 1, {{2, 1.0}});
  b.set_reward_distribution(1, 0, {{0.0, 0.5}, {2.0, 0.5}});
  b.set_reward(1, 1, 1.0);
  b.set_terminal(2);
  b.set_initial({1.0, 0.0, 0.0});
  return b.build();
}

std::vector<int> layer_of_states(const TabularMDP& mdp, int horizon) {
  std::vector<int> layer(static_cast<std::size_t>(mdp.num_states()), 0);
  std::vector<StateId> frontier;
  const auto mu = mdp.initial_distribution();
  for (std::size_t s = 0; s < mu.size(); ++s) {
    if (mu[s] > 0.0) frontier.push_back(static_cast<StateId>(s));
  }
  for (int t = 1; t <= horizon && !frontier.empty(); ++t) {
    std::vector<StateId> next;
    for (StateId s : frontier) {
      auto& l = layer[static_cast<std::size_t>(s)];
      if (l != 0 && l != t) {
        throw std::invalid_argument("state " + std::to_string(s) + " occurs at steps " +
                                    std::to_string(l) + " and " + std::to_string(t));
      }
      if (l == t) continue;
      l = t;
      if (t == horizon) continue;
      for (Action a = 0; a < mdp.num_actions(); ++a) {
        for (const auto& ns : mdp.transitions(s, a)) {
          if (ns.prob > 0.0) next.push_back(ns.state);
        }
      }
    }
    frontier = std::move(next);
  }
  return layer;
}

bool is_tree(const TabularMDP& mdp, int horizon) {
  std::vector<int> layer;
  try {
    layer = layer_of_states(mdp, horizon);
  } catch (const std::invalid_argument&) {
    return false;
  }
  const auto mu = mdp.initial_distribution();
  std::vector<int> parents(layer.size(), 0);
  for (std::size_t s = 0; s < layer.size(); ++s) {
    if (layer[s] == 0 || layer[s] == horizon) continue;
    for (Action a = 0; a < mdp.num_actions(); ++a) {
      for (const auto& ns : mdp.transitions(static_cast<StateId>(s), a)) {
        if (ns.prob > 0.0) ++parents[static_cast<std::size_t>(ns.state)];
      }
    }
  }
  for (std::size_t s = 0; s < layer.size(); ++s) {
    if (layer[s] == 0) continue;
    if (layer[s] == 1 ? parents[s] != 0 : parents[s] != 1) return false;
    if (layer[s] == 1 && mu[s] <= 0.0) return false;
  }
  return true;
}

TabularMDP unroll_to_tree(const TabularMDP& mdp, int horizon) {
  if (horizon < 1) throw std::invalid_argument("unroll_to_tree: horizon must be positive");
  struct Node {
    StateId orig;
    int t;
  };
  std::vector<Node> nodes;
  // children[node * A + a] = (first child index, original rows)
  std::vector<std::vector<NextState>> rows;
  const int A = mdp.num_actions();
  const auto mu = mdp.initial_distribution();
  std::vector<double> init;
  for (std::size_t s = 0; s < mu.size(); ++s) {
    if (mu[s] > 0.0) {
      nodes.push_back({static_cast<StateId>(s), 1});
      init.push_back(mu[s]);
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node node = nodes[i];
    for (Action a = 0; a < A; ++a) {
      std::vector<NextState> row;
      if (node.t < horizon) {
        for (const auto& ns : mdp.transitions(node.orig, a)) {
          if (ns.prob <= 0.0) continue;
          row.push_back({static_cast<StateId>(nodes.size()), ns.prob});
          nodes.push_back({ns.state, node.t + 1});
          if (nodes.size() > kMaxTreeStates) {
            throw std::invalid_argument("unroll_to_tree: more than " +
                                        std::to_string(kMaxTreeStates) + " histories");
          }
        }
      }
      rows.push_back(std::move(row));
    }
  }
  const auto n = static_cast<StateId>(nodes.size());
  TabularMDP::Builder b(static_cast<int>(n) + 1, A, mdp.gamma(), horizon);
  b.set_id(std::string(mdp.id()) + "_tree");
  init.resize(nodes.size() + 1, 0.0);
  b.set_initial(std::move(init));
  for (StateId i = 0; i < n; ++i) {
    const Node& node = nodes[static_cast<std::size_t>(i)];
    for (Action a = 0; a < A; ++a) {
      auto& row = rows[static_cast<std::size_t>(i) * static_cast<std::size_t>(A) + static_cast<std::size_t>(a)];
      if (node.t == horizon) row = {{n, 1.0}};
      b.set_transition(i, a, std::move(row));
      copy_rewards(mdp, node.orig, a, b, i);
    }
  }
  b.set_terminal(n);
  return b.build();
}

TabularMDP perturb_transitions(const TabularMDP& mdp, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 0.0 && epsilon <= 2.0)) {
    throw std::invalid_argument("perturb_transitions: epsilon must lie in [0, 2]");
  }
  Rng rng(seed);
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  TabularMDP::Builder b(S, A, mdp.gamma(), mdp.horizon());
  b.set_id(std::string(mdp.id()));
  const auto mu = mdp.initial_distribution();
  b.set_initial({mu.begin(), mu.end()});
  std::vector<char> in_support(static_cast<std::size_t>(S), 0);
  for (StateId s = 0; s < S; ++s) {
    if (mdp.terminal(s)) {
      b.set_terminal(s);
      continue;
    }
    for (Action a = 0; a < A; ++a) {
      const auto row = mdp.transitions(s, a);
      std::vector<NextState> out(row.begin(), row.end());
      for (const auto& ns : row) in_support[static_cast<std::size_t>(ns.state)] = 1;
      std::vector<StateId> outside;
      for (StateId x = 0; x < S; ++x) {
        if (!in_support[static_cast<std::size_t>(x)]) outside.push_back(x);
      }
      for (const auto& ns : row) in_support[static_cast<std::size_t>(ns.state)] = 0;
      if (!outside.empty() && epsilon > 0.0) {
        for (auto& ns : out) ns.prob *= 1.0 - epsilon / 2.0;
        out.push_back({outside[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(outside.size())))],
                       epsilon / 2.0});
      }
      b.set_transition(s, a, std::move(out));
      copy_rewards(mdp, s, a, b, s);
    }
  }
  return b.build();
}

FactoredSim::FactoredSim(const FactoredConfig& config, std::uint64_t seed)
    : config_(config), joint_(TabularMDP::Builder(1, 1, 1.0, 1).set_initial({1.0}).set_terminal(0).build()) {
  const int n = config.n_vars;
  const int k = config.arity;
  const int A = config.actions;
  if (n < 1 || k < 1 || A < 1 || config.horizon < 1) {
    throw std::invalid_argument("factored: n_vars, arity, actions and horizon must be positive");
  }
  double joint_size = std::pow(static_cast<double>(k), n);
  if (joint_size > 1e5) throw std::invalid_argument("factored: joint state space exceeds 1e5");
  const auto S = static_cast<StateId>(std::llround(joint_size));
  Rng rng(seed);

  marginals_.resize(static_cast<std::size_t>(n * A * k));
  for (int i = 0; i < n; ++i) {
    for (Action a = 0; a < A; ++a) {
      for (int v = 0; v < k; ++v) {
        auto& row = marginals_[static_cast<std::size_t>((i * A + a) * k + v)];
        if (k == 1) {
          row = {{0, 1.0}};
          continue;
        }
        const int succ = (v + 1 + (a + i) % (k - 1)) % k;
        const auto p = rng.dirichlet(2, 2.0);
        row = {{v, p[0]}, {succ, p[1]}};
      }
    }
  }
  const int m = std::min(config.reward_vars, n);
  weights_.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < m; ++i) {
    weights_[static_cast<std::size_t>(i)] = rng.uniform(0.5, 1.5) / std::max(1, k - 1);
  }
  offsets_.resize(static_cast<std::size_t>(A));
  for (auto& c : offsets_) c = rng.uniform(-config.action_effect, config.action_effect);

  TabularMDP::Builder b(static_cast<int>(S), A, config.gamma, config.horizon);
  b.set_id("factored");
  b.set_initial(std::vector<double>(static_cast<std::size_t>(S), 1.0 / static_cast<double>(S)));
  std::vector<NextState> row;
  std::vector<NextState> grown;
  for (StateId s = 0; s < S; ++s) {
    const auto x = features(s);
    for (Action a = 0; a < A; ++a) {
      row.assign(1, {0, 1.0});
      StateId place = 1;
      for (int i = 0; i < n; ++i) {
        grown.clear();
        for (const auto& partial : row) {
          for (const auto& mv : marginal(i, a, x[static_cast<std::size_t>(i)])) {
            grown.push_back({partial.state + mv.state * place, partial.prob * mv.prob});
          }
        }
        row.swap(grown);
        place *= k;
      }
      b.set_transition(s, a, row);
      double r = offsets_[static_cast<std::size_t>(a)];
      for (int i = 0; i < n; ++i) r += weights_[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
      b.set_reward(s, a, r);
    }
  }
  joint_ = b.build();
}

const std::vector<NextState>& FactoredSim::marginal(int var, Action a, int value) const {
  if (var < 0 || var >= config_.n_vars || a < 0 || a >= config_.actions || value < 0 ||
      value >= config_.arity) {
    throw std::out_of_range("factored: marginal index out of range");
  }
  return marginals_[static_cast<std::size_t>((var * config_.actions + a) * config_.arity + value)];
}

std::vector<int> FactoredSim::features(StateId id) const {
  std::vector<int> x(static_cast<std::size_t>(config_.n_vars));
  for (auto& v : x) {
    v = static_cast<int>(id % config_.arity);
    id /= config_.arity;
  }
  return x;
}

StateId FactoredSim::encode(const std::vector<int>& features) const {
  if (features.size() != static_cast<std::size_t>(config_.n_vars)) {
    throw std::invalid_argument("factored: wrong feature count");
  }
  StateId id = 0;
  for (auto it = features.rbegin(); it != features.rend(); ++it) {
    if (*it < 0 || *it >= config_.arity) throw std::invalid_argument("factored: feature out of range");
    id = id * config_.arity + *it;
  }
  return id;
}

}  // namespace ope
