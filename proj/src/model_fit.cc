#include "ope/model_fit.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ope/bellman.h"
#include "ope/dataset_io.h"

namespace ope {

namespace {

const State& next_state(const Trajectory& traj, std::size_t t) {
  return t + 1 < traj.steps.size() ? traj.steps[t + 1].state : traj.final_state;
}

std::vector<std::vector<double>> tabulate_rows(const StateMapping& mapping, const Policy& pi) {
  std::vector<std::vector<double>> table(mapping.size(), std::vector<double>(static_cast<std::size_t>(pi.num_actions())));
  for (std::size_t row = 0; row < table.size(); ++row) pi.probs(mapping.representative(row), table[row]);
  return table;
}

std::vector<double> empirical_initial(const Dataset& data, const StateMapping& mapping) {
  std::vector<double> mu(mapping.size(), 0.0);
  for (const auto& traj : data.trajectories()) {
    const State& s0 = traj.steps.empty() ? traj.final_state : traj.steps.front().state;
    mu[mapping.map(s0)] += 1.0;
  }
  for (auto& p : mu) p /= static_cast<double>(data.size());
  return mu;
}

}  // namespace

DiscretizedMapping::DiscretizedMapping(Discretizer discretizer, const Dataset& data)
    : discretizer_(std::move(discretizer)) {
  auto add = [&](const State& s) {
    const auto key = discretizer_.key(s);
    if (index_.emplace(key, centers_.size()).second) centers_.push_back(discretizer_.center(key));
  };
  for (const auto& traj : data.trajectories()) {
    for (const auto& step : traj.steps) add(step.state);
    add(traj.final_state);
  }
}

std::size_t DiscretizedMapping::map(const State& s) const {
  if (s.size() != discretizer_.scales().size()) return unseen_row();
  const auto it = index_.find(discretizer_.key(s));
  return it == index_.end() ? unseen_row() : it->second;
}

State DiscretizedMapping::representative(std::size_t row) const {
  if (row >= centers_.size()) return State{};
  return centers_[row];
}

FittedModel fit_tabular_model(const Dataset& data, std::shared_ptr<const StateMapping> mapping,
                              int n_actions, double reward_floor, double gamma) {
  const std::size_t R = mapping->size();
  const auto A = static_cast<std::size_t>(n_actions);
  struct Transition {
    std::size_t pair;
    std::size_t next;
    bool operator<(const Transition& o) const { return pair != o.pair ? pair < o.pair : next < o.next; }
  };
  std::vector<Transition> transitions;
  std::vector<std::size_t> counts(R * A, 0);
  std::vector<double> reward_sum(R * A, 0.0);
  for (const auto& traj : data.trajectories()) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& step = traj.steps[t];
      if (step.action < 0 || step.action >= n_actions) {
        throw std::invalid_argument("fit_tabular_model: action " + std::to_string(step.action) +
                                    " out of range");
      }
      const std::size_t pair = mapping->map(step.state) * A + static_cast<std::size_t>(step.action);
      ++counts[pair];
      reward_sum[pair] += step.reward;
      transitions.push_back({pair, mapping->map(next_state(traj, t))});
    }
  }
  std::sort(transitions.begin(), transitions.end());

  TabularMDP::Builder b(static_cast<int>(R), n_actions, gamma, data.horizon());
  b.set_id("fitted");
  std::size_t i = 0;
  for (std::size_t pair = 0; pair < R * A; ++pair) {
    const auto s = static_cast<StateId>(pair / A);
    const auto a = static_cast<Action>(pair % A);
    if (counts[pair] == 0) {
      b.set_transition(s, a, {{s, 1.0}});
      b.set_reward(s, a, reward_floor);
      continue;
    }
    const double n = static_cast<double>(counts[pair]);
    std::vector<NextState> row;
    while (i < transitions.size() && transitions[i].pair == pair) {
      std::size_t j = i;
      while (j < transitions.size() && transitions[j].pair == pair && transitions[j].next == transitions[i].next) ++j;
      row.push_back({static_cast<StateId>(transitions[i].next), static_cast<double>(j - i) / n});
      i = j;
    }
    b.set_transition(s, a, std::move(row));
    b.set_reward(s, a, reward_sum[pair] / n);
  }
  b.set_initial(empirical_initial(data, *mapping));
  return FittedModel{b.build(), std::move(mapping), std::move(counts), reward_floor, 0.0, false};
}

FittedModel fit_tabular_model(const Dataset& data, const Discretizer& discretizer, int n_actions,
                              double reward_floor, double gamma) {
  return fit_tabular_model(data, std::make_shared<DiscretizedMapping>(discretizer, data), n_actions,
                           reward_floor, gamma);
}

FittedModel model_from_mdp(TabularMDP mdp) {
  const auto S = static_cast<std::size_t>(mdp.num_states());
  const auto A = static_cast<std::size_t>(mdp.num_actions());
  auto mapping = std::make_shared<IdentityMapping>(S);
  return FittedModel{std::move(mdp), std::move(mapping), std::vector<std::size_t>(S * A, 1), 0.0, 0.0, false};
}

std::shared_ptr<TabularQ> q_from_model(const FittedModel& model, const Policy& pi1, int horizon) {
  if (pi1.num_actions() != model.mdp.num_actions()) {
    throw std::invalid_argument("q_from_model: policy/model action count mismatch");
  }
  auto values = backward_q_values(model.mdp, tabulate_rows(*model.mapping, pi1), horizon);
  return std::make_shared<TabularQ>(model.mapping, horizon, model.mdp.num_actions(), std::move(values));
}

PolicyPtr optimal_policy(const FittedModel& model, int horizon, bool minimize) {
  auto values = optimal_q_values(model.mdp, horizon, minimize);
  auto q = std::make_shared<TabularQ>(model.mapping, horizon, model.mdp.num_actions(), std::move(values));
  return make_greedy_policy(std::move(q), 1, minimize);
}

std::shared_ptr<ConstantQ> constant_baseline_q(double r_floor, double scale, double gamma, int horizon,
                                               int n_actions) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("constant_baseline_q: gamma outside [0, 1]");
  if (horizon < 0) throw std::invalid_argument("constant_baseline_q: negative horizon");
  std::vector<double> per_step(static_cast<std::size_t>(horizon));
  for (int t = 1; t <= horizon; ++t) {
    const int remaining = horizon - t + 1;
    const double steps =
        gamma == 1.0 ? static_cast<double>(remaining) : (1.0 - std::pow(gamma, remaining)) / (1.0 - gamma);
    per_step[static_cast<std::size_t>(t - 1)] = scale * r_floor * steps;
  }
  return std::make_shared<ConstantQ>(std::move(per_step), n_actions);
}

// ---------------------------------------------------------------------------
// Kernel-based Q

KernelQ::KernelQ(const Dataset& data, int n_actions, double gamma, const Policy& pi1, int horizon,
                 KernelConfig config)
    : n_actions_(n_actions), horizon_(horizon), gamma_(gamma), config_(std::move(config)) {
  if (!(config_.bandwidth > 0.0)) throw std::invalid_argument("kernel_q: bandwidth must be positive");
  if (config_.particles < 1) throw std::invalid_argument("kernel_q: need at least one particle");
  if (data.horizon() == 0) throw std::invalid_argument("kernel_q: dataset has no transitions");
  dims_ = data[0].steps[0].state.size();
  if (dims_ + 1 > State::kMaxDims) throw std::invalid_argument("kernel_q: state has too many dimensions");
  config_.direction_dims.resize(dims_, false);

  // Offsets in {-1, 0, 1} over state dimensions and the action.
  const std::size_t width = dims_ + 1;
  std::vector<int> off(width, -1);
  while (true) {
    offsets_.push_back(off);
    std::size_t d = 0;
    while (d < width && off[d] == 1) off[d++] = -1;
    if (d == width) break;
    ++off[d];
  }

  // Support pairs.
  std::vector<double> reward_sum;
  std::vector<std::size_t> reward_count;
  std::vector<std::vector<State>> successors;
  for (const auto& traj : data.trajectories()) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& step = traj.steps[t];
      if (step.state.size() != dims_) throw std::invalid_argument("kernel_q: inconsistent state dimension");
      const auto key = pair_key(step.state, step.action);
      const auto [it, inserted] = pair_index_.emplace(key, pair_keys_.size());
      if (inserted) {
        pair_keys_.push_back(key);
        reward_sum.push_back(0.0);
        reward_count.push_back(0);
        successors.emplace_back();
      }
      reward_sum[it->second] += step.reward;
      ++reward_count[it->second];
      successors[it->second].push_back(next_state(traj, t));
    }
  }
  const std::size_t P = pair_keys_.size();
  rewards_.resize(P);
  for (std::size_t p = 0; p < P; ++p) rewards_[p] = reward_sum[p] / static_cast<double>(reward_count[p]);

  // Particles, deduplicated into a finite set of next states.
  Rng rng(config_.seed);
  std::unordered_map<Key, std::size_t, KeyHash> state_index;
  std::vector<State> states;
  std::vector<std::size_t> particle_of(P * static_cast<std::size_t>(config_.particles));
  for (std::size_t p = 0; p < P; ++p) {
    for (int j = 0; j < config_.particles; ++j) {
      const auto& list = successors[p];
      const State& s = list[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(list.size())))];
      Key k;
      k.size = dims_;
      for (std::size_t d = 0; d < dims_; ++d) k.v[d] = std::llround(s[d]);
      const auto [it, inserted] = state_index.emplace(k, states.size());
      if (inserted) states.push_back(s);
      particle_of[p * static_cast<std::size_t>(config_.particles) + static_cast<std::size_t>(j)] = it->second;
    }
  }

  const auto A = static_cast<std::size_t>(n_actions_);
  std::vector<std::vector<std::vector<Neighbor>>> nbrs(states.size());
  std::vector<double> pi(states.size() * A);
  for (std::size_t x = 0; x < states.size(); ++x) {
    nbrs[x].resize(A);
    for (Action a = 0; a < n_actions_; ++a) nbrs[x][static_cast<std::size_t>(a)] = neighbors(states[x], a);
    pi1.probs(states[x], std::span<double>(pi.data() + x * A, A));
  }

  g_.assign(static_cast<std::size_t>(horizon_) * P, 0.0);
  std::vector<double> v_next(states.size(), 0.0);
  const double inv_particles = 1.0 / config_.particles;
  for (int t = horizon_; t >= 1; --t) {
    double* g_t = g_.data() + static_cast<std::size_t>(t - 1) * P;
    for (std::size_t p = 0; p < P; ++p) {
      double future = 0.0;
      for (int j = 0; j < config_.particles; ++j) {
        future += v_next[particle_of[p * static_cast<std::size_t>(config_.particles) + static_cast<std::size_t>(j)]];
      }
      g_t[p] = rewards_[p] + gamma_ * future * inv_particles;
    }
    if (t == 1) break;
    for (std::size_t x = 0; x < states.size(); ++x) {
      double v = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double pa = pi[x * A + a];
        if (pa == 0.0) continue;
        double q = 0.0;
        for (const auto& n : nbrs[x][a]) q += n.weight * g_t[n.pair];
        v += pa * q;
      }
      v_next[x] = v;
    }
  }
}

Discretizer::Key KernelQ::pair_key(const State& s, Action a) const {
  Key k;
  k.size = dims_ + 1;
  for (std::size_t d = 0; d < dims_; ++d) k.v[d] = std::llround(s[d]);
  k.v[dims_] = a;
  return k;
}

std::vector<KernelQ::Neighbor> KernelQ::neighbors(const State& s, Action a) const {
  const Key base = pair_key(s, a);
  std::vector<Neighbor> out;
  std::vector<double> dist;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& off : offsets_) {
    Key k = base;
    for (std::size_t d = 0; d <= dims_; ++d) {
      const bool direction = d < dims_ ? config_.direction_dims[d] : config_.action_is_direction;
      k.v[d] += off[d];
      if (direction) k.v[d] = ((k.v[d] % 8) + 8) % 8;
    }
    const auto it = pair_index_.find(k);
    if (it == pair_index_.end()) continue;
    // Deviation is exactly |offset| per coordinate, including wrapped directions.
    double d2 = 0.0;
    for (int o : off) d2 += o * o;
    const double d = std::sqrt(d2);
    best = std::min(best, d);
    out.push_back({it->second, 0.0});
    dist.push_back(d);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].weight = std::exp(-(dist[i] - best) / config_.bandwidth);
    total += out[i].weight;
  }
  for (auto& n : out) n.weight /= total;
  return out;
}

double KernelQ::q(int t, const State& s, Action a) const {
  if (t < 1 || t > horizon_) return 0.0;
  if (s.size() != dims_) throw std::invalid_argument("KernelQ: query has the wrong dimension");
  const double* g_t = g_.data() + static_cast<std::size_t>(t - 1) * rewards_.size();
  double q = 0.0;
  for (const auto& n : neighbors(s, a)) q += n.weight * g_t[n.pair];
  return q;
}

std::shared_ptr<KernelQ> kernel_q(const Dataset& data, int n_actions, double gamma, const Policy& pi1,
                                  int horizon, KernelConfig config) {
  return std::make_shared<KernelQ>(data, n_actions, gamma, pi1, horizon, std::move(config));
}

// ---------------------------------------------------------------------------
// Factored model

FittedModel fit_factored_model(const Dataset& data, int n_vars, int arity, int n_actions,
                               const std::vector<int>& reward_features, double gamma) {
  if (n_vars < 1 || arity < 1 || n_actions < 1) {
    throw std::invalid_argument("fit_factored_model: sizes must be positive");
  }
  const double joint = std::pow(static_cast<double>(arity), n_vars);
  if (joint > 1e5) throw std::invalid_argument("fit_factored_model: joint state space exceeds 1e5");
  for (int f : reward_features) {
    if (f < 0 || f >= n_vars) throw std::invalid_argument("fit_factored_model: bad reward feature index");
  }
  const auto S = static_cast<std::size_t>(std::llround(joint));
  const auto k = static_cast<std::size_t>(arity);
  const auto A = static_cast<std::size_t>(n_actions);
  const auto n = static_cast<std::size_t>(n_vars);

  auto decode = [&](const State& s) {
    const StateId id = s.id();
    if (id < 0 || static_cast<std::size_t>(id) >= S) {
      throw std::invalid_argument("fit_factored_model: state id out of range");
    }
    std::vector<std::size_t> x(n);
    auto rest = static_cast<std::size_t>(id);
    for (auto& v : x) {
      v = rest % k;
      rest /= k;
    }
    return x;
  };

  std::vector<double> counts(n * A * k * k, 0.0);
  std::vector<std::size_t> pair_counts(S * A, 0);
  std::size_t rows = 0;
  for (const auto& traj : data.trajectories()) rows += traj.steps.size();
  const auto cols = static_cast<Eigen::Index>(reward_features.size() + 1);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows), cols);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  for (const auto& traj : data.trajectories()) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& step = traj.steps[t];
      const auto a = static_cast<std::size_t>(step.action);
      if (a >= A) throw std::invalid_argument("fit_factored_model: action out of range");
      const auto x = decode(step.state);
      const auto x_next = decode(next_state(traj, t));
      for (std::size_t i = 0; i < n; ++i) counts[((i * A + a) * k + x[i]) * k + x_next[i]] += 1.0;
      ++pair_counts[static_cast<std::size_t>(step.state.id()) * A + a];
      X(r, 0) = 1.0;
      for (std::size_t f = 0; f < reward_features.size(); ++f) {
        X(r, static_cast<Eigen::Index>(f + 1)) = static_cast<double>(x[static_cast<std::size_t>(reward_features[f])]);
      }
      y(r) = step.reward;
      ++r;
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(cols);
  bool fallback = false;
  if (rows > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < cols) {
      fallback = true;
      beta(0) = y.mean();
    } else {
      beta = qr.solve(y);
    }
  }
  const double residual = rows > 0 ? std::sqrt((X * beta - y).squaredNorm() / static_cast<double>(rows)) : 0.0;

  // Marginal MLE rows; unseen (variable, action, value) stays put.
  std::vector<std::vector<NextState>> marginal(n * A * k);
  for (std::size_t m = 0; m < marginal.size(); ++m) {
    const double* c = counts.data() + m * k;
    double total = 0.0;
    for (std::size_t v = 0; v < k; ++v) total += c[v];
    if (total == 0.0) {
      marginal[m] = {{static_cast<StateId>(m % k), 1.0}};
      continue;
    }
    for (std::size_t v = 0; v < k; ++v) {
      if (c[v] > 0.0) marginal[m].push_back({static_cast<StateId>(v), c[v] / total});
    }
  }

  auto mapping = std::make_shared<IdentityMapping>(S);
  TabularMDP::Builder b(static_cast<int>(S), n_actions, gamma, data.horizon());
  b.set_id("factored_fit");
  std::vector<NextState> row;
  std::vector<NextState> grown;
  for (std::size_t s = 0; s < S; ++s) {
    const auto x = decode(State::discrete(static_cast<StateId>(s)));
    double reward = beta(0);
    for (std::size_t f = 0; f < reward_features.size(); ++f) {
      reward += beta(static_cast<Eigen::Index>(f + 1)) * static_cast<double>(x[static_cast<std::size_t>(reward_features[f])]);
    }
    for (std::size_t a = 0; a < A; ++a) {
      row.assign(1, {0, 1.0});
      StateId place = 1;
      for (std::size_t i = 0; i < n; ++i) {
        grown.clear();
        for (const auto& partial : row) {
          for (const auto& mv : marginal[(i * A + a) * k + x[i]]) {
            grown.push_back({partial.state + mv.state * place, partial.prob * mv.prob});
          }
        }
        row.swap(grown);
        place *= static_cast<StateId>(k);
      }
      b.set_transition(static_cast<StateId>(s), static_cast<Action>(a), row);
      b.set_reward(static_cast<StateId>(s), static_cast<Action>(a), reward);
    }
  }
  b.set_initial(empirical_initial(data, *mapping));
  return FittedModel{b.build(), std::move(mapping), std::move(pair_counts), 0.0, residual, fallback};
}

std::string model_summary(const FittedModel& model, std::size_t max_rows) {
  std::ostringstream out;
  const auto& m = model.mdp;
  out << "rows=" << m.num_states() << " actions=" << m.num_actions() << " horizon=" << m.horizon()
      << " reward_floor=" << format_real(model.reward_floor)
      << " reward_residual=" << format_real(model.reward_residual)
      << (model.regression_fallback ? " regression=fallback" : "") << '\n';
  out << "row\taction\tcount\treward\tnext\n";
  const auto shown = std::min<std::size_t>(max_rows, static_cast<std::size_t>(m.num_states()));
  for (std::size_t s = 0; s < shown; ++s) {
    for (Action a = 0; a < m.num_actions(); ++a) {
      out << s << '\t' << a << '\t' << model.count(s, a) << '\t'
          << format_real(m.mean_reward(static_cast<StateId>(s), a)) << '\t';
      bool first = true;
      for (const auto& ns : m.transitions(static_cast<StateId>(s), a)) {
        out << (first ? "" : " ") << ns.state << ':' << format_real(ns.prob);
        first = false;
      }
      out << '\n';
    }
  }
  if (shown < static_cast<std::size_t>(m.num_states())) {
    out << "... " << (static_cast<std::size_t>(m.num_states()) - shown) << " more rows\n";
  }
  return out.str();
}

}  // namespace ope
