#include <doctest.h>

#include <cmath>

#include "ope/bellman.h"
#include "ope/environments.h"
#include "ope/generators.h"
#include "ope/model_fit.h"
#include "ope/sampling.h"
#include "test_support.h"

using namespace ope;
using ope::testing::constant_policy;
using ope::testing::random_tabular_mdp;

namespace {

Dataset one_step_dataset(std::vector<Step> steps, std::vector<State> finals) {
  std::vector<Trajectory> trajs;
  for (std::size_t i = 0; i < steps.size(); ++i) trajs.push_back({{steps[i]}, finals[i]});
  return Dataset(std::move(trajs), 1);
}

double max_row_error(const FittedModel& model, const TabularMDP& truth) {
  double worst = 0.0;
  for (StateId s = 0; s < truth.num_states(); ++s) {
    for (Action a = 0; a < truth.num_actions(); ++a) {
      for (StateId x = 0; x < truth.num_states(); ++x) {
        worst = std::max(worst, std::abs(model.mdp.transition_prob(s, a, x) - truth.transition_prob(s, a, x)));
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("single transition gives a one-hot row; unseen pairs get the floor") {
  const auto d = one_step_dataset({{State::discrete(0), 1, 0.5, 0.5}}, {State::discrete(2)});
  const auto model = fit_tabular_model(d, std::make_shared<IdentityMapping>(3), 2, -1.0, 0.9);
  CHECK(model.mdp.transition_prob(0, 1, 2) == 1.0);
  CHECK(model.mdp.mean_reward(0, 1) == 0.5);
  CHECK(model.count(0, 1) == 1);
  CHECK(model.count(0, 0) == 0);
  CHECK(model.mdp.transition_prob(0, 0, 0) == 1.0);
  CHECK(model.mdp.mean_reward(0, 0) == -1.0);
  CHECK(model.mdp.transition_prob(2, 1, 2) == 1.0);
  CHECK(model.mdp.mean_reward(2, 1) == -1.0);
  CHECK(model.mdp.initial_distribution()[0] == 1.0);
}

TEST_CASE("tabular MLE is consistent") {
  const auto truth = random_tabular_mdp(7, 3, 2, 5, 0.9);
  const auto pi0 = make_uniform_policy(2);
  auto mapping = std::make_shared<IdentityMapping>(3);
  const auto small = fit_tabular_model(sample_dataset(truth, *pi0, 100, 1), mapping, 2, 0.0, 0.9);
  const auto large = fit_tabular_model(sample_dataset(truth, *pi0, 10000, 2), mapping, 2, 0.0, 0.9);
  const double e_small = max_row_error(small, truth);
  const double e_large = max_row_error(large, truth);
  CHECK(e_large < e_small);
  CHECK(e_large < 0.05);
  for (StateId s = 0; s < 3; ++s) {
    for (Action a = 0; a < 2; ++a) {
      double total = 0.0;
      for (const auto& ns : large.mdp.transitions(s, a)) total += ns.prob;
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("q_from_model on an exact model mirrors exact_q") {
  const auto t2 = make_t2();
  const auto model = model_from_mdp(t2);
  const auto pi1 = constant_policy(4, 2, 0);
  const auto q = q_from_model(model, *pi1, 2);
  const auto truth = exact_q(t2, *pi1, 2);
  for (int t = 1; t <= 3; ++t) {
    for (StateId s = 0; s < 4; ++s) {
      for (Action a = 0; a < 2; ++a) CHECK(q->q(t, State::discrete(s), a) == truth->q(t, State::discrete(s), a));
    }
  }
  CHECK(q->q(1, State::discrete(0), 0) == 1.0);
  const auto zero = q_from_model(model, *pi1, 0);
  for (StateId s = 0; s < 4; ++s) CHECK(zero->q(1, State::discrete(s), 0) == 0.0);
}

TEST_CASE("discretized mountain car model") {
  const auto env = make_mountain_car();
  const auto pi0 = make_uniform_policy(3);
  const auto data = sample_dataset(env, *pi0, 200, 5);
  const Discretizer disc({64.0, 256.0});
  const auto model = fit_tabular_model(data, disc, 3, -1.0, env.gamma());
  const auto& mapping = dynamic_cast<const DiscretizedMapping&>(*model.mapping);
  CHECK(model.mdp.num_states() == static_cast<int>(mapping.size()));
  // Unseen row.
  const auto u = static_cast<StateId>(mapping.unseen_row());
  for (Action a = 0; a < 3; ++a) {
    CHECK(model.mdp.mean_reward(u, a) == -1.0);
    CHECK(model.mdp.transition_prob(u, a, u) == 1.0);
  }
  // Every data state maps to a seen row, and representatives map back.
  for (const auto& traj : data.trajectories()) CHECK(model.row(traj.steps[0].state) != mapping.unseen_row());
  for (std::size_t r = 0; r < mapping.size(); ++r) CHECK(mapping.map(mapping.representative(r)) == r);

  const auto zero = q_from_model(model, *pi0, 0);
  CHECK(zero->q(1, data[0].steps[0].state, 0) == 0.0);
  const auto q = q_from_model(model, *pi0, env.horizon());
  const double floor_value = -(1.0 - std::pow(0.99, 100)) / 0.01;
  CHECK(q->q(1, State{}, 0) == doctest::Approx(floor_value).epsilon(1e-12));
  for (const auto& traj : data.trajectories()) {
    const double v = q->q(1, traj.steps[0].state, 1);
    CHECK(v <= 0.0);
    CHECK(v >= floor_value - 1e-9);
  }
}

TEST_CASE("optimal_policy") {
  SUBCASE("single action") {
    TabularMDP::Builder b(2, 1, 1.0, 1);
    b.set_transition(0, 0, {{1, 1.0}}).set_reward(0, 0, 3.0).set_terminal(1).set_initial({1.0, 0.0});
    const auto pi = optimal_policy(model_from_mdp(b.build()), 1);
    CHECK(pi->prob(State::discrete(0), 0) == 1.0);
  }
  SUBCASE("bandit") {
    TabularMDP::Builder b(2, 2, 1.0, 1);
    b.set_transition(0, 0, {{1, 1.0}}).set_transition(0, 1, {{1, 1.0}});
    b.set_reward(0, 0, 0.0).set_reward(0, 1, 1.0).set_terminal(1).set_initial({1.0, 0.0});
    const auto model = model_from_mdp(b.build());
    CHECK(optimal_policy(model, 1)->prob(State::discrete(0), 1) == 1.0);
    CHECK(optimal_policy(model, 1, true)->prob(State::discrete(0), 0) == 1.0);
  }
  SUBCASE("T2 gives always-a") {
    const auto t2 = make_t2();
    const auto pi = optimal_policy(model_from_mdp(t2), 2);
    for (StateId s = 0; s < 3; ++s) CHECK(pi->prob(State::discrete(s), 0) == 1.0);
    CHECK(exact_value(t2, *pi, 2) == 1.0);
    // The other deterministic policies are no better.
    for (Action first : {0, 1}) {
      for (Action second : {0, 1}) {
        const auto other = make_deterministic_policy({first, second, second, 0}, 2);
        CHECK(exact_value(t2, *other, 2) <= 1.0);
      }
    }
  }
}

TEST_CASE("constant_baseline_q") {
  const auto q = constant_baseline_q(-1.0, 1.0, 0.99, 100, 3);
  CHECK(q->q(1, State{0.0, 0.0}, 2) == doctest::Approx(-(1.0 - std::pow(0.99, 100)) / 0.01).epsilon(1e-15));
  CHECK(q->q(100, State{0.0, 0.0}, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(q->q(101, State{0.0, 0.0}, 0) == 0.0);
  const auto half = constant_baseline_q(-4.0, 0.5, 0.0, 5, 8);
  for (int t = 1; t <= 5; ++t) CHECK(half->q(t, State{1.0}, 0) == -2.0);
  const auto undiscounted = constant_baseline_q(-1.0, 1.0, 1.0, 4, 2);
  CHECK(undiscounted->q(1, State{1.0}, 0) == -4.0);
  CHECK(undiscounted->q(4, State{1.0}, 0) == -1.0);
}

TEST_CASE("kernel Q on a single support point") {
  const auto d = one_step_dataset({{State{3, 3, 0, 4}, 2, -1.5, 0.125}}, {State{4, 3, 2, 4}});
  KernelConfig config;
  config.direction_dims = {false, false, true, true};
  const auto q = kernel_q(d, 8, 0.99, *make_uniform_policy(8), 1, config);
  CHECK(q->num_support() == 1);
  CHECK(q->q(1, State{3, 3, 0, 4}, 2) == doctest::Approx(-1.5));
  // Within one unit in every coordinate, including wrapped directions.
  CHECK(q->q(1, State{4, 2, 7, 5}, 1) == doctest::Approx(-1.5));
  // Two units away in x: cut off.
  CHECK(q->q(1, State{5, 3, 0, 4}, 2) == 0.0);
  // Action three directions away.
  CHECK(q->q(1, State{3, 3, 0, 4}, 5) == 0.0);
  CHECK(q->q(2, State{3, 3, 0, 4}, 2) == 0.0);
}

TEST_CASE("kernel Q approaches nearest neighbour as the bandwidth vanishes") {
  const auto d = one_step_dataset({{State{0, 0}, 0, 1.0, 1.0}, {State{1, 1}, 0, 5.0, 1.0}},
                                  {State{0, 0}, State{1, 1}});
  KernelConfig config;
  config.action_is_direction = false;
  config.bandwidth = 1e-6;
  const auto pi = make_uniform_policy(1);
  const auto q = kernel_q(d, 1, 1.0, *pi, 1, config);
  CHECK(q->q(1, State{0, 1}, 0) == doctest::Approx(3.0));  // equidistant
  CHECK(q->q(1, State{1, 0}, 0) == doctest::Approx(3.0));
  CHECK(q->q(1, State{0, 0}, 0) == doctest::Approx(1.0));
  CHECK(q->q(1, State{1, 2}, 0) == doctest::Approx(5.0));
  CHECK(q->q(1, State{-1, -1}, 0) == doctest::Approx(1.0));

  config.bandwidth = 0.25;
  const auto smooth = kernel_q(d, 1, 1.0, *pi, 1, config);
  const double w = std::exp(-(std::sqrt(2.0) - 0.0) / 0.25);
  CHECK(smooth->q(1, State{0, 0}, 0) == doctest::Approx((1.0 + 5.0 * w) / (1.0 + w)));
  config.bandwidth = 0.0;
  CHECK_THROWS_AS(kernel_q(d, 1, 1.0, *pi, 1, config), std::invalid_argument);
}

TEST_CASE("kernel Q backs up through particles") {
  // (0) -a-> (1) -a-> (1): rewards 1 then 2.
  std::vector<Trajectory> trajs{{{{State{0}, 0, 1.0, 1.0}, {State{1}, 0, 2.0, 1.0}}, State{1}}};
  const Dataset d(std::move(trajs), 2);
  KernelConfig config;
  config.action_is_direction = false;
  config.bandwidth = 1e-6;
  const auto q = kernel_q(d, 1, 0.5, *make_uniform_policy(1), 2, config);
  CHECK(q->q(2, State{1}, 0) == doctest::Approx(2.0));
  CHECK(q->q(1, State{0}, 0) == doctest::Approx(1.0 + 0.5 * 2.0));
}

TEST_CASE("factored model fit") {
  FactoredConfig config;
  config.n_vars = 3;
  config.arity = 3;
  config.actions = 3;
  config.horizon = 5;
  config.action_effect = 0.0;
  const FactoredSim sim(config, 5);
  const auto pi0 = make_uniform_policy(3);
  const auto data = sample_dataset(sim.joint(), *pi0, 20000, 6);
  const auto model = fit_factored_model(data, 3, 3, 3, {0, 1, 2}, 1.0);
  CHECK_FALSE(model.regression_fallback);
  CHECK(model.reward_residual < 1e-10);
  // Marginals recovered from the joint rows of the fit.
  for (StateId s = 0; s < sim.joint().num_states(); s += 7) {
    for (Action a = 0; a < 3; ++a) {
      for (const auto& ns : sim.joint().transitions(s, a)) {
        CHECK(std::abs(model.mdp.transition_prob(s, a, ns.state) - ns.prob) < 0.05);
      }
      CHECK(model.mdp.mean_reward(s, a) == doctest::Approx(sim.joint().mean_reward(s, a)).epsilon(1e-9));
    }
  }
  const auto small = fit_factored_model(sample_dataset(sim.joint(), *pi0, 200, 7), 3, 3, 3, {0, 1, 2}, 1.0);
  CHECK(max_row_error(model, sim.joint()) < max_row_error(small, sim.joint()));

  // A reward that also depends on the action is misspecified.
  config.action_effect = 0.5;
  const FactoredSim biased(config, 5);
  const auto fit = fit_factored_model(sample_dataset(biased.joint(), *pi0, 2000, 8), 3, 3, 3, {0, 1}, 1.0);
  CHECK(fit.reward_residual > 0.01);
}

TEST_CASE("factored marginals within 0.02 at large data") {
  FactoredConfig config;
  config.n_vars = 2;
  config.arity = 3;
  config.actions = 2;
  config.horizon = 10;
  const FactoredSim sim(config, 9);
  const auto data = sample_dataset(sim.joint(), *make_uniform_policy(2), 20000, 10);
  const auto model = fit_factored_model(data, 2, 3, 2, {0}, 1.0);
  // Marginal of variable 0: sum the joint row over variable 1.
  for (StateId s = 0; s < 9; ++s) {
    const auto x = sim.features(s);
    for (Action a = 0; a < 2; ++a) {
      for (const auto& m : sim.marginal(0, a, x[0])) {
        double fitted = 0.0;
        for (int v1 = 0; v1 < 3; ++v1) fitted += model.mdp.transition_prob(s, a, sim.encode({int(m.state), v1}));
        CHECK(std::abs(fitted - m.prob) < 0.02);
      }
    }
  }
}

TEST_CASE("singular reward regression falls back to the mean") {
  // Feature 1 is constant in the data, so it is collinear with the intercept.
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 4; ++i) trajs.push_back({{{State::discrete(i % 2), 0, double(i), 1.0}}, State::discrete(0)});
  const Dataset d(std::move(trajs), 1);
  const auto model = fit_factored_model(d, 2, 2, 1, {1}, 1.0);
  CHECK(model.regression_fallback);
  CHECK(model.mdp.mean_reward(0, 0) == doctest::Approx(1.5));
  CHECK(model_summary(model).find("regression=fallback") != std::string::npos);
}
