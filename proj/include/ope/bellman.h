#pragma once

#include <memory>
#include <vector>

#include "ope/mdp.h"
#include "ope/policy.h"
#include "ope/q_function.h"

namespace ope {

// Finite-horizon backward induction on a tabular MDP:
//   V^0 = 0,  Q^h(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) V^{h-1}(s'),
//   V^h(s) = sum_a pi(a|s) Q^h(s,a)
// with pi given as a per-state probability table. The result stores Q^h at
// step t = horizon + 1 - h.
std::vector<double> backward_q_values(const TabularMDP& mdp,
                                      const std::vector<std::vector<double>>& policy_table,
                                      int horizon);

// Optimal (or pessimal, when minimize) finite-horizon Q values, same layout.
std::vector<double> optimal_q_values(const TabularMDP& mdp, int horizon, bool minimize);

std::shared_ptr<TabularQ> exact_q(const TabularMDP& mdp, const Policy& policy, int horizon);

// v^{pi,H} = sum_s mu(s) V^H(s). Requires horizon <= mdp.horizon().
double exact_value(const TabularMDP& mdp, const Policy& policy, int horizon);

// Per-state V^h for h = horizon + 1 - t at step t, i.e. sum_a pi(a|s) Q(t,s,a).
std::vector<double> state_values(const TabularQ& q, const std::vector<std::vector<double>>& policy_table,
                                 int t);

}  // namespace ope
