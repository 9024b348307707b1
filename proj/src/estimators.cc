#include "ope/estimators.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "ope/dataset_io.h"
#include "ope/stats.h"

namespace ope {

namespace {

using ActionBuffer = std::array<double, kMaxActions>;

std::span<double> fill_probs(const Policy& pi, const State& s, ActionBuffer& buf) {
  std::span<double> out(buf.data(), static_cast<std::size_t>(pi.num_actions()));
  pi.probs(s, out);
  return out;
}

double ratio(double target, const Step& step, int t) {
  if (step.behavior_prob > 0.0) return target / step.behavior_prob;
  if (target == 0.0) return 0.0;
  throw SupportViolation("step " + std::to_string(t) + ": action " + std::to_string(step.action) +
                         " has behavior probability 0 but target probability " + format_real(target));
}

double step_ratio(const Policy& pi1, const Step& step, int t) {
  if (step.action < 0 || step.action >= pi1.num_actions()) {
    throw std::invalid_argument("step " + std::to_string(t) + ": action out of range");
  }
  return ratio(pi1.prob(step.state, step.action), step, t);
}

double value_from(const QFunction& q, std::span<const double> pi, int t, const State& s, ActionBuffer& qbuf) {
  std::span<double> row(qbuf.data(), pi.size());
  q.q_row(t, s, row);
  double v = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) {
    if (pi[a] != 0.0) v += pi[a] * row[a];
  }
  return v;
}

void finish(EstimatorReport& r) {
  const auto st = summarize(r.values);
  r.point = st.mean;
  r.std_error = st.std_error;
  r.n = r.values.size();
}

void crop_point(EstimatorReport& r, const CropBounds& crop) {
  const double c = std::clamp(r.point, crop.lo, crop.hi);
  if (c != r.point) {
    r.point = c;
    r.crop_count = 1;
  }
}

std::size_t crop_values(std::vector<double>& values, const CropBounds& crop) {
  std::size_t count = 0;
  for (auto& v : values) {
    const double c = std::clamp(v, crop.lo, crop.hi);
    if (c != v) {
      v = c;
      ++count;
    }
  }
  return count;
}

void check_dims(const QFunction& q, const Policy& pi1) {
  if (q.num_actions() != pi1.num_actions()) {
    throw std::invalid_argument("Q-hat and pi1 disagree on the number of actions");
  }
}

template <typename F>
EstimatorReport per_trajectory(const Dataset& data, std::string_view name, F&& f) {
  EstimatorReport r;
  r.method = std::string(name);
  r.values.reserve(data.size());
  for (const auto& traj : data.trajectories()) r.values.push_back(f(traj));
  finish(r);
  return r;
}

}  // namespace

std::vector<double> cumulative_ratios(const Trajectory& traj, const Policy& pi1) {
  std::vector<double> out;
  out.reserve(traj.steps.size());
  double rho = 1.0;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    rho *= step_ratio(pi1, traj.steps[t], static_cast<int>(t + 1));
    out.push_back(rho);
  }
  return out;
}

double is_trajwise(const Trajectory& traj, const Policy& pi1, double gamma) {
  const auto rho = cumulative_ratios(traj, pi1);
  const double weight = rho.empty() ? 1.0 : rho.back();
  return weight == 0.0 ? 0.0 : weight * traj.discounted_return(gamma);
}

double is_stepwise(const Trajectory& traj, const Policy& pi1, double gamma) {
  const auto rho = cumulative_ratios(traj, pi1);
  double total = 0.0;
  double discount = 1.0;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    total += discount * rho[t] * traj.steps[t].reward;
    discount *= gamma;
  }
  return total;
}

double is_stepwise_recursive(const Trajectory& traj, const Policy& pi1, double gamma) {
  double v = 0.0;
  for (std::size_t i = traj.steps.size(); i-- > 0;) {
    const auto& step = traj.steps[i];
    v = step_ratio(pi1, step, static_cast<int>(i + 1)) * (step.reward + gamma * v);
  }
  return v;
}

double dr(const Trajectory& traj, const QFunction& qhat, const Policy& pi1, double gamma) {
  check_dims(qhat, pi1);
  ActionBuffer pbuf{};
  ActionBuffer qbuf{};
  double v = 0.0;
  for (std::size_t i = traj.steps.size(); i-- > 0;) {
    const auto& step = traj.steps[i];
    const int t = static_cast<int>(i + 1);
    const auto pi = fill_probs(pi1, step.state, pbuf);
    if (step.action < 0 || step.action >= pi1.num_actions()) {
      throw std::invalid_argument("step " + std::to_string(t) + ": action out of range");
    }
    const double rho = ratio(pi[static_cast<std::size_t>(step.action)], step, t);
    const double v_hat = value_from(qhat, pi, t, step.state, qbuf);
    const double q_hat = qbuf[static_cast<std::size_t>(step.action)];
    v = v_hat + rho * (step.reward + gamma * v - q_hat);
  }
  return v;
}

double dr_v2(const Trajectory& traj, const FittedModel& model, const QFunction& qhat, const Policy& pi1,
             double gamma) {
  check_dims(qhat, pi1);
  ActionBuffer pbuf{};
  ActionBuffer qbuf{};
  double v = 0.0;
  // V-hat at step t + 1 of the state after step t; the state after step H is
  // absorbing with value 0.
  double v_hat_next = 0.0;
  for (std::size_t i = traj.steps.size(); i-- > 0;) {
    const auto& step = traj.steps[i];
    const int t = static_cast<int>(i + 1);
    const auto pi = fill_probs(pi1, step.state, pbuf);
    if (step.action < 0 || step.action >= pi1.num_actions()) {
      throw std::invalid_argument("step " + std::to_string(t) + ": action out of range");
    }
    const double rho = ratio(pi[static_cast<std::size_t>(step.action)], step, t);
    const double v_hat = value_from(qhat, pi, t, step.state, qbuf);
    const double r_hat = model.reward(step.state, step.action);
    v = v_hat + rho * (step.reward + gamma * v - r_hat - gamma * v_hat_next);
    v_hat_next = v_hat;
  }
  return v;
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kIs: return "is";
    case Method::kStepIs: return "step_is";
    case Method::kWis: return "wis";
    case Method::kStepWis: return "step_wis";
    case Method::kReg: return "reg";
    case Method::kDr: return "dr";
    case Method::kDrBsl: return "dr_bsl";
    case Method::kDrV2: return "dr_v2";
    case Method::kKfoldDr: return "kfold_dr";
  }
  return "unknown";
}

Method parse_method(std::string_view id) {
  for (Method m : {Method::kIs, Method::kStepIs, Method::kWis, Method::kStepWis, Method::kReg, Method::kDr,
                   Method::kDrBsl, Method::kDrV2, Method::kKfoldDr}) {
    if (method_name(m) == id) return m;
  }
  throw std::invalid_argument("unknown estimator '" + std::string(id) +
                              "' (expected is, step_is, wis, step_wis, reg, dr, dr_bsl, dr_v2, kfold_dr)");
}

std::vector<Method> parse_methods(std::string_view comma_list) {
  std::vector<Method> out;
  std::size_t start = 0;
  while (start <= comma_list.size()) {
    const auto pos = comma_list.find(',', start);
    const auto item = comma_list.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (!item.empty()) out.push_back(parse_method(item));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (out.empty()) throw std::invalid_argument("empty estimator list");
  return out;
}

std::string report_csv_header() { return "method,n,point,stderr,crop_count"; }

std::string report_csv_row(const EstimatorReport& r) {
  std::ostringstream out;
  out << r.method << ',' << r.n << ',' << format_real(r.point) << ',' << format_real(r.std_error) << ','
      << r.crop_count;
  return out.str();
}

EstimatorReport wis(const Dataset& data, const Policy& pi1, double gamma, bool stepwise) {
  const auto H = static_cast<std::size_t>(data.horizon());
  const std::size_t n = data.size();
  std::vector<std::vector<double>> rho(n);
  std::vector<double> w(H, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    rho[i] = cumulative_ratios(data[i], pi1);
    for (std::size_t t = 0; t < H; ++t) w[t] += rho[i][t];
  }
  EstimatorReport r;
  r.method = stepwise ? "step_wis" : "wis";
  for (std::size_t t = 0; t < H; ++t) {
    w[t] /= static_cast<double>(n);
    if (w[t] == 0.0) r.zero_weight_steps.push_back(static_cast<int>(t + 1));
  }
  r.values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& traj = data[i];
    double value = 0.0;
    if (stepwise) {
      double discount = 1.0;
      for (std::size_t t = 0; t < H; ++t) {
        if (w[t] != 0.0) value += discount * rho[i][t] / w[t] * traj.steps[t].reward;
        discount *= gamma;
      }
    } else if (H == 0) {
      value = 0.0;
    } else if (w[H - 1] != 0.0) {
      value = rho[i][H - 1] / w[H - 1] * traj.discounted_return(gamma);
    }
    r.values.push_back(value);
  }
  finish(r);
  return r;
}

EstimatorReport reg_estimate(const QFunction& qhat, const Policy& pi1, const Dataset& data) {
  check_dims(qhat, pi1);
  ActionBuffer pbuf{};
  ActionBuffer qbuf{};
  return per_trajectory(data, "reg", [&](const Trajectory& traj) {
    const State& s1 = traj.steps.empty() ? traj.final_state : traj.steps.front().state;
    return value_from(qhat, fill_probs(pi1, s1, pbuf), 1, s1, qbuf);
  });
}

EstimatorReport kfold_dr(const Dataset& data, int k, const QFitter& fitter, const Policy& pi1, double gamma) {
  if (k < 2) throw std::invalid_argument("kfold_dr: k must be at least 2");
  if (static_cast<std::size_t>(k) > data.size()) {
    throw std::invalid_argument("kfold_dr: k = " + std::to_string(k) + " exceeds the dataset size " +
                                std::to_string(data.size()));
  }
  EstimatorReport r;
  r.method = "kfold_dr";
  r.values.reserve(data.size());
  const std::size_t base = data.size() / static_cast<std::size_t>(k);
  const std::size_t extra = data.size() % static_cast<std::size_t>(k);
  std::size_t first = 0;
  for (std::size_t fold = 0; fold < static_cast<std::size_t>(k); ++fold) {
    const std::size_t count = base + (fold < extra ? 1 : 0);
    const QPtr q = fitter(data.complement(first, count));
    for (std::size_t i = first; i < first + count; ++i) r.values.push_back(dr(data[i], *q, pi1, gamma));
    first += count;
  }
  finish(r);
  return r;
}

EstimatorReport evaluate(const Dataset& data, Method method, const EstimatorInputs& in, CropBounds crop) {
  if (!(crop.lo <= crop.hi)) throw std::invalid_argument("evaluate: crop bounds need lo <= hi");
  if (!in.pi1) throw std::invalid_argument("evaluate: no target policy");
  const Policy& pi1 = *in.pi1;
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("evaluate(") + std::string(method_name(method)) + "): missing " + what);
  };
  EstimatorReport r;
  switch (method) {
    case Method::kIs:
      r = per_trajectory(data, "is", [&](const Trajectory& t) { return is_trajwise(t, pi1, in.gamma); });
      break;
    case Method::kStepIs:
      r = per_trajectory(data, "step_is", [&](const Trajectory& t) { return is_stepwise(t, pi1, in.gamma); });
      break;
    case Method::kWis:
    case Method::kStepWis: {
      r = wis(data, pi1, in.gamma, method == Method::kStepWis);
      crop_point(r, crop);
      return r;
    }
    case Method::kReg:
      need(in.model_q != nullptr, "model Q");
      return reg_estimate(*in.model_q, pi1, data);
    case Method::kDr:
      need(in.q != nullptr, "Q-hat");
      r = per_trajectory(data, "dr", [&](const Trajectory& t) { return dr(t, *in.q, pi1, in.gamma); });
      break;
    case Method::kDrBsl:
      need(in.baseline_q != nullptr, "baseline Q");
      r = per_trajectory(data, "dr_bsl", [&](const Trajectory& t) { return dr(t, *in.baseline_q, pi1, in.gamma); });
      break;
    case Method::kDrV2:
      need(in.model != nullptr && in.model_q != nullptr, "model");
      r = per_trajectory(data, "dr_v2",
                         [&](const Trajectory& t) { return dr_v2(t, *in.model, *in.model_q, pi1, in.gamma); });
      break;
    case Method::kKfoldDr:
      need(static_cast<bool>(in.fitter), "Q fitter");
      r = kfold_dr(data, in.folds, in.fitter, pi1, in.gamma);
      break;
  }
  if (crop.level == CropLevel::kEstimate) {
    crop_point(r, crop);
    return r;
  }
  r.crop_count = crop_values(r.values, crop);
  if (r.crop_count > 0) finish(r);
  return r;
}

CIResult confidence_bound(const EstimatorReport& report, BoundMethod method, double parameter,
                          double value_range) {
  CIResult ci;
  ci.method = method;
  ci.parameter = parameter;
  double half = 0.0;
  if (method == BoundMethod::kHoeffding) {
    if (!(parameter > 0.0 && parameter <= 1.0)) throw std::invalid_argument("hoeffding: delta must lie in (0, 1]");
    if (!(value_range >= 0.0) || !std::isfinite(value_range)) {
      throw std::invalid_argument("hoeffding: needs a finite value range");
    }
    if (report.n == 0) throw std::invalid_argument("hoeffding: empty report");
    half = value_range * std::sqrt(std::log(2.0 / parameter) / (2.0 * static_cast<double>(report.n)));
  } else {
    if (!(parameter >= 0.0)) throw std::invalid_argument("normal bound: C must be nonnegative");
    if (report.n < 2) throw std::invalid_argument("normal bound: needs at least 2 values for a standard error");
    half = parameter * report.std_error;
  }
  ci.lower = report.point - half;
  ci.upper = report.point + half;
  return ci;
}

}  // namespace ope
