#pragma once

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ope/model_fit.h"
#include "ope/policy.h"
#include "ope/q_function.h"
#include "ope/trajectory.h"

namespace ope {

// A logged action whose behavior probability is 0 while pi1 gives it mass.
class SupportViolation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// rho_{1:t} for t = 1..H, with rho_t = pi1(a_t|s_t) / behavior_prob_t.
std::vector<double> cumulative_ratios(const Trajectory& traj, const Policy& pi1);

// rho_{1:H} * sum_t gamma^{t-1} r_t
double is_trajwise(const Trajectory& traj, const Policy& pi1, double gamma);
// sum_t gamma^{t-1} rho_{1:t} r_t
double is_stepwise(const Trajectory& traj, const Policy& pi1, double gamma);
// V^{H+1-t} = rho_t (r_t + gamma V^{H-t}), V^0 = 0. Same value as is_stepwise.
double is_stepwise_recursive(const Trajectory& traj, const Policy& pi1, double gamma);

// V^{H+1-t} = V-hat(s_t) + rho_t (r_t + gamma V^{H-t} - Q-hat(s_t, a_t)), V^0 = 0.
double dr(const Trajectory& traj, const QFunction& qhat, const Policy& pi1, double gamma);

// DR with the model's one-step correction: the Q-hat term is replaced by
// R-hat(s_t, a_t) + gamma V-hat(s_{t+1}), where V-hat(s_{H+1}) = 0. `qhat` is
// the model's Q under pi1 (q_from_model).
double dr_v2(const Trajectory& traj, const FittedModel& model, const QFunction& qhat, const Policy& pi1,
             double gamma);

enum class Method { kIs, kStepIs, kWis, kStepWis, kReg, kDr, kDrBsl, kDrV2, kKfoldDr };

std::string_view method_name(Method m);
// Throws std::invalid_argument for unknown ids.
Method parse_method(std::string_view id);
std::vector<Method> parse_methods(std::string_view comma_list);

struct EstimatorReport {
  std::string method;
  double point = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  // Per-trajectory values after cropping. For WIS these are the weighted
  // contributions, whose mean is the estimate before cropping.
  std::vector<double> values;
  std::size_t crop_count = 0;
  // WIS: steps t (1-based) whose average weight w_t was 0.
  std::vector<int> zero_weight_steps;
};

std::string report_csv_header();
std::string report_csv_row(const EstimatorReport& r);

// kTrajectory clamps every per-trajectory value; kEstimate clamps only the
// final point estimate.
enum class CropLevel { kTrajectory, kEstimate };

struct CropBounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  CropLevel level = CropLevel::kTrajectory;
};

// Dataset-level weighted importance sampling with w_t = mean_i rho^{(i)}_{1:t}.
EstimatorReport wis(const Dataset& data, const Policy& pi1, double gamma, bool stepwise);

// Mean of V-hat(1, s_1) over the initial states of `data`.
EstimatorReport reg_estimate(const QFunction& qhat, const Policy& pi1, const Dataset& data);

using QFitter = std::function<QPtr(const Dataset& train)>;

// Contiguous folds (the first n % k folds get one extra trajectory); DR on
// each fold with Q-hat fitted on the remaining data. Values keep dataset order.
EstimatorReport kfold_dr(const Dataset& data, int k, const QFitter& fitter, const Policy& pi1, double gamma);

struct EstimatorInputs {
  PolicyPtr pi1;
  double gamma = 1.0;
  QPtr q;                             // dr
  QPtr baseline_q;                    // dr_bsl
  const FittedModel* model = nullptr; // dr_v2 (R-hat)
  QPtr model_q;                       // reg, dr_v2
  QFitter fitter;                     // kfold_dr
  int folds = 2;
};

// Runs one method and crops into `crop`: per-trajectory values or the point
// estimate, per crop.level. WIS always crops its dataset-level estimate. REG
// is never cropped.
EstimatorReport evaluate(const Dataset& data, Method method, const EstimatorInputs& in,
                         CropBounds crop = {});

enum class BoundMethod { kHoeffding, kNormal };

struct CIResult {
  double lower = 0.0;
  double upper = 0.0;
  BoundMethod method = BoundMethod::kNormal;
  double parameter = 0.0;  // delta for Hoeffding, C for normal
};

// Hoeffding: point +- b sqrt(log(2 / delta) / (2 n)) with b = value_range.
// Normal: point +- C * stderr; needs n >= 2.
CIResult confidence_bound(const EstimatorReport& report, BoundMethod method, double parameter,
                          double value_range = std::numeric_limits<double>::quiet_NaN());

}  // namespace ope
