#include "ope/stats.h"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ope {

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 32;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

SampleStats summarize(std::span<const double> values) {
  SampleStats out;
  out.n = values.size();
  if (values.empty()) return out;
  out.mean = pairwise_sum(values) / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  // Exact zero for constant samples; rounding in the mean would otherwise
  // leave a spurious 1e-16 spread.
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) {
    out.mean = values[0];
    return out;
  }
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - out.mean;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(values.size() - 1);
  out.stddev = std::sqrt(var);
  out.std_error = out.stddev / std::sqrt(static_cast<double>(values.size()));
  return out;
}

}  // namespace ope
