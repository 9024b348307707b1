#pragma once

#include <span>

namespace ope {

// Pairwise (cascade) summation; the result depends only on the input order.
double pairwise_sum(std::span<const double> values);

struct SampleStats {
  double mean = 0.0;
  double stddev = 0.0;  // n - 1 denominator; 0 for n < 2
  double std_error = 0.0;  // stddev / sqrt(n)
  std::size_t n = 0;
};

SampleStats summarize(std::span<const double> values);

}  // namespace ope
