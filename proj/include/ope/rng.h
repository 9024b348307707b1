#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ope {

// Derives an independent sub-seed from a master seed and a stream index
// (splitmix64 finalizer). Used so that per-trajectory and per-run streams do
// not depend on evaluation order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// Random source with portable derived distributions. Only the raw
// mt19937_64 stream is standardized, so every distribution here is
// implemented on top of it rather than taken from <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform on {0, ..., n - 1}.
  int uniform_int(int n);
  double normal();
  double gamma(double shape);
  std::vector<double> dirichlet(std::size_t k, double concentration);
  // Index drawn proportionally to `weights` (need not be normalized).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

}  // namespace ope
