#pragma once

#include <cstdint>
#include <random>

namespace refu {

/// Portable Gaussian sampler.
///
/// std::normal_distribution is implementation-defined, so reproducing a
/// projection matrix from its seed would depend on the standard library.
/// This draws 53-bit uniforms from std::mt19937_64 (whose output sequence the
/// standard pins down) and applies the Box-Muller transform, consuming both
/// variates of each pair.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}

  /// Draws from Normal(mean, stddev^2).
  double operator()(double mean = 0.0, double stddev = 1.0);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace refu
