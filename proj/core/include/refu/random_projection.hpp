#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "refu/matrix.hpp"

namespace refu {

enum class Activation { relu, tanh, identity };
/// Entry distribution of the projection matrix; both have mean 0, variance 1/d.
enum class Distribution { normal, uniform };

std::string_view to_string(Activation a);
std::string_view to_string(Distribution d);
/// Throws ValidationError on unknown names.
Activation parse_activation(std::string_view name);
Distribution parse_distribution(std::string_view name);

/// Width multiplier applied to encoder features when no explicit d_RP is given.
inline constexpr std::size_t kDefaultExpansion = 12;

/// Frozen random feature expansion F ↦ σ(F · W), W of shape (d × d_RP), no bias.
///
/// The layer is fully determined by (seed, d, d_RP, activation, distribution);
/// reconstructing from the same tuple gives a bit-identical weight matrix.
class RpLayer {
 public:
  /// Draws W i.i.d. from the chosen distribution with variance 1/d using
  /// GaussianSampler / std::mt19937_64 seeded with `seed`, row-major order.
  RpLayer(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed,
          Activation activation = Activation::relu,
          Distribution distribution = Distribution::normal);

  /// Builds a layer around explicit weights. Intended for tests and oracles.
  static RpLayer from_weights(Matrix w_rp, Activation activation);

  /// σ(features · W); features must be (N × input_dim).
  Matrix forward(const Matrix& features) const;

  const Matrix& weights() const noexcept { return w_rp_; }
  Activation activation() const noexcept { return activation_; }
  Distribution distribution() const noexcept { return distribution_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t input_dim() const noexcept { return w_rp_.rows(); }
  std::size_t output_dim() const noexcept { return w_rp_.cols(); }

 private:
  RpLayer() = default;

  Matrix w_rp_;
  Activation activation_ = Activation::relu;
  Distribution distribution_ = Distribution::normal;
  std::uint64_t seed_ = 0;
};

inline RpLayer rp_new(std::size_t d, std::size_t d_rp, std::uint64_t seed,
                      Activation activation = Activation::relu) {
  return RpLayer(d, d_rp, seed, activation);
}

inline Matrix rp_forward(const RpLayer& layer, const Matrix& features) {
  return layer.forward(features);
}

/// Applies σ element-wise.
Matrix apply_activation(const Matrix& x, Activation activation);

}  // namespace refu
