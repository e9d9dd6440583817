#include "refu/random_projection.hpp"

#include <cmath>
#include <string>

#include "refu/errors.hpp"
#include "refu/random.hpp"

namespace refu {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
  }
  return "?";
}

std::string_view to_string(Distribution d) {
  switch (d) {
    case Distribution::normal:
      return "normal";
    case Distribution::uniform:
      return "uniform";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

Distribution parse_distribution(std::string_view name) {
  if (name == "normal") return Distribution::normal;
  if (name == "uniform") return Distribution::uniform;
  throw ValidationError("unknown distribution '" + std::string(name) + "'");
}

RpLayer::RpLayer(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed,
                 Activation activation, Distribution distribution)
    : w_rp_(input_dim, output_dim),
      activation_(activation),
      distribution_(distribution),
      seed_(seed) {
  if (input_dim == 0 || output_dim == 0) {
    throw ValidationError("RpLayer: dimensions must be positive");
  }
  GaussianSampler sampler(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(input_dim));
  if (distribution == Distribution::normal) {
    for (double& v : w_rp_.data()) v = sampler(0.0, stddev);
  } else {
    // U(-a, a) has variance a^2 / 3.
    const double half_width = std::sqrt(3.0) * stddev;
    for (double& v : w_rp_.data()) v = half_width * (2.0 * sampler.uniform() - 1.0);
  }
}

RpLayer RpLayer::from_weights(Matrix w_rp, Activation activation) {
  if (w_rp.rows() == 0 || w_rp.cols() == 0) {
    throw ValidationError("RpLayer: dimensions must be positive");
  }
  if (!w_rp.all_finite()) throw ValidationError("RpLayer: non-finite weights");
  RpLayer layer;
  layer.w_rp_ = std::move(w_rp);
  layer.activation_ = activation;
  return layer;
}

Matrix apply_activation(const Matrix& x, Activation activation) {
  Matrix out = x;
  switch (activation) {
    case Activation::relu:
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::tanh:
      for (double& v : out.data()) v = std::tanh(v);
      break;
    case Activation::identity:
      break;
  }
  return out;
}

Matrix RpLayer::forward(const Matrix& features) const {
  if (features.cols() != input_dim()) {
    throw ShapeError("rp_forward: features have " + std::to_string(features.cols()) +
                     " columns, layer expects " + std::to_string(input_dim()));
  }
  return apply_activation(matmul(features, w_rp_), activation_);
}

}  // namespace refu
