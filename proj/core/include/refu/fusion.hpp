#pragma once

// Point-cloud-guided mesh attention and the fusion classifier.
//
// For K samples with d-wide point features F_p and mesh features F_m:
//
//   S_p   = tanh(F_p W_p)             S_m = tanh(F_m W_m)
//   W_spa = softmax_rows(S_m ∘ S_p)   (K × d, normalized over the feature axis)
//   F_m'  = W_spa ∘ F_m
//   logits = [F_p | F_m'] · W_cls + b
//
// W_spa is K × d and re-weights F_m element-wise; it is the only reading
// under which both the attention map and the re-weighting type-check.
// Training minimizes mean softmax cross-entropy with plain gradient descent.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "refu/matrix.hpp"

namespace refu {

/// Default step size of the fusion trainer.
inline constexpr double kFusionLearningRate = 4e-3;

struct FusionParams {
  Matrix w_p;           // d × d
  Matrix w_m;           // d × d
  Matrix classifier_w;  // 2d × C
  Matrix classifier_b;  // 1 × C

  std::size_t dim() const noexcept { return w_p.rows(); }
  std::size_t classes() const noexcept { return classifier_w.cols(); }

  /// Throws ShapeError / ValidationError unless all blocks conform and are finite.
  void validate() const;
};

/// Small random initialization: projections ~ N(0, 1/d), classifier ~ N(0, 1/(2d)), zero bias.
FusionParams fusion_init(std::size_t d, std::size_t classes, std::uint64_t seed);

/// Every intermediate of one forward pass.
struct FusedBatch {
  Matrix f_p;
  Matrix f_m;
  Matrix score_p;
  Matrix score_m;
  Matrix w_spa;
  Matrix f_m_prime;
  Matrix concat;
  Matrix logits;
};

FusedBatch fusion_forward(const FusionParams& params, const Matrix& f_p, const Matrix& f_m);

/// [F_p | F_m'] with frozen params; the feature source for incremental learning.
Matrix fused_features(const FusionParams& params, const Matrix& f_p, const Matrix& f_m);

/// Same layout as FusionParams.
struct FusionGradients {
  Matrix w_p;
  Matrix w_m;
  Matrix classifier_w;
  Matrix classifier_b;
  double loss = 0.0;
};

/// Mean cross-entropy of softmax(logits) against `targets` (K × C rows that
/// are probability vectors; one-hot in practice).
double fusion_loss(const FusedBatch& batch, const Matrix& targets);

FusionGradients fusion_backward(const FusionParams& params, const FusedBatch& batch,
                                const Matrix& targets);

struct FusionDataset {
  Matrix f_p;
  Matrix f_m;
  Matrix labels;  // K × C one-hot
};

struct FusionTrainResult {
  FusionParams params;
  std::vector<double> losses;  // loss before each epoch's step
};

/// Full-batch gradient descent. Throws DivergenceError on a non-finite loss.
FusionTrainResult fusion_train_with_history(const FusionParams& params, const FusionDataset& data,
                                            double lr, std::size_t epochs);

inline FusionParams fusion_train(const FusionParams& params, const FusionDataset& data,
                                 double lr = kFusionLearningRate, std::size_t epochs = 100) {
  return fusion_train_with_history(params, data, lr, epochs).params;
}

/// Fraction of rows whose arg-max logit matches the arg-max label, in [0, 1].
double fusion_accuracy(const FusionParams& params, const FusionDataset& data);

/// Central-difference comparison of fusion_backward against the loss.
/// Per-entry error is |analytic − numeric| / max(|analytic|, |numeric|, floor).
struct GradCheckReport {
  double w_p = 0.0;
  double w_m = 0.0;
  double classifier_w = 0.0;
  double classifier_b = 0.0;
  double max() const noexcept;
};

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckFloor = 1e-6;

GradCheckReport gradient_check(const FusionParams& params, const FusionDataset& data,
                               double step = kGradCheckStep, double floor = kGradCheckFloor);

/// Random parameters and data from `seed`, then gradient_check; the largest
/// error over `trials` draws.
double random_gradient_check(std::uint64_t seed, std::size_t trials = 10);

/// Checkpoint: header `FUSE v1 d=<n> classes=<n>`, then w_p, w_m,
/// classifier_w, classifier_b as FMAT blocks.
void write_fusion_checkpoint(std::ostream& out, const FusionParams& params);
FusionParams read_fusion_checkpoint(std::istream& in);

}  // namespace refu
