#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "refu/matrix.hpp"

namespace refu {

/// Global class index. Ids are unique across all incremental phases.
using ClassId = std::size_t;

/// Whether a feature matrix is encoder output (width d) or already passed
/// through the random projection (width d_RP).
enum class FeatureSpace { raw, projected };

/// Training data for one incremental phase: features, one-hot labels over the
/// phase's own classes, and the global ids of those classes (column order of
/// `labels_onehot`, strictly increasing).
struct PhaseDataset {
  Matrix features;
  Matrix labels_onehot;
  std::vector<ClassId> class_ids;
  FeatureSpace space = FeatureSpace::projected;

  std::size_t samples() const noexcept { return features.rows(); }

  /// Throws ShapeError / ValidationError / ProtocolError on a broken invariant.
  /// With `require_onehot` false, label rows only need to be finite.
  void validate(bool require_onehot = true) const;

  /// Builds the one-hot matrix from per-row class ids. `class_ids` must be
  /// strictly increasing and contain every label.
  static PhaseDataset from_labels(Matrix features, std::span<const ClassId> labels,
                                  std::vector<ClassId> class_ids,
                                  FeatureSpace space = FeatureSpace::projected);
};

/// Sorted distinct values of `labels`.
std::vector<ClassId> distinct_classes(std::span<const ClassId> labels);

}  // namespace refu
