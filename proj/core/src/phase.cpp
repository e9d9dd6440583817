#include "refu/phase.hpp"

#include <algorithm>
#include <string>

#include "refu/errors.hpp"

namespace refu {

void PhaseDataset::validate(bool require_onehot) const {
  if (features.rows() != labels_onehot.rows()) {
    throw ShapeError("PhaseDataset: " + std::to_string(features.rows()) + " feature rows but " +
                     std::to_string(labels_onehot.rows()) + " label rows");
  }
  if (labels_onehot.cols() != class_ids.size()) {
    throw ShapeError("PhaseDataset: label matrix has " + std::to_string(labels_onehot.cols()) +
                     " columns for " + std::to_string(class_ids.size()) + " class ids");
  }
  if (!features.all_finite()) throw ValidationError("PhaseDataset: non-finite feature value");
  for (std::size_t j = 1; j < class_ids.size(); ++j) {
    if (class_ids[j] <= class_ids[j - 1]) {
      throw ProtocolError("PhaseDataset: class ids must be strictly increasing");
    }
  }
  if (!require_onehot) {
    if (!labels_onehot.all_finite()) throw ValidationError("PhaseDataset: non-finite label value");
    return;
  }
  for (std::size_t i = 0; i < labels_onehot.rows(); ++i) {
    std::size_t ones = 0;
    for (double v : labels_onehot.row(i)) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw ValidationError("PhaseDataset: label row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (ones != 1) {
      throw ValidationError("PhaseDataset: label row " + std::to_string(i) + " is not one-hot");
    }
  }
}

PhaseDataset PhaseDataset::from_labels(Matrix features, std::span<const ClassId> labels,
                                       std::vector<ClassId> class_ids, FeatureSpace space) {
  if (features.rows() != labels.size()) {
    throw ShapeError("PhaseDataset: " + std::to_string(features.rows()) + " feature rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  Matrix onehot(labels.size(), class_ids.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::lower_bound(class_ids.begin(), class_ids.end(), labels[i]);
    if (it == class_ids.end() || *it != labels[i]) {
      throw ProtocolError("PhaseDataset: label " + std::to_string(labels[i]) +
                          " is not one of the phase's classes");
    }
    onehot(i, static_cast<std::size_t>(it - class_ids.begin())) = 1.0;
  }
  PhaseDataset out{std::move(features), std::move(onehot), std::move(class_ids), space};
  out.validate();
  return out;
}

std::vector<ClassId> distinct_classes(std::span<const ClassId> labels) {
  std::vector<ClassId> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace refu
