#pragma once

// Recursive incremental ridge classifier.
//
// The learner keeps two fixed-size statistics across phases:
//
//   R_n = (Σ_{k≤n} F_kᵀF_k + ηI)⁻¹        (d_RP × d_RP)
//   Ŵ_n = R_n · Σ_{k≤n} F_kᵀY_k            (d_RP × C)
//
// and absorbs a new phase (F_n, Y_n) with
//
//   R_n = R_{n−1} − R_{n−1}F_nᵀ(F_nR_{n−1}F_nᵀ + I)⁻¹F_nR_{n−1}
//   Ŵ_n = Ŵ_{n−1} − R_nA_nŴ_{n−1} + R_nC_n,   A_n = F_nᵀF_n, C_n = F_nᵀY_n.
//
// After any number of phases Ŵ_n equals the ridge solution on all data seen so
// far (labels block-diagonal across phases), without storing a single sample.
//
// The stated equivalence tolerances assume η ≥ 1e-6.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "refu/matrix.hpp"
#include "refu/phase.hpp"

namespace refu {

/// How update_r inverts: the Woodbury form solves an N_n × N_n system, the
/// direct form re-inverts the d_RP × d_RP accumulated Gram. `automatic` picks
/// Woodbury when N_n < d_RP.
enum class InversePath { automatic, woodbury, direct };

/// Gram and cross-correlation of one phase: a = FᵀF, c = FᵀY.
struct CorrelationStats {
  Matrix a;
  Matrix c;
};

CorrelationStats correlation_stats(const Matrix& f_rp, const Matrix& y);

/// Immutable learner state. Column j of w_hat() scores class class_ids()[j].
class RilmState {
 public:
  /// No data yet: r = I/η, zero classes, phase 0.
  static RilmState fresh(std::size_t d_rp, double eta);

  const Matrix& w_hat() const noexcept { return w_hat_; }
  const Matrix& r() const noexcept { return r_; }
  double eta() const noexcept { return eta_; }
  /// Index of the last absorbed phase (rilm_init yields 0).
  std::size_t phase() const noexcept { return phase_; }
  std::size_t classes_seen() const noexcept { return class_ids_.size(); }
  std::size_t d_rp() const noexcept { return r_.rows(); }
  const std::vector<ClassId>& class_ids() const noexcept { return class_ids_; }

  /// Column of `id` in w_hat(), or classes_seen() if unregistered.
  std::size_t column_of(ClassId id) const noexcept;

  /// Assembles a state from its parts, checking every invariant (used by the
  /// checkpoint reader).
  static RilmState from_parts(Matrix w_hat, Matrix r, double eta, std::size_t phase,
                              std::vector<ClassId> class_ids);

 private:
  RilmState() = default;

  Matrix w_hat_;
  Matrix r_;
  double eta_ = 1.0;
  std::size_t phase_ = 0;
  std::vector<ClassId> class_ids_;

  friend RilmState rilm_init(const PhaseDataset&, double);
  friend RilmState expand_classes(const RilmState&, std::span<const ClassId>);
  friend RilmState rilm_update(const RilmState&, const PhaseDataset&, InversePath);
};

/// Closed-form ridge fit on the first phase: Ŵ₀ = (A₀ + ηI)⁻¹C₀, R₀ = (A₀ + ηI)⁻¹.
RilmState rilm_init(const PhaseDataset& phase0, double eta);

/// Registers new classes as zero-initialized weight columns; R is untouched.
RilmState expand_classes(const RilmState& state, std::span<const ClassId> new_class_ids);

/// One recursive step of R. `f_rp` is the new phase's projected features.
Matrix update_r(const Matrix& r_prev, const Matrix& f_rp, InversePath path = InversePath::automatic);
inline Matrix update_r(const RilmState& state, const Matrix& f_rp,
                       InversePath path = InversePath::automatic) {
  return update_r(state.r(), f_rp, path);
}

/// Absorbs one phase. Its classes must already be registered. An empty phase
/// leaves w_hat and r bit-identical and only advances the phase counter.
RilmState rilm_update(const RilmState& state, const PhaseDataset& phase_n,
                      InversePath path = InversePath::automatic);

/// Convenience: registers the phase's unseen classes, then updates.
RilmState rilm_learn(const RilmState& state, const PhaseDataset& phase_n,
                     InversePath path = InversePath::automatic);

/// Joint closed-form solution (ΣA + ηI)⁻¹ΣC over all phases, labels laid out
/// block-diagonally. Columns follow oracle_class_order(phases).
Matrix batch_oracle(std::span<const PhaseDataset> phases, double eta);

/// Class ids in phase order; throws ProtocolError on overlap between phases.
std::vector<ClassId> oracle_class_order(std::span<const PhaseDataset> phases);

/// Copies the columns of `weights` (labelled by `class_ids`) into ascending id order.
Matrix sort_columns_by_class(const Matrix& weights, std::span<const ClassId> class_ids);

/// Scores f_rp·Ŵ and returns the arg-max class id per row. Ties go to the
/// lowest class id.
std::vector<ClassId> predict(const RilmState& state, const Matrix& f_rp);

/// predict() for a bare weight matrix whose columns are labelled by `class_ids`.
std::vector<ClassId> predict_with(const Matrix& weights, std::span<const ClassId> class_ids,
                                  const Matrix& f_rp);

/// Residual of the two identities behind the weight recursion, with
/// K = (F R Fᵀ + I)⁻¹ and R' the Woodbury update of R:
///   ‖K − (I − K F R Fᵀ)‖_F / ‖K‖_F   and   ‖R Fᵀ K − R' Fᵀ‖_F / ‖R' Fᵀ‖_F.
/// Returns the larger one; 0 for an empty F.
double kn_identity_check(const Matrix& r_prev, const Matrix& f_rp);

/// Checkpoint text: header `RILM v1 d_rp=<n> classes=<n> eta=<float> phase=<n>`,
/// then w_hat and r as FMAT blocks (fixed-width floats) and the class-id
/// table as a LABL block. Byte size depends only on (d_rp, classes).
void write_checkpoint(std::ostream& out, const RilmState& state);
RilmState read_checkpoint(std::istream& in);

}  // namespace refu
