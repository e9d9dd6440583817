#include "refu/rilm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "refu/errors.hpp"
#include "refu/io.hpp"

namespace refu {
namespace {

void require_eta(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw ValidationError("eta must be a positive finite number, got " + std::to_string(eta));
  }
}

void require_projected(const PhaseDataset& phase, std::size_t d_rp, const char* op,
                       bool require_onehot = true) {
  phase.validate(require_onehot);
  if (phase.space != FeatureSpace::projected) {
    throw ValidationError(std::string(op) + ": phase features must be random-projected first");
  }
  if (phase.features.cols() != d_rp) {
    throw ShapeError(std::string(op) + ": features have width " +
                     std::to_string(phase.features.cols()) + ", state expects " +
                     std::to_string(d_rp));
  }
}

Matrix add_ridge(Matrix a, double eta) {
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += eta;
  return a;
}

// Spreads the phase's one-hot columns onto the state's column layout.
Matrix embed_labels(const RilmState& state, const PhaseDataset& phase) {
  Matrix y(phase.samples(), state.classes_seen());
  for (std::size_t j = 0; j < phase.class_ids.size(); ++j) {
    const std::size_t col = state.column_of(phase.class_ids[j]);
    if (col == state.classes_seen()) {
      throw ProtocolError("class " + std::to_string(phase.class_ids[j]) +
                          " is not registered; call expand_classes first");
    }
    for (std::size_t i = 0; i < phase.samples(); ++i) y(i, col) = phase.labels_onehot(i, j);
  }
  return y;
}

}  // namespace

CorrelationStats correlation_stats(const Matrix& f_rp, const Matrix& y) {
  if (f_rp.rows() != y.rows()) {
    throw ShapeError("correlation_stats: " + std::to_string(f_rp.rows()) + " feature rows vs " +
                     std::to_string(y.rows()) + " label rows");
  }
  return {matmul_tn(f_rp, f_rp), matmul_tn(f_rp, y)};
}

RilmState RilmState::fresh(std::size_t d_rp, double eta) {
  require_eta(eta);
  if (d_rp == 0) throw ShapeError("RilmState: d_rp must be positive");
  RilmState s;
  s.w_hat_ = Matrix(d_rp, 0);
  s.r_ = scale(identity(d_rp), 1.0 / eta);
  s.eta_ = eta;
  return s;
}

std::size_t RilmState::column_of(ClassId id) const noexcept {
  const auto it = std::find(class_ids_.begin(), class_ids_.end(), id);
  return static_cast<std::size_t>(it - class_ids_.begin());
}

RilmState RilmState::from_parts(Matrix w_hat, Matrix r, double eta, std::size_t phase,
                                std::vector<ClassId> class_ids) {
  require_eta(eta);
  if (r.rows() == 0 || r.rows() != r.cols()) throw ShapeError("RilmState: r must be square");
  if (w_hat.rows() != r.rows() || w_hat.cols() != class_ids.size()) {
    throw ShapeError("RilmState: w_hat shape does not match r / class table");
  }
  if (!w_hat.all_finite()) throw ValidationError("RilmState: non-finite weights");
  std::vector<ClassId> sorted = class_ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ProtocolError("RilmState: duplicate class id");
  }
  cholesky(r);  // throws unless symmetric positive definite
  RilmState s;
  s.w_hat_ = std::move(w_hat);
  s.r_ = symmetrize(r);
  s.eta_ = eta;
  s.phase_ = phase;
  s.class_ids_ = std::move(class_ids);
  return s;
}

RilmState rilm_init(const PhaseDataset& phase0, double eta) {
  require_eta(eta);
  if (phase0.features.cols() == 0) throw ShapeError("rilm_init: features have zero width");
  require_projected(phase0, phase0.features.cols(), "rilm_init");
  const auto stats = correlation_stats(phase0.features, phase0.labels_onehot);
  const Matrix regularized = add_ridge(stats.a, eta);
  RilmState s;
  s.w_hat_ = spd_solve(regularized, stats.c);
  s.r_ = spd_inverse(regularized);
  s.eta_ = eta;
  s.phase_ = 0;
  s.class_ids_ = phase0.class_ids;
  return s;
}

RilmState expand_classes(const RilmState& state, std::span<const ClassId> new_class_ids) {
  for (std::size_t i = 0; i < new_class_ids.size(); ++i) {
    const ClassId id = new_class_ids[i];
    const bool seen = state.column_of(id) != state.classes_seen();
    const bool repeated =
        std::find(new_class_ids.begin(), new_class_ids.begin() + static_cast<std::ptrdiff_t>(i),
                  id) != new_class_ids.begin() + static_cast<std::ptrdiff_t>(i);
    if (seen || repeated) {
      throw ProtocolError("expand_classes: class " + std::to_string(id) + " is already registered");
    }
  }
  if (new_class_ids.empty()) return state;
  RilmState s = state;
  s.w_hat_ = hstack(state.w_hat_, Matrix(state.d_rp(), new_class_ids.size()));
  s.class_ids_.insert(s.class_ids_.end(), new_class_ids.begin(), new_class_ids.end());
  return s;
}

Matrix update_r(const Matrix& r_prev, const Matrix& f_rp, InversePath path) {
  if (r_prev.rows() != r_prev.cols()) throw ShapeError("update_r: r must be square");
  if (f_rp.cols() != r_prev.rows()) {
    throw ShapeError("update_r: features have width " + std::to_string(f_rp.cols()) +
                     ", r is " + std::to_string(r_prev.rows()) + "x" +
                     std::to_string(r_prev.cols()));
  }
  if (f_rp.rows() == 0) return r_prev;
  if (path == InversePath::automatic) {
    path = f_rp.rows() < f_rp.cols() ? InversePath::woodbury : InversePath::direct;
  }
  if (path == InversePath::direct) {
    return spd_inverse(add(spd_inverse(r_prev), matmul_tn(f_rp, f_rp)));
  }
  // R Fᵀ is d × N; F R = (R Fᵀ)ᵀ because R is symmetric.
  const Matrix r_ft = matmul_nt(r_prev, f_rp);
  const Matrix inner = add_ridge(matmul(f_rp, r_ft), 1.0);
  const Matrix gain_rhs = spd_solve(symmetrize(inner), transpose(r_ft));
  return symmetrize(subtract(r_prev, matmul(r_ft, gain_rhs)));
}

RilmState rilm_update(const RilmState& state, const PhaseDataset& phase_n, InversePath path) {
  require_projected(phase_n, state.d_rp(), "rilm_update");
  const Matrix y = embed_labels(state, phase_n);
  RilmState s = state;
  ++s.phase_;
  if (phase_n.samples() == 0) return s;
  const auto stats = correlation_stats(phase_n.features, y);
  s.r_ = update_r(state.r_, phase_n.features, path);
  // Ŵ_{n−1} − R_nA_nŴ_{n−1} + R_nC_n, with R_n factored out.
  const Matrix residual = subtract(stats.c, matmul(stats.a, state.w_hat_));
  s.w_hat_ = add(state.w_hat_, matmul(s.r_, residual));
  return s;
}

RilmState rilm_learn(const RilmState& state, const PhaseDataset& phase_n, InversePath path) {
  std::vector<ClassId> unseen;
  for (ClassId id : phase_n.class_ids) {
    if (state.column_of(id) == state.classes_seen()) unseen.push_back(id);
  }
  return rilm_update(expand_classes(state, unseen), phase_n, path);
}

std::vector<ClassId> oracle_class_order(std::span<const PhaseDataset> phases) {
  std::vector<ClassId> order;
  for (const auto& p : phases) {
    for (ClassId id : p.class_ids) {
      if (std::find(order.begin(), order.end(), id) != order.end()) {
        throw ProtocolError("batch_oracle: class " + std::to_string(id) +
                            " appears in more than one phase");
      }
      order.push_back(id);
    }
  }
  return order;
}

Matrix batch_oracle(std::span<const PhaseDataset> phases, double eta) {
  require_eta(eta);
  if (phases.empty()) throw ValidationError("batch_oracle: no phases");
  const std::size_t d = phases.front().features.cols();
  if (d == 0) throw ShapeError("batch_oracle: features have zero width");
  const auto order = oracle_class_order(phases);
  Matrix gram(d, d);
  Matrix cross(d, order.size());
  std::size_t col_offset = 0;
  for (const auto& p : phases) {
    // Any target matrix is a valid ridge problem here, so labels are not forced one-hot.
    require_projected(p, d, "batch_oracle", false);
    const auto stats = correlation_stats(p.features, p.labels_onehot);
    gram = add(gram, stats.a);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < stats.c.cols(); ++j) cross(i, col_offset + j) = stats.c(i, j);
    col_offset += p.class_ids.size();
  }
  return spd_solve(add_ridge(gram, eta), cross);
}

Matrix sort_columns_by_class(const Matrix& weights, std::span<const ClassId> class_ids) {
  if (weights.cols() != class_ids.size()) {
    throw ShapeError("sort_columns_by_class: column count does not match class table");
  }
  std::vector<std::size_t> perm(class_ids.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::sort(perm.begin(), perm.end(),
            [&](std::size_t a, std::size_t b) { return class_ids[a] < class_ids[b]; });
  Matrix out(weights.rows(), weights.cols());
  for (std::size_t i = 0; i < weights.rows(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j) out(i, j) = weights(i, perm[j]);
  return out;
}

std::vector<ClassId> predict_with(const Matrix& weights, std::span<const ClassId> class_ids,
                                  const Matrix& f_rp) {
  if (f_rp.cols() != weights.rows()) {
    throw ShapeError("predict: features have width " + std::to_string(f_rp.cols()) +
                     ", weights expect " + std::to_string(weights.rows()));
  }
  if (weights.cols() != class_ids.size()) {
    throw ShapeError("predict: weight columns do not match the class table");
  }
  if (class_ids.empty()) throw ProtocolError("predict: no classes registered");
  const Matrix scores = matmul(f_rp, weights);
  std::vector<ClassId> out(f_rp.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.cols(); ++j) {
      const double s = scores(i, j);
      const double b = scores(i, best);
      if (s > b || (s == b && class_ids[j] < class_ids[best])) best = j;
    }
    out[i] = class_ids[best];
  }
  return out;
}

std::vector<ClassId> predict(const RilmState& state, const Matrix& f_rp) {
  return predict_with(state.w_hat(), state.class_ids(), f_rp);
}

double kn_identity_check(const Matrix& r_prev, const Matrix& f_rp) {
  if (r_prev.rows() != r_prev.cols() || f_rp.cols() != r_prev.rows()) {
    throw ShapeError("kn_identity_check: shapes do not conform");
  }
  if (f_rp.rows() == 0) return 0.0;
  const std::size_t n = f_rp.rows();
  const Matrix r_ft = matmul_nt(r_prev, f_rp);         // R Fᵀ
  const Matrix frf = symmetrize(matmul(f_rp, r_ft));   // F R Fᵀ
  const Matrix k = spd_inverse(add_ridge(frf, 1.0));   // (F R Fᵀ + I)⁻¹

  const Matrix k_rhs = subtract(identity(n), matmul(k, frf));
  const double first = relative_error(k, k_rhs);

  const Matrix r_next = update_r(r_prev, f_rp, InversePath::woodbury);
  const Matrix lhs = matmul(r_ft, k);
  const Matrix rhs = matmul_nt(r_next, f_rp);
  const double second = relative_error(lhs, rhs);
  return std::max(first, second);
}

void write_checkpoint(std::ostream& out, const RilmState& state) {
  out << "RILM v1 d_rp=" << state.d_rp() << " classes=" << state.classes_seen()
      << " eta=" << format_double(state.eta()) << " phase=" << state.phase() << '\n';
  write_fmat(out, state.w_hat(), FloatStyle::fixed_width);
  write_fmat(out, state.r(), FloatStyle::fixed_width);
  write_labl(out, state.class_ids());
  if (!out) throw ValidationError("write_checkpoint: stream write failed");
}

RilmState read_checkpoint(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next_nonblank(line)) throw ParseError("empty checkpoint", 1);
  const auto fields = split_fields(line);
  if (fields.size() != 6 || fields[0] != "RILM" || fields[1] != "v1") {
    throw ParseError("expected 'RILM v1 d_rp=.. classes=.. eta=.. phase=..'", reader.line_number());
  }
  const std::size_t header_line = reader.line_number();
  auto value_of = [&](std::string_view field, std::string_view key) {
    if (field.substr(0, key.size()) != key || field.size() <= key.size() ||
        field[key.size()] != '=') {
      throw ParseError("expected '" + std::string(key) + "=<value>'", header_line);
    }
    return field.substr(key.size() + 1);
  };
  const std::size_t d_rp = parse_count(value_of(fields[2], "d_rp"), header_line);
  const std::size_t classes = parse_count(value_of(fields[3], "classes"), header_line);
  const double eta = parse_double(value_of(fields[4], "eta"), header_line);
  const std::size_t phase = parse_count(value_of(fields[5], "phase"), header_line);

  Matrix w_hat = read_fmat(reader);
  Matrix r = read_fmat(reader);
  auto class_ids = read_labl(reader);
  if (w_hat.rows() != d_rp || w_hat.cols() != classes || r.rows() != d_rp || r.cols() != d_rp ||
      class_ids.size() != classes) {
    throw ParseError("block shapes disagree with the header", header_line);
  }
  return RilmState::from_parts(std::move(w_hat), std::move(r), eta, phase, std::move(class_ids));
}

}  // namespace refu
