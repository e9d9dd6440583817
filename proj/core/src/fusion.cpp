#include "refu/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "refu/errors.hpp"
#include "refu/io.hpp"
#include "refu/random.hpp"

namespace refu {
namespace {

Matrix tanh_of(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    const double peak = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - peak);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

void check_targets(const Matrix& targets, std::size_t rows, std::size_t classes) {
  if (targets.rows() != rows || targets.cols() != classes) {
    throw ShapeError("fusion: labels must be " + std::to_string(rows) + "x" +
                     std::to_string(classes));
  }
  for (std::size_t i = 0; i < targets.rows(); ++i) {
    double sum = 0.0;
    for (double v : targets.row(i)) {
      if (!(v >= 0.0)) throw ValidationError("fusion: negative or non-finite label entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError("fusion: label row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Matrix& block(FusionParams& p, int which) {
  switch (which) {
    case 0:
      return p.w_p;
    case 1:
      return p.w_m;
    case 2:
      return p.classifier_w;
    default:
      return p.classifier_b;
  }
}

const Matrix& block(const FusionGradients& g, int which) {
  switch (which) {
    case 0:
      return g.w_p;
    case 1:
      return g.w_m;
    case 2:
      return g.classifier_w;
    default:
      return g.classifier_b;
  }
}

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, GaussianSampler& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng(0.0, stddev);
  return m;
}

}  // namespace

void FusionParams::validate() const {
  const std::size_t d = w_p.rows();
  if (d == 0 || w_p.cols() != d || w_m.rows() != d || w_m.cols() != d) {
    throw ShapeError("FusionParams: attention projections must both be d x d");
  }
  if (classifier_w.rows() != 2 * d || classifier_w.cols() == 0 || classifier_b.rows() != 1 ||
      classifier_b.cols() != classifier_w.cols()) {
    throw ShapeError("FusionParams: classifier must be 2d x C with a 1 x C bias");
  }
  if (!w_p.all_finite() || !w_m.all_finite() || !classifier_w.all_finite() ||
      !classifier_b.all_finite()) {
    throw ValidationError("FusionParams: non-finite parameter");
  }
}

FusionParams fusion_init(std::size_t d, std::size_t classes, std::uint64_t seed) {
  if (d == 0 || classes == 0) throw ValidationError("fusion_init: dimensions must be positive");
  GaussianSampler rng(seed);
  const double proj_sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double cls_sd = 1.0 / std::sqrt(static_cast<double>(2 * d));
  FusionParams p;
  p.w_p = gaussian(d, d, proj_sd, rng);
  p.w_m = gaussian(d, d, proj_sd, rng);
  p.classifier_w = gaussian(2 * d, classes, cls_sd, rng);
  p.classifier_b = Matrix(1, classes);
  return p;
}

FusedBatch fusion_forward(const FusionParams& params, const Matrix& f_p, const Matrix& f_m) {
  params.validate();
  const std::size_t d = params.dim();
  if (f_p.rows() != f_m.rows() || f_p.cols() != d || f_m.cols() != d) {
    throw ShapeError("fusion_forward: point features " + std::to_string(f_p.rows()) + "x" +
                     std::to_string(f_p.cols()) + " and mesh features " +
                     std::to_string(f_m.rows()) + "x" + std::to_string(f_m.cols()) +
                     " must both be K x " + std::to_string(d));
  }
  FusedBatch b;
  b.f_p = f_p;
  b.f_m = f_m;
  b.score_p = tanh_of(matmul(f_p, params.w_p));
  b.score_m = tanh_of(matmul(f_m, params.w_m));
  b.w_spa = softmax_rows(hadamard(b.score_m, b.score_p));
  b.f_m_prime = hadamard(b.w_spa, f_m);
  b.concat = hstack(f_p, b.f_m_prime);
  b.logits = matmul(b.concat, params.classifier_w);
  for (std::size_t i = 0; i < b.logits.rows(); ++i)
    for (std::size_t j = 0; j < b.logits.cols(); ++j) b.logits(i, j) += params.classifier_b(0, j);
  return b;
}

Matrix fused_features(const FusionParams& params, const Matrix& f_p, const Matrix& f_m) {
  return fusion_forward(params, f_p, f_m).concat;
}

double fusion_loss(const FusedBatch& batch, const Matrix& targets) {
  check_targets(targets, batch.logits.rows(), batch.logits.cols());
  const std::size_t k = batch.logits.rows();
  if (k == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    auto z = batch.logits.row(i);
    const double peak = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - peak);
    const double log_norm = peak + std::log(sum);
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (targets(i, j) != 0.0) total -= targets(i, j) * (z[j] - log_norm);
    }
  }
  return total / static_cast<double>(k);
}

FusionGradients fusion_backward(const FusionParams& params, const FusedBatch& batch,
                                const Matrix& targets) {
  params.validate();
  const std::size_t k = batch.logits.rows();
  const std::size_t d = params.dim();
  check_targets(targets, k, params.classes());
  FusionGradients g;
  g.loss = fusion_loss(batch, targets);
  if (k == 0) {
    g.w_p = Matrix(d, d);
    g.w_m = Matrix(d, d);
    g.classifier_w = Matrix(2 * d, params.classes());
    g.classifier_b = Matrix(1, params.classes());
    return g;
  }

  // dL/dlogits = (softmax − targets) / K
  Matrix d_logits = subtract(softmax_rows(batch.logits), targets);
  d_logits = scale(d_logits, 1.0 / static_cast<double>(k));

  g.classifier_w = matmul_tn(batch.concat, d_logits);
  g.classifier_b = Matrix(1, params.classes());
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d_logits.cols(); ++j) g.classifier_b(0, j) += d_logits(i, j);

  // Only the F_m' half of the concatenation depends on the attention weights.
  const Matrix d_concat = matmul_nt(d_logits, params.classifier_w);
  const Matrix d_fm_prime = slice_cols(d_concat, d, d);
  const Matrix d_wspa = hadamard(d_fm_prime, batch.f_m);

  // Softmax Jacobian per row: dS = W ∘ (dW − <dW, W>).
  Matrix d_scores(k, d);
  for (std::size_t i = 0; i < k; ++i) {
    auto w = batch.w_spa.row(i);
    auto dw = d_wspa.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += dw[j] * w[j];
    for (std::size_t j = 0; j < d; ++j) d_scores(i, j) = w[j] * (dw[j] - dot);
  }

  Matrix d_pre_p(k, d);
  Matrix d_pre_m(k, d);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double sp = batch.score_p(i, j);
      const double sm = batch.score_m(i, j);
      d_pre_p(i, j) = d_scores(i, j) * sm * (1.0 - sp * sp);
      d_pre_m(i, j) = d_scores(i, j) * sp * (1.0 - sm * sm);
    }
  }
  g.w_p = matmul_tn(batch.f_p, d_pre_p);
  g.w_m = matmul_tn(batch.f_m, d_pre_m);
  return g;
}

FusionTrainResult fusion_train_with_history(const FusionParams& params, const FusionDataset& data,
                                            double lr, std::size_t epochs) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("fusion_train: lr must be positive");
  params.validate();
  FusionTrainResult result{params, {}};
  result.losses.reserve(epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    FusionGradients g;
    try {
      const FusedBatch batch = fusion_forward(result.params, data.f_p, data.f_m);
      g = fusion_backward(result.params, batch, data.labels);
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericalError& e) {
      throw DivergenceError(std::string("fusion_train: ") + e.what(), epoch);
    }
    if (!std::isfinite(g.loss)) throw DivergenceError("fusion_train: non-finite loss", epoch);
    result.losses.push_back(g.loss);
    for (int which = 0; which < 4; ++which) {
      Matrix& p = block(result.params, which);
      auto pd = p.data();
      auto gd = block(g, which).data();
      for (std::size_t i = 0; i < pd.size(); ++i) pd[i] -= lr * gd[i];
      if (!p.all_finite()) throw DivergenceError("fusion_train: parameters overflowed", epoch);
    }
  }
  return result;
}

double fusion_accuracy(const FusionParams& params, const FusionDataset& data) {
  const FusedBatch batch = fusion_forward(params, data.f_p, data.f_m);
  if (batch.logits.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.logits.rows(); ++i) {
    if (argmax(batch.logits.row(i)) == argmax(data.labels.row(i))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.logits.rows());
}

double GradCheckReport::max() const noexcept {
  return std::max({w_p, w_m, classifier_w, classifier_b});
}

GradCheckReport gradient_check(const FusionParams& params, const FusionDataset& data, double step,
                               double floor) {
  const FusionGradients analytic =
      fusion_backward(params, fusion_forward(params, data.f_p, data.f_m), data.labels);
  GradCheckReport report;
  double* slots[4] = {&report.w_p, &report.w_m, &report.classifier_w, &report.classifier_b};
  FusionParams probe = params;
  for (int which = 0; which < 4; ++which) {
    auto values = block(probe, which).data();
    auto grads = block(analytic, which).data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = fusion_loss(fusion_forward(probe, data.f_p, data.f_m), data.labels);
      values[i] = saved - step;
      const double down = fusion_loss(fusion_forward(probe, data.f_p, data.f_m), data.labels);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(grads[i]), std::abs(numeric), floor});
      *slots[which] = std::max(*slots[which], std::abs(grads[i] - numeric) / denom);
    }
  }
  return report;
}

double random_gradient_check(std::uint64_t seed, std::size_t trials) {
  GaussianSampler rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t k = 3 + static_cast<std::size_t>(rng.uniform() * 4);
    const std::size_t d = 2 + static_cast<std::size_t>(rng.uniform() * 4);
    const std::size_t c = 2 + static_cast<std::size_t>(rng.uniform() * 3);
    FusionParams params = fusion_init(d, c, rng.engine()());
    // Non-zero bias so its gradient is exercised away from the origin.
    for (double& v : params.classifier_b.data()) v = rng(0.0, 0.5);
    FusionDataset data{gaussian(k, d, 1.0, rng), gaussian(k, d, 1.0, rng), Matrix(k, c)};
    for (std::size_t i = 0; i < k; ++i) {
      data.labels(i, static_cast<std::size_t>(rng.uniform() * static_cast<double>(c))) = 1.0;
    }
    worst = std::max(worst, gradient_check(params, data).max());
  }
  return worst;
}

void write_fusion_checkpoint(std::ostream& out, const FusionParams& params) {
  params.validate();
  out << "FUSE v1 d=" << params.dim() << " classes=" << params.classes() << '\n';
  write_fmat(out, params.w_p);
  write_fmat(out, params.w_m);
  write_fmat(out, params.classifier_w);
  write_fmat(out, params.classifier_b);
  if (!out) throw ValidationError("write_fusion_checkpoint: stream write failed");
}

FusionParams read_fusion_checkpoint(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next_nonblank(line)) throw ParseError("empty fusion checkpoint", 1);
  const auto fields = split_fields(line);
  const std::size_t header_line = reader.line_number();
  if (fields.size() != 4 || fields[0] != "FUSE" || fields[1] != "v1" ||
      fields[2].substr(0, 2) != "d=" || fields[3].substr(0, 8) != "classes=") {
    throw ParseError("expected 'FUSE v1 d=<n> classes=<n>'", header_line);
  }
  const std::size_t d = parse_count(fields[2].substr(2), header_line);
  const std::size_t classes = parse_count(fields[3].substr(8), header_line);
  FusionParams p;
  p.w_p = read_fmat(reader);
  p.w_m = read_fmat(reader);
  p.classifier_w = read_fmat(reader);
  p.classifier_b = read_fmat(reader);
  if (p.dim() != d || p.classes() != classes) {
    throw ParseError("block shapes disagree with the header", header_line);
  }
  p.validate();
  return p;
}

}  // namespace refu
