#include "refu/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "refu/errors.hpp"
#include "refu/io.hpp"
#include "refu/random.hpp"

namespace refu {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ValidationError("config: '" + std::string(key) + "' expects a non-negative integer, got '" +
                          std::string(value) + "'");
  }
  return v;
}

double parse_real(std::string_view key, std::string_view value) {
  try {
    return parse_double(value, 0);
  } catch (const ParseError&) {
    throw ValidationError("config: '" + std::string(key) + "' expects a number, got '" +
                          std::string(value) + "'");
  }
}

bool parse_bool_source(std::string_view value) {
  if (value == "synthetic") return true;
  if (value == "files") return false;
  throw ValidationError("config: 'data' must be 'synthetic' or 'files', got '" +
                        std::string(value) + "'");
}

Pipeline parse_pipeline(std::string_view v) {
  if (v == "repoint") return Pipeline::repoint;
  if (v == "remesh") return Pipeline::remesh;
  if (v == "refu") return Pipeline::refu;
  throw ValidationError("config: unknown pipeline '" + std::string(v) + "'");
}

Learner parse_learner(std::string_view v) {
  if (v == "rilm") return Learner::rilm;
  if (v == "naive") return Learner::naive;
  throw ValidationError("config: unknown learner '" + std::string(v) + "'");
}

InversePath parse_inverse_path(std::string_view v) {
  if (v == "auto") return InversePath::automatic;
  if (v == "woodbury") return InversePath::woodbury;
  if (v == "direct") return InversePath::direct;
  throw ValidationError("config: unknown inverse_path '" + std::string(v) + "'");
}

std::filesystem::path resolve_path(std::string_view value, const std::filesystem::path& base) {
  if (value.empty()) return {};
  std::filesystem::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

std::vector<std::size_t> rows_with_labels(std::span<const ClassId> labels,
                                          const std::set<ClassId>& wanted) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (wanted.count(labels[i]) != 0) rows.push_back(i);
  }
  return rows;
}

std::vector<ClassId> take(std::span<const ClassId> labels, std::span<const std::size_t> rows) {
  std::vector<ClassId> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

// Encoder stand-in plus frozen projection, shared by the incremental run and
// the joint reference model so both see identical features.
class FeaturePipeline {
 public:
  FeaturePipeline(const ExperimentConfig& cfg, const ExperimentData& data,
                  const PhaseSchedule& schedule)
      : pipeline_(cfg.pipeline), rp_(make_rp(cfg, data, schedule)) {}

  Matrix raw(const ModalSplit& split, std::span<const std::size_t> rows) const {
    switch (pipeline_) {
      case Pipeline::repoint:
        return take_rows(split.point, rows);
      case Pipeline::remesh:
        return take_rows(split.mesh, rows);
      case Pipeline::refu:
        return fused_features(*fusion_, take_rows(split.point, rows), take_rows(split.mesh, rows));
    }
    throw ValidationError("unknown pipeline");
  }

  Matrix projected(const ModalSplit& split, std::span<const std::size_t> rows) const {
    return rp_.forward(raw(split, rows));
  }

  std::size_t d_rp() const noexcept { return rp_.output_dim(); }

 private:
  RpLayer make_rp(const ExperimentConfig& cfg, const ExperimentData& data,
                  const PhaseSchedule& schedule) {
    std::size_t width = 0;
    switch (pipeline_) {
      case Pipeline::repoint:
        width = data.train.point.cols();
        break;
      case Pipeline::remesh:
        width = data.train.mesh.cols();
        break;
      case Pipeline::refu:
        fusion_ = make_fusion(cfg, data, schedule);
        width = 2 * fusion_->dim();
        break;
    }
    if (width == 0) {
      throw ValidationError("pipeline '" + std::string(to_string(pipeline_)) +
                            "' has no input features");
    }
    const std::size_t d_rp = cfg.d_rp != 0 ? cfg.d_rp : cfg.d_rp_multiplier * width;
    return RpLayer(width, d_rp, cfg.rp_seed, cfg.activation, cfg.distribution);
  }

  static FusionParams make_fusion(const ExperimentConfig& cfg, const ExperimentData& data,
                                  const PhaseSchedule& schedule) {
    const std::size_t d = data.train.point.cols();
    if (d == 0 || data.train.mesh.cols() != d) {
      throw ValidationError("refu pipeline needs point and mesh features of equal width");
    }
    FusionParams params;
    if (!cfg.fusion_checkpoint.empty()) {
      std::ifstream in(cfg.fusion_checkpoint, std::ios::binary);
      if (!in) {
        throw ValidationError("cannot open fusion checkpoint '" + cfg.fusion_checkpoint.string() + "'");
      }
      params = read_fusion_checkpoint(in);
      if (params.dim() != d) throw ShapeError("fusion checkpoint width does not match features");
    } else {
      params = fusion_init(d, data.total_classes, cfg.fusion_seed);
    }
    if (cfg.fusion_pretrain_epochs > 0) {
      const std::set<ClassId> first(schedule.phases.front().begin(), schedule.phases.front().end());
      const auto rows = rows_with_labels(data.train.labels, first);
      FusionDataset pretrain{take_rows(data.train.point, rows), take_rows(data.train.mesh, rows),
                             Matrix(rows.size(), params.classes())};
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const ClassId c = data.train.labels[rows[i]];
        if (c >= params.classes()) throw ShapeError("fusion classifier has too few classes");
        pretrain.labels(i, c) = 1.0;
      }
      params = fusion_train(params, pretrain, cfg.fusion_lr, cfg.fusion_pretrain_epochs);
    }
    return params;
  }

  Pipeline pipeline_;
  std::optional<FusionParams> fusion_;
  RpLayer rp_;
};

void check_split(const ModalSplit& s, const char* name, std::size_t total_classes) {
  const std::size_t n = s.labels.size();
  if ((s.point.cols() != 0 && s.point.rows() != n) || (s.mesh.cols() != 0 && s.mesh.rows() != n)) {
    throw ShapeError(std::string(name) + ": feature and label counts differ");
  }
  for (ClassId c : s.labels) {
    if (c >= total_classes) {
      throw ProtocolError(std::string(name) + ": label " + std::to_string(c) + " outside schedule");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedules

void PhaseSchedule::validate(bool allow_empty_phases) const {
  if (phases.empty()) throw ValidationError("schedule: no phases");
  std::vector<bool> seen(total_classes, false);
  std::size_t covered = 0;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    if (phases[p].empty() && !allow_empty_phases) {
      throw ValidationError("schedule: phase " + std::to_string(p) + " is empty");
    }
    for (ClassId c : phases[p]) {
      if (c >= total_classes) {
        throw ProtocolError("schedule: class " + std::to_string(c) + " is outside 0.." +
                            std::to_string(total_classes - 1));
      }
      if (seen[c]) {
        throw ProtocolError("schedule: class " + std::to_string(c) + " appears in two phases");
      }
      seen[c] = true;
      ++covered;
    }
  }
  if (covered != total_classes) {
    throw ProtocolError("schedule: covers " + std::to_string(covered) + " of " +
                        std::to_string(total_classes) + " classes");
  }
}

PhaseSchedule PhaseSchedule::split(std::span<const ClassId> class_order, std::size_t num_phases) {
  if (num_phases == 0) throw ValidationError("schedule: number of phases must be positive");
  if (num_phases > class_order.size()) {
    throw ValidationError("schedule: " + std::to_string(num_phases) + " phases for " +
                          std::to_string(class_order.size()) + " classes");
  }
  PhaseSchedule s;
  s.total_classes = class_order.size();
  const std::size_t base = class_order.size() / num_phases;
  const std::size_t extra = class_order.size() % num_phases;
  std::size_t next = 0;
  for (std::size_t p = 0; p < num_phases; ++p) {
    const std::size_t count = base + (p < extra ? 1 : 0);
    std::vector<ClassId> phase(class_order.begin() + static_cast<std::ptrdiff_t>(next),
                               class_order.begin() + static_cast<std::ptrdiff_t>(next + count));
    std::sort(phase.begin(), phase.end());
    s.phases.push_back(std::move(phase));
    next += count;
  }
  return s;
}

PhaseSchedule PhaseSchedule::even(std::size_t total_classes, std::size_t num_phases) {
  std::vector<ClassId> order(total_classes);
  std::iota(order.begin(), order.end(), ClassId{0});
  return split(order, num_phases);
}

PhaseSchedule PhaseSchedule::parse(std::string_view text, std::size_t total_classes) {
  PhaseSchedule s;
  s.total_classes = total_classes;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto chunk = trim(text.substr(pos, end - pos));
    std::vector<ClassId> phase;
    std::size_t p2 = 0;
    while (p2 < chunk.size()) {
      auto comma = chunk.find(',', p2);
      if (comma == std::string_view::npos) comma = chunk.size();
      const auto tok = trim(chunk.substr(p2, comma - p2));
      phase.push_back(parse_u64("schedule", tok));
      p2 = comma + 1;
    }
    std::sort(phase.begin(), phase.end());
    s.phases.push_back(std::move(phase));
    pos = end + 1;
  }
  return s;
}

std::string PhaseSchedule::to_string() const {
  std::string out;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    if (p > 0) out += ';';
    for (std::size_t i = 0; i < phases[p].size(); ++i) {
      if (i > 0) out += ',';
      out += std::to_string(phases[p][i]);
    }
  }
  return out;
}

std::vector<ClassId> shuffled_classes(std::size_t total_classes, std::uint64_t seed) {
  std::vector<ClassId> order(total_classes);
  std::iota(order.begin(), order.end(), ClassId{0});
  GaussianSampler rng(seed);
  for (std::size_t i = total_classes; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  return order;
}

// ---------------------------------------------------------------------------
// Metrics

MetricsReport compute_metrics(std::span<const double> per_phase_acc) {
  if (per_phase_acc.empty()) throw ValidationError("compute_metrics: no phases");
  for (double a : per_phase_acc) {
    if (!(a >= 0.0 && a <= 100.0)) {
      throw ValidationError("compute_metrics: accuracy " + std::to_string(a) +
                            " outside [0, 100]");
    }
  }
  MetricsReport m;
  m.per_phase_acc.assign(per_phase_acc.begin(), per_phase_acc.end());
  m.avg_incremental_acc = std::accumulate(per_phase_acc.begin(), per_phase_acc.end(), 0.0) /
                          static_cast<double>(per_phase_acc.size());
  m.retention_drop = per_phase_acc.front() - per_phase_acc.back();
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic data

SynthData synth_dataset(std::size_t classes, std::size_t per_class, std::size_t dim,
                        double separation, std::uint64_t seed, std::uint64_t direction_seed) {
  if (classes == 0 || per_class == 0 || dim == 0) {
    throw ValidationError("synth_dataset: counts must be positive");
  }
  if (!std::isfinite(separation) || separation < 0.0) {
    throw ValidationError("synth_dataset: separation must be finite and non-negative");
  }
  GaussianSampler directions(splitmix64(direction_seed ^ dim));
  Matrix means(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    auto row = means.row(c);
    double norm = 0.0;
    for (double& v : row) {
      v = directions();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : row) v *= separation / norm;
  }
  GaussianSampler noise(seed);
  SynthData out{Matrix(classes * per_class, dim), {}};
  out.labels.reserve(classes * per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      auto row = out.features.row(out.labels.size());
      for (std::size_t j = 0; j < dim; ++j) row[j] = means(c, j) + noise();
      out.labels.push_back(c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(Pipeline p) {
  switch (p) {
    case Pipeline::repoint:
      return "repoint";
    case Pipeline::remesh:
      return "remesh";
    case Pipeline::refu:
      return "refu";
  }
  return "?";
}

std::string_view to_string(Learner l) { return l == Learner::rilm ? "rilm" : "naive"; }

std::string_view to_string(InversePath p) {
  switch (p) {
    case InversePath::automatic:
      return "auto";
    case InversePath::woodbury:
      return "woodbury";
    case InversePath::direct:
      return "direct";
  }
  return "?";
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value,
                   const std::filesystem::path& base) {
  value = trim(value);
  key = trim(key);
  if (key == "eta") {
    cfg.eta = parse_real(key, value);
  } else if (key == "d_rp_multiplier") {
    cfg.d_rp_multiplier = parse_u64(key, value);
  } else if (key == "d_rp") {
    cfg.d_rp = parse_u64(key, value);
  } else if (key == "rp_seed") {
    cfg.rp_seed = parse_u64(key, value);
  } else if (key == "activation") {
    cfg.activation = parse_activation(value);
  } else if (key == "distribution") {
    cfg.distribution = parse_distribution(value);
  } else if (key == "pipeline") {
    cfg.pipeline = parse_pipeline(value);
  } else if (key == "learner") {
    cfg.learner = parse_learner(value);
  } else if (key == "inverse_path") {
    cfg.inverse_path = parse_inverse_path(value);
  } else if (key == "phases") {
    cfg.phases = parse_u64(key, value);
  } else if (key == "schedule") {
    cfg.schedule = std::string(value);
  } else if (key == "shuffle_seed") {
    cfg.shuffle_seed = value.empty() ? std::nullopt : std::optional(parse_u64(key, value));
  } else if (key == "data") {
    cfg.synthetic = parse_bool_source(value);
  } else if (key == "synth_classes") {
    cfg.synth.classes = parse_u64(key, value);
  } else if (key == "synth_train_per_class") {
    cfg.synth.train_per_class = parse_u64(key, value);
  } else if (key == "synth_test_per_class") {
    cfg.synth.test_per_class = parse_u64(key, value);
  } else if (key == "synth_dim") {
    cfg.synth.dim = parse_u64(key, value);
  } else if (key == "synth_separation") {
    cfg.synth.separation = parse_real(key, value);
  } else if (key == "synth_seed") {
    cfg.synth.seed = parse_u64(key, value);
  } else if (key == "train_features") {
    cfg.train_features = resolve_path(value, base);
  } else if (key == "train_features_mesh") {
    cfg.train_features_mesh = resolve_path(value, base);
  } else if (key == "train_labels") {
    cfg.train_labels = resolve_path(value, base);
  } else if (key == "test_features") {
    cfg.test_features = resolve_path(value, base);
  } else if (key == "test_features_mesh") {
    cfg.test_features_mesh = resolve_path(value, base);
  } else if (key == "test_labels") {
    cfg.test_labels = resolve_path(value, base);
  } else if (key == "fusion_checkpoint") {
    cfg.fusion_checkpoint = resolve_path(value, base);
  } else if (key == "fusion_seed") {
    cfg.fusion_seed = parse_u64(key, value);
  } else if (key == "fusion_pretrain_epochs") {
    cfg.fusion_pretrain_epochs = parse_u64(key, value);
  } else if (key == "fusion_lr") {
    cfg.fusion_lr = parse_real(key, value);
  } else if (key == "output") {
    cfg.output = resolve_path(value, base);
  } else {
    throw ValidationError("config: unknown key '" + std::string(key) + "'");
  }
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    try {
      apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1), base_dir);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), path.parent_path());
  } catch (const ParseError& e) {
    throw e.in_file(path.string());
  }
}

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  auto kv = [&](std::string_view k, const auto& v) { out << k << " = " << v << '\n'; };
  kv("eta", format_double(cfg.eta));
  kv("d_rp_multiplier", cfg.d_rp_multiplier);
  kv("d_rp", cfg.d_rp);
  kv("rp_seed", cfg.rp_seed);
  kv("activation", to_string(cfg.activation));
  kv("distribution", to_string(cfg.distribution));
  kv("pipeline", to_string(cfg.pipeline));
  kv("learner", to_string(cfg.learner));
  kv("inverse_path", to_string(cfg.inverse_path));
  kv("phases", cfg.phases);
  kv("schedule", cfg.schedule);
  kv("shuffle_seed", cfg.shuffle_seed ? std::to_string(*cfg.shuffle_seed) : std::string());
  kv("data", cfg.synthetic ? "synthetic" : "files");
  kv("synth_classes", cfg.synth.classes);
  kv("synth_train_per_class", cfg.synth.train_per_class);
  kv("synth_test_per_class", cfg.synth.test_per_class);
  kv("synth_dim", cfg.synth.dim);
  kv("synth_separation", format_double(cfg.synth.separation));
  kv("synth_seed", cfg.synth.seed);
  kv("train_features", cfg.train_features.string());
  kv("train_features_mesh", cfg.train_features_mesh.string());
  kv("train_labels", cfg.train_labels.string());
  kv("test_features", cfg.test_features.string());
  kv("test_features_mesh", cfg.test_features_mesh.string());
  kv("test_labels", cfg.test_labels.string());
  kv("fusion_checkpoint", cfg.fusion_checkpoint.string());
  kv("fusion_seed", cfg.fusion_seed);
  kv("fusion_pretrain_epochs", cfg.fusion_pretrain_epochs);
  kv("fusion_lr", format_double(cfg.fusion_lr));
  kv("output", cfg.output.string());
  return out.str();
}

void validate_config(const ExperimentConfig& cfg) {
  if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) throw ValidationError("config: eta must be > 0");
  if (cfg.d_rp == 0 && cfg.d_rp_multiplier == 0) {
    throw ValidationError("config: d_rp_multiplier must be positive");
  }
  if (!(cfg.fusion_lr > 0.0)) throw ValidationError("config: fusion_lr must be > 0");
  if (cfg.schedule.empty() && cfg.phases == 0) throw ValidationError("config: phases must be > 0");
  auto require_file = [](const std::filesystem::path& p, const char* key) {
    if (p.empty()) throw ValidationError(std::string("config: '") + key + "' is required");
    if (!std::filesystem::exists(p)) {
      throw ValidationError(std::string("config: ") + key + " file '" + p.string() +
                            "' does not exist");
    }
  };
  if (!cfg.synthetic) {
    const bool point = cfg.pipeline != Pipeline::remesh;
    const bool mesh = cfg.pipeline != Pipeline::repoint;
    if (point) require_file(cfg.train_features, "train_features");
    if (point) require_file(cfg.test_features, "test_features");
    if (mesh) require_file(cfg.train_features_mesh, "train_features_mesh");
    if (mesh) require_file(cfg.test_features_mesh, "test_features_mesh");
    require_file(cfg.train_labels, "train_labels");
    require_file(cfg.test_labels, "test_labels");
  }
  if (!cfg.fusion_checkpoint.empty()) require_file(cfg.fusion_checkpoint, "fusion_checkpoint");
}

PhaseSchedule resolve_schedule(const ExperimentConfig& cfg, std::size_t total_classes) {
  PhaseSchedule s;
  if (!cfg.schedule.empty()) {
    s = PhaseSchedule::parse(cfg.schedule, total_classes);
  } else if (cfg.shuffle_seed) {
    s = PhaseSchedule::split(shuffled_classes(total_classes, *cfg.shuffle_seed), cfg.phases);
  } else {
    s = PhaseSchedule::even(total_classes, cfg.phases);
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Data

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ExperimentData data;
  if (cfg.synthetic) {
    const auto& s = cfg.synth;
    const std::uint64_t point_dirs = splitmix64(0x9017);
    const std::uint64_t mesh_dirs = splitmix64(0x3e54);
    auto make = [&](std::size_t per_class, std::uint64_t stream) {
      auto p = synth_dataset(s.classes, per_class, s.dim, s.separation,
                             splitmix64(s.seed ^ (stream << 1)), point_dirs);
      auto m = synth_dataset(s.classes, per_class, s.dim, s.separation,
                             splitmix64(s.seed ^ ((stream << 1) | 1)), mesh_dirs);
      return ModalSplit{std::move(p.features), std::move(m.features), std::move(p.labels)};
    };
    data.train = make(s.train_per_class, 1);
    data.test = make(s.test_per_class, 2);
    data.total_classes = s.classes;
    return data;
  }
  const bool point = cfg.pipeline != Pipeline::remesh;
  const bool mesh = cfg.pipeline != Pipeline::repoint;
  if (point) data.train.point = load_features(cfg.train_features);
  if (mesh) data.train.mesh = load_features(cfg.train_features_mesh);
  if (point) data.test.point = load_features(cfg.test_features);
  if (mesh) data.test.mesh = load_features(cfg.test_features_mesh);
  data.train.labels = load_labels(cfg.train_labels);
  data.test.labels = load_labels(cfg.test_labels);
  ClassId top = 0;
  for (ClassId c : data.train.labels) top = std::max(top, c);
  data.total_classes = data.train.labels.empty() ? 0 : top + 1;
  return data;
}

// ---------------------------------------------------------------------------
// Runs

double accuracy_percent(std::span<const ClassId> predicted, std::span<const ClassId> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) throw ValidationError("accuracy: no test rows");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                          const Evaluator& evaluator) {
  validate_config(cfg);
  const PhaseSchedule schedule = resolve_schedule(cfg, data.total_classes);
  check_split(data.train, "train", data.total_classes);
  check_split(data.test, "test", data.total_classes);
  const FeaturePipeline features(cfg, data, schedule);

  RunOutcome outcome;
  std::vector<double> accs;
  std::vector<ClassId> seen;
  std::optional<RilmState> state;
  for (std::size_t n = 0; n < schedule.phases.size(); ++n) {
    const auto& phase_classes = schedule.phases[n];
    const std::set<ClassId> current(phase_classes.begin(), phase_classes.end());
    const auto rows = rows_with_labels(data.train.labels, current);
    const auto labels = take(data.train.labels, rows);
    const PhaseDataset phase =
        PhaseDataset::from_labels(features.projected(data.train, rows), labels, phase_classes);
    seen.insert(seen.end(), phase_classes.begin(), phase_classes.end());

    if (cfg.learner == Learner::rilm) {
      state = n == 0 ? rilm_init(phase, cfg.eta) : rilm_learn(*state, phase, cfg.inverse_path);
    } else {
      // Fresh ridge fit on this phase alone; old classes get all-zero targets.
      const RilmState blank = expand_classes(RilmState::fresh(features.d_rp(), cfg.eta), seen);
      state = rilm_update(blank, phase, cfg.inverse_path);
    }

    const std::set<ClassId> seen_set(seen.begin(), seen.end());
    const auto test_rows = rows_with_labels(data.test.labels, seen_set);
    const auto truth = take(data.test.labels, test_rows);
    const Matrix test_rp = features.projected(data.test, test_rows);
    std::vector<ClassId> predicted;
    double acc = 0.0;
    if (evaluator) {
      acc = evaluator(EvalContext{n, *state, test_rp, truth});
    } else {
      predicted = predict(*state, test_rp);
      acc = accuracy_percent(predicted, truth);
    }
    accs.push_back(acc);
    outcome.seen_classes.push_back(seen.size());
    if (n + 1 == schedule.phases.size()) {
      outcome.final_predictions = evaluator ? predict(*state, test_rp) : std::move(predicted);
      outcome.final_truth = truth;
    }
  }
  outcome.metrics = compute_metrics(accs);
  outcome.final_state = std::move(*state);
  return outcome;
}

MetricsReport run_pipeline(const ExperimentConfig& cfg, const Evaluator& evaluator) {
  ExperimentConfig c = cfg;
  c.learner = Learner::rilm;
  return run_experiment(c, load_experiment_data(c), evaluator).metrics;
}

MetricsReport run_naive_baseline(const ExperimentConfig& cfg, const Evaluator& evaluator) {
  ExperimentConfig c = cfg;
  c.learner = Learner::naive;
  return run_experiment(c, load_experiment_data(c), evaluator).metrics;
}

std::vector<ClassId> joint_model_predictions(const ExperimentConfig& cfg,
                                             const ExperimentData& data) {
  validate_config(cfg);
  const PhaseSchedule schedule = resolve_schedule(cfg, data.total_classes);
  const FeaturePipeline features(cfg, data, schedule);
  std::vector<PhaseDataset> phases;
  for (const auto& phase_classes : schedule.phases) {
    const std::set<ClassId> current(phase_classes.begin(), phase_classes.end());
    const auto rows = rows_with_labels(data.train.labels, current);
    phases.push_back(PhaseDataset::from_labels(features.projected(data.train, rows),
                                               take(data.train.labels, rows), phase_classes));
  }
  const Matrix weights = batch_oracle(phases, cfg.eta);
  const auto order = oracle_class_order(phases);
  std::set<ClassId> all;
  for (const auto& p : schedule.phases) all.insert(p.begin(), p.end());
  const auto test_rows = rows_with_labels(data.test.labels, all);
  return predict_with(weights, order, features.projected(data.test, test_rows));
}

// ---------------------------------------------------------------------------
// Result files

ResultsFile make_results(const MetricsReport& metrics, std::span<const std::size_t> seen_classes) {
  if (seen_classes.size() != metrics.per_phase_acc.size()) {
    throw ShapeError("make_results: one seen-class count per phase required");
  }
  ResultsFile r;
  for (std::size_t i = 0; i < seen_classes.size(); ++i) {
    r.phases.push_back({i + 1, seen_classes[i], metrics.per_phase_acc[i]});
  }
  r.avg_incremental_acc = metrics.avg_incremental_acc;
  r.retention_drop = metrics.retention_drop;
  return r;
}

void write_results(std::ostream& out, const ResultsFile& results) {
  for (const auto& p : results.phases) {
    out << "phase=" << p.phase << " seen_classes=" << p.seen_classes
        << " acc=" << format_double(p.acc) << '\n';
  }
  out << "A=" << format_double(results.avg_incremental_acc)
      << " R=" << format_double(results.retention_drop) << '\n';
}

ResultsFile parse_results(std::string_view text) {
  std::istringstream in{std::string(text)};
  LineReader reader(in);
  ResultsFile r;
  bool have_summary = false;
  std::string line;
  auto value = [&](std::string_view field, std::string_view key) {
    if (field.size() <= key.size() || field.substr(0, key.size()) != key ||
        field[key.size()] != '=') {
      throw ParseError("expected '" + std::string(key) + "=<value>'", reader.line_number());
    }
    return field.substr(key.size() + 1);
  };
  while (reader.next_nonblank(line)) {
    if (have_summary) throw ParseError("content after the summary line", reader.line_number());
    const auto fields = split_fields(line);
    const std::size_t ln = reader.line_number();
    if (!fields.empty() && fields[0].substr(0, 6) == "phase=") {
      if (fields.size() != 3) throw ParseError("expected 'phase= seen_classes= acc='", ln);
      PhaseResult p;
      p.phase = parse_count(value(fields[0], "phase"), ln);
      p.seen_classes = parse_count(value(fields[1], "seen_classes"), ln);
      p.acc = parse_double(value(fields[2], "acc"), ln);
      r.phases.push_back(p);
    } else {
      if (fields.size() != 2) throw ParseError("expected 'A=<float> R=<float>'", ln);
      r.avg_incremental_acc = parse_double(value(fields[0], "A"), ln);
      r.retention_drop = parse_double(value(fields[1], "R"), ln);
      have_summary = true;
    }
  }
  if (!have_summary) throw ParseError("missing 'A=<float> R=<float>' summary", reader.line_number());
  return r;
}

void write_results_csv(std::ostream& out, const ResultsFile& results) {
  out << "phase,seen_classes,acc\n";
  for (const auto& p : results.phases) {
    out << p.phase << ',' << p.seen_classes << ',' << format_double(p.acc) << '\n';
  }
}

void write_run_outputs(const ExperimentConfig& cfg, const RunOutcome& outcome) {
  if (cfg.output.empty()) throw ValidationError("config: 'output' directory is required");
  std::filesystem::create_directories(cfg.output);
  const ResultsFile results = make_results(outcome.metrics, outcome.seen_classes);
  auto open = [&](const char* name) {
    std::ofstream f(cfg.output / name, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write '" + (cfg.output / name).string() + "'");
    return f;
  };
  {
    auto f = open("results.txt");
    write_results(f, results);
  }
  {
    auto f = open("results.csv");
    write_results_csv(f, results);
  }
  {
    auto f = open("effective.cfg");
    f << format_config(cfg);
  }
  {
    auto f = open("checkpoint.rilm");
    write_checkpoint(f, outcome.final_state);
  }
}

// ---------------------------------------------------------------------------
// Equivalence check

std::vector<PhaseDataset> random_cil_problem(const RandomProblemSpec& spec, std::uint64_t seed) {
  if (spec.phases == 0 || spec.d_rp == 0 || spec.classes_per_phase == 0 ||
      spec.min_samples > spec.max_samples) {
    throw ValidationError("random_cil_problem: invalid spec");
  }
  const std::size_t raw_dim = std::max<std::size_t>(1, spec.d_rp / kDefaultExpansion);
  const RpLayer rp(raw_dim, spec.d_rp, splitmix64(seed));
  GaussianSampler rng(splitmix64(seed + 1));
  std::vector<PhaseDataset> phases;
  for (std::size_t p = 0; p < spec.phases; ++p) {
    const std::size_t span = spec.max_samples - spec.min_samples + 1;
    const std::size_t n =
        spec.min_samples + std::min(span - 1, static_cast<std::size_t>(rng.uniform() * span));
    Matrix raw(n, raw_dim);
    for (double& v : raw.data()) v = rng();
    std::vector<ClassId> ids(spec.classes_per_phase);
    std::iota(ids.begin(), ids.end(), p * spec.classes_per_phase);
    std::vector<ClassId> labels(n);
    for (auto& l : labels) {
      const auto k = static_cast<std::size_t>(rng.uniform() * spec.classes_per_phase);
      l = ids[std::min(k, ids.size() - 1)];
    }
    phases.push_back(PhaseDataset::from_labels(rp.forward(raw), labels, ids));
  }
  return phases;
}

EquivalenceReport verify_equivalence(std::span<const PhaseDataset> phases, double eta,
                                     InversePath path) {
  if (phases.empty()) throw ValidationError("verify_equivalence: no phases");
  const std::size_t d = phases.front().features.cols();
  EquivalenceReport report;
  Matrix gram(d, d);
  std::optional<RilmState> state;
  for (std::size_t n = 0; n < phases.size(); ++n) {
    state = n == 0 ? rilm_init(phases[n], eta) : rilm_learn(*state, phases[n], path);
    gram = add(gram, matmul_tn(phases[n].features, phases[n].features));
    Matrix regularized = gram;
    for (std::size_t i = 0; i < d; ++i) regularized(i, i) += eta;
    const double residual =
        frobenius_norm(subtract(matmul(state->r(), regularized), identity(d))) /
        std::sqrt(static_cast<double>(d));
    report.max_r_residual = std::max(report.max_r_residual, residual);
  }
  report.weight_rel_error = relative_error(state->w_hat(), batch_oracle(phases, eta));
  return report;
}

}  // namespace refu
