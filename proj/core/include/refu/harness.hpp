#pragma once

// Class-incremental experiment harness: phase schedules, data sources,
// the RePoint / ReMesh / ReFu pipelines, a naive sequential baseline,
// metrics and result files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refu/fusion.hpp"
#include "refu/matrix.hpp"
#include "refu/phase.hpp"
#include "refu/random_projection.hpp"
#include "refu/rilm.hpp"

namespace refu {

// ---------------------------------------------------------------------------
// Schedules

struct PhaseSchedule {
  std::size_t total_classes = 0;
  std::vector<std::vector<ClassId>> phases;

  /// Pairwise disjoint, union == {0..total_classes-1}, no empty phase unless allowed.
  void validate(bool allow_empty_phases = false) const;

  /// Splits `class_order` into `num_phases` contiguous chunks; earlier chunks
  /// take the remainder. Each chunk is sorted.
  static PhaseSchedule split(std::span<const ClassId> class_order, std::size_t num_phases);
  /// split() over 0..total-1 in natural order.
  static PhaseSchedule even(std::size_t total_classes, std::size_t num_phases);
  /// Parses "0,1,2;3,4;5" (phases separated by ';', ids by ',').
  static PhaseSchedule parse(std::string_view text, std::size_t total_classes);

  std::string to_string() const;
};

/// Fisher-Yates permutation of 0..total-1 driven by std::mt19937_64(seed).
std::vector<ClassId> shuffled_classes(std::size_t total_classes, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics

struct MetricsReport {
  std::vector<double> per_phase_acc;  // percent, one per phase
  double avg_incremental_acc = 0.0;   // mean of per_phase_acc
  double retention_drop = 0.0;        // first − last
};

/// Throws ValidationError on an empty list or a value outside [0, 100].
MetricsReport compute_metrics(std::span<const double> per_phase_acc);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthData {
  Matrix features;
  std::vector<ClassId> labels;
};

/// Isotropic Gaussian clusters: class c has mean separation·u_c and unit
/// covariance, rows grouped by class. The unit directions u_c depend only on
/// (dim, direction_seed); the noise depends on `seed`.
SynthData synth_dataset(std::size_t classes, std::size_t per_class, std::size_t dim,
                        double separation, std::uint64_t seed,
                        std::uint64_t direction_seed = 0x5eed'd1ec'0000'0001ULL);

// ---------------------------------------------------------------------------
// Experiment configuration

enum class Pipeline { repoint, remesh, refu };
enum class Learner { rilm, naive };

std::string_view to_string(Pipeline p);
std::string_view to_string(Learner l);
std::string_view to_string(InversePath p);

struct SyntheticSpec {
  std::size_t classes = 6;
  std::size_t train_per_class = 60;
  std::size_t test_per_class = 30;
  std::size_t dim = 16;
  double separation = 4.0;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  double eta = 1.0;
  std::size_t d_rp_multiplier = kDefaultExpansion;
  std::size_t d_rp = 0;  // 0: d_rp_multiplier × feature width
  std::uint64_t rp_seed = 0;
  Activation activation = Activation::relu;
  Distribution distribution = Distribution::normal;
  Pipeline pipeline = Pipeline::repoint;
  Learner learner = Learner::rilm;
  InversePath inverse_path = InversePath::automatic;

  std::size_t phases = 3;
  std::string schedule;  // explicit "0,1;2,3"; overrides `phases` when set
  std::optional<std::uint64_t> shuffle_seed;

  bool synthetic = true;
  SyntheticSpec synth;
  std::filesystem::path train_features;       // point cloud (or sole) features
  std::filesystem::path train_features_mesh;  // mesh features (remesh / refu)
  std::filesystem::path train_labels;
  std::filesystem::path test_features;
  std::filesystem::path test_features_mesh;
  std::filesystem::path test_labels;

  std::filesystem::path fusion_checkpoint;  // empty: seeded init
  std::uint64_t fusion_seed = 0;
  std::size_t fusion_pretrain_epochs = 0;  // >0: train on phase-0 data, then freeze
  double fusion_lr = kFusionLearningRate;

  std::filesystem::path output;  // output directory
};

/// Sets one `key = value` entry; unknown keys and bad values throw ValidationError.
/// Relative paths resolve against `base_dir` when it is non-empty.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value,
                   const std::filesystem::path& base_dir = {});
/// Line-oriented `key = value`, `#` comments. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every key with its effective value, in a stable order; parse_config reads it back.
std::string format_config(const ExperimentConfig& cfg);
/// Semantic checks: eta > 0, referenced files exist, pipeline inputs present.
void validate_config(const ExperimentConfig& cfg);

/// Schedule for `total_classes`, from `schedule` / `phases` / `shuffle_seed`.
PhaseSchedule resolve_schedule(const ExperimentConfig& cfg, std::size_t total_classes);

// ---------------------------------------------------------------------------
// Data

struct ModalSplit {
  Matrix point;  // may be empty (0 columns) when the source has no point features
  Matrix mesh;   // may be empty when the source has no mesh features
  std::vector<ClassId> labels;
};

struct ExperimentData {
  ModalSplit train;
  ModalSplit test;
  std::size_t total_classes = 0;
};

/// Synthetic: both modalities, independent cluster directions per modality.
/// Files: FMAT/LABL per split.
ExperimentData load_experiment_data(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Runs

struct EvalContext {
  std::size_t phase = 0;  // 0-based
  const RilmState& state;
  const Matrix& test_features;  // projected, rows of seen classes only
  std::span<const ClassId> test_labels;
};

/// Returns accuracy in percent.
using Evaluator = std::function<double(const EvalContext&)>;

double accuracy_percent(std::span<const ClassId> predicted, std::span<const ClassId> truth);

struct RunOutcome {
  MetricsReport metrics;
  std::vector<std::size_t> seen_classes;  // per phase
  RilmState final_state = RilmState::fresh(1, 1.0);
  std::vector<ClassId> final_predictions;  // test rows of all seen classes, in data order
  std::vector<ClassId> final_truth;
};

/// Runs the configured learner phase by phase. Per phase: select that phase's
/// training rows, (ReFu) fuse, project, absorb, discard; then evaluate on the
/// test rows of every class seen so far.
RunOutcome run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                          const Evaluator& evaluator = {});

/// RILM learner regardless of cfg.learner.
MetricsReport run_pipeline(const ExperimentConfig& cfg, const Evaluator& evaluator = {});
/// Ridge refit on the current phase only, every weight column overwritten.
MetricsReport run_naive_baseline(const ExperimentConfig& cfg, const Evaluator& evaluator = {});

/// Predictions of the joint ridge model trained on all training rows at once,
/// over the same test rows (and order) as RunOutcome::final_predictions.
std::vector<ClassId> joint_model_predictions(const ExperimentConfig& cfg,
                                             const ExperimentData& data);

// ---------------------------------------------------------------------------
// Result files

struct PhaseResult {
  std::size_t phase = 0;  // 1-based
  std::size_t seen_classes = 0;
  double acc = 0.0;
};

struct ResultsFile {
  std::vector<PhaseResult> phases;
  double avg_incremental_acc = 0.0;
  double retention_drop = 0.0;
};

ResultsFile make_results(const MetricsReport& metrics, std::span<const std::size_t> seen_classes);
/// `phase=<n> seen_classes=<k> acc=<float>` per phase, then `A=<float> R=<float>`.
void write_results(std::ostream& out, const ResultsFile& results);
ResultsFile parse_results(std::string_view text);
/// `phase,seen_classes,acc` header plus one row per phase.
void write_results_csv(std::ostream& out, const ResultsFile& results);

/// Writes results.txt, results.csv, effective.cfg and checkpoint.rilm under cfg.output.
void write_run_outputs(const ExperimentConfig& cfg, const RunOutcome& outcome);

// ---------------------------------------------------------------------------
// Equivalence check on random problems

struct RandomProblemSpec {
  std::size_t phases = 4;
  std::size_t d_rp = 128;
  std::size_t min_samples = 50;
  std::size_t max_samples = 200;
  std::size_t classes_per_phase = 3;
};

/// Random projected phases: Gaussian encoder features of width max(1, d_rp/12)
/// through a seeded relu projection, random labels over each phase's classes.
std::vector<PhaseDataset> random_cil_problem(const RandomProblemSpec& spec, std::uint64_t seed);

struct EquivalenceReport {
  double weight_rel_error = 0.0;  // recursive Ŵ_N vs batch oracle
  double max_r_residual = 0.0;    // max over phases of ‖R(ΣA + ηI) − I‖_F / √d_RP
};

EquivalenceReport verify_equivalence(std::span<const PhaseDataset> phases, double eta,
                                     InversePath path = InversePath::automatic);

}  // namespace refu
