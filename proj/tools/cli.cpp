#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "refu/errors.hpp"
#include "refu/fusion.hpp"
#include "refu/harness.hpp"
#include "refu/io.hpp"

namespace refu::cli {
namespace {

constexpr double kVerifyTolerance = 1e-8;
constexpr double kGradcheckTolerance = 1e-4;

struct RunFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<double> eta;
  std::optional<std::size_t> d_rp_mult;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> phases;
  std::optional<std::string> pipeline;
  std::string out;
  bool force_woodbury = false;
  bool force_direct = false;
};

void add_run_flags(CLI::App& cmd, RunFlags& f) {
  cmd.add_option("--config", f.config, "Experiment config file (key = value lines)");
  cmd.add_option("--set", f.sets, "Override any config key: --set key=value (repeatable)");
  cmd.add_option("--eta", f.eta, "Ridge regularization eta (> 0)");
  cmd.add_option("--d-rp-mult", f.d_rp_mult, "Random-projection width multiplier");
  cmd.add_option("--seed", f.seed, "Seed for the random projection and synthetic data");
  cmd.add_option("--phases", f.phases, "Number of incremental phases");
  cmd.add_option("--pipeline", f.pipeline, "repoint | remesh | refu")
      ->check(CLI::IsMember({"repoint", "remesh", "refu"}));
  cmd.add_option("--out", f.out, "Output directory");
  auto* wb = cmd.add_flag("--force-woodbury", f.force_woodbury, "Always use the Woodbury update");
  auto* dr = cmd.add_flag("--force-direct", f.force_direct, "Always use the direct inverse update");
  wb->excludes(dr);
}

// Config file first, then --set entries in order, then the dedicated flags.
ExperimentConfig effective_config(const RunFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.eta) cfg.eta = *f.eta;
  if (f.d_rp_mult) {
    cfg.d_rp_multiplier = *f.d_rp_mult;
    cfg.d_rp = 0;
  }
  if (f.seed) {
    cfg.rp_seed = *f.seed;
    cfg.synth.seed = *f.seed;
  }
  if (f.phases) {
    cfg.phases = *f.phases;
    cfg.schedule.clear();
  }
  if (f.pipeline) apply_setting(cfg, "pipeline", *f.pipeline);
  if (!f.out.empty()) cfg.output = f.out;
  if (f.force_woodbury) cfg.inverse_path = InversePath::woodbury;
  if (f.force_direct) cfg.inverse_path = InversePath::direct;
  return cfg;
}

int do_run(const RunFlags& f, std::ostream& out) {
  const ExperimentConfig cfg = effective_config(f);
  const ExperimentData data = load_experiment_data(cfg);
  const RunOutcome outcome = run_experiment(cfg, data);
  write_results(out, make_results(outcome.metrics, outcome.seen_classes));
  if (!cfg.output.empty()) write_run_outputs(cfg, outcome);
  return kOk;
}

int do_gen(const RunFlags& f, std::ostream& out) {
  ExperimentConfig cfg = effective_config(f);
  if (cfg.output.empty()) throw ValidationError("gen: --out <dir> is required");
  cfg.synthetic = true;
  const ExperimentData data = load_experiment_data(cfg);
  const auto dir = cfg.output;
  std::filesystem::create_directories(dir);
  save_features(dir / "train_point.fmat", data.train.point);
  save_features(dir / "train_mesh.fmat", data.train.mesh);
  save_labels(dir / "train.labl", data.train.labels);
  save_features(dir / "test_point.fmat", data.test.point);
  save_features(dir / "test_mesh.fmat", data.test.mesh);
  save_labels(dir / "test.labl", data.test.labels);

  ExperimentConfig files = cfg;
  files.synthetic = false;
  files.train_features = "train_point.fmat";
  files.train_features_mesh = "train_mesh.fmat";
  files.train_labels = "train.labl";
  files.test_features = "test_point.fmat";
  files.test_features_mesh = "test_mesh.fmat";
  files.test_labels = "test.labl";
  files.output = "run";
  std::ofstream cfg_out(dir / "experiment.cfg", std::ios::binary | std::ios::trunc);
  if (!cfg_out) throw ValidationError("cannot write '" + (dir / "experiment.cfg").string() + "'");
  cfg_out << format_config(files);
  out << "wrote " << data.train.labels.size() << " training and " << data.test.labels.size()
      << " test rows to " << dir.string() << '\n';
  return kOk;
}

int do_verify(std::size_t phases, std::uint64_t seed, double eta, std::size_t d_rp,
              InversePath path, std::ostream& out, std::ostream& err) {
  RandomProblemSpec spec;
  spec.phases = phases;
  spec.d_rp = d_rp;
  const auto problem = random_cil_problem(spec, seed);
  const EquivalenceReport report = verify_equivalence(problem, eta, path);
  out << "max_rel_error=" << format_double(report.weight_rel_error)
      << " r_residual=" << format_double(report.max_r_residual) << '\n';
  if (report.weight_rel_error > kVerifyTolerance) {
    err << "verify: recursive weights differ from the joint solution by "
        << report.weight_rel_error << " (tolerance " << kVerifyTolerance << ")\n";
    return kNumericalError;
  }
  return kOk;
}

int do_gradcheck(std::uint64_t seed, std::size_t trials, std::ostream& out, std::ostream& err) {
  const double worst = random_gradient_check(seed, trials);
  out << "max_rel_error=" << format_double(worst) << '\n';
  if (worst > kGradcheckTolerance) {
    err << "gradcheck: analytic and finite-difference gradients differ by " << worst
        << " (tolerance " << kGradcheckTolerance << ")\n";
    return kNumericalError;
  }
  return kOk;
}

int do_metrics(const std::string& in_path, const std::vector<double>& accs, std::ostream& out) {
  MetricsReport m;
  if (!in_path.empty()) {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw ValidationError("cannot open results file '" + in_path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    ResultsFile r;
    try {
      r = parse_results(buf.str());
    } catch (const ParseError& e) {
      throw e.in_file(in_path);
    }
    std::vector<double> per_phase;
    for (const auto& p : r.phases) per_phase.push_back(p.acc);
    if (per_phase.empty()) {
      out << "A=" << format_double(r.avg_incremental_acc) << " R=" << format_double(r.retention_drop)
          << '\n';
      return kOk;
    }
    m = compute_metrics(per_phase);
  } else {
    m = compute_metrics(accs);
  }
  out << "A=" << format_double(m.avg_incremental_acc) << " R=" << format_double(m.retention_drop)
      << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"refu: recursive exemplar-free class-incremental learning"};
  app.name("refu");
  app.require_subcommand(1);

  RunFlags gen_flags;
  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset as FMAT/LABL files plus a config");
  add_run_flags(*gen, gen_flags);

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run a class-incremental experiment");
  add_run_flags(*run_cmd, run_flags);

  std::size_t verify_phases = 4;
  std::uint64_t verify_seed = 0;
  double verify_eta = 1.0;
  std::size_t verify_d_rp = 128;
  bool verify_woodbury = false;
  bool verify_direct = false;
  auto* verify = app.add_subcommand(
      "verify", "Compare recursive weights against the joint closed-form solution");
  verify->add_option("--phases", verify_phases, "Number of phases")->capture_default_str();
  verify->add_option("--seed", verify_seed, "Problem seed")->capture_default_str();
  verify->add_option("--eta", verify_eta, "Ridge regularization eta")->capture_default_str();
  verify->add_option("--d-rp", verify_d_rp, "Projected feature width")->capture_default_str();
  auto* vw = verify->add_flag("--force-woodbury", verify_woodbury, "Always use the Woodbury update");
  auto* vd = verify->add_flag("--force-direct", verify_direct, "Always use the direct update");
  vw->excludes(vd);

  std::uint64_t grad_seed = 0;
  std::size_t grad_trials = 10;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Check fusion-layer gradients against central finite differences");
  gradcheck->add_option("--seed", grad_seed, "Seed for parameters and data")->capture_default_str();
  gradcheck->add_option("--trials", grad_trials, "Random points to check")->capture_default_str();

  std::string metrics_in;
  std::vector<double> metrics_accs;
  auto* metrics = app.add_subcommand("metrics", "Average incremental accuracy and retention drop");
  auto* m_in = metrics->add_option("--in", metrics_in, "Results file to summarize");
  auto* m_acc = metrics->add_option("--acc", metrics_accs, "Per-phase accuracies in percent")
                    ->delimiter(',');
  m_in->excludes(m_acc);
  metrics->require_option(1);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (gen->parsed()) return do_gen(gen_flags, out);
    if (run_cmd->parsed()) return do_run(run_flags, out);
    if (verify->parsed()) {
      const InversePath path = verify_woodbury ? InversePath::woodbury
                               : verify_direct ? InversePath::direct
                                               : InversePath::automatic;
      return do_verify(verify_phases, verify_seed, verify_eta, verify_d_rp, path, out, err);
    }
    if (gradcheck->parsed()) return do_gradcheck(grad_seed, grad_trials, out, err);
    if (metrics->parsed()) return do_metrics(metrics_in, metrics_accs, out);
  } catch (const NumericalError& e) {
    err << "refu: numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const Error& e) {
    err << "refu: " << e.what() << '\n';
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "refu: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}

}  // namespace refu::cli
