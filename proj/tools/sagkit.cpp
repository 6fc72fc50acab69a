// sagkit - train small 1D CNN classifiers, plant point shortcuts into one
// class of the training data, and detect class-level shortcut learning from
// aggregated input gradients.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sag/csv.hpp"
#include "sag/gradcheck_suite.hpp"
#include "sag/metrics.hpp"
#include "sag/reference_table.hpp"
#include "sag/runner.hpp"

namespace {

constexpr int kExitLoadFailure = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitWriteFailure = 4;
constexpr int kExitChecksumMismatch = 5;

struct RunOptions {
  std::string data_prefix;
  bool synthetic = false;
  std::size_t synth_n = 20;
  std::size_t synth_m = 64;
  double synth_sigma = 0.1;
  double epsilon = 0.15;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;
  int epochs = 100;
  double lr = 1e-3;
  int batch = 0;
  int inject_class = 1;
  std::size_t inject_pos = 0;
  std::size_t inject_width = 1;
  double amplitude_k = 2.0;
  double amplitude_abs = 0.0;
  std::string delta_variant = "abs-of-mean";
  std::string out_dir;
  int jobs = 1;
  bool save_models = false;

  CLI::Option* amplitude_abs_opt = nullptr;
};

void add_run_options(CLI::App& sub, RunOptions& o, bool force_synthetic) {
  if (!force_synthetic) {
    sub.add_option("--data", o.data_prefix,
                   "UCR file prefix; expects <prefix>_TRAIN.tsv and <prefix>_TEST.tsv");
    sub.add_flag("--synthetic", o.synthetic, "use the built-in synthetic generator (default when --data is absent)");
  }
  sub.add_option("--synth-n", o.synth_n, "synthetic samples per class")->capture_default_str();
  sub.add_option("--synth-m", o.synth_m, "synthetic series length")->capture_default_str();
  sub.add_option("--synth-sigma", o.synth_sigma, "synthetic noise standard deviation")->capture_default_str();
  sub.add_option("--epsilon", o.epsilon, "detection threshold in (0,1)")
      ->check(CLI::Range(1e-9, 1.0 - 1e-9))
      ->capture_default_str();
  sub.add_option("--seed", o.seed, "single run seed")->capture_default_str();
  sub.add_option("--seeds", o.seeds, "comma-separated list of run seeds (overrides --seed)")->delimiter(',');
  sub.add_option("--epochs", o.epochs, "training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--batch", o.batch, "batch size; 0 = min(16, n)")->capture_default_str();
  sub.add_option("--inject-class", o.inject_class, "class that receives the shortcut")->capture_default_str();
  sub.add_option("--inject-pos", o.inject_pos, "time index of the shortcut")->capture_default_str();
  sub.add_option("--inject-width", o.inject_width, "shortcut width in time steps")->capture_default_str();
  sub.add_option("--amplitude-k", o.amplitude_k, "relative amplitude: global max + k * global std")
      ->capture_default_str();
  o.amplitude_abs_opt = sub.add_option("--amplitude-abs", o.amplitude_abs, "absolute amplitude (overrides --amplitude-k)");
  sub.add_option("--delta-variant", o.delta_variant, "gradient folding: abs-of-mean | mean-of-abs")
      ->check(CLI::IsMember({"abs-of-mean", "mean-of-abs"}))
      ->capture_default_str();
  sub.add_option("--out", o.out_dir, "output directory for CSV/SVG artifacts");
  sub.add_option("--jobs", o.jobs, "parallel (seed x regime) jobs")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_flag("--save-models", o.save_models, "also write a model checkpoint per regime");
  sub.set_config("--config", "", "flat key=value config file; command-line flags override it");
}

sag::ExperimentConfig build_config(const RunOptions& o, bool force_synthetic) {
  sag::ExperimentConfig cfg;
  if (!force_synthetic && !o.data_prefix.empty()) {
    cfg.source.ucr_prefix = std::filesystem::path(o.data_prefix);
  }
  cfg.source.synth.n_per_class = o.synth_n;
  cfg.source.synth.length = o.synth_m;
  cfg.source.synth.noise_sigma = o.synth_sigma;
  cfg.shortcut.target_class = o.inject_class;
  cfg.shortcut.position = o.inject_pos;
  cfg.shortcut.width = o.inject_width;
  cfg.shortcut.amplitude = (o.amplitude_abs_opt && o.amplitude_abs_opt->count() > 0)
                               ? sag::Amplitude::absolute(o.amplitude_abs)
                               : sag::Amplitude::relative(o.amplitude_k);
  cfg.train_cfg.epochs = o.epochs;
  cfg.train_cfg.learning_rate = o.lr;
  cfg.train_cfg.batch_size = o.batch;
  cfg.epsilon = o.epsilon;
  cfg.variant = o.delta_variant == "mean-of-abs" ? sag::DeltaVariant::mean_of_abs : sag::DeltaVariant::abs_of_mean;
  cfg.seeds = o.seeds.empty() ? std::vector<std::uint64_t>{o.seed} : o.seeds;
  cfg.out_dir = o.out_dir;
  cfg.jobs = o.jobs;
  cfg.save_models = o.save_models;
  return cfg;
}

struct Aggregate {
  std::size_t pairs = 0;
  std::size_t shortcut_detected_correct = 0;
  std::size_t clean_false_positive = 0;
  std::size_t accuracy_dropped = 0;
  std::size_t concentration_hits = 0;
  double mean_drop = 0.0;
};

Aggregate aggregate_results(const std::vector<sag::RegimeResult>& results, const sag::ExperimentConfig& cfg) {
  Aggregate agg;
  for (std::size_t i = 0; i + 1 < results.size(); i += 2) {
    const sag::RegimeResult& clean = results[i];
    const sag::RegimeResult& shortcut = results[i + 1];
    ++agg.pairs;
    if (shortcut.report.detected && shortcut.report.detected_class &&
        *shortcut.report.detected_class == cfg.shortcut.target_class)
      ++agg.shortcut_detected_correct;
    if (clean.report.detected) ++agg.clean_false_positive;
    const double drop = clean.final_test_acc - shortcut.final_test_acc;
    agg.mean_drop += drop;
    if (drop > 0.0) ++agg.accuracy_dropped;
    if (shortcut.delta_argmax_target == cfg.shortcut.position) ++agg.concentration_hits;
  }
  if (agg.pairs > 0) agg.mean_drop /= static_cast<double>(agg.pairs);
  return agg;
}

void print_results(const std::vector<sag::RegimeResult>& results, const sag::ExperimentConfig& cfg) {
  std::printf("%-8s %-9s %-10s %-10s %-22s %s\n", "seed", "regime", "train_acc", "test_acc", "sag (per class)",
              "detected");
  for (const auto& r : results) {
    std::string scores;
    for (double s : r.report.sag) scores += sag::format_fixed(s, 4) + " ";
    std::string verdict = "-";
    if (r.report.detected) verdict = "class " + std::to_string(*r.report.detected_class);
    std::printf("%-8llu %-9s %-10.3f %-10.3f %-22s %s\n", static_cast<unsigned long long>(r.seed),
                sag::to_string(r.regime), r.final_train_acc, r.final_test_acc, scores.c_str(), verdict.c_str());
  }
  const Aggregate agg = aggregate_results(results, cfg);
  std::printf("\nacross %zu seed(s), epsilon = %s:\n", agg.pairs, sag::format_double(cfg.epsilon).c_str());
  std::printf("  shortcut regime detected with the injected class: %zu/%zu\n", agg.shortcut_detected_correct,
              agg.pairs);
  std::printf("  regular regime false positives:                   %zu/%zu\n", agg.clean_false_positive, agg.pairs);
  std::printf("  test accuracy dropped under injection:            %zu/%zu (mean drop %.3f)\n",
              agg.accuracy_dropped, agg.pairs, agg.mean_drop);
  std::printf("  gradient mass concentrated at the injected point: %zu/%zu\n", agg.concentration_hits, agg.pairs);
}

int exec_run(const RunOptions& opts, bool force_synthetic, bool bench_summary) {
  sag::ExperimentConfig cfg = build_config(opts, force_synthetic);
  try {
    cfg.validate();
    (void)sag::detail::load_for_seed(cfg.source, cfg.seeds.front());
  } catch (const sag::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitLoadFailure;
  }
  std::vector<sag::RegimeResult> results;
  try {
    results = sag::run_experiment(cfg);
  } catch (const sag::divergence_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const sag::io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitWriteFailure;
  }
  print_results(results, cfg);
  if (bench_summary && !cfg.out_dir.empty()) {
    const Aggregate agg = aggregate_results(results, cfg);
    try {
      auto out = sag::detail::open_out(cfg.out_dir / "bench_summary.csv");
      out << "pairs,detected_correct,false_positives,accuracy_dropped,mean_drop,concentration_hits\n";
      out << agg.pairs << ',' << agg.shortcut_detected_correct << ',' << agg.clean_false_positive << ','
          << agg.accuracy_dropped << ',' << sag::format_double(agg.mean_drop) << ',' << agg.concentration_hits
          << '\n';
      sag::detail::finish(out, cfg.out_dir / "bench_summary.csv");
    } catch (const sag::io_error& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitWriteFailure;
    }
  }
  return 0;
}

int exec_replay(const std::string& fixture, double epsilon) {
  std::string bytes;
  try {
    bytes = sag::read_file_bytes(fixture);
  } catch (const sag::io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitLoadFailure;
  }
  const std::uint64_t checksum = sag::fnv1a64(bytes);
  if (checksum != sag::kReferenceTableChecksum) {
    std::fprintf(stderr, "error: %s: checksum %016llx does not match the bundled reference table (%016llx)\n",
                 fixture.c_str(), static_cast<unsigned long long>(checksum),
                 static_cast<unsigned long long>(sag::kReferenceTableChecksum));
    return kExitChecksumMismatch;
  }
  sag::MetricSummary s;
  try {
    s = sag::replay_score_table(sag::parse_score_table(bytes), epsilon);
  } catch (const sag::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  std::printf("reference table: %zu datasets, epsilon = %s\n", s.n_datasets, sag::format_double(epsilon).c_str());
  std::printf("%-10s %-15s %-15s %-12s %-12s %s\n", "regime", "class0_correct", "class1_correct", "class0_acc",
              "class1_acc", "dataset_acc");
  const auto row = [&](const char* name, const sag::RegimeMetrics& rm) {
    std::printf("%-10s %-15zu %-15zu %-12s %-12s %s\n", name, rm.class_correct[0], rm.class_correct[1],
                sag::format_fixed(rm.class_accuracy[0], 3).c_str(),
                sag::format_fixed(rm.class_accuracy[1], 3).c_str(),
                sag::format_fixed(rm.dataset_accuracy, 3).c_str());
  };
  row("regular", s.regular);
  row("shortcut", s.shortcut);

  if (epsilon == sag::kReferenceEpsilon) {
    const auto& exp = sag::kExpectedReferenceSummary;
    const bool ok = s.regular.class_correct[0] == exp.regular_class_correct[0] &&
                    s.regular.class_correct[1] == exp.regular_class_correct[1] &&
                    s.shortcut.class_correct[0] == exp.shortcut_class_correct[0] &&
                    s.shortcut.class_correct[1] == exp.shortcut_class_correct[1] &&
                    sag::format_fixed(s.regular.dataset_accuracy, 3) == sag::format_fixed(exp.regular_dataset_accuracy, 3) &&
                    sag::format_fixed(s.shortcut.dataset_accuracy, 3) == sag::format_fixed(exp.shortcut_dataset_accuracy, 3);
    std::printf("expected summary at epsilon %.2f: %s\n", sag::kReferenceEpsilon, ok ? "match" : "MISMATCH");
    return ok ? 0 : 1;
  }
  return 0;
}

int exec_gradcheck(std::uint64_t seed, int runs, bool sabotage) {
  const sag::GradcheckSuiteReport r = sag::run_gradcheck_suite(seed, runs, sabotage);
  for (std::size_t i = 0; i < r.per_seed_error.size(); ++i) {
    std::printf("seed %llu: max relative error %.3e\n", static_cast<unsigned long long>(seed + i),
                r.per_seed_error[i]);
  }
  std::printf("checked %zu coordinates (%zu excluded near ReLU kinks), max relative error %.3e, tolerance %.0e: %s\n",
              r.coordinates_checked, r.coordinates_excluded, r.max_rel_error, sag::kGradcheckTolerance,
              r.pass ? "pass" : "FAIL");
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-shortcut injection and gradient-based shortcut detection for time-series classifiers"};
  app.require_subcommand(1);

  RunOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "train clean and injected variants per seed, score and report");
  add_run_options(*run, run_opts, false);

  RunOptions bench_opts;
  bench_opts.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  bench_opts.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  CLI::App* bench = app.add_subcommand("synth-bench", "multi-seed synthetic benchmark of the detector");
  add_run_options(*bench, bench_opts, true);

  std::string fixture = "data/reference_scores.csv";
  double replay_epsilon = 0.15;
  CLI::App* replay = app.add_subcommand("replay-table", "recompute detection metrics from the bundled score table");
  replay->add_option("--fixture", fixture, "path to the score table CSV")->capture_default_str();
  replay->add_option("--epsilon", replay_epsilon, "detection threshold")
      ->check(CLI::Range(1e-9, 1.0))
      ->capture_default_str();

  std::uint64_t gc_seed = 1;
  int gc_runs = 5;
  bool gc_sabotage = false;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of the model gradients");
  gradcheck->add_option("--seed", gc_seed, "base seed")->capture_default_str();
  gradcheck->add_option("--runs", gc_runs, "number of derived seeds")->check(CLI::PositiveNumber)->capture_default_str();
  gradcheck->add_flag("--sabotage", gc_sabotage, "corrupt the analytic gradient; the audit must fail")
      ->group("");  // test hook, hidden from help

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) return exec_run(run_opts, false, false);
    if (bench->parsed()) return exec_run(bench_opts, true, true);
    if (replay->parsed()) return exec_replay(fixture, replay_epsilon);
    if (gradcheck->parsed()) return exec_gradcheck(gc_seed, gc_runs, gc_sabotage);
  } catch (const sag::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
