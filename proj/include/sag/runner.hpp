#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sag/csv.hpp"
#include "sag/dataset.hpp"
#include "sag/errors.hpp"
#include "sag/inject.hpp"
#include "sag/metrics.hpp"
#include "sag/model.hpp"
#include "sag/score.hpp"
#include "sag/svg.hpp"

namespace sag {

/// Where the data comes from: a UCR file prefix or the synthetic generator.
struct DataSource {
  std::optional<std::filesystem::path> ucr_prefix;
  SyntheticSpec synth;

  bool synthetic() const { return !ucr_prefix.has_value(); }

  std::string dataset_name() const {
    return synthetic() ? "synthetic" : ucr_prefix->filename().string();
  }
};

struct ExperimentConfig {
  DataSource source;
  ShortcutSpec shortcut;
  TrainConfig train_cfg;
  double epsilon = 0.15;
  DeltaVariant variant = DeltaVariant::abs_of_mean;
  std::vector<std::uint64_t> seeds = {1};
  std::filesystem::path out_dir;  // empty: nothing written
  int jobs = 1;
  bool save_models = false;

  void validate() const {
    if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw input_error("config: epsilon must lie in (0, 1)");
    if (seeds.empty()) throw input_error("config: need at least one seed");
    if (jobs < 1) throw input_error("config: jobs must be >= 1");
  }
};

/// Everything one (seed, regime) job produces.
struct RegimeResult {
  std::uint64_t seed = 0;
  Regime regime = Regime::regular;
  TrainRecord record;
  ClassGradientProfile profile;
  SagReport report;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
  std::size_t delta_argmax_target = 0;  // argmax_t of delta for the injection target class
  std::size_t mean_abs_argmax_target = 0;  // argmax_t of mean |G| over target-class rows
};

namespace detail {

/// Data for one seed. Synthetic data re-draws with the run seed so each run
/// is an independent replicate; UCR data is fixed and z-normalized.
inline DatasetSplit load_for_seed(const DataSource& source, std::uint64_t seed) {
  if (source.synthetic()) {
    SyntheticSpec spec = source.synth;
    spec.seed = seed;
    return make_synthetic(spec);
  }
  DatasetSplit split = load_ucr_tsv(*source.ucr_prefix);
  split.train = z_normalize(split.train);
  split.test = z_normalize(split.test);
  return split;
}

inline std::size_t argmax_row(const Tensor& matrix, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t t = 1; t < matrix.dim(1); ++t) {
    if (matrix.at(row, t) > matrix.at(row, best)) best = t;
  }
  return best;
}

}  // namespace detail

/// Train and score one regime of one seed. The test split is handed to the
/// trainer untouched in both regimes; only the training rows of the target
/// class are ever modified, and only in the shortcut regime.
inline RegimeResult run_regime(const DatasetSplit& clean, const ExperimentConfig& cfg, std::uint64_t seed,
                               Regime regime) {
  DatasetSplit split = clean;
  if (regime == Regime::shortcut) {
    InjectionResult injected = inject(split.train, cfg.shortcut);
    if (!verify_receipt(split.train, injected.set, injected.receipt))
      throw contract_error("runner: injection receipt failed verification");
    split.train = std::move(injected.set);
  }
  // The injector never sees the test split; make that impossible to regress.
  if (split.test.values != clean.test.values)
    throw contract_error("runner: test split was modified");

  TrainConfig tc = cfg.train_cfg;
  tc.seed = seed;
  ResidualCNN1D model = init_model({16, 16, 32, 32}, split.train.class_count, seed);
  auto [trained, record] = train(std::move(model), split, tc);

  RegimeResult result;
  result.seed = seed;
  result.regime = regime;
  result.record = std::move(record);
  result.final_train_acc = result.record.train_acc.back();
  result.final_test_acc = result.record.test_acc.back();

  const Tensor g = input_gradients(trained, split.train);
  result.profile = point_shortcut_score(g, split.train.labels, split.train.class_count, cfg.variant);
  result.report = detect(sag_scores(result.profile), cfg.epsilon);

  const auto target = static_cast<std::size_t>(cfg.shortcut.target_class);
  result.delta_argmax_target = detail::argmax_row(result.profile.delta, target);

  Tensor mean_abs = Tensor::zeros({1, split.train.length});
  std::size_t target_rows = 0;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    if (split.train.labels[i] != cfg.shortcut.target_class) continue;
    ++target_rows;
    for (std::size_t t = 0; t < split.train.length; ++t) mean_abs.at(0, t) += std::abs(g.at(i, t));
  }
  if (target_rows > 0) result.mean_abs_argmax_target = detail::argmax_row(mean_abs, 0);

  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir = cfg.out_dir / ("seed" + std::to_string(seed)) / to_string(regime);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());

    write_train_record_csv(dir / "train_record.csv", result.record);
    write_sag_report_csv(dir / "sag_report.csv", cfg.source.dataset_name(), to_string(regime), result.report);
    write_delta_profile_csv(dir / "delta_profile.csv", result.profile);

    SvgChart loss;
    loss.title = cfg.source.dataset_name() + " " + to_string(regime) + " loss (seed " + std::to_string(seed) + ")";
    loss.x_label = "epoch";
    loss.y_label = "cross-entropy";
    loss.series = {{"train", result.record.train_loss}, {"test", result.record.test_loss}};
    write_line_chart(dir / "loss.svg", loss);

    SvgChart delta;
    delta.title = cfg.source.dataset_name() + " " + to_string(regime) + " gradient profile (seed " +
                  std::to_string(seed) + ")";
    delta.x_label = "t";
    delta.y_label = "delta";
    for (std::size_t c = 0; c < result.profile.classes(); ++c) {
      SvgSeries s;
      s.label = "class " + std::to_string(c);
      s.y.resize(result.profile.length());
      for (std::size_t t = 0; t < result.profile.length(); ++t) s.y[t] = result.profile.delta.at(c, t);
      delta.series.push_back(std::move(s));
    }
    write_line_chart(dir / "delta.svg", delta);

    if (cfg.save_models) save_checkpoint(trained, dir / "model.ckpt");
  }
  return result;
}

/// All (seed x regime) jobs, optionally across a thread pool. Results come
/// back in a fixed order (seed-major, regular before shortcut) regardless of
/// the schedule; each job owns its tape, model, and output files.
inline std::vector<RegimeResult> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw io_error("cannot create " + cfg.out_dir.string() + ": " + ec.message());
  }
  struct Job {
    std::uint64_t seed;
    Regime regime;
  };
  std::vector<Job> jobs;
  for (std::uint64_t seed : cfg.seeds) {
    jobs.push_back({seed, Regime::regular});
    jobs.push_back({seed, Regime::shortcut});
  }

  std::vector<RegimeResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  const auto worker = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      try {
        const DatasetSplit clean = detail::load_for_seed(cfg.source, jobs[j].seed);
        results[j] = run_regime(clean, cfg, jobs[j].seed, jobs[j].regime);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), jobs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  if (!cfg.out_dir.empty()) {
    auto out = detail::open_out(cfg.out_dir / "summary.csv");
    out << "seed,regime,final_train_acc,final_test_acc";
    const std::size_t classes = results.front().report.sag.size();
    for (std::size_t c = 0; c < classes; ++c) out << ",sag_class" << c;
    out << ",epsilon,detected,detected_class,delta_argmax_class" << cfg.shortcut.target_class << "\n";
    for (const auto& r : results) {
      out << r.seed << ',' << to_string(r.regime) << ',' << format_double(r.final_train_acc) << ','
          << format_double(r.final_test_acc);
      for (double s : r.report.sag) out << ',' << format_double(s);
      out << ',' << format_double(r.report.epsilon) << ',' << (r.report.detected ? 1 : 0) << ',';
      if (r.report.detected_class) out << *r.report.detected_class;
      out << ',' << r.delta_argmax_target << '\n';
    }
    detail::finish(out, cfg.out_dir / "summary.csv");

    auto manifest = detail::open_out(cfg.out_dir / "manifest.csv");
    manifest << "path\n";
    std::vector<std::string> paths = {"summary.csv"};
    for (const auto& r : results) {
      const std::string base = "seed" + std::to_string(r.seed) + "/" + to_string(r.regime) + "/";
      for (const char* f : {"train_record.csv", "sag_report.csv", "delta_profile.csv", "loss.svg", "delta.svg"})
        paths.push_back(base + f);
      if (cfg.save_models) paths.push_back(base + "model.ckpt");
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) manifest << p << '\n';
    detail::finish(manifest, cfg.out_dir / "manifest.csv");
  }
  return results;
}

}  // namespace sag
