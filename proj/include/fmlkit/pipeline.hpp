#pragma once

#include <string>
#include <vector>

#include "fmlkit/config.hpp"
#include "fmlkit/ensemble.hpp"
#include "fmlkit/metrics.hpp"

namespace fmlkit {

/// Observed training windows plus a manifest describing how they were made.
struct GeneratedData {
  TrainingSet set;
  Json manifest;
};

/// Raw generation, observation and burst subsampling, processed in chunks
/// of raw trajectories so memory stays bounded. Result does not depend on
/// the chunk size or worker count.
GeneratedData generate_training_data(const BenchmarkConfig& cfg, unsigned workers = 1);

/// Writes training.bin, training.csv and dataset.json into `dir`; fills in
/// the dataset digest.
void write_generated(GeneratedData& data, const std::string& dir);

/// Model of the configured shape (its parameters are re-drawn per member).
FmlModel model_template(const BenchmarkConfig& cfg);

struct TrainedEnsemble {
  EnsembleTraining training;
  Json report;  // per-member loss decay
};

TrainedEnsemble train_from_config(const BenchmarkConfig& cfg, const TrainingSet& set, unsigned workers = 1);

/// member_XX.fml, loss_XX.csv, ensemble.json and loss_report.json.
void write_trained(const TrainedEnsemble& trained, const std::string& dir);

/// Observed true trajectories from the held-out test initial conditions,
/// each with n_memory + steps + 1 states (warm-up window first).
std::vector<Trajectory> make_test_references(const BenchmarkConfig& cfg, std::size_t steps, unsigned workers = 1);

/// True observed trajectory from a given full initial state.
Trajectory reference_from_state(const BenchmarkConfig& cfg, std::span<const double> full_state, std::size_t steps);

/// Keeps the first `count` states starting at `first`.
Trajectory slice(const Trajectory& t, std::size_t first, std::size_t count);

struct Prediction {
  Trajectory states;         // warm-up window followed by the predictions
  bool finite = true;
  std::size_t failed_step = 0;  // 1-based step that went non-finite
};

/// Ensemble rollout from the reference's warm-up window. A non-finite
/// prediction stops the rollout instead of throwing.
Prediction predict_from_reference(const EnsembleModel& ens, const Trajectory& reference, std::size_t steps);

struct Evaluation {
  ErrorSeries average;
  std::vector<ErrorSeries> per_test;
  std::size_t diverged = 0;
  Trajectory example_prediction;
  Trajectory example_reference;
};

/// Errors are measured from the last warm-up state on (horizon + 1 values);
/// steps after a divergence count as infinite error.
Evaluation evaluate_ensemble(const EnsembleModel& ens, const std::vector<Trajectory>& references, std::size_t horizon,
                             bool relative = false);

/// step,time,pred_0..,ref_0.. (reference columns omitted when `ref` is empty).
void write_trajectory_csv(const Trajectory& pred, const Trajectory* ref, const std::string& path);

/// Full generate -> train -> evaluate run. Top level of `out_dir` receives
/// summary.json, average_error.csv, example_trajectory.svg and
/// average_error.svg; intermediate files go to out_dir/work.
Json run_benchmark(const BenchmarkConfig& cfg, const std::string& out_dir, unsigned workers = 1);

/// Overlays the average-error curves of several benchmark bundles.
/// Writes comparison.svg, comparison.csv and parameters.csv.
Json run_report(const std::vector<std::string>& bundle_dirs, const std::string& out_dir);

}  // namespace fmlkit
