#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fmlkit/data.hpp"
#include "fmlkit/fml.hpp"

namespace fmlkit {

using Json = nlohmann::ordered_json;

/// Everything needed to run one benchmark end to end. Serialized as JSON.
struct BenchmarkConfig {
  std::string name;                // e.g. "5.1.1"
  std::string preset = "custom";   // paper | desk | custom
  std::string system;              // benchmark system id
  std::map<std::string, double> overrides;
  std::map<std::string, std::pair<double, double>> random_params;  // redrawn per trajectory
  double dt = 0.01;
  Domain domain;
  std::size_t n_traj = 0;
  std::size_t length = 0;
  std::size_t n_burst = 1;
  std::size_t n_memory = 0;
  std::size_t n_multistep = 0;
  std::vector<std::size_t> hidden;
  double learning_rate = 1e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 1000;
  double cyclic_max = 0.0;           // > 0 switches to a triangular cyclic schedule
  std::size_t cycle_epochs = 1000;
  std::size_t n_model = 1;
  std::vector<std::size_t> observe;  // observed state indices
  std::size_t test_count = 100;
  std::size_t horizon = 100;         // prediction steps after the warm-up window
  bool residual = true;
  bool relative_error = false;
  std::uint64_t seed = 1;
  std::size_t substeps = 10;
  std::string output_dir;

  bool operator==(const BenchmarkConfig&) const = default;

  // Independent RNG streams derived from `seed`.
  std::uint64_t data_seed() const { return derive_seed(seed, 1); }
  std::uint64_t burst_seed() const { return derive_seed(seed, 2); }
  std::uint64_t train_seed() const { return derive_seed(seed, 3); }
  std::uint64_t test_seed() const { return derive_seed(seed, 4); }

  RawDataConfig raw_config() const;
  SamplingPlan sampling_plan() const;
  TrainingConfig training_config() const;
  ObservableMap observable() const;
  std::size_t window_length() const { return required_window_length(n_memory, n_multistep); }

  /// Throws Error naming the offending field.
  void validate() const;
};

Json to_json(const BenchmarkConfig& cfg);
BenchmarkConfig config_from_json(const Json& j);
BenchmarkConfig load_config(const std::string& path);
void save_config(const BenchmarkConfig& cfg, const std::string& path);

/// Digest of the canonical serialization; `output_dir` is excluded so a
/// bundle's identity does not depend on where it was written.
std::string config_digest(const BenchmarkConfig& cfg);

/// Benchmark names in the order they appear in the suite ("5.1.1", ...).
const std::vector<std::string>& benchmark_names();

/// `preset` is "paper" (full-scale parameters) or "desk" (1e3 raw
/// trajectories, 2e3 epochs, 3 members).
BenchmarkConfig make_preset(const std::string& name, const std::string& preset);

}  // namespace fmlkit
