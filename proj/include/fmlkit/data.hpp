#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fmlkit/common.hpp"
#include "fmlkit/dynamics.hpp"

namespace fmlkit {

/// Axis-aligned box of initial conditions.
struct Domain {
  Vector lower;
  Vector upper;

  Domain() = default;
  Domain(Vector lower, Vector upper);  // validates
  std::size_t dim() const { return lower.size(); }
  void validate() const;

  bool operator==(const Domain&) const = default;
};

/// Selects observed components of the full state, strictly increasing.
struct ObservableMap {
  std::vector<std::size_t> indices;

  static ObservableMap identity(std::size_t n);
  void validate(std::size_t n) const;
  std::size_t dim() const { return indices.size(); }
};

struct RawDataConfig {
  std::size_t n_traj = 1;
  std::size_t length = 1;  // recorded steps; each trajectory has length+1 states
  double dt = 0.01;
  Domain domain;
  std::uint64_t seed = 0;
  /// Parameters redrawn uniformly per trajectory, e.g. {"alpha", {0, 0.2}}.
  std::map<std::string, std::pair<double, double>> param_ranges;
  std::size_t substeps = 10;

  void validate() const;
};

struct RawDataset {
  std::vector<Trajectory> trajectories;
  std::size_t discarded = 0;  // trajectories dropped because integration blew up

  bool operator==(const RawDataset&) const = default;
};

struct SamplingPlan {
  std::size_t n_memory = 0;
  std::size_t n_multistep = 0;
  std::size_t n_burst = 1;
  std::uint64_t seed = 0;

  std::size_t window_length() const;
  void validate() const;
};

/// N windows of n_data = n_memory + n_multistep + 2 consecutive d-vectors.
struct TrainingSet {
  std::size_t d = 0;
  double dt = 0.0;
  std::size_t n_memory = 0;
  std::size_t n_multistep = 0;
  std::size_t skipped = 0;  // raw trajectories too short for one window
  Vector values;            // window-major, then entry, then component

  std::size_t window_length() const { return n_memory + n_multistep + 2; }
  std::size_t count() const {
    const std::size_t stride = window_length() * d;
    return stride == 0 ? 0 : values.size() / stride;
  }
  std::span<const double> window(std::size_t i) const {
    const std::size_t stride = window_length() * d;
    return {values.data() + i * stride, stride};
  }
  void append(const TrainingSet& other);

  bool operator==(const TrainingSet&) const = default;
};

std::size_t required_window_length(std::size_t n_memory, std::size_t n_multistep);

std::vector<Vector> sample_initial_conditions(const Domain& domain, std::size_t count, Rng& rng);

/// Trajectory i uses an RNG stream derived from (cfg.seed, i); `first` and
/// `count` select a sub-range of trajectory indices so large sets can be
/// produced in chunks with results identical to a single call.
RawDataset generate_raw_dataset(const SystemSpec& system, const RawDataConfig& cfg, std::size_t first = 0,
                                std::size_t count = static_cast<std::size_t>(-1), unsigned workers = 1);

/// Initial condition and system instance for trajectory `index` of a config.
std::pair<Vector, SystemSpec> draw_trajectory_setup(const SystemSpec& system, const RawDataConfig& cfg,
                                                    std::size_t index);

RawDataset observe(const RawDataset& raw, const ObservableMap& map);
Trajectory observe(const Trajectory& traj, const ObservableMap& map);

/// Burst offsets are drawn with replacement, uniformly over valid starts.
/// `rng` carries over between chunks.
TrainingSet subsample_bursts(const RawDataset& raw, const SamplingPlan& plan, Rng& rng);
TrainingSet subsample_bursts(const RawDataset& raw, const SamplingPlan& plan);

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void save_dataset(const TrainingSet& set, const std::string& path);
void save_dataset(const RawDataset& set, const std::string& path);
TrainingSet load_training_set(const std::string& path);
RawDataset load_raw_dataset(const std::string& path);

/// One row per state; windows (or trajectories) separated by a blank line.
void write_csv(const TrainingSet& set, const std::string& path);
void write_csv(const RawDataset& set, const std::string& path);

}  // namespace fmlkit
