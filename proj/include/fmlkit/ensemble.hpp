#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmlkit/fml.hpp"

namespace fmlkit {

/// Independently trained members with identical structure.
struct EnsembleModel {
  std::vector<FmlModel> members;
  std::vector<std::uint64_t> seeds;

  std::size_t size() const { return members.size(); }
  const FmlModel& front() const { return members.front(); }
  void validate() const;
};

/// Seed of member `index` for an ensemble trained from `base_seed`.
std::uint64_t member_seed(std::uint64_t base_seed, std::size_t index);

/// Re-initializes the template's network from `seed` and trains it with a
/// shuffling stream also derived from `seed`.
TrainResult train_member(const FmlModel& templ, const TrainingSet& set, TrainingConfig cfg, std::uint64_t seed);

struct EnsembleTraining {
  EnsembleModel ensemble;
  std::vector<LossHistory> histories;
};

EnsembleTraining train_ensemble(const FmlModel& templ, const TrainingSet& set, const TrainingConfig& cfg,
                                std::size_t n_model, std::uint64_t base_seed, unsigned workers = 1);

/// Step-wise averaging: every member advances the shared window one step,
/// the mean of their predictions is appended, and all continue from it.
Trajectory ensemble_predict(const EnsembleModel& ens, std::span<const double> init_window, std::size_t steps);

/// Manifest is JSON next to the member files (paths stored relative to it).
void save_ensemble(const EnsembleModel& ens, const std::string& manifest_path,
                   const std::vector<std::string>& member_files);
EnsembleModel load_ensemble(const std::string& manifest_path);

}  // namespace fmlkit
