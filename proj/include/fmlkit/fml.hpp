#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fmlkit/data.hpp"
#include "fmlkit/dynamics.hpp"
#include "fmlkit/net.hpp"

namespace fmlkit {

/// Learned flow map with memory. In residual form the next state is
/// x_n + net(x_{n-n_M}, ..., x_n); in direct form it is net(...) alone.
/// The network input is the window flattened oldest to newest.
struct FmlModel {
  std::size_t d = 0;
  std::size_t n_memory = 0;
  double dt = 0.0;
  bool residual = true;
  MlpParams net;
  std::string config_digest;

  std::size_t window_size() const { return n_memory + 1; }
  double memory_length() const { return static_cast<double>(n_memory) * dt; }
  void validate() const;

  bool operator==(const FmlModel&) const = default;
};

/// Network of shape d*(n_memory+1) -> hidden... -> d, initialized from `rng`.
FmlModel make_model(std::size_t d, std::size_t n_memory, double dt, const std::vector<std::size_t>& hidden, Rng& rng,
                    bool residual = true);

/// `window` holds n_memory+1 states of dimension d, oldest first.
Vector model_step(const FmlModel& model, std::span<const double> window);

/// init_window followed by `steps` predictions. Throws with the step index
/// on a non-finite prediction.
Trajectory rollout(const FmlModel& model, std::span<const double> init_window, std::size_t steps);

struct LossAndGrad {
  double loss = 0.0;
  MlpParams grads;
};

/// Reusable buffers for the multi-step objective; one instance per thread.
class MultistepObjective {
public:
  /// Mean over windows and the K+1 rollout steps of the squared error.
  double loss(const FmlModel& model, const TrainingSet& set, std::span<const std::size_t> indices);

  /// Loss and its exact gradient, backpropagated through the whole rollout.
  /// Gradients are written into `grads` (overwritten).
  double loss_grad(const FmlModel& model, const TrainingSet& set, std::span<const std::size_t> indices,
                   MlpParams& grads);

private:
  double run_forward(const FmlModel& model, const TrainingSet& set, std::span<const std::size_t> indices);

  std::vector<Eigen::MatrixXd> states_;  // seeds, then predictions
  std::vector<Eigen::MatrixXd> targets_;
  std::vector<Eigen::MatrixXd> residuals_;
  std::vector<ForwardCache> caches_;
  Eigen::MatrixXd input_;
};

double multistep_loss(const FmlModel& model, const TrainingSet& set);
LossAndGrad multistep_loss_grad(const FmlModel& model, const TrainingSet& set);

struct TrainingConfig {
  std::size_t n_multistep = 10;
  std::size_t epochs = 10000;
  double learning_rate = 1e-4;
  std::size_t batch_size = 1000;  // 0 = full batch
  std::uint64_t seed = 0;
  /// Triangular cyclic schedule between learning_rate and cyclic_max.
  bool cyclic = false;
  double cyclic_max = 1e-3;
  std::size_t cycle_epochs = 1000;

  void validate() const;
};

struct LossHistory {
  Vector losses;  // epoch-mean training loss
  std::size_t best_epoch = 0;

  double best_loss() const { return losses.at(best_epoch); }
  bool operator==(const LossHistory&) const = default;
};

struct TrainResult {
  FmlModel model;  // parameters from the best epoch
  LossHistory history;
};

/// Optional progress hook, called after every epoch with (epoch, loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Adam over shuffled minibatches; keeps the parameters of the epoch with
/// the lowest training loss. No validation split.
TrainResult train(FmlModel model, const TrainingSet& set, const TrainingConfig& cfg, const EpochCallback& on_epoch = {});

void write_loss_csv(const LossHistory& history, const std::string& path);

struct SweepRow {
  std::size_t n_memory = 0;
  double error = 0.0;
  double final_loss = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::size_t selected = 0;  // chosen n_memory
  double tolerance = 1.25;
};

/// Ingredients of a memory-step sweep. The evaluator returns the average
/// prediction error of a trained model on held-out initial conditions.
struct SweepProblem {
  std::function<TrainingSet(std::size_t n_memory)> dataset;
  std::function<FmlModel(std::size_t n_memory)> model;
  std::function<double(const FmlModel&)> evaluate;
  TrainingConfig training;
  double tolerance = 1.25;
};

/// Trains one model per candidate and selects the smallest n_memory whose
/// error is within `tolerance` times that of the next larger candidate.
SweepReport memory_sweep(const SweepProblem& problem, const std::vector<std::size_t>& candidates,
                         unsigned workers = 1);

void save_fml_model(const FmlModel& model, const std::string& path);
FmlModel load_fml_model(const std::string& path);

}  // namespace fmlkit
