#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmlkit/binio.hpp"
#include "fmlkit/common.hpp"

namespace fmlkit {

enum class Activation : std::uint32_t { Tanh = 1, Identity = 2 };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Fully connected feedforward network. Hidden layers apply `activation`,
/// the output layer is affine. weights[l] has shape sizes[l+1] x sizes[l].
struct MlpParams {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::Tanh;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  /// Same shape, all entries zero.
  MlpParams zeros_like() const;
  static MlpParams zeros(std::vector<std::size_t> layer_sizes, Activation activation = Activation::Tanh);

  /// Flat view order: for each layer, W (column-major) then b.
  Vector flatten() const;
  void assign(std::span<const double> flat);

  void set_zero();
  void add_scaled(const MlpParams& other, double scale);
  bool all_finite() const;

  bool operator==(const MlpParams& other) const;
};

/// Post-activation values of every layer for one batch (columns = samples).
struct ForwardCache {
  std::vector<std::size_t> layer_sizes;
  std::vector<Eigen::MatrixXd> activations;  // [0] = input, back() = output

  Eigen::Index batch() const { return activations.empty() ? 0 : activations.front().cols(); }
};

MlpParams init_mlp(const std::vector<std::size_t>& layer_sizes, Rng& rng, Activation activation = Activation::Tanh);

/// Batched forward pass; inputs is input_size x batch.
const Eigen::MatrixXd& forward(const MlpParams& params, const Eigen::MatrixXd& inputs, ForwardCache& cache);
Vector forward(const MlpParams& params, std::span<const double> input);

/// Reverse-mode pass for sum over the batch of output^T grad_out.
/// Parameter gradients are accumulated into `grads`; returns d/d(input).
Eigen::MatrixXd backward(const MlpParams& params, const ForwardCache& cache, const Eigen::MatrixXd& grad_out,
                         MlpParams& grads);

struct AdamState {
  MlpParams m;
  MlpParams v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;

  static AdamState for_params(const MlpParams& params, double learning_rate);
};

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void write_mlp(binio::Writer& w, const MlpParams& params);
MlpParams read_mlp(binio::Reader& r);
void save_model(const MlpParams& params, const std::string& path);
MlpParams load_model(const std::string& path);

}  // namespace fmlkit
