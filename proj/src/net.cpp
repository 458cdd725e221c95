#include "fmlkit/net.hpp"

#include <cmath>

namespace fmlkit {

namespace {

constexpr char kNetMagic[9] = "FMLKITNN";

void check_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw Error("a network needs at least an input and an output layer", "layer_sizes");
  for (std::size_t s : sizes) {
    if (s < 1) throw Error("layer sizes must be >= 1", "layer_sizes");
  }
}

void check_cache(const MlpParams& params, const ForwardCache& cache) {
  if (cache.layer_sizes != params.layer_sizes || cache.activations.size() != params.layer_sizes.size()) {
    throw Error("forward cache does not belong to this network");
  }
  for (std::size_t l = 0; l < cache.activations.size(); ++l) {
    if (static_cast<std::size_t>(cache.activations[l].rows()) != params.layer_sizes[l] ||
        cache.activations[l].cols() != cache.batch()) {
      throw Error("forward cache is inconsistent with the network shape");
    }
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw Error("unknown activation '" + std::string(name) + "'", "activation");
}

std::size_t MlpParams::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) total += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  return total;
}

MlpParams MlpParams::zeros(std::vector<std::size_t> sizes, Activation activation) {
  check_sizes(sizes);
  MlpParams p;
  p.layer_sizes = std::move(sizes);
  p.activation = activation;
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(p.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(p.layer_sizes[l]);
    p.weights.emplace_back(Eigen::MatrixXd::Zero(rows, cols));
    p.biases.emplace_back(Eigen::VectorXd::Zero(rows));
  }
  return p;
}

MlpParams MlpParams::zeros_like() const { return zeros(layer_sizes, activation); }

Vector MlpParams::flatten() const {
  Vector out;
  out.reserve(parameter_count());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.insert(out.end(), weights[l].data(), weights[l].data() + weights[l].size());
    out.insert(out.end(), biases[l].data(), biases[l].data() + biases[l].size());
  }
  return out;
}

void MlpParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw Error("flat parameter vector has the wrong length");
  std::size_t pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    std::copy_n(flat.data() + pos, weights[l].size(), weights[l].data());
    pos += static_cast<std::size_t>(weights[l].size());
    std::copy_n(flat.data() + pos, biases[l].size(), biases[l].data());
    pos += static_cast<std::size_t>(biases[l].size());
  }
}

void MlpParams::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void MlpParams::add_scaled(const MlpParams& other, double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += scale * other.weights[l];
    biases[l] += scale * other.biases[l];
  }
}

bool MlpParams::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (layer_sizes != other.layer_sizes || activation != other.activation) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

MlpParams init_mlp(const std::vector<std::size_t>& layer_sizes, Rng& rng, Activation activation) {
  MlpParams p = MlpParams::zeros(layer_sizes, activation);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer_sizes[l]));
    auto& w = p.weights[l];
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-scale, scale);
  }
  return p;
}

const Eigen::MatrixXd& forward(const MlpParams& params, const Eigen::MatrixXd& inputs, ForwardCache& cache) {
  if (static_cast<std::size_t>(inputs.rows()) != params.input_size()) {
    throw Error("input dimension " + std::to_string(inputs.rows()) + " != network input size " +
                std::to_string(params.input_size()));
  }
  const std::size_t layers = params.layer_count();
  cache.layer_sizes = params.layer_sizes;
  cache.activations.resize(layers + 1);
  cache.activations[0] = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd& z = cache.activations[l + 1];
    z.noalias() = params.weights[l] * cache.activations[l];
    z.colwise() += params.biases[l];
    if (l + 1 < layers && params.activation == Activation::Tanh) z = z.array().tanh();
  }
  return cache.activations.back();
}

Vector forward(const MlpParams& params, std::span<const double> input) {
  ForwardCache cache;
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::MatrixXd>(input.data(), static_cast<Eigen::Index>(input.size()), 1);
  const Eigen::MatrixXd& y = forward(params, x, cache);
  if (!y.allFinite()) throw Error("network produced a non-finite output");
  return Vector(y.data(), y.data() + y.size());
}

Eigen::MatrixXd backward(const MlpParams& params, const ForwardCache& cache, const Eigen::MatrixXd& grad_out,
                         MlpParams& grads) {
  check_cache(params, cache);
  if (static_cast<std::size_t>(grad_out.rows()) != params.output_size() || grad_out.cols() != cache.batch()) {
    throw Error("output gradient shape does not match the forward pass");
  }
  if (grads.layer_sizes != params.layer_sizes) throw Error("gradient buffer has the wrong shape");
  const std::size_t layers = params.layer_count();
  Eigen::MatrixXd delta = grad_out;
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers && params.activation == Activation::Tanh) {
      delta.array() *= 1.0 - cache.activations[l + 1].array().square();
    }
    grads.weights[l].noalias() += delta * cache.activations[l].transpose();
    grads.biases[l] += delta.rowwise().sum();
    Eigen::MatrixXd upstream = params.weights[l].transpose() * delta;
    delta.swap(upstream);
  }
  return delta;
}

AdamState AdamState::for_params(const MlpParams& params, double learning_rate) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads) {
  if (grads.layer_sizes != params.layer_sizes || state.m.layer_sizes != params.layer_sizes ||
      state.v.layer_sizes != params.layer_sizes) {
    throw Error("Adam state, parameters and gradients disagree in shape");
  }
  if (!grads.all_finite()) throw Error("non-finite gradient passed to Adam");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon, lr = state.learning_rate;
  auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    update(params.weights[l], state.m.weights[l], state.v.weights[l], grads.weights[l]);
    update(params.biases[l], state.m.biases[l], state.v.biases[l], grads.biases[l]);
  }
}

void write_mlp(binio::Writer& w, const MlpParams& params) {
  w.put_bytes(kNetMagic, 8);
  w.put<std::uint32_t>(kModelFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.activation));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.layer_sizes.size()));
  for (std::size_t s : params.layer_sizes) w.put<std::uint64_t>(s);
  const Vector flat = params.flatten();
  w.put<std::uint64_t>(flat.size());
  w.put_doubles(flat);
}

MlpParams read_mlp(binio::Reader& r) {
  r.expect_magic(kNetMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kModelFormatVersion) throw Error("unsupported model version " + std::to_string(version), "version");
  const auto tag = r.get<std::uint32_t>("activation");
  if (tag != static_cast<std::uint32_t>(Activation::Tanh) && tag != static_cast<std::uint32_t>(Activation::Identity)) {
    throw Error("unknown activation tag " + std::to_string(tag), "activation");
  }
  const auto n_layers = r.get<std::uint32_t>("layer_count");
  if (n_layers < 2 || n_layers > 1024) throw Error("implausible layer count", "layer_count");
  std::vector<std::size_t> sizes(n_layers);
  for (auto& s : sizes) {
    s = r.get<std::uint64_t>("layer_sizes");
    if (s < 1 || s > (1u << 20)) throw Error("implausible layer size", "layer_sizes");
  }
  MlpParams p = MlpParams::zeros(sizes, static_cast<Activation>(tag));
  const auto count = r.get<std::uint64_t>("parameter_count");
  if (count != p.parameter_count()) {
    throw Error("recorded parameter count " + std::to_string(count) + " disagrees with layer sizes (" +
                    std::to_string(p.parameter_count()) + ")",
                "parameter_count");
  }
  p.assign(r.get_doubles(count, "payload"));
  return p;
}

void save_model(const MlpParams& params, const std::string& path) {
  binio::Writer w(path);
  write_mlp(w, params);
  w.finish();
}

MlpParams load_model(const std::string& path) {
  binio::Reader r(path);
  MlpParams p = read_mlp(r);
  r.expect_end("payload");
  return p;
}

}  // namespace fmlkit
