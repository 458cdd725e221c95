#include "fmlkit/fml.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace fmlkit {

namespace {

constexpr char kFmlMagic[9] = "FMLKITFM";

void check_set(const FmlModel& model, const TrainingSet& set) {
  if (set.d != model.d) {
    throw Error("training set dimension " + std::to_string(set.d) + " != model dimension " + std::to_string(model.d));
  }
  if (set.n_memory != model.n_memory) {
    throw Error("training set memory step " + std::to_string(set.n_memory) + " != model memory step " +
                std::to_string(model.n_memory));
  }
}

}  // namespace

void FmlModel::validate() const {
  if (d < 1) throw Error("observable dimension must be >= 1", "d");
  if (net.layer_sizes.size() < 2) throw Error("model has no network", "net");
  if (net.input_size() != d * (n_memory + 1)) {
    throw Error("network input size " + std::to_string(net.input_size()) + " != d*(n_memory+1) = " +
                    std::to_string(d * (n_memory + 1)),
                "net");
  }
  if (net.output_size() != d) throw Error("network output size must equal d", "net");
}

FmlModel make_model(std::size_t d, std::size_t n_memory, double dt, const std::vector<std::size_t>& hidden, Rng& rng,
                    bool residual) {
  std::vector<std::size_t> sizes;
  sizes.push_back(d * (n_memory + 1));
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(d);
  FmlModel model;
  model.d = d;
  model.n_memory = n_memory;
  model.dt = dt;
  model.residual = residual;
  model.net = init_mlp(sizes, rng);
  model.validate();
  return model;
}

Vector model_step(const FmlModel& model, std::span<const double> window) {
  if (window.size() != model.d * model.window_size()) {
    throw Error("window holds " + std::to_string(window.size()) + " values, expected (n_memory+1)*d = " +
                std::to_string(model.d * model.window_size()));
  }
  Vector next = forward(model.net, window);
  if (model.residual) {
    const auto last = window.subspan(window.size() - model.d);
    for (std::size_t i = 0; i < model.d; ++i) next[i] += last[i];
  }
  return next;
}

Trajectory rollout(const FmlModel& model, std::span<const double> init_window, std::size_t steps) {
  if (init_window.size() != model.d * model.window_size()) {
    throw Error("initial window must hold n_memory+1 states of dimension d");
  }
  Trajectory out;
  out.dim = model.d;
  out.dt = model.dt;
  out.values.reserve((model.window_size() + steps) * model.d);
  out.values.assign(init_window.begin(), init_window.end());
  const std::size_t width = model.d * model.window_size();
  for (std::size_t s = 0; s < steps; ++s) {
    const std::span<const double> window(out.values.data() + s * model.d, width);
    Vector next;
    try {
      next = model_step(model, window);
    } catch (const Error&) {
      throw Error("prediction became non-finite at step " + std::to_string(s + 1));
    }
    for (double v : next) {
      if (!std::isfinite(v)) throw Error("prediction became non-finite at step " + std::to_string(s + 1));
    }
    out.values.insert(out.values.end(), next.begin(), next.end());
  }
  return out;
}

double MultistepObjective::run_forward(const FmlModel& model, const TrainingSet& set,
                                       std::span<const std::size_t> indices) {
  check_set(model, set);
  model.validate();
  if (indices.empty()) throw Error("empty batch");
  const std::size_t d = model.d;
  const std::size_t n_m = model.n_memory;
  const std::size_t steps = set.n_multistep + 1;
  const std::size_t n_data = set.window_length();
  const auto batch = static_cast<Eigen::Index>(indices.size());
  const auto rows = static_cast<Eigen::Index>(d);

  states_.resize(n_data);
  targets_.resize(steps);
  residuals_.resize(steps);
  caches_.resize(steps);
  for (std::size_t j = 0; j <= n_m; ++j) states_[j].resize(rows, batch);
  for (std::size_t k = 0; k < steps; ++k) targets_[k].resize(rows, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto idx = indices[static_cast<std::size_t>(b)];
    if (idx >= set.count()) throw Error("window index out of range");
    const auto w = set.window(idx);
    for (std::size_t j = 0; j < n_data; ++j) {
      Eigen::MatrixXd& dst = j <= n_m ? states_[j] : targets_[j - n_m - 1];
      for (std::size_t c = 0; c < d; ++c) dst(static_cast<Eigen::Index>(c), b) = w[j * d + c];
    }
  }

  input_.resize(static_cast<Eigen::Index>(d * (n_m + 1)), batch);
  double sum = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t i = 0; i <= n_m; ++i) input_.middleRows(static_cast<Eigen::Index>(i * d), rows) = states_[k + i];
    const Eigen::MatrixXd& out = forward(model.net, input_, caches_[k]);
    Eigen::MatrixXd& pred = states_[k + n_m + 1];
    pred = out;
    if (model.residual) pred += states_[k + n_m];
    residuals_[k] = pred - targets_[k];
    sum += residuals_[k].squaredNorm();
  }
  return sum / (static_cast<double>(batch) * static_cast<double>(steps));
}

double MultistepObjective::loss(const FmlModel& model, const TrainingSet& set, std::span<const std::size_t> indices) {
  return run_forward(model, set, indices);
}

double MultistepObjective::loss_grad(const FmlModel& model, const TrainingSet& set,
                                     std::span<const std::size_t> indices, MlpParams& grads) {
  const double loss = run_forward(model, set, indices);
  if (grads.layer_sizes != model.net.layer_sizes) grads = model.net.zeros_like();
  grads.set_zero();

  const std::size_t d = model.d;
  const std::size_t n_m = model.n_memory;
  const std::size_t steps = set.n_multistep + 1;
  const auto batch = static_cast<Eigen::Index>(indices.size());
  const auto rows = static_cast<Eigen::Index>(d);
  const double scale = 2.0 / (static_cast<double>(batch) * static_cast<double>(steps));

  // g[k] accumulates dLoss/d(prediction k), i.e. state index k + n_m + 1.
  std::vector<Eigen::MatrixXd> g(steps, Eigen::MatrixXd::Zero(rows, batch));
  for (std::size_t k = steps; k-- > 0;) {
    g[k] += scale * residuals_[k];
    const Eigen::MatrixXd grad_in = backward(model.net, caches_[k], g[k], grads);
    // Input block i is state k + i; predictions start at state n_m + 1.
    for (std::size_t i = 0; i <= n_m; ++i) {
      const std::size_t state = k + i;
      if (state >= n_m + 1) g[state - n_m - 1] += grad_in.middleRows(static_cast<Eigen::Index>(i * d), rows);
    }
    if (model.residual && k >= 1) g[k - 1] += g[k];
  }
  if (!grads.all_finite()) throw Error("non-finite gradient of the multi-step loss");
  return loss;
}

double multistep_loss(const FmlModel& model, const TrainingSet& set) {
  std::vector<std::size_t> idx(set.count());
  std::iota(idx.begin(), idx.end(), 0);
  MultistepObjective obj;
  return obj.loss(model, set, idx);
}

LossAndGrad multistep_loss_grad(const FmlModel& model, const TrainingSet& set) {
  std::vector<std::size_t> idx(set.count());
  std::iota(idx.begin(), idx.end(), 0);
  MultistepObjective obj;
  LossAndGrad out;
  out.grads = model.net.zeros_like();
  out.loss = obj.loss_grad(model, set, idx, out.grads);
  return out;
}

void TrainingConfig::validate() const {
  if (epochs < 1) throw Error("must be >= 1", "epochs");
  if (!(learning_rate > 0.0)) throw Error("must be positive", "learning_rate");
  if (cyclic && !(cyclic_max >= learning_rate)) throw Error("must be >= learning_rate", "cyclic_max");
  if (cyclic && cycle_epochs < 2) throw Error("must be >= 2", "cycle_epochs");
}

namespace {

double scheduled_rate(const TrainingConfig& cfg, std::size_t epoch) {
  if (!cfg.cyclic) return cfg.learning_rate;
  const double half = static_cast<double>(cfg.cycle_epochs) / 2.0;
  const double phase = std::fmod(static_cast<double>(epoch), static_cast<double>(cfg.cycle_epochs));
  const double frac = phase < half ? phase / half : (static_cast<double>(cfg.cycle_epochs) - phase) / half;
  return cfg.learning_rate + (cfg.cyclic_max - cfg.learning_rate) * frac;
}

}  // namespace

TrainResult train(FmlModel model, const TrainingSet& set, const TrainingConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  check_set(model, set);
  if (set.n_multistep != cfg.n_multistep) {
    throw Error("training set was built for K=" + std::to_string(set.n_multistep) + " but config asks for K=" +
                    std::to_string(cfg.n_multistep),
                "n_multistep");
  }
  const std::size_t n = set.count();
  if (n == 0) throw Error("training set is empty");
  const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size > n) ? n : cfg.batch_size;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  AdamState adam = AdamState::for_params(model.net, cfg.learning_rate);
  MultistepObjective objective;
  MlpParams grads = model.net.zeros_like();

  TrainResult result;
  result.history.losses.reserve(cfg.epochs);
  MlpParams best = model.net;
  double best_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) rng.shuffle(order);
    adam.learning_rate = scheduled_rate(cfg, epoch);
    double sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const double loss = objective.loss_grad(model, set, idx, grads);
      if (!std::isfinite(loss)) throw Error("training loss became non-finite at epoch " + std::to_string(epoch));
      sum += loss * static_cast<double>(len);
      adam_step(adam, model.net, grads);
    }
    const double epoch_loss = sum / static_cast<double>(n);
    result.history.losses.push_back(epoch_loss);
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best = model.net;
      result.history.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  model.net = std::move(best);
  result.model = std::move(model);
  return result;
}

void write_loss_csv(const LossHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing", path);
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < history.losses.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e, history.losses[e]);
    out << buf;
  }
}

SweepReport memory_sweep(const SweepProblem& problem, const std::vector<std::size_t>& candidates, unsigned workers) {
  if (candidates.empty()) throw Error("no memory-step candidates");
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i] <= candidates[i - 1]) throw Error("candidates must be strictly increasing");
  }
  SweepReport report;
  report.tolerance = problem.tolerance;
  report.rows.resize(candidates.size());
  parallel_for(candidates.size(), workers, [&](std::size_t i) {
    const std::size_t n_m = candidates[i];
    const TrainingSet set = problem.dataset(n_m);
    TrainResult trained = train(problem.model(n_m), set, problem.training);
    report.rows[i] = {n_m, problem.evaluate(trained.model), trained.history.best_loss()};
  });
  report.selected = candidates.back();
  for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
    if (report.rows[i].error <= problem.tolerance * report.rows[i + 1].error) {
      report.selected = report.rows[i].n_memory;
      break;
    }
  }
  return report;
}

void save_fml_model(const FmlModel& model, const std::string& path) {
  model.validate();
  binio::Writer w(path);
  w.put_bytes(kFmlMagic, 8);
  w.put<std::uint32_t>(kModelFormatVersion);
  w.put<std::uint64_t>(model.d);
  w.put<std::uint64_t>(model.n_memory);
  w.put<double>(model.dt);
  w.put<std::uint8_t>(model.residual ? 1 : 0);
  w.put_string(model.config_digest);
  write_mlp(w, model.net);
  w.finish();
}

FmlModel load_fml_model(const std::string& path) {
  binio::Reader r(path);
  r.expect_magic(kFmlMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kModelFormatVersion) throw Error("unsupported model version " + std::to_string(version), "version");
  FmlModel model;
  model.d = r.get<std::uint64_t>("d");
  model.n_memory = r.get<std::uint64_t>("n_memory");
  model.dt = r.get<double>("dt");
  const auto residual = r.get<std::uint8_t>("residual");
  if (residual > 1) throw Error("invalid flag", "residual");
  model.residual = residual == 1;
  model.config_digest = r.get_string("config_digest");
  model.net = read_mlp(r);
  r.expect_end("payload");
  model.validate();
  return model;
}

}  // namespace fmlkit
