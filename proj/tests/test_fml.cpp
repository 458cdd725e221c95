#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fmlkit/fml.hpp"

using namespace fmlkit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fmlkit_test_fml";
  fs::create_directories(dir);
  return dir / name;
}

// Windows of random values, enough to exercise every code path.
TrainingSet random_set(std::size_t d, std::size_t n_m, std::size_t K, std::size_t count, Rng& rng) {
  TrainingSet set;
  set.d = d;
  set.dt = 0.1;
  set.n_memory = n_m;
  set.n_multistep = K;
  set.values.resize(count * set.window_length() * d);
  for (double& v : set.values) v = rng.uniform(-1.0, 1.0);
  return set;
}

FmlModel contraction(double factor) {
  Rng rng(0);
  FmlModel m = make_model(1, 0, 0.1, {}, rng, false);
  m.net.weights[0](0, 0) = factor;
  return m;
}

// Reference loss by explicit rollouts.
double brute_force_loss(const FmlModel& model, const TrainingSet& set) {
  double total = 0.0;
  const std::size_t n_seed = (set.n_memory + 1) * set.d;
  for (std::size_t i = 0; i < set.count(); ++i) {
    const auto w = set.window(i);
    const Trajectory t = rollout(model, w.subspan(0, n_seed), set.n_multistep + 1);
    for (std::size_t k = n_seed; k < w.size(); ++k) total += (t.values[k] - w[k]) * (t.values[k] - w[k]);
  }
  return total / static_cast<double>(set.count() * (set.n_multistep + 1));
}

// Exact windows of the flow map x -> P x of decay-linear.
TrainingSet linear_windows(std::size_t n_m, std::size_t K, std::size_t count, double dt) {
  const auto sys = make_benchmark("decay-linear");
  RawDataConfig cfg;
  cfg.n_traj = count;
  cfg.length = n_m + K + 1;
  cfg.dt = dt;
  cfg.domain = Domain({0.0, 0.0}, {2.0, 2.0});
  cfg.seed = 5;
  return subsample_bursts(generate_raw_dataset(sys, cfg), SamplingPlan{n_m, K, 1, 6});
}

}  // namespace

TEST_CASE("model_step") {
  const FmlModel half = contraction(0.5);
  CHECK(model_step(half, Vector{2.0}) == Vector{1.0});

  Rng rng(1);
  FmlModel zero = make_model(2, 3, 0.1, {4}, rng);
  zero.net.set_zero();
  Vector window{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(model_step(zero, window) == Vector{7.0, 8.0});
  CHECK_THROWS_AS(model_step(zero, Vector{1.0, 2.0}), Error);

  FmlModel m0 = make_model(2, 0, 0.1, {4}, rng);
  CHECK(m0.net.input_size() == 2);
  CHECK(m0.memory_length() == 0.0);
  CHECK(zero.memory_length() == doctest::Approx(0.3));
}

TEST_CASE("window is flattened oldest first") {
  Rng rng(2);
  // Direct-mode linear net that copies the first block of its input.
  FmlModel m = make_model(2, 2, 0.1, {}, rng, false);
  m.net.weights[0].setZero();
  m.net.weights[0](0, 0) = 1.0;
  m.net.weights[0](1, 1) = 1.0;
  CHECK(model_step(m, Vector{1, 2, 3, 4, 5, 6}) == Vector{1.0, 2.0});

  FmlModel r = make_model(2, 2, 0.1, {6}, rng);
  const Vector window{0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  const Vector reversed{-0.5, 0.6, 0.3, 0.4, 0.1, -0.2};
  CHECK(model_step(r, window) != model_step(r, reversed));
}

TEST_CASE("rollout") {
  const FmlModel half = contraction(0.5);
  const Trajectory t = rollout(half, Vector{2.0}, 3);
  CHECK(t.values == Vector{2.0, 1.0, 0.5, 0.25});
  CHECK(rollout(half, Vector{2.0}, 0).values == Vector{2.0});

  Rng rng(3);
  FmlModel zero = make_model(1, 2, 0.1, {3}, rng);
  zero.net.set_zero();
  CHECK(rollout(zero, Vector{3.0, 2.0, 1.0}, 4).values == Vector{3.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0});

  const FmlModel blowup = contraction(1e200);
  try {
    rollout(blowup, Vector{1e200}, 5);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
  CHECK_THROWS_AS(rollout(half, Vector{1.0, 2.0}, 1), Error);
}

TEST_CASE("multistep loss by hand") {
  Rng rng(4);
  FmlModel zero = make_model(1, 0, 0.1, {}, rng);
  zero.net.set_zero();
  TrainingSet set;
  set.d = 1;
  set.dt = 0.1;
  set.n_memory = 0;
  set.n_multistep = 1;
  set.values = {1.0, 0.0, 0.0};
  CHECK(multistep_loss(zero, set) == 1.0);

  // Exact model on its own windows.
  const FmlModel half = contraction(0.5);
  set.values = {8.0, 4.0, 2.0, 2.0, 1.0, 0.5};
  CHECK(multistep_loss(half, set) == 0.0);
  const LossAndGrad lg = multistep_loss_grad(half, set);
  CHECK(lg.loss == 0.0);
  for (double g : lg.grads.flatten()) CHECK(g == 0.0);

  TrainingSet wrong = set;
  wrong.n_memory = 1;
  CHECK_THROWS_AS(multistep_loss(half, wrong), Error);
}

TEST_CASE("multistep loss agrees with explicit rollouts") {
  Rng rng(5);
  for (std::size_t n_m : {0, 1, 2})
    for (std::size_t K : {0, 1, 3}) {
      const TrainingSet set = random_set(2, n_m, K, 7, rng);
      for (bool residual : {true, false}) {
        const FmlModel m = make_model(2, n_m, 0.1, {5, 4}, rng, residual);
        CHECK(multistep_loss(m, set) == doctest::Approx(brute_force_loss(m, set)).epsilon(1e-12));
      }
    }
}

TEST_CASE("gradient through the rollout matches finite differences") {
  Rng rng(6);
  for (std::size_t n_m : {0, 1, 2})
    for (std::size_t K : {0, 1, 2})
      for (bool residual : {true, false}) {
        const TrainingSet set = random_set(2, n_m, K, 4, rng);
        FmlModel m = make_model(2, n_m, 0.1, {5}, rng, residual);
        const LossAndGrad lg = multistep_loss_grad(m, set);
        CHECK(lg.loss == doctest::Approx(multistep_loss(m, set)).epsilon(1e-14));
        const Vector theta = m.net.flatten();
        const Vector analytic = lg.grads.flatten();
        const double h = 1e-6;
        for (std::size_t i = 0; i < theta.size(); ++i) {
          Vector t = theta;
          t[i] += h;
          m.net.assign(t);
          const double up = multistep_loss(m, set);
          t[i] = theta[i] - h;
          m.net.assign(t);
          const double down = multistep_loss(m, set);
          const double fd = (up - down) / (2 * h);
          CHECK(std::abs(analytic[i] - fd) <= 1e-5 * std::max({std::abs(fd), std::abs(analytic[i]), 1e-3}));
        }
        m.net.assign(theta);
      }
}

TEST_CASE("K = 0 gradient equals the single-step MSE gradient") {
  Rng rng(7);
  const std::size_t n_m = 2, d = 2, N = 6;
  const TrainingSet set = random_set(d, n_m, 0, N, rng);
  const FmlModel m = make_model(d, n_m, 0.1, {4}, rng);

  Eigen::MatrixXd X(d * (n_m + 1), N), last(d, N), target(d, N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto w = set.window(i);
    for (std::size_t r = 0; r < d * (n_m + 1); ++r) X(r, i) = w[r];
    for (std::size_t c = 0; c < d; ++c) {
      last(c, i) = w[n_m * d + c];
      target(c, i) = w[(n_m + 1) * d + c];
    }
  }
  ForwardCache cache;
  const Eigen::MatrixXd r = last + forward(m.net, X, cache) - target;
  MlpParams grads = m.net.zeros_like();
  backward(m.net, cache, 2.0 * r / static_cast<double>(N), grads);
  const double mse = r.squaredNorm() / static_cast<double>(N);

  const LossAndGrad lg = multistep_loss_grad(m, set);
  CHECK(lg.loss == doctest::Approx(mse).epsilon(1e-14));
  const Vector a = lg.grads.flatten(), b = grads.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("direct and residual forms are equivalent under N'(z) = N(z) - last(z)") {
  Rng rng(8);
  const std::size_t d = 2, n_m = 1, in = d * (n_m + 1), width = 3;
  FmlModel direct = make_model(d, n_m, 0.1, {width}, rng, false);
  direct.net.activation = Activation::Identity;

  // N' carries the last state through extra hidden units and subtracts it.
  FmlModel residual = direct;
  residual.residual = true;
  residual.net.layer_sizes = {in, width + d, d};
  Eigen::MatrixXd W1 = Eigen::MatrixXd::Zero(width + d, in);
  W1.topRows(width) = direct.net.weights[0];
  W1.bottomRightCorner(d, d).setIdentity();
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(width + d);
  b1.head(width) = direct.net.biases[0];
  Eigen::MatrixXd W2(d, width + d);
  W2.leftCols(width) = direct.net.weights[1];
  W2.rightCols(d) = -Eigen::MatrixXd::Identity(d, d);
  residual.net.weights = {W1, W2};
  residual.net.biases = {b1, direct.net.biases[1]};
  residual.validate();

  for (int trial = 0; trial < 5; ++trial) {
    Vector w(in);
    for (double& v : w) v = rng.uniform(-2.0, 2.0);
    const Vector a = model_step(direct, w), b = model_step(residual, w);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-13));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-13));
  }
  const Trajectory ta = rollout(direct, Vector{0.1, 0.2, 0.3, 0.4}, 6);
  const Trajectory tb = rollout(residual, Vector{0.1, 0.2, 0.3, 0.4}, 6);
  for (std::size_t i = 0; i < ta.values.size(); ++i) CHECK(ta.values[i] == doctest::Approx(tb.values[i]).epsilon(1e-12));
}

TEST_CASE("training") {
  Rng rng(9);
  const TrainingSet set = linear_windows(0, 2, 200, 0.01);

  TrainingConfig cfg;
  cfg.n_multistep = 2;
  cfg.epochs = 30;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 64;
  cfg.seed = 11;
  const FmlModel init = make_model(2, 0, 0.01, {6}, rng);

  SUBCASE("deterministic and best-of") {
    const TrainResult a = train(init, set, cfg);
    const TrainResult b = train(init, set, cfg);
    CHECK(a.history == b.history);
    CHECK(a.model == b.model);
    CHECK(a.history.losses.size() == 30);
    CHECK(a.history.best_loss() <= a.history.losses.front());
    for (double l : a.history.losses) CHECK(a.history.best_loss() <= l);

    std::vector<double> seen;
    train(init, set, cfg, [&](std::size_t, double loss) { seen.push_back(loss); });
    CHECK(seen == a.history.losses);

    const auto pa = scratch("a.fml"), pb = scratch("b.fml");
    save_fml_model(a.model, pa.string());
    save_fml_model(b.model, pb.string());
    CHECK(file_digest(pa.string()) == file_digest(pb.string()));

    TrainingConfig other = cfg;
    other.seed = 12;
    CHECK_FALSE(train(init, set, other).history == a.history);
  }

  SUBCASE("full batch and cyclic schedule") {
    TrainingConfig full = cfg;
    full.batch_size = 0;
    full.cyclic = true;
    full.cyclic_max = 1e-2;
    full.cycle_epochs = 10;
    const TrainResult r = train(init, set, full);
    CHECK(r.history.best_loss() < r.history.losses.front());
  }

  SUBCASE("config and dataset mismatches") {
    TrainingConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train(init, set, bad), Error);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(init, set, bad), Error);
    bad = cfg;
    bad.n_multistep = 3;
    CHECK_THROWS_AS(train(init, set, bad), Error);
    CHECK_THROWS_AS(train(make_model(2, 1, 0.01, {6}, rng), set, cfg), Error);
  }
}

TEST_CASE("realizable linear target is learned to loss below 1e-8") {
  Rng rng(10);
  const TrainingSet set = linear_windows(0, 1, 100, 0.01);
  FmlModel m = make_model(2, 0, 0.01, {}, rng);
  TrainingConfig cfg;
  cfg.n_multistep = 1;
  cfg.epochs = 2000;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 0;
  const TrainResult r = train(m, set, cfg);
  CHECK(r.history.best_loss() < 1e-8);
}

TEST_CASE("memory sweep selection") {
  Rng rng(11);
  SweepProblem p;
  p.dataset = [](std::size_t n_m) { return linear_windows(n_m, 0, 20, 0.01); };
  p.model = [](std::size_t n_m) {
    Rng r(n_m);
    return make_model(2, n_m, 0.01, {3}, r);
  };
  std::map<std::size_t, double> errors;
  p.evaluate = [&](const FmlModel& m) { return errors.at(m.n_memory); };
  p.training.n_multistep = 0;
  p.training.epochs = 1;

  errors = {{0, 1.0}, {1, 0.9}, {2, 0.89}};
  SweepReport r = memory_sweep(p, {0, 1, 2});
  CHECK(r.rows.size() == 3);
  CHECK(r.selected == 0);
  CHECK(r.rows[1].error == 0.9);
  CHECK(r.tolerance == 1.25);

  errors = {{0, 1.0}, {5, 0.3}, {10, 0.28}};
  r = memory_sweep(p, {0, 5, 10}, 2);
  CHECK(r.selected == 5);

  errors = {{0, 1.0}, {5, 0.5}, {10, 0.1}};
  CHECK(memory_sweep(p, {0, 5, 10}).selected == 10);

  errors = {{3, 0.7}};
  r = memory_sweep(p, {3});
  CHECK(r.rows.size() == 1);
  CHECK(r.selected == 3);

  CHECK_THROWS_AS(memory_sweep(p, {}), Error);
  CHECK_THROWS_AS(memory_sweep(p, {2, 1}), Error);
}

TEST_CASE("model persistence") {
  Rng rng(12);
  FmlModel m = make_model(3, 2, 0.05, {7, 5}, rng, false);
  m.config_digest = "00ff00ff00ff00ff";
  const auto path = scratch("m.fml");
  save_fml_model(m, path.string());
  const FmlModel back = load_fml_model(path.string());
  CHECK(back == m);
  const Vector w(9, 0.25);
  CHECK(model_step(back, w) == model_step(m, w));

  const auto cut = scratch("m_cut.fml");
  fs::copy_file(path, cut, fs::copy_options::overwrite_existing);
  fs::resize_file(cut, fs::file_size(cut) - 3);
  CHECK_THROWS_AS(load_fml_model(cut.string()), Error);

  const auto net_only = scratch("net_only.bin");
  save_model(m.net, net_only.string());
  CHECK_THROWS_AS(load_fml_model(net_only.string()), Error);

  CHECK_THROWS_AS(load_fml_model(scratch("absent.fml").string()), Error);
}

TEST_CASE("loss csv") {
  LossHistory h;
  h.losses = {1.0, 0.5, 0.25};
  h.best_epoch = 2;
  const auto path = scratch("loss.csv");
  write_loss_csv(h, path.string());
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "epoch,loss");
  std::getline(in, row);
  CHECK(row == "0,1");
}
