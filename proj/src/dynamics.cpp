#include "fmlkit/dynamics.hpp"

#include <cmath>
#include <sstream>

namespace fmlkit {

namespace {

// Blocks of the 20x20 system matrix, in units of 1e-3.
constexpr double kSigma11[10][10] = {
    {-6.09, 5.79, -0.945, -12.1, 9.38, -12.4, 4.92, 3.71, 1.17, 4.73},
    {-9.57, -8.88, -12.1, -12.9, 5.11, 26.5, -7.33, -8.01, -21.6, -10.2},
    {-0.733, 6.2, 10.7, -6.06, -7.07, -1.7, -16.4, 6.69, -1.59, 7.69},
    {7.83, 12.5, 5.77, -14.9, -17.8, -1.01, -4.05, -15, -6.61, -4.94},
    {8.1, 4.13, 4.21, 23.3, -4.63, 1.77, -14.9, 17.9, -17.1, -8.19},
    {-7.68, 6.98, 27.6, 19, 20.9, 12.2, 15.6, -11.2, -3.56, -2.47},
    {-14.9, -5.73, -19.7, -8.77, -9.17, -2.95, -9.48, -2.95, 5.43, 15.4},
    {-1.84, 2.05, -1.98, 3.83, -4.06, 7.72, 4.04, -13.7, 20.3, 0.509},
    {12.1, 19.7, -14.3, 12.6, -4.67, 9.72, 5.87, 0.664, -10.8, -18.2},
    {3.07, 3.65, 3.88, 7.44, 12.7, 13.5, -6.66, -23.9, -11.7, 16.6},
};

constexpr double kSigma12[10][10] = {
    {11.7, -12.3, -8.87, -6.86, -9.6, 11, 25.6, -0.155, 17.8, -10.9},
    {12.9, 3.28, 2.84, 3.35, 16.6, 5.96, 6.99, -20.2, 8.37, -8.87},
    {-0.154, -16.5, 12.1, 0.381, 11.2, -2.59, 12.8, 3.32, -10.9, -3.81},
    {6.49, 15.8, -0.273, 9.05, -3.15, 0.976, -7.35, 0.889, 6.41, 15.6},
    {4.86, -1.52, 0.118, 17.8, -5.08, -4.96, -2.89, 3, 22.4, 16.4},
    {7.83, -9.66, -2.09, 5.97, 3.97, 19.2, 4.03, -15.3, -8.5, -15.8},
    {-4.61, -4.98, 17, -14, -17.5, 0.104, -27.5, 10.9, -17.9, -5.9},
    {3.88, 14, -2.63, -7.27, -21, -0.403, -2.18, -22, 2.01, -2.45},
    {14.4, -4.65, -8.67, -23.2, -2.73, 9.58, -13.9, 0.415, 10.3, 17.5},
    {-16.8, 8.18, -12.3, 14.2, -18.4, -10.2, -11.4, -1.99, -2.65, -2.34},
};

constexpr double kSigma21[10][10] = {
    {-3.51, -4.91, -4.51, -15.8, -12, -5.72, -9.52, -14.3, 0.745, -11.8},
    {1.8, 2.07, 8.78, 5.3, -5.25, 5.7, 0.0957, 9.77, 2.17, 12.8},
    {-9.87, 5.19, 0.884, 2.59, -7.95, 5.56, 6.41, 16.4, 15.6, 14.3},
    {10.4, 7.14, 15.5, -6.6, 5.33, -3.37, 2.8, -9.61, 8, -16.8},
    {15.5, 19.6, -1.1, 0.6, 8.38, 7.62, 3.43, 1.28, 10.3, -4.76},
    {0.119, -9.43, -6.6, -9.99, -10.5, 17.8, 13.5, -6.63, -0.566, -1.81},
    {-6.77, -1.42, 7.46, 3.32, 11.7, 1.3, -6.21, 6.9, 3.89, 18.9},
    {2.93, 15.1, -4.65, 11.1, 9.13, -9.58, -7.04, 6.88, -4.07, 10.2},
    {-6.02, 14, -5.91, -4.92, 0.851, 0.652, -2.57, 0.835, -5.14, 10.6},
    {1.41, 5.8, -2.31, 6.17, 13.3, 3.57, 15.9, -0.753, -0.818, -10.3},
};

constexpr double kSigma22[10][10] = {
    {1500, 124, 814, -104, -179, -223, -731, -189, -400, 242},
    {124, 836, 679, 277, 197, -515, -52.1, -273, 101, 301},
    {814, 679, 1500, 651, 755, -605, -379, -546, -225, 223},
    {-104, 277, 651, 1960, 720, -782, -299, -775, -180, 506},
    {-179, 197, 755, 720, 2290, -973, 518, -19.1, -604, -369},
    {-223, -515, -605, -782, -973, 1290, -400, 412, 314, -420},
    {-731, -52.1, -379, -299, 518, -400, 1960, 68.3, 455, -316},
    {-189, -273, -546, -775, -19.1, 412, 68.3, 576, -53.6, -332},
    {-400, 101, -225, -180, -604, 314, 455, -53.6, 1030, 265},
    {242, 301, 223, 506, -369, -420, -316, -332, 265, 1090},
};

Eigen::Matrix<double, 10, 10> scaled_block(const double (&table)[10][10]) {
  Eigen::Matrix<double, 10, 10> m;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) m(i, j) = table[i][j] * 1e-3;
  return m;
}

Eigen::MatrixXd large_linear_matrix() {
  using Block = Eigen::Matrix<double, 10, 10>;
  const Block I = Block::Identity();
  Eigen::MatrixXd A(20, 20);
  A.block<10, 10>(0, 0) = sigma_block(1, 1);
  A.block<10, 10>(0, 10) = I + sigma_block(1, 2);
  A.block<10, 10>(10, 0) = -(I + sigma_block(2, 1));
  A.block<10, 10>(10, 10) = -sigma_block(2, 2);
  return A;
}

void rebuild_matrix(SystemSpec& s) {
  switch (s.id) {
    case BenchmarkId::DecayLinear: {
      Eigen::MatrixXd A(2, 2);
      A << s.params.at("a11"), s.params.at("a12"), s.params.at("a21"), s.params.at("a22");
      s.A = A;
      break;
    }
    case BenchmarkId::OscLinear: {
      const double inv = 1.0 / s.params.at("alpha");
      Eigen::MatrixXd A(2, 2);
      A << -inv, 1.0, -1.0, -inv;
      s.A = A;
      break;
    }
    case BenchmarkId::LargeLinear:
      s.A = large_linear_matrix();
      break;
    default:
      s.A.reset();
  }
}

void check_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      std::ostringstream msg;
      msg << what << " produced a non-finite state (";
      for (std::size_t i = 0; i < v.size(); ++i) msg << (i ? "," : "") << v[i];
      msg << ")";
      throw Error(msg.str());
    }
  }
}

}  // namespace

std::string_view to_string(BenchmarkId id) {
  switch (id) {
    case BenchmarkId::DecayLinear: return "decay-linear";
    case BenchmarkId::OscLinear: return "osc-linear";
    case BenchmarkId::Pendulum: return "pendulum";
    case BenchmarkId::Lorenz63: return "lorenz63";
    case BenchmarkId::LargeLinear: return "large-linear";
  }
  return "?";
}

BenchmarkId parse_benchmark_id(std::string_view name) {
  for (auto id : {BenchmarkId::DecayLinear, BenchmarkId::OscLinear, BenchmarkId::Pendulum, BenchmarkId::Lorenz63,
                  BenchmarkId::LargeLinear}) {
    if (to_string(id) == name) return id;
  }
  throw Error("unknown benchmark system '" + std::string(name) + "'", "system.id");
}

const Eigen::Matrix<double, 10, 10>& sigma_block(int row, int col) {
  static const Eigen::Matrix<double, 10, 10> s11 = scaled_block(kSigma11);
  static const Eigen::Matrix<double, 10, 10> s12 = scaled_block(kSigma12);
  static const Eigen::Matrix<double, 10, 10> s21 = scaled_block(kSigma21);
  static const Eigen::Matrix<double, 10, 10> s22 = scaled_block(kSigma22);
  if (row == 1 && col == 1) return s11;
  if (row == 1 && col == 2) return s12;
  if (row == 2 && col == 1) return s21;
  if (row == 2 && col == 2) return s22;
  throw Error("no Sigma block (" + std::to_string(row) + "," + std::to_string(col) + ")");
}

void Trajectory::push_back(std::span<const double> s) {
  if (dim == 0) dim = s.size();
  if (s.size() != dim) throw Error("state dimension " + std::to_string(s.size()) + " != " + std::to_string(dim));
  values.insert(values.end(), s.begin(), s.end());
}

SystemSpec SystemSpec::with_params(const std::map<std::string, double>& overrides) const {
  SystemSpec out = *this;
  for (const auto& [name, value] : overrides) {
    auto it = out.params.find(name);
    if (it == out.params.end()) {
      throw Error("system '" + std::string(to_string(id)) + "' has no parameter '" + name + "'", "system.overrides");
    }
    it->second = value;
  }
  rebuild_matrix(out);
  return out;
}

SystemSpec make_benchmark(BenchmarkId id, const std::map<std::string, double>& overrides) {
  SystemSpec s;
  s.id = id;
  switch (id) {
    case BenchmarkId::DecayLinear:
      s.n = 2;
      s.params = {{"a11", 1.0}, {"a12", -4.0}, {"a21", 4.0}, {"a22", -7.0}};
      break;
    case BenchmarkId::OscLinear:
      s.n = 2;
      s.params = {{"alpha", 64.0}};
      break;
    case BenchmarkId::Pendulum:
      s.n = 2;
      s.params = {{"alpha", 0.1}, {"beta", 9.80665}};
      break;
    case BenchmarkId::Lorenz63:
      s.n = 3;
      s.params = {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}};
      break;
    case BenchmarkId::LargeLinear:
      s.n = 20;
      break;
  }
  return s.with_params(overrides);
}

SystemSpec make_benchmark(std::string_view id, const std::map<std::string, double>& overrides) {
  return make_benchmark(parse_benchmark_id(id), overrides);
}

void eval_rhs(const SystemSpec& system, std::span<const double> y, std::span<double> out) {
  if (y.size() != system.n || out.size() != system.n) {
    throw Error("state dimension " + std::to_string(y.size()) + " does not match system dimension " +
                std::to_string(system.n));
  }
  switch (system.id) {
    case BenchmarkId::Pendulum: {
      const double alpha = system.params.at("alpha");
      const double beta = system.params.at("beta");
      out[0] = y[1];
      out[1] = -alpha * y[1] - beta * std::sin(y[0]);
      return;
    }
    case BenchmarkId::Lorenz63: {
      const double sigma = system.params.at("sigma");
      const double rho = system.params.at("rho");
      const double beta = system.params.at("beta");
      out[0] = sigma * (y[1] - y[0]);
      out[1] = y[0] * (rho - y[2]) - y[1];
      out[2] = y[0] * y[1] - beta * y[2];
      return;
    }
    default: {
      const Eigen::MatrixXd& A = *system.A;
      for (std::size_t i = 0; i < system.n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < system.n; ++j) acc += A(i, j) * y[j];
        out[i] = acc;
      }
    }
  }
}

Vector eval_rhs(const SystemSpec& system, std::span<const double> state) {
  Vector out(system.n);
  eval_rhs(system, state, out);
  return out;
}

namespace {

void rk4_inplace(const SystemSpec& system, Vector& y, double h, Vector& k1, Vector& k2, Vector& k3, Vector& k4,
                 Vector& tmp) {
  const std::size_t n = y.size();
  eval_rhs(system, y, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  eval_rhs(system, tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  eval_rhs(system, tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
  eval_rhs(system, tmp, k4);
  for (std::size_t i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace

Vector rk4_step(const SystemSpec& system, std::span<const double> state, double h) {
  if (!(h > 0.0)) throw Error("step size must be positive");
  if (state.size() != system.n) throw Error("state dimension does not match system dimension");
  const std::size_t n = system.n;
  Vector y(state.begin(), state.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
  rk4_inplace(system, y, h, k1, k2, k3, k4, tmp);
  check_finite(y, "rk4_step");
  return y;
}

Trajectory integrate(const SystemSpec& system, std::span<const double> y0, double dt, std::size_t steps,
                     std::size_t substeps) {
  if (!(dt > 0.0)) throw Error("dt must be positive");
  if (substeps < 1) throw Error("substeps must be >= 1");
  if (y0.size() != system.n) throw Error("initial state dimension does not match system dimension");
  const std::size_t n = system.n;
  Trajectory traj;
  traj.dim = n;
  traj.dt = dt;
  traj.values.reserve((steps + 1) * n);
  traj.push_back(y0);
  Vector y(y0.begin(), y0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double h = dt / static_cast<double>(substeps);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t j = 0; j < substeps; ++j) rk4_inplace(system, y, h, k1, k2, k3, k4, tmp);
    check_finite(y, "integrate (step " + std::to_string(s + 1) + ")");
    traj.push_back(y);
  }
  return traj;
}

Trajectory reference_trajectory(const SystemSpec& system, std::span<const double> y0, double dt, std::size_t steps,
                                std::size_t substeps) {
  if (!system.exact()) return integrate(system, y0, dt, steps, substeps);
  if (!(dt > 0.0)) throw Error("dt must be positive");
  if (y0.size() != system.n) throw Error("initial state dimension does not match system dimension");
  const Eigen::MatrixXd step = expm(dt * *system.A);
  Trajectory traj;
  traj.dim = system.n;
  traj.dt = dt;
  traj.values.reserve((steps + 1) * system.n);
  traj.push_back(y0);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y0.data(), static_cast<Eigen::Index>(y0.size()));
  for (std::size_t s = 0; s < steps; ++s) {
    y = step * y;
    traj.push_back(std::span<const double>(y.data(), system.n));
  }
  return traj;
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw Error("expm requires a square matrix");
  if (!A.allFinite()) throw Error("expm input has non-finite entries");
  const Eigen::Index n = A.rows();
  // 1-norm scaling so the Taylor core sees ||B|| <= 1/2.
  const double norm = A.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Eigen::MatrixXd B = A / std::ldexp(1.0, squarings);

  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= 30; ++k) {
    term = term * B / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() <= 1e-18 * result.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

Vector exact_linear_solution(const SystemSpec& system, std::span<const double> y0, double t) {
  if (!system.exact()) throw Error("system '" + std::string(to_string(system.id)) + "' has no exact solution");
  if (t < 0.0) throw Error("time must be non-negative");
  if (y0.size() != system.n) throw Error("initial state dimension does not match system dimension");
  const Eigen::VectorXd y =
      expm(t * *system.A) * Eigen::Map<const Eigen::VectorXd>(y0.data(), static_cast<Eigen::Index>(y0.size()));
  return Vector(y.data(), y.data() + y.size());
}

}  // namespace fmlkit
