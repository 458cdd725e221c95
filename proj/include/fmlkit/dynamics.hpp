#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "fmlkit/common.hpp"

namespace fmlkit {

enum class BenchmarkId { DecayLinear, OscLinear, Pendulum, Lorenz63, LargeLinear };

std::string_view to_string(BenchmarkId id);
BenchmarkId parse_benchmark_id(std::string_view name);

/// A benchmark dynamical system dy/dt = f(y). Linear systems carry their
/// matrix and `exact` is set.
struct SystemSpec {
  BenchmarkId id{};
  std::size_t n = 0;
  std::map<std::string, double> params;
  std::optional<Eigen::MatrixXd> A;

  bool exact() const { return A.has_value(); }

  /// Copy with some parameters replaced. Linear matrices are rebuilt.
  SystemSpec with_params(const std::map<std::string, double>& overrides) const;
};

/// Uniformly sampled, time-stamp free trajectory. `values` is row-major:
/// state k occupies [k*dim, (k+1)*dim).
struct Trajectory {
  std::size_t dim = 0;
  double dt = 0.0;
  Vector values;

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> state(std::size_t k) const { return {values.data() + k * dim, dim}; }
  std::span<double> state(std::size_t k) { return {values.data() + k * dim, dim}; }
  void push_back(std::span<const double> s);

  bool operator==(const Trajectory&) const = default;
};

SystemSpec make_benchmark(BenchmarkId id, const std::map<std::string, double>& overrides = {});
SystemSpec make_benchmark(std::string_view id, const std::map<std::string, double>& overrides = {});

/// The 10x10 blocks of the 20x20 system, already multiplied by 1e-3.
const Eigen::Matrix<double, 10, 10>& sigma_block(int row, int col);

Vector eval_rhs(const SystemSpec& system, std::span<const double> state);
void eval_rhs(const SystemSpec& system, std::span<const double> state, std::span<double> out);

Vector rk4_step(const SystemSpec& system, std::span<const double> state, double h);

/// RK4 with `substeps` internal steps per recorded step of size dt.
Trajectory integrate(const SystemSpec& system, std::span<const double> y0, double dt, std::size_t steps,
                     std::size_t substeps = 10);

/// Ground-truth generator: exact propagation exp(dt A)^k y0 for linear
/// systems, RK4 with `substeps` otherwise.
Trajectory reference_trajectory(const SystemSpec& system, std::span<const double> y0, double dt, std::size_t steps,
                                std::size_t substeps = 10);

/// Matrix exponential by scaling and squaring around a Taylor core.
Eigen::MatrixXd expm(const Eigen::MatrixXd& A);

Vector exact_linear_solution(const SystemSpec& system, std::span<const double> y0, double t);

}  // namespace fmlkit
