#pragma once

#include <string>
#include <vector>

#include "fmlkit/dynamics.hpp"
#include "fmlkit/fml.hpp"

namespace fmlkit {

/// Per-step error, values[k] at time k*dt.
struct ErrorSeries {
  double dt = 0.0;
  Vector values;

  bool operator==(const ErrorSeries&) const = default;
};

/// values[k] = |pred[k] - ref[k]|_2, or that divided by |ref[k]|_2 when
/// `relative` is set (zero reference norms yield the absolute error).
ErrorSeries l2_error_series(const Trajectory& pred, const Trajectory& ref, bool relative = false);

ErrorSeries average_error(const std::vector<ErrorSeries>& series);

double time_average(const ErrorSeries& series);

struct LossDecay {
  bool ok = false;
  double ratio = 1.0;  // min(loss) / loss[0]
};

/// Training loss must fall at least two orders of magnitude below its first value.
LossDecay loss_decay_ok(const LossHistory& history, double required_ratio = 1e-2);

void write_error_csv(const ErrorSeries& series, const std::string& path);
ErrorSeries read_error_csv(const std::string& path);

}  // namespace fmlkit
