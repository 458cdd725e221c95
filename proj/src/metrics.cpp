#include "fmlkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fmlkit {

ErrorSeries l2_error_series(const Trajectory& pred, const Trajectory& ref, bool relative) {
  if (pred.size() != ref.size()) {
    throw Error("trajectory lengths differ (" + std::to_string(pred.size()) + " vs " + std::to_string(ref.size()) +
                ")");
  }
  if (pred.dim != ref.dim) throw Error("trajectory dimensions differ");
  if (pred.dt != ref.dt) throw Error("trajectory time steps differ");
  ErrorSeries out;
  out.dt = ref.dt;
  out.values.resize(ref.size());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    const auto p = pred.state(k);
    const auto r = ref.state(k);
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < ref.dim; ++i) {
      diff += (p[i] - r[i]) * (p[i] - r[i]);
      norm += r[i] * r[i];
    }
    out.values[k] = std::sqrt(diff);
    if (relative && norm > 0.0) out.values[k] /= std::sqrt(norm);
  }
  return out;
}

ErrorSeries average_error(const std::vector<ErrorSeries>& series) {
  if (series.empty()) throw Error("no error series to average");
  ErrorSeries out;
  out.dt = series.front().dt;
  out.values.assign(series.front().values.size(), 0.0);
  for (const auto& s : series) {
    if (s.values.size() != out.values.size()) throw Error("error series lengths differ");
    if (s.dt != out.dt) throw Error("error series time steps differ");
    for (std::size_t k = 0; k < s.values.size(); ++k) out.values[k] += s.values[k];
  }
  const double n = static_cast<double>(series.size());
  for (double& v : out.values) v /= n;
  return out;
}

double time_average(const ErrorSeries& series) {
  if (series.values.empty()) throw Error("empty error series");
  double sum = 0.0;
  for (double v : series.values) sum += v;
  return sum / static_cast<double>(series.values.size());
}

LossDecay loss_decay_ok(const LossHistory& history, double required_ratio) {
  if (history.losses.empty()) throw Error("empty loss history");
  const double first = history.losses.front();
  const double best = *std::min_element(history.losses.begin(), history.losses.end());
  LossDecay out;
  out.ratio = first > 0.0 ? best / first : 1.0;
  out.ok = out.ratio <= required_ratio;
  return out;
}

void write_error_csv(const ErrorSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing", path);
  out << "step,time,error\n";
  char buf[96];
  for (std::size_t k = 0; k < series.values.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.17g\n", k, static_cast<double>(k) * series.dt, series.values[k]);
    out << buf;
  }
}

ErrorSeries read_error_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open for reading", path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,time,error", 0) != 0) throw Error("missing CSV header", path);
  ErrorSeries out;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string step, time, err;
    if (!std::getline(row, step, ',') || !std::getline(row, time, ',') || !std::getline(row, err, ',')) {
      throw Error("malformed row '" + line + "'", path);
    }
    times.push_back(std::stod(time));
    out.values.push_back(std::stod(err));
  }
  out.dt = times.size() >= 2 ? times[1] - times[0] : 0.0;
  return out;
}

}  // namespace fmlkit
