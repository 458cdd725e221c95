#include "fmlkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fmlkit/binio.hpp"

namespace fmlkit {

namespace {

constexpr char kDatasetMagic[9] = "FMLKITDS";
constexpr std::uint32_t kKindRaw = 1;
constexpr std::uint32_t kKindTraining = 2;

void write_row(std::ofstream& out, std::span<const double> s) {
  char buf[32];
  for (std::size_t j = 0; j < s.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", s[j]);
    if (j) out << ',';
    out << buf;
  }
  out << '\n';
}

}  // namespace

Domain::Domain(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) { validate(); }

void Domain::validate() const {
  if (lower.empty()) throw Error("domain has no dimensions", "domain");
  if (lower.size() != upper.size()) throw Error("lower and upper bounds differ in length", "domain");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(upper[i] > lower[i])) {
      throw Error("upper bound must exceed lower bound in dimension " + std::to_string(i), "domain");
    }
  }
}

ObservableMap ObservableMap::identity(std::size_t n) {
  ObservableMap m;
  for (std::size_t i = 0; i < n; ++i) m.indices.push_back(i);
  return m;
}

void ObservableMap::validate(std::size_t n) const {
  if (indices.empty()) throw Error("observable map selects no components", "observe");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) {
      throw Error("index " + std::to_string(indices[i]) + " out of range for dimension " + std::to_string(n),
                  "observe");
    }
    if (i > 0 && indices[i] <= indices[i - 1]) throw Error("indices must be strictly increasing", "observe");
  }
}

void RawDataConfig::validate() const {
  if (n_traj < 1) throw Error("must be >= 1", "n_traj");
  if (length < 1) throw Error("must be >= 1", "length");
  if (!(dt > 0.0)) throw Error("must be positive", "dt");
  if (substeps < 1) throw Error("must be >= 1", "substeps");
  domain.validate();
  for (const auto& [name, range] : param_ranges) {
    if (!(range.second >= range.first)) throw Error("empty range", "system.random_params." + name);
  }
}

std::size_t SamplingPlan::window_length() const { return required_window_length(n_memory, n_multistep); }

void SamplingPlan::validate() const {
  if (n_burst < 1) throw Error("must be >= 1", "n_burst");
}

void TrainingSet::append(const TrainingSet& other) {
  if (other.count() == 0 && other.values.empty()) {
    skipped += other.skipped;
    return;
  }
  if (values.empty() && d == 0) {
    d = other.d;
    dt = other.dt;
    n_memory = other.n_memory;
    n_multistep = other.n_multistep;
  }
  if (other.d != d || other.n_memory != n_memory || other.n_multistep != n_multistep || other.dt != dt) {
    throw Error("cannot append training sets with different layouts");
  }
  values.insert(values.end(), other.values.begin(), other.values.end());
  skipped += other.skipped;
}

std::size_t required_window_length(std::size_t n_memory, std::size_t n_multistep) {
  return n_memory + n_multistep + 2;
}

std::vector<Vector> sample_initial_conditions(const Domain& domain, std::size_t count, Rng& rng) {
  domain.validate();
  if (count < 1) throw Error("count must be >= 1");
  std::vector<Vector> out(count, Vector(domain.dim()));
  for (auto& x : out) {
    for (std::size_t i = 0; i < domain.dim(); ++i) x[i] = rng.uniform(domain.lower[i], domain.upper[i]);
  }
  return out;
}

std::pair<Vector, SystemSpec> draw_trajectory_setup(const SystemSpec& system, const RawDataConfig& cfg,
                                                    std::size_t index) {
  Rng rng(derive_seed(cfg.seed, index));
  Vector y0 = sample_initial_conditions(cfg.domain, 1, rng).front();
  if (cfg.param_ranges.empty()) return {std::move(y0), system};
  std::map<std::string, double> drawn;
  for (const auto& [name, range] : cfg.param_ranges) drawn[name] = rng.uniform(range.first, range.second);
  return {std::move(y0), system.with_params(drawn)};
}

RawDataset generate_raw_dataset(const SystemSpec& system, const RawDataConfig& cfg, std::size_t first,
                                std::size_t count, unsigned workers) {
  cfg.validate();
  if (cfg.domain.dim() != system.n) {
    throw Error("domain dimension " + std::to_string(cfg.domain.dim()) + " != system dimension " +
                    std::to_string(system.n),
                "domain");
  }
  if (first >= cfg.n_traj) return {};
  count = std::min(count, cfg.n_traj - first);

  std::vector<Trajectory> slots(count);
  std::vector<char> ok(count, 0);
  parallel_for(count, workers, [&](std::size_t k) {
    auto [y0, instance] = draw_trajectory_setup(system, cfg, first + k);
    try {
      slots[k] = reference_trajectory(instance, y0, cfg.dt, cfg.length, cfg.substeps);
      ok[k] = 1;
    } catch (const Error&) {
      ok[k] = 0;
    }
  });

  RawDataset raw;
  raw.trajectories.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    if (ok[k]) {
      raw.trajectories.push_back(std::move(slots[k]));
    } else {
      ++raw.discarded;
    }
  }
  if (raw.trajectories.empty()) throw Error("every trajectory blew up during integration");
  return raw;
}

Trajectory observe(const Trajectory& traj, const ObservableMap& map) {
  map.validate(traj.dim);
  Trajectory out;
  out.dim = map.dim();
  out.dt = traj.dt;
  out.values.reserve(traj.size() * out.dim);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto s = traj.state(k);
    for (std::size_t idx : map.indices) out.values.push_back(s[idx]);
  }
  return out;
}

RawDataset observe(const RawDataset& raw, const ObservableMap& map) {
  RawDataset out;
  out.discarded = raw.discarded;
  out.trajectories.reserve(raw.trajectories.size());
  for (const auto& t : raw.trajectories) out.trajectories.push_back(observe(t, map));
  return out;
}

TrainingSet subsample_bursts(const RawDataset& raw, const SamplingPlan& plan, Rng& rng) {
  plan.validate();
  if (raw.trajectories.empty()) throw Error("raw dataset is empty");
  const std::size_t n_data = plan.window_length();
  TrainingSet set;
  set.d = raw.trajectories.front().dim;
  set.dt = raw.trajectories.front().dt;
  set.n_memory = plan.n_memory;
  set.n_multistep = plan.n_multistep;
  set.values.reserve(raw.trajectories.size() * plan.n_burst * n_data * set.d);
  for (const auto& traj : raw.trajectories) {
    if (traj.dim != set.d || traj.dt != set.dt) throw Error("raw trajectories disagree on dimension or dt");
    if (traj.size() < n_data) {
      ++set.skipped;
      continue;
    }
    const std::size_t starts = traj.size() - n_data + 1;
    for (std::size_t b = 0; b < plan.n_burst; ++b) {
      const std::size_t offset = rng.below(starts);
      const auto first = traj.values.begin() + static_cast<std::ptrdiff_t>(offset * set.d);
      set.values.insert(set.values.end(), first, first + static_cast<std::ptrdiff_t>(n_data * set.d));
    }
  }
  if (set.skipped == raw.trajectories.size()) {
    throw Error("every trajectory is shorter than the window length " + std::to_string(n_data));
  }
  return set;
}

TrainingSet subsample_bursts(const RawDataset& raw, const SamplingPlan& plan) {
  Rng rng(plan.seed);
  return subsample_bursts(raw, plan, rng);
}

void save_dataset(const TrainingSet& set, const std::string& path) {
  binio::Writer w(path);
  w.put_bytes(kDatasetMagic, 8);
  w.put<std::uint32_t>(kDatasetFormatVersion);
  w.put<std::uint32_t>(kKindTraining);
  w.put<std::uint64_t>(set.count());
  w.put<std::uint64_t>(set.d);
  w.put<double>(set.dt);
  w.put<std::uint64_t>(set.n_memory);
  w.put<std::uint64_t>(set.n_multistep);
  w.put<std::uint64_t>(set.skipped);
  w.put_doubles(set.values);
  w.finish();
}

void save_dataset(const RawDataset& set, const std::string& path) {
  binio::Writer w(path);
  const std::size_t dim = set.trajectories.empty() ? 0 : set.trajectories.front().dim;
  const double dt = set.trajectories.empty() ? 0.0 : set.trajectories.front().dt;
  w.put_bytes(kDatasetMagic, 8);
  w.put<std::uint32_t>(kDatasetFormatVersion);
  w.put<std::uint32_t>(kKindRaw);
  w.put<std::uint64_t>(set.trajectories.size());
  w.put<std::uint64_t>(dim);
  w.put<double>(dt);
  w.put<std::uint64_t>(0);
  w.put<std::uint64_t>(0);
  w.put<std::uint64_t>(set.discarded);
  for (const auto& t : set.trajectories) {
    if (t.dim != dim || t.dt != dt) throw Error("raw trajectories disagree on dimension or dt", path);
    w.put<std::uint64_t>(t.size());
    w.put_doubles(t.values);
  }
  w.finish();
}

namespace {

struct DatasetHeader {
  std::uint32_t kind;
  std::uint64_t count, dim;
  double dt;
  std::uint64_t n_memory, n_multistep, dropped;
};

DatasetHeader read_header(binio::Reader& r, std::uint32_t expected_kind) {
  r.expect_magic(kDatasetMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDatasetFormatVersion) {
    throw Error("unsupported format version " + std::to_string(version), "version");
  }
  DatasetHeader h{};
  h.kind = r.get<std::uint32_t>("kind");
  if (h.kind != expected_kind) {
    throw Error(h.kind == kKindRaw ? "file holds a raw dataset" : "file holds a training set", "kind");
  }
  h.count = r.get<std::uint64_t>("count");
  h.dim = r.get<std::uint64_t>("dim");
  h.dt = r.get<double>("dt");
  h.n_memory = r.get<std::uint64_t>("n_memory");
  h.n_multistep = r.get<std::uint64_t>("n_multistep");
  h.dropped = r.get<std::uint64_t>("discarded");
  if (h.count > 0 && h.dim == 0) throw Error("zero dimension with non-empty payload", "dim");
  if (h.dim > (1u << 16)) throw Error("implausible dimension", "dim");
  if (h.count > 0 && !(h.dt > 0.0)) throw Error("dt must be positive", "dt");
  return h;
}

}  // namespace

TrainingSet load_training_set(const std::string& path) {
  binio::Reader r(path);
  const auto h = read_header(r, kKindTraining);
  TrainingSet set;
  set.d = h.dim;
  set.dt = h.dt;
  set.n_memory = h.n_memory;
  set.n_multistep = h.n_multistep;
  set.skipped = h.dropped;
  const std::uint64_t expected = h.count * set.window_length() * h.dim;
  if (r.remaining() != expected * sizeof(double)) {
    throw Error("payload size disagrees with count x window length x dim", "payload");
  }
  set.values = r.get_doubles(expected, "payload");
  return set;
}

RawDataset load_raw_dataset(const std::string& path) {
  binio::Reader r(path);
  const auto h = read_header(r, kKindRaw);
  RawDataset raw;
  raw.discarded = h.dropped;
  raw.trajectories.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    const auto states = r.get<std::uint64_t>("trajectory length");
    if (states * h.dim * sizeof(double) > r.remaining()) throw Error("file truncated", "payload");
    Trajectory t;
    t.dim = h.dim;
    t.dt = h.dt;
    t.values = r.get_doubles(states * h.dim, "payload");
    raw.trajectories.push_back(std::move(t));
  }
  r.expect_end("payload");
  return raw;
}

void write_csv(const TrainingSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing", path);
  const std::size_t n_data = set.window_length();
  for (std::size_t i = 0; i < set.count(); ++i) {
    if (i) out << '\n';
    const auto w = set.window(i);
    for (std::size_t k = 0; k < n_data; ++k) write_row(out, w.subspan(k * set.d, set.d));
  }
}

void write_csv(const RawDataset& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing", path);
  for (std::size_t i = 0; i < set.trajectories.size(); ++i) {
    if (i) out << '\n';
    const auto& t = set.trajectories[i];
    for (std::size_t k = 0; k < t.size(); ++k) write_row(out, t.state(k));
  }
}

}  // namespace fmlkit
