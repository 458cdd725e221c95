#include "fmlkit/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace fmlkit {

namespace {

const Json& require(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw Error("expected an object", path);
  auto it = j.find(key);
  if (it == j.end()) throw Error("missing required field", path.empty() ? key : path + "." + key);
  return *it;
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void reject_unknown(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw Error("unknown field", join(path, it.key()));
  }
}

double get_number(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_number()) throw Error("expected a number", join(path, key));
  return v.get<double>();
}

std::size_t get_count(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw Error("expected a non-negative integer", join(path, key));
  return v.get<std::size_t>();
}

bool get_bool(const Json& j, const std::string& key, const std::string& path, bool fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_boolean()) throw Error("expected true or false", join(path, key));
  return v.get<bool>();
}

std::string get_string(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_string()) throw Error("expected a string", join(path, key));
  return v.get<std::string>();
}

Vector get_vector(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_array()) throw Error("expected an array of numbers", join(path, key));
  Vector out;
  for (const auto& x : v) {
    if (!x.is_number()) throw Error("expected an array of numbers", join(path, key));
    out.push_back(x.get<double>());
  }
  return out;
}

std::vector<std::size_t> get_counts(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_array()) throw Error("expected an array of integers", join(path, key));
  std::vector<std::size_t> out;
  for (const auto& x : v) {
    if (!x.is_number_integer() || x.get<long long>() < 0) throw Error("expected an array of integers", join(path, key));
    out.push_back(x.get<std::size_t>());
  }
  return out;
}

}  // namespace

RawDataConfig BenchmarkConfig::raw_config() const {
  RawDataConfig c;
  c.n_traj = n_traj;
  c.length = length;
  c.dt = dt;
  c.domain = domain;
  c.seed = data_seed();
  c.param_ranges = random_params;
  c.substeps = substeps;
  return c;
}

SamplingPlan BenchmarkConfig::sampling_plan() const {
  return SamplingPlan{n_memory, n_multistep, n_burst, burst_seed()};
}

TrainingConfig BenchmarkConfig::training_config() const {
  TrainingConfig c;
  c.n_multistep = n_multistep;
  c.epochs = epochs;
  c.learning_rate = learning_rate;
  c.batch_size = batch_size;
  c.cyclic = cyclic_max > 0.0;
  c.cyclic_max = cyclic_max;
  c.cycle_epochs = cycle_epochs;
  c.seed = train_seed();
  return c;
}

ObservableMap BenchmarkConfig::observable() const { return ObservableMap{observe}; }

void BenchmarkConfig::validate() const {
  if (preset != "paper" && preset != "desk" && preset != "custom") {
    throw Error("must be paper, desk or custom", "preset");
  }
  SystemSpec spec = make_benchmark(system);
  for (const auto& [k, v] : overrides) {
    if (!spec.params.count(k)) throw Error("system has no parameter '" + k + "'", "system.overrides." + k);
  }
  for (const auto& [k, range] : random_params) {
    if (!spec.params.count(k)) throw Error("system has no parameter '" + k + "'", "system.random_params." + k);
    if (!(range.second >= range.first)) throw Error("empty range", "system.random_params." + k);
  }
  if (!(dt > 0.0)) throw Error("must be positive", "data.dt");
  try {
    domain.validate();
  } catch (const Error& e) {
    throw Error(e.what(), "data.domain");
  }
  if (domain.dim() != spec.n) {
    throw Error("has " + std::to_string(domain.dim()) + " dimensions, system has " + std::to_string(spec.n),
                "data.domain");
  }
  if (n_traj < 1) throw Error("must be >= 1", "data.n_traj");
  if (length < 1) throw Error("must be >= 1", "data.length");
  if (n_burst < 1) throw Error("must be >= 1", "data.n_burst");
  if (substeps < 1) throw Error("must be >= 1", "data.substeps");
  try {
    observable().validate(spec.n);
  } catch (const Error& e) {
    throw Error(e.what(), "data.observe");
  }
  if (hidden.empty()) throw Error("needs at least one hidden layer", "model.hidden");
  for (std::size_t h : hidden) {
    if (h < 1) throw Error("widths must be >= 1", "model.hidden");
  }
  if (!(learning_rate > 0.0)) throw Error("must be positive", "training.learning_rate");
  if (epochs < 1) throw Error("must be >= 1", "training.epochs");
  if (n_model < 1) throw Error("must be >= 1", "training.n_model");
  if (cyclic_max > 0.0 && cyclic_max < learning_rate) throw Error("must be >= learning_rate", "training.cyclic_max");
  if (cyclic_max > 0.0 && cycle_epochs < 2) throw Error("must be >= 2", "training.cycle_epochs");
  if (test_count < 1) throw Error("must be >= 1", "evaluation.test_count");
}

Json to_json(const BenchmarkConfig& c) {
  Json j;
  j["name"] = c.name;
  j["preset"] = c.preset;
  Json sys;
  sys["id"] = c.system;
  sys["overrides"] = Json::object();
  for (const auto& [k, v] : c.overrides) sys["overrides"][k] = v;
  sys["random_params"] = Json::object();
  for (const auto& [k, r] : c.random_params) sys["random_params"][k] = {r.first, r.second};
  j["system"] = sys;
  j["data"] = {{"dt", c.dt},
               {"domain", {{"lower", c.domain.lower}, {"upper", c.domain.upper}}},
               {"n_traj", c.n_traj},
               {"length", c.length},
               {"n_burst", c.n_burst},
               {"substeps", c.substeps},
               {"observe", c.observe}};
  j["model"] = {
      {"n_memory", c.n_memory}, {"n_multistep", c.n_multistep}, {"hidden", c.hidden}, {"residual", c.residual}};
  j["training"] = {{"learning_rate", c.learning_rate},
                   {"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"n_model", c.n_model}};
  if (c.cyclic_max > 0.0) {
    j["training"]["cyclic_max"] = c.cyclic_max;
    j["training"]["cycle_epochs"] = c.cycle_epochs;
  }
  j["evaluation"] = {{"test_count", c.test_count}, {"horizon", c.horizon}, {"relative_error", c.relative_error}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

BenchmarkConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  reject_unknown(j, "", {"name", "preset", "system", "data", "model", "training", "evaluation", "seed", "output_dir"});
  BenchmarkConfig c;
  c.name = j.contains("name") ? get_string(j, "name", "") : "";
  c.preset = j.contains("preset") ? get_string(j, "preset", "") : "custom";

  const Json& sys = require(j, "system", "");
  reject_unknown(sys, "system", {"id", "overrides", "random_params"});
  c.system = get_string(sys, "id", "system");
  if (sys.contains("overrides")) {
    const Json& o = sys.at("overrides");
    if (!o.is_object()) throw Error("expected an object", "system.overrides");
    for (auto it = o.begin(); it != o.end(); ++it) c.overrides[it.key()] = get_number(o, it.key(), "system.overrides");
  }
  if (sys.contains("random_params")) {
    const Json& r = sys.at("random_params");
    if (!r.is_object()) throw Error("expected an object", "system.random_params");
    for (auto it = r.begin(); it != r.end(); ++it) {
      const Vector range = get_vector(r, it.key(), "system.random_params");
      if (range.size() != 2) throw Error("expected [low, high]", "system.random_params." + it.key());
      c.random_params[it.key()] = {range[0], range[1]};
    }
  }

  const Json& data = require(j, "data", "");
  reject_unknown(data, "data", {"dt", "domain", "n_traj", "length", "n_burst", "substeps", "observe"});
  c.dt = get_number(data, "dt", "data");
  const Json& dom = require(data, "domain", "data");
  reject_unknown(dom, "data.domain", {"lower", "upper"});
  c.domain.lower = get_vector(dom, "lower", "data.domain");
  c.domain.upper = get_vector(dom, "upper", "data.domain");
  c.n_traj = get_count(data, "n_traj", "data");
  c.length = get_count(data, "length", "data");
  c.n_burst = get_count(data, "n_burst", "data");
  if (data.contains("substeps")) c.substeps = get_count(data, "substeps", "data");
  if (data.contains("observe")) {
    c.observe = get_counts(data, "observe", "data");
  } else {
    c.observe = ObservableMap::identity(c.domain.lower.size()).indices;
  }

  const Json& model = require(j, "model", "");
  reject_unknown(model, "model", {"n_memory", "n_multistep", "hidden", "residual"});
  c.n_memory = get_count(model, "n_memory", "model");
  c.n_multistep = get_count(model, "n_multistep", "model");
  c.hidden = get_counts(model, "hidden", "model");
  c.residual = get_bool(model, "residual", "model", true);

  const Json& tr = require(j, "training", "");
  reject_unknown(tr, "training", {"learning_rate", "epochs", "batch_size", "n_model", "cyclic_max", "cycle_epochs"});
  c.learning_rate = get_number(tr, "learning_rate", "training");
  c.epochs = get_count(tr, "epochs", "training");
  if (tr.contains("batch_size")) c.batch_size = get_count(tr, "batch_size", "training");
  c.n_model = get_count(tr, "n_model", "training");
  if (tr.contains("cyclic_max")) c.cyclic_max = get_number(tr, "cyclic_max", "training");
  if (tr.contains("cycle_epochs")) c.cycle_epochs = get_count(tr, "cycle_epochs", "training");

  const Json& ev = require(j, "evaluation", "");
  reject_unknown(ev, "evaluation", {"test_count", "horizon", "relative_error"});
  c.test_count = get_count(ev, "test_count", "evaluation");
  c.horizon = get_count(ev, "horizon", "evaluation");
  c.relative_error = get_bool(ev, "relative_error", "evaluation", false);

  if (j.contains("seed")) c.seed = [&] {
      const Json& v = j.at("seed");
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw Error("expected a non-negative integer", "seed");
      }
      return v.get<std::uint64_t>();
    }();
  if (j.contains("output_dir")) c.output_dir = get_string(j, "output_dir", "");
  c.validate();
  return c;
}

BenchmarkConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config", path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed JSON: ") + e.what(), path);
  }
  return config_from_json(j);
}

void save_config(const BenchmarkConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing", path);
  out << to_json(cfg).dump(2) << '\n';
}

std::string config_digest(const BenchmarkConfig& cfg) {
  Json j = to_json(cfg);
  j.erase("output_dir");
  const std::string text = j.dump();
  return digest_hex(fnv1a({reinterpret_cast<const unsigned char*>(text.data()), text.size()}));
}

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {"5.1.1", "5.1.2", "5.2.1", "5.2.2", "5.3.1", "5.3.2",
                                                 "5.3.3", "5.4.1", "5.4.2", "5.4.3", "5.5.1"};
  return names;
}

namespace {

BenchmarkConfig paper_preset(const std::string& name) {
  constexpr double pi = std::numbers::pi;
  BenchmarkConfig c;
  c.name = name;
  c.preset = "paper";
  // Shared by every benchmark in the suite.
  c.dt = 0.01;
  c.n_traj = 10000;
  c.n_burst = 5;
  c.n_multistep = 10;
  c.hidden = {10, 10, 10};
  c.learning_rate = 1e-4;
  c.epochs = 10000;
  c.n_model = 10;
  c.test_count = 100;

  const std::string group = name.substr(0, 3);
  if (group == "5.1" || group == "5.2") {
    c.system = group == "5.1" ? "decay-linear" : "osc-linear";
    c.domain = Domain({0.0, 0.0}, {2.0, 2.0});
    c.length = 200;
    c.horizon = group == "5.1" ? 500 : 2000;
    const bool partial = name.back() == '2';
    c.n_memory = partial ? 10 : 0;
    c.observe = partial ? std::vector<std::size_t>{0} : std::vector<std::size_t>{0, 1};
  } else if (group == "5.3") {
    c.system = "pendulum";
    c.domain = Domain({-pi / 2, -pi}, {pi / 2, pi});
    c.length = 1000;
    c.horizon = 2000;
    c.n_memory = name == "5.3.1" ? 0 : 10;
    if (name != "5.3.1") c.random_params["alpha"] = {0.0, 0.2};
    c.observe = name == "5.3.3" ? std::vector<std::size_t>{0} : std::vector<std::size_t>{0, 1};
  } else if (group == "5.4") {
    c.system = "lorenz63";
    c.domain = Domain({-pi / 2, -pi / 2, -pi / 2}, {pi / 2, pi / 2, pi / 2});
    c.length = 10000;
    c.horizon = 1000;
    c.hidden = {30, 30, 30};
    c.n_memory = name == "5.4.1" ? 0 : 10;
    if (name == "5.4.1") c.observe = {0, 1, 2};
    if (name == "5.4.2") c.observe = {0, 1};
    if (name == "5.4.3") c.observe = {0};
  } else if (name == "5.5.1") {
    c.system = "large-linear";
    c.dt = 0.02;
    c.domain = Domain(Vector(20, -2.0), Vector(20, 2.0));
    c.length = 100;
    c.horizon = 500;
    c.n_memory = 30;
    c.hidden = {100, 100, 100};
    for (std::size_t i = 0; i < 10; ++i) c.observe.push_back(i);
  }
  return c;
}

}  // namespace

BenchmarkConfig make_preset(const std::string& name, const std::string& preset) {
  const auto& names = benchmark_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw Error("unknown benchmark '" + name + "'", "benchmark");
  }
  if (preset != "paper" && preset != "desk") throw Error("unknown preset '" + preset + "'", "preset");
  BenchmarkConfig c = paper_preset(name);
  if (preset == "desk") {
    c.preset = "desk";
    c.n_traj = 1000;
    c.epochs = 2000;
    c.n_model = 3;
  }
  c.validate();
  return c;
}

}  // namespace fmlkit
