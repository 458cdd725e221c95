#include "fmlkit/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fmlkit {

void EnsembleModel::validate() const {
  if (members.empty()) throw Error("ensemble has no members");
  if (seeds.size() != members.size()) throw Error("ensemble seeds and members differ in count");
  const FmlModel& ref = members.front();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const FmlModel& m = members[i];
    m.validate();
    if (m.d != ref.d || m.n_memory != ref.n_memory || m.dt != ref.dt || m.residual != ref.residual ||
        m.net.layer_sizes != ref.net.layer_sizes || m.net.activation != ref.net.activation) {
      throw Error("member " + std::to_string(i) + " differs structurally from member 0");
    }
  }
}

std::uint64_t member_seed(std::uint64_t base_seed, std::size_t index) { return derive_seed(base_seed, index); }

TrainResult train_member(const FmlModel& templ, const TrainingSet& set, TrainingConfig cfg, std::uint64_t seed) {
  FmlModel model = templ;
  Rng init_rng(derive_seed(seed, 0));
  model.net = init_mlp(templ.net.layer_sizes, init_rng, templ.net.activation);
  cfg.seed = derive_seed(seed, 1);
  return train(std::move(model), set, cfg);
}

EnsembleTraining train_ensemble(const FmlModel& templ, const TrainingSet& set, const TrainingConfig& cfg,
                                std::size_t n_model, std::uint64_t base_seed, unsigned workers) {
  if (n_model < 1) throw Error("must be >= 1", "n_model");
  EnsembleTraining out;
  out.ensemble.members.resize(n_model);
  out.ensemble.seeds.resize(n_model);
  out.histories.resize(n_model);
  parallel_for(n_model, workers, [&](std::size_t i) {
    const std::uint64_t seed = member_seed(base_seed, i);
    try {
      TrainResult r = train_member(templ, set, cfg, seed);
      out.ensemble.members[i] = std::move(r.model);
      out.histories[i] = std::move(r.history);
      out.ensemble.seeds[i] = seed;
    } catch (const Error& e) {
      throw Error(std::string("member ") + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

Trajectory ensemble_predict(const EnsembleModel& ens, std::span<const double> init_window, std::size_t steps) {
  ens.validate();
  const FmlModel& ref = ens.front();
  const std::size_t d = ref.d;
  const std::size_t width = d * ref.window_size();
  if (init_window.size() != width) throw Error("initial window must hold n_memory+1 states of dimension d");

  Trajectory out;
  out.dim = d;
  out.dt = ref.dt;
  out.values.reserve((ref.window_size() + steps) * d);
  out.values.assign(init_window.begin(), init_window.end());
  const double count = static_cast<double>(ens.size());
  Vector mean(d);
  // predictions[i * n_model + m] = component i of member m
  Vector predictions(d * ens.size());
  for (std::size_t s = 0; s < steps; ++s) {
    const std::span<const double> window(out.values.data() + s * d, width);
    for (std::size_t m = 0; m < ens.size(); ++m) {
      Vector next;
      bool finite = true;
      try {
        next = model_step(ens.members[m], window);
        for (double v : next) finite = finite && std::isfinite(v);
      } catch (const Error&) {
        finite = false;
      }
      if (!finite) {
        throw Error("member " + std::to_string(m) + " prediction became non-finite at step " + std::to_string(s + 1));
      }
      for (std::size_t i = 0; i < d; ++i) predictions[i * ens.size() + m] = next[i];
    }
    // Sorting each component makes the reduction order independent of
    // member order; summing offsets from the smallest value keeps the mean
    // of identical predictions exact.
    for (std::size_t i = 0; i < d; ++i) {
      const auto first = predictions.begin() + static_cast<std::ptrdiff_t>(i * ens.size());
      const auto last = first + static_cast<std::ptrdiff_t>(ens.size());
      std::sort(first, last);
      double offset = 0.0;
      for (auto it = first + 1; it != last; ++it) offset += *it - *first;
      mean[i] = offset == 0.0 ? *first : *first + offset / count;
    }
    out.values.insert(out.values.end(), mean.begin(), mean.end());
  }
  return out;
}

void save_ensemble(const EnsembleModel& ens, const std::string& manifest_path,
                   const std::vector<std::string>& member_files) {
  ens.validate();
  if (member_files.size() != ens.size()) throw Error("one file name per member required");
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(manifest_path).parent_path();
  nlohmann::ordered_json j;
  const FmlModel& ref = ens.front();
  j["format"] = "fmlkit-ensemble";
  j["version"] = 1;
  j["d"] = ref.d;
  j["n_memory"] = ref.n_memory;
  j["dt"] = ref.dt;
  j["residual"] = ref.residual;
  j["layer_sizes"] = ref.net.layer_sizes;
  j["activation"] = std::string(to_string(ref.net.activation));
  j["config_digest"] = ref.config_digest;
  j["members"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ens.size(); ++i) {
    save_fml_model(ens.members[i], (dir / member_files[i]).string());
    j["members"].push_back({{"path", member_files[i]}, {"seed", ens.seeds[i]}});
  }
  std::ofstream out(manifest_path);
  if (!out) throw Error("cannot open for writing", manifest_path);
  out << j.dump(2) << '\n';
}

EnsembleModel load_ensemble(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open ensemble manifest", manifest_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what(), manifest_path);
  }
  if (j.value("format", "") != "fmlkit-ensemble") throw Error("not an ensemble manifest", "format");
  if (!j.contains("members") || !j["members"].is_array()) throw Error("missing member list", "members");
  const fs::path dir = fs::path(manifest_path).parent_path();
  EnsembleModel ens;
  for (const auto& m : j["members"]) {
    ens.members.push_back(load_fml_model((dir / m.at("path").get<std::string>()).string()));
    ens.seeds.push_back(m.at("seed").get<std::uint64_t>());
  }
  ens.validate();
  const FmlModel& ref = ens.front();
  if (j.at("d").get<std::size_t>() != ref.d || j.at("n_memory").get<std::size_t>() != ref.n_memory) {
    throw Error("manifest metadata disagrees with member files", "members");
  }
  return ens;
}

}  // namespace fmlkit
