// Command line harness: generate | train | predict | benchmark | report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "fmlkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fmlkit;

namespace {

BenchmarkConfig load_with_seed(const std::string& path, std::optional<std::uint64_t> seed) {
  BenchmarkConfig cfg = load_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

std::string resolve_out(const std::string& flag, const BenchmarkConfig* cfg) {
  if (!flag.empty()) return flag;
  if (cfg && !cfg->output_dir.empty()) return cfg->output_dir;
  throw Error("no output location; pass --out or set output_dir", "--out");
}

Vector parse_list(const std::string& text, const char* field) {
  Vector out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error("'" + item + "' is not a number", field);
    }
  }
  if (out.empty()) throw Error("empty list", field);
  return out;
}

// Warm-up CSV: one state per row, comma separated, optional header line.
Trajectory read_warmup(const std::string& path, double dt) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open warm-up file", path);
  Trajectory t;
  t.dt = dt;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || !(std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '-' || line[0] == '+' ||
                          line[0] == '.')) {
      continue;
    }
    t.push_back(parse_list(line, "--warmup"));
  }
  if (t.size() == 0) throw Error("no states found", path);
  return t;
}

EnsembleModel load_any_model(const std::string& path) {
  if (fs::path(path).extension() == ".json") return load_ensemble(path);
  EnsembleModel ens;
  ens.members.push_back(load_fml_model(path));
  ens.seeds.push_back(0);
  return ens;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fmlkit - flow map learning of unknown dynamical systems"};
  app.require_subcommand(1);

  std::string config_path, out, model_path, ic, warmup, preset = "desk", benchmark_id, dump_config;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed;
  std::size_t horizon = 0;
  std::vector<std::string> bundles;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out, "Output directory or file");
    sub->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Override the base seed");
  };

  auto* gen = app.add_subcommand("generate", "Generate, observe and subsample the training set");
  gen->add_option("--config", config_path, "Benchmark config (JSON)")->required();
  add_common(gen);

  auto* tr = app.add_subcommand("train", "Train the ensemble on a generated training set");
  tr->add_option("--config", config_path, "Benchmark config (JSON)")->required();
  add_common(tr);

  auto* pr = app.add_subcommand("predict", "Roll a trained model or ensemble forward");
  pr->add_option("--model", model_path, "ensemble.json or a single .fml file")->required();
  pr->add_option("--config", config_path, "Config of the true system, used for warm-up and reference");
  pr->add_option("--ic", ic, "Initial state, comma separated (full state when --config is given)");
  pr->add_option("--warmup", warmup, "CSV with the n_M+1 observed warm-up states");
  pr->add_option("--horizon", horizon, "Number of prediction steps");
  add_common(pr);

  auto* bm = app.add_subcommand("benchmark", "Run a benchmark end to end");
  bm->add_option("--id", benchmark_id, "Benchmark name, e.g. 5.1.1");
  bm->add_option("--config", config_path, "Use this config instead of a preset");
  bm->add_option("--preset", preset, "paper or desk");
  bm->add_option("--dump-config", dump_config, "Write the resolved config to this file and exit");
  add_common(bm);

  auto* rp = app.add_subcommand("report", "Overlay error curves of several result bundles");
  rp->add_option("bundles", bundles, "Result directories")->required();
  add_common(rp);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const BenchmarkConfig cfg = load_with_seed(config_path, seed);
      const std::string dir = resolve_out(out, &cfg);
      GeneratedData data = generate_training_data(cfg, workers);
      write_generated(data, dir);
      save_config(cfg, (fs::path(dir) / "config.json").string());
      std::cout << data.manifest.dump(2) << '\n';
    } else if (tr->parsed()) {
      const BenchmarkConfig cfg = load_with_seed(config_path, seed);
      const std::string dir = resolve_out(out, &cfg);
      const fs::path dataset = fs::path(dir) / "training.bin";
      if (!fs::exists(dataset)) throw Error("no training set; run generate first", dataset.string());
      const TrainingSet set = load_training_set(dataset.string());
      const TrainedEnsemble trained = train_from_config(cfg, set, workers);
      write_trained(trained, dir);
      std::cout << trained.report.dump(2) << '\n';
      for (const auto& m : trained.report["members"]) {
        if (!m["decay_ok"].get<bool>()) {
          std::cerr << "warning: member " << m["member"] << " loss decayed only by a factor "
                    << m["decay_ratio"] << '\n';
        }
      }
    } else if (pr->parsed()) {
      const EnsembleModel ens = load_any_model(model_path);
      const FmlModel& ref_model = ens.front();
      std::optional<BenchmarkConfig> cfg;
      if (!config_path.empty()) cfg = load_with_seed(config_path, seed);
      Trajectory window;
      std::optional<Trajectory> reference;
      if (!warmup.empty()) {
        window = read_warmup(warmup, ref_model.dt);
        if (window.size() != ref_model.window_size() || window.dim != ref_model.d) {
          throw Error("warm-up must hold " + std::to_string(ref_model.window_size()) + " states of dimension " +
                          std::to_string(ref_model.d),
                      "--warmup");
        }
      } else if (!ic.empty() && cfg) {
        if (cfg->n_memory != ref_model.n_memory || cfg->observe.size() != ref_model.d) {
          throw Error("config does not describe this model", "--config");
        }
        reference = reference_from_state(*cfg, parse_list(ic, "--ic"), horizon);
        window = slice(*reference, 0, ref_model.window_size());
      } else if (!ic.empty() && ref_model.n_memory == 0) {
        window.dt = ref_model.dt;
        window.push_back(parse_list(ic, "--ic"));
        if (window.dim != ref_model.d) throw Error("initial state has the wrong dimension", "--ic");
      } else {
        throw Error(ref_model.n_memory > 0
                        ? "missing warm-up data for n_M=" + std::to_string(ref_model.n_memory) +
                              "; pass --warmup or --config with --ic"
                        : "no initial condition; pass --ic or --warmup",
                    "--ic");
      }
      const Trajectory pred = ensemble_predict(ens, window.values, horizon);
      const std::string path = out.empty() ? "prediction.csv" : out;
      write_trajectory_csv(pred, reference ? &*reference : nullptr, path);
      std::cout << "wrote " << pred.size() << " states to " << path << '\n';
    } else if (bm->parsed()) {
      BenchmarkConfig cfg;
      if (!config_path.empty()) {
        cfg = load_config(config_path);
      } else {
        if (benchmark_id.empty()) throw Error("pass --id or --config", "--id");
        cfg = make_preset(benchmark_id, preset);
      }
      if (seed) cfg.seed = *seed;
      if (!dump_config.empty()) {
        save_config(cfg, dump_config);
        return 0;
      }
      const std::string dir = out.empty() ? (cfg.output_dir.empty() ? "results/" + cfg.name + "-" + cfg.preset
                                                                     : cfg.output_dir)
                                          : out;
      const Json summary = run_benchmark(cfg, dir, workers);
      std::cout << summary["evaluation"].dump(2) << '\n';
    } else if (rp->parsed()) {
      const std::string dir = out.empty() ? "report" : out;
      std::cout << run_report(bundles, dir).dump(2) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
