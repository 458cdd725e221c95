#include "fmlkit/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

#include "fmlkit/svg.hpp"

namespace fmlkit {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kGenerationChunk = 500;

void write_json(const Json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing", path.string());
  out << j.dump(2) << '\n';
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open", path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed JSON: ") + e.what(), path.string());
  }
}

std::string member_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "member_%02zu%s", i, ext);
  return buf;
}

std::string loss_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "loss_%02zu.csv", i);
  return buf;
}

}  // namespace

GeneratedData generate_training_data(const BenchmarkConfig& cfg, unsigned workers) {
  cfg.validate();
  const SystemSpec system = make_benchmark(cfg.system, cfg.overrides);
  const RawDataConfig raw_cfg = cfg.raw_config();
  const SamplingPlan plan = cfg.sampling_plan();
  const ObservableMap map = cfg.observable();

  GeneratedData out;
  out.set.d = map.dim();
  out.set.dt = cfg.dt;
  out.set.n_memory = plan.n_memory;
  out.set.n_multistep = plan.n_multistep;
  Rng burst_rng(plan.seed);
  std::size_t discarded = 0;
  for (std::size_t first = 0; first < raw_cfg.n_traj; first += kGenerationChunk) {
    const RawDataset raw = generate_raw_dataset(system, raw_cfg, first, kGenerationChunk, workers);
    discarded += raw.discarded;
    out.set.append(subsample_bursts(observe(raw, map), plan, burst_rng));
  }

  const std::size_t n_data = cfg.window_length();
  const double gamma = static_cast<double>(cfg.length) / static_cast<double>(n_data);
  Json m;
  m["name"] = cfg.name;
  m["preset"] = cfg.preset;
  m["config_digest"] = config_digest(cfg);
  m["system"] = cfg.system;
  m["n_traj"] = cfg.n_traj;
  m["length"] = cfg.length;
  m["dt"] = cfg.dt;
  m["observe"] = cfg.observe;
  m["d"] = out.set.d;
  m["n_memory"] = cfg.n_memory;
  m["n_multistep"] = cfg.n_multistep;
  m["n_burst"] = cfg.n_burst;
  m["n_data"] = n_data;
  m["windows"] = out.set.count();
  m["discarded_blowup"] = discarded;
  m["discarded_short"] = out.set.skipped;
  m["gamma"] = gamma;
  m["gamma_in_guidance"] = gamma >= 2.0 && gamma <= 10.0;
  m["seeds"] = {{"base", cfg.seed}, {"data", raw_cfg.seed}, {"burst", plan.seed}};
  out.manifest = m;
  if (gamma < 2.0 || gamma > 10.0) {
    std::cerr << "warning: L/n_data = " << gamma << " is outside the suggested range [2, 10]\n";
  }
  return out;
}

void write_generated(GeneratedData& data, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path bin = fs::path(dir) / "training.bin";
  save_dataset(data.set, bin.string());
  write_csv(data.set, (fs::path(dir) / "training.csv").string());
  data.manifest["dataset_file"] = "training.bin";
  data.manifest["dataset_digest"] = file_digest(bin.string());
  write_json(data.manifest, fs::path(dir) / "dataset.json");
}

FmlModel model_template(const BenchmarkConfig& cfg) {
  Rng rng(cfg.train_seed());
  FmlModel model = make_model(cfg.observe.size(), cfg.n_memory, cfg.dt, cfg.hidden, rng, cfg.residual);
  model.config_digest = config_digest(cfg);
  return model;
}

TrainedEnsemble train_from_config(const BenchmarkConfig& cfg, const TrainingSet& set, unsigned workers) {
  cfg.validate();
  if (set.d != cfg.observe.size() || set.n_memory != cfg.n_memory || set.n_multistep != cfg.n_multistep) {
    throw Error("dataset (d=" + std::to_string(set.d) + ", n_memory=" + std::to_string(set.n_memory) +
                    ", K=" + std::to_string(set.n_multistep) + ") does not match the config",
                "dataset");
  }
  TrainedEnsemble out;
  out.training = train_ensemble(model_template(cfg), set, cfg.training_config(), cfg.n_model, cfg.train_seed(),
                                workers);
  Json members = Json::array();
  bool all_ok = true;
  for (std::size_t i = 0; i < out.training.histories.size(); ++i) {
    const LossHistory& h = out.training.histories[i];
    const LossDecay decay = loss_decay_ok(h);
    all_ok = all_ok && decay.ok;
    members.push_back({{"member", i},
                       {"seed", out.training.ensemble.seeds[i]},
                       {"initial_loss", h.losses.front()},
                       {"best_loss", h.best_loss()},
                       {"best_epoch", h.best_epoch},
                       {"decay_ratio", decay.ratio},
                       {"decay_ok", decay.ok}});
  }
  out.report = {{"config_digest", config_digest(cfg)}, {"all_decay_ok", all_ok}, {"members", members}};
  return out;
}

void write_trained(const TrainedEnsemble& trained, const std::string& dir) {
  fs::create_directories(dir);
  const auto& ens = trained.training.ensemble;
  std::vector<std::string> files;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    files.push_back(member_name(i, ".fml"));
    write_loss_csv(trained.training.histories[i], (fs::path(dir) / loss_name(i)).string());
  }
  save_ensemble(ens, (fs::path(dir) / "ensemble.json").string(), files);
  write_json(trained.report, fs::path(dir) / "loss_report.json");
}

Trajectory reference_from_state(const BenchmarkConfig& cfg, std::span<const double> full_state, std::size_t steps) {
  const SystemSpec system = make_benchmark(cfg.system, cfg.overrides);
  const Trajectory full = reference_trajectory(system, full_state, cfg.dt, cfg.n_memory + steps, cfg.substeps);
  return observe(full, cfg.observable());
}

std::vector<Trajectory> make_test_references(const BenchmarkConfig& cfg, std::size_t steps, unsigned workers) {
  const SystemSpec system = make_benchmark(cfg.system, cfg.overrides);
  RawDataConfig test_cfg = cfg.raw_config();
  test_cfg.seed = cfg.test_seed();
  const ObservableMap map = cfg.observable();
  std::vector<Trajectory> refs(cfg.test_count);
  parallel_for(cfg.test_count, workers, [&](std::size_t i) {
    auto [y0, instance] = draw_trajectory_setup(system, test_cfg, i);
    refs[i] = observe(reference_trajectory(instance, y0, cfg.dt, cfg.n_memory + steps, cfg.substeps), map);
  });
  return refs;
}

Trajectory slice(const Trajectory& t, std::size_t first, std::size_t count) {
  if (first + count > t.size()) throw Error("slice exceeds trajectory length");
  Trajectory out;
  out.dim = t.dim;
  out.dt = t.dt;
  out.values.assign(t.values.begin() + static_cast<std::ptrdiff_t>(first * t.dim),
                    t.values.begin() + static_cast<std::ptrdiff_t>((first + count) * t.dim));
  return out;
}

Prediction predict_from_reference(const EnsembleModel& ens, const Trajectory& reference, std::size_t steps) {
  const std::size_t warm = ens.front().window_size();
  if (reference.size() < warm) throw Error("reference shorter than the warm-up window");
  const Trajectory init = slice(reference, 0, warm);
  Prediction p;
  try {
    p.states = ensemble_predict(ens, init.values, steps);
    return p;
  } catch (const Error&) {
  }
  // Re-run step by step to find where it fails and keep the finite prefix.
  p.finite = false;
  p.states = init;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::span<const double> window(p.states.values.data() + s * p.states.dim, init.values.size());
    try {
      const Trajectory next = ensemble_predict(ens, window, 1);
      p.states.push_back(next.state(warm));
    } catch (const Error&) {
      p.failed_step = s + 1;
      break;
    }
  }
  return p;
}

Evaluation evaluate_ensemble(const EnsembleModel& ens, const std::vector<Trajectory>& references, std::size_t horizon,
                             bool relative) {
  if (references.empty()) throw Error("no test trajectories");
  const std::size_t n_m = ens.front().n_memory;
  Evaluation ev;
  ev.per_test.reserve(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) {
    const Trajectory& ref = references[i];
    if (ref.size() < n_m + horizon + 1) throw Error("reference trajectory shorter than warm-up plus horizon");
    Prediction p = predict_from_reference(ens, ref, horizon);
    const Trajectory ref_part = slice(ref, n_m, horizon + 1);
    ErrorSeries series;
    if (p.finite) {
      series = l2_error_series(slice(p.states, n_m, horizon + 1), ref_part, relative);
    } else {
      ++ev.diverged;
      const std::size_t ok = p.states.size() - n_m;
      series = l2_error_series(slice(p.states, n_m, ok), slice(ref_part, 0, ok), relative);
      series.values.resize(horizon + 1, std::numeric_limits<double>::infinity());
    }
    if (i == 0) {
      ev.example_prediction = p.states;
      ev.example_reference = slice(ref, 0, n_m + horizon + 1);
    }
    ev.per_test.push_back(std::move(series));
  }
  ev.average = average_error(ev.per_test);
  return ev;
}

void write_trajectory_csv(const Trajectory& pred, const Trajectory* ref, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing", path);
  out << "step,time";
  for (std::size_t i = 0; i < pred.dim; ++i) out << ",pred_" << i;
  if (ref) {
    for (std::size_t i = 0; i < ref->dim; ++i) out << ",ref_" << i;
  }
  out << '\n';
  char buf[40];
  const std::size_t rows = ref ? std::max(pred.size(), ref->size()) : pred.size();
  for (std::size_t k = 0; k < rows; ++k) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g", k, static_cast<double>(k) * pred.dt);
    out << buf;
    for (std::size_t i = 0; i < pred.dim; ++i) {
      if (k < pred.size()) {
        std::snprintf(buf, sizeof(buf), ",%.17g", pred.state(k)[i]);
        out << buf;
      } else {
        out << ",nan";
      }
    }
    if (ref) {
      for (std::size_t i = 0; i < ref->dim; ++i) {
        if (k < ref->size()) {
          std::snprintf(buf, sizeof(buf), ",%.17g", ref->state(k)[i]);
          out << buf;
        } else {
          out << ",nan";
        }
      }
    }
    out << '\n';
  }
}

namespace {

svg::LineChart example_chart(const BenchmarkConfig& cfg, const Trajectory& pred, const Trajectory& ref) {
  svg::LineChart chart;
  chart.title = "Benchmark " + cfg.name + ": example trajectory";
  chart.x_label = "t";
  chart.y_label = "state";
  for (std::size_t i = 0; i < ref.dim; ++i) {
    svg::Series r, p;
    r.label = "reference x" + std::to_string(cfg.observe[i] + 1);
    p.label = "FML x" + std::to_string(cfg.observe[i] + 1);
    p.dashed = true;
    for (std::size_t k = 0; k < ref.size(); ++k) {
      r.x.push_back(static_cast<double>(k) * ref.dt);
      r.y.push_back(ref.state(k)[i]);
    }
    for (std::size_t k = 0; k < pred.size(); ++k) {
      p.x.push_back(static_cast<double>(k) * pred.dt);
      p.y.push_back(pred.state(k)[i]);
    }
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
    r.color = p.color = palette[i % 5];
    if (ref.dim > 4 && i >= 2) continue;  // keep large systems readable
    chart.series.push_back(std::move(r));
    chart.series.push_back(std::move(p));
  }
  return chart;
}

svg::LineChart error_chart(const std::string& title, const std::vector<std::pair<std::string, ErrorSeries>>& curves) {
  svg::LineChart chart;
  chart.title = title;
  chart.x_label = "t";
  chart.y_label = "average l2 error";
  chart.log_y = true;
  for (const auto& [label, series] : curves) {
    svg::Series s;
    s.label = label;
    for (std::size_t k = 0; k < series.values.size(); ++k) {
      s.x.push_back(static_cast<double>(k) * series.dt);
      s.y.push_back(series.values[k]);
    }
    chart.series.push_back(std::move(s));
  }
  return chart;
}

}  // namespace

Json run_benchmark(const BenchmarkConfig& cfg, const std::string& out_dir, unsigned workers) {
  cfg.validate();
  const fs::path root(out_dir);
  const fs::path work = root / "work";
  fs::create_directories(work);
  save_config(cfg, (work / "config.json").string());

  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  GeneratedData data = generate_training_data(cfg, workers);
  write_generated(data, work.string());
  const auto t1 = clock::now();
  TrainedEnsemble trained = train_from_config(cfg, data.set, workers);
  write_trained(trained, work.string());
  const auto t2 = clock::now();

  const auto refs = make_test_references(cfg, cfg.horizon, workers);
  const Evaluation ev = evaluate_ensemble(trained.training.ensemble, refs, cfg.horizon, cfg.relative_error);
  write_trajectory_csv(ev.example_prediction, &ev.example_reference, (work / "example_trajectory.csv").string());
  write_error_csv(ev.average, (root / "average_error.csv").string());
  svg::write(example_chart(cfg, ev.example_prediction, ev.example_reference),
             (root / "example_trajectory.svg").string());
  svg::write(error_chart("Benchmark " + cfg.name + ": average error over " + std::to_string(refs.size()) +
                             " test trajectories",
                         {{cfg.name + " (n_M=" + std::to_string(cfg.n_memory) + ")", ev.average}}),
             (root / "average_error.svg").string());
  const auto t3 = clock::now();

  auto seconds = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  std::cerr << "benchmark " << cfg.name << " (" << cfg.preset << "): generate " << seconds(t0, t1) << " s, train "
            << seconds(t1, t2) << " s, evaluate " << seconds(t2, t3) << " s\n";

  double max_err = 0.0;
  for (double v : ev.average.values) max_err = std::max(max_err, v);
  Json summary;
  summary["name"] = cfg.name;
  summary["preset"] = cfg.preset;
  summary["config_digest"] = config_digest(cfg);
  summary["parameters"] = {{"system", cfg.system},
                           {"dt", cfg.dt},
                           {"domain_lower", cfg.domain.lower},
                           {"domain_upper", cfg.domain.upper},
                           {"n_traj", cfg.n_traj},
                           {"length", cfg.length},
                           {"n_burst", cfg.n_burst},
                           {"N", data.set.count()},
                           {"n_memory", cfg.n_memory},
                           {"n_multistep", cfg.n_multistep},
                           {"hidden_layers", cfg.hidden.size()},
                           {"hidden_width", cfg.hidden.front()},
                           {"learning_rate", cfg.learning_rate},
                           {"epochs", cfg.epochs},
                           {"n_model", cfg.n_model},
                           {"observe", cfg.observe},
                           {"random_params", to_json(cfg)["system"]["random_params"]}};
  summary["config"] = to_json(cfg);
  summary["dataset"] = data.manifest;
  summary["training"] = trained.report;
  summary["evaluation"] = {{"test_count", refs.size()},
                           {"horizon", cfg.horizon},
                           {"relative", cfg.relative_error},
                           {"diverged", ev.diverged},
                           {"mean_error", time_average(ev.average)},
                           {"max_error", max_err},
                           {"final_error", ev.average.values.back()}};
  summary["artifacts"] = {"summary.json", "average_error.csv", "example_trajectory.svg", "average_error.svg"};
  summary["average_error_digest"] = file_digest((root / "average_error.csv").string());
  write_json(summary, root / "summary.json");
  return summary;
}

namespace {

double interpolate(const ErrorSeries& s, double t) {
  const double pos = t / s.dt;
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= s.values.size()) return s.values.back();
  const double w = pos - static_cast<double>(k);
  return (1.0 - w) * s.values[k] + w * s.values[k + 1];
}

std::vector<fs::path> find_bundles(const std::vector<std::string>& dirs) {
  std::vector<fs::path> out;
  for (const auto& d : dirs) {
    const fs::path p(d);
    if (!fs::is_directory(p)) throw Error("not a directory", d);
    if (fs::exists(p / "summary.json")) {
      out.push_back(p);
      continue;
    }
    std::vector<fs::path> nested;
    for (const auto& entry : fs::directory_iterator(p)) {
      if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) nested.push_back(entry.path());
    }
    std::sort(nested.begin(), nested.end());
    out.insert(out.end(), nested.begin(), nested.end());
  }
  if (out.empty()) throw Error("no result bundles (summary.json) found");
  return out;
}

}  // namespace

Json run_report(const std::vector<std::string>& bundle_dirs, const std::string& out_dir) {
  const auto bundles = find_bundles(bundle_dirs);
  std::vector<std::pair<std::string, ErrorSeries>> curves;
  std::vector<Json> summaries;
  for (const auto& b : bundles) {
    Json s = read_json(b / "summary.json");
    ErrorSeries e = read_error_csv((b / "average_error.csv").string());
    if (e.values.empty()) throw Error("empty error curve", (b / "average_error.csv").string());
    const std::string label = s.value("name", b.filename().string()) + " " + s.value("preset", "") +
                              " n_M=" + std::to_string(s["parameters"].value("n_memory", 0));
    curves.emplace_back(label, std::move(e));
    summaries.push_back(std::move(s));
  }

  bool compatible = true;
  for (const auto& [label, s] : curves) {
    compatible = compatible && s.dt == curves.front().second.dt &&
                 s.values.size() == curves.front().second.values.size();
  }
  if (!compatible) {
    // Common grid: coarsest step, shortest time span.
    double dt = 0.0, t_end = std::numeric_limits<double>::infinity();
    for (const auto& [label, s] : curves) {
      dt = std::max(dt, s.dt);
      t_end = std::min(t_end, s.dt * static_cast<double>(s.values.size() - 1));
    }
    if (!(dt > 0.0)) throw Error("cannot resample curves without a time step");
    const auto n = static_cast<std::size_t>(std::floor(t_end / dt + 1e-9)) + 1;
    std::cerr << "warning: bundles use different horizons or steps; resampled to dt=" << dt << ", " << n
              << " points\n";
    for (auto& [label, s] : curves) {
      ErrorSeries r;
      r.dt = dt;
      for (std::size_t k = 0; k < n; ++k) r.values.push_back(interpolate(s, static_cast<double>(k) * dt));
      s = std::move(r);
    }
  }

  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  svg::write(error_chart("Average error comparison", curves), (root / "comparison.svg").string());
  {
    std::ofstream out(root / "comparison.csv");
    if (!out) throw Error("cannot open for writing", (root / "comparison.csv").string());
    out << "step,time";
    for (const auto& [label, s] : curves) out << ",\"" << label << '"';
    out << '\n';
    char buf[48];
    for (std::size_t k = 0; k < curves.front().second.values.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%zu,%.10g", k, static_cast<double>(k) * curves.front().second.dt);
      out << buf;
      for (const auto& [label, s] : curves) {
        std::snprintf(buf, sizeof(buf), ",%.17g", s.values[k]);
        out << buf;
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(root / "parameters.csv");
    if (!out) throw Error("cannot open for writing", (root / "parameters.csv").string());
    out << "bundle,name,preset,system,dt,n_traj,length,n_burst,N,n_memory,n_multistep,hidden_layers,hidden_width,"
           "learning_rate,epochs,n_model,mean_error\n";
    for (std::size_t i = 0; i < summaries.size(); ++i) {
      const Json& s = summaries[i];
      const Json& p = s.at("parameters");
      out << bundles[i].filename().string() << ',' << s.value("name", "") << ',' << s.value("preset", "") << ','
          << p.value("system", "") << ',' << p.value("dt", 0.0) << ',' << p.value("n_traj", 0) << ','
          << p.value("length", 0) << ',' << p.value("n_burst", 0) << ',' << p.value("N", 0) << ','
          << p.value("n_memory", 0) << ',' << p.value("n_multistep", 0) << ',' << p.value("hidden_layers", 0) << ','
          << p.value("hidden_width", 0) << ',' << p.value("learning_rate", 0.0) << ',' << p.value("epochs", 0) << ','
          << p.value("n_model", 0) << ',' << s["evaluation"].value("mean_error", 0.0) << '\n';
    }
  }
  Json report;
  report["bundles"] = Json::array();
  for (const auto& b : bundles) report["bundles"].push_back(b.string());
  report["curves"] = curves.size();
  report["resampled"] = !compatible;
  report["points"] = curves.front().second.values.size();
  return report;
}

}  // namespace fmlkit
