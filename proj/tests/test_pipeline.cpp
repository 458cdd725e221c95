#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fmlkit/pipeline.hpp"

using namespace fmlkit;
namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "fmlkit_test_pipeline";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string cli() {
  const char* p = std::getenv("FMLKIT_CLI");
  REQUIRE_MESSAGE(p != nullptr, "FMLKIT_CLI must point at the fmlkit executable");
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::string& args) {
  const fs::path out = root() / "stdout.txt", err = root() / "stderr.txt";
  const std::string cmd = cli() + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// Small enough to finish in seconds.
BenchmarkConfig tiny(const std::string& name = "5.1.1") {
  BenchmarkConfig c = make_preset(name, "desk");
  c.n_traj = 40;
  c.epochs = 15;
  c.n_model = 2;
  c.test_count = 4;
  c.horizon = 60;
  c.hidden = {6, 6};
  c.batch_size = 50;
  return c;
}

fs::path write_config(const BenchmarkConfig& c, const std::string& file) {
  const fs::path p = root() / file;
  save_config(c, p.string());
  return p;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("generate writes the training set and a manifest") {
  const fs::path dir = root() / "gen511";
  const Run r = run("generate --config " + write_config(tiny(), "gen511.json").string() + " --out " + dir.string());
  REQUIRE(r.code == 0);
  const Json m = Json::parse(slurp(dir / "dataset.json"));
  CHECK(m["windows"] == 200);
  CHECK(m["n_data"] == 12);
  CHECK(m["discarded_blowup"] == 0);
  CHECK(m["discarded_short"] == 0);
  CHECK(m["dataset_digest"] == file_digest((dir / "training.bin").string()));
  CHECK(fs::exists(dir / "training.csv"));
  CHECK(fs::exists(dir / "config.json"));
  const TrainingSet set = load_training_set((dir / "training.bin").string());
  CHECK(set.count() == 200);
  CHECK(set.window_length() == 12);

  const fs::path dir2 = root() / "gen512";
  REQUIRE(run("generate --config " + write_config(tiny("5.1.2"), "gen512.json").string() + " --out " + dir2.string())
              .code == 0);
  CHECK(Json::parse(slurp(dir2 / "dataset.json"))["n_data"] == 22);

  // Same seed twice gives the same bytes, with any worker count.
  const fs::path dir3 = root() / "gen511b";
  REQUIRE(run("generate --workers 3 --config " + (root() / "gen511.json").string() + " --out " + dir3.string()).code ==
          0);
  CHECK(file_digest((dir / "training.bin").string()) == file_digest((dir3 / "training.bin").string()));
}

TEST_CASE("generate matches the full-scale window count") {
  // Generation only; 1e4 trajectories of the 5.1.1 preset.
  const GeneratedData data = generate_training_data(make_preset("5.1.1", "paper"), 2);
  CHECK(data.set.count() == 50000);
  CHECK(data.manifest["windows"] == 50000);
  CHECK(data.manifest["gamma"].get<double>() == doctest::Approx(200.0 / 12.0));
}

TEST_CASE("config errors are reported with the field") {
  Json j = to_json(tiny());
  j["data"]["domain"].erase("lower");
  const fs::path p = root() / "missing_bound.json";
  std::ofstream(p) << j.dump();
  const Run r = run("generate --config " + p.string() + " --out " + (root() / "never").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("data.domain.lower") != std::string::npos);

  BenchmarkConfig c = tiny();
  Json z = to_json(c);
  z["training"]["epochs"] = 0;
  const fs::path pz = root() / "zero_epochs.json";
  std::ofstream(pz) << z.dump();
  const Run rz = run("train --config " + pz.string() + " --out " + (root() / "gen511").string());
  CHECK(rz.code == 1);
  CHECK(rz.err.find("training.epochs") != std::string::npos);

  const Run rp = run("benchmark --id 5.1.1 --preset huge --out " + (root() / "never").string());
  CHECK(rp.code == 1);
  CHECK(rp.err.find("preset") != std::string::npos);

  CHECK(run("benchmark --id 9.9.9 --out " + (root() / "never").string()).code == 1);
  CHECK(run("train --config " + (root() / "gen511.json").string() + " --out " + (root() / "empty_dir").string())
            .code == 1);
}

TEST_CASE("train, then predict") {
  const fs::path dir = root() / "train511";
  BenchmarkConfig c = tiny();
  const fs::path cfg = write_config(c, "train511.json");
  REQUIRE(run("generate --config " + cfg.string() + " --out " + dir.string()).code == 0);
  const Run tr = run("train --config " + cfg.string() + " --out " + dir.string());
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(dir / "member_00.fml"));
  CHECK(fs::exists(dir / "member_01.fml"));
  CHECK(fs::exists(dir / "loss_00.csv"));
  const Json report = Json::parse(slurp(dir / "loss_report.json"));
  CHECK(report["members"].size() == 2);
  const EnsembleModel ens = load_ensemble((dir / "ensemble.json").string());
  CHECK(ens.size() == 2);

  SUBCASE("horizon 0 gives the warm-up window only") {
    const fs::path out = root() / "pred0.csv";
    REQUIRE(run("predict --model " + (dir / "ensemble.json").string() + " --ic 1,1 --horizon 0 --out " +
                out.string())
                .code == 0);
    const auto rows = lines(slurp(out));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == "step,time,pred_0,pred_1");
  }

  SUBCASE("long prediction against the true system") {
    const fs::path out = root() / "pred500.csv";
    REQUIRE(run("predict --model " + (dir / "ensemble.json").string() + " --config " + cfg.string() +
                " --ic 1,1 --horizon 500 --out " + out.string())
                .code == 0);
    const auto rows = lines(slurp(out));
    REQUIRE(rows.size() == 502);
    CHECK(rows[0] == "step,time,pred_0,pred_1,ref_0,ref_1");
    CHECK(rows[1].rfind("0,0,1,1,1,1", 0) == 0);
    CHECK(rows[501].rfind("500,5,", 0) == 0);
  }

  SUBCASE("ensemble and single member differ") {
    const fs::path a = root() / "pred_ens.csv", b = root() / "pred_m0.csv";
    REQUIRE(run("predict --model " + (dir / "ensemble.json").string() + " --ic 0.5,1.5 --horizon 50 --out " +
                a.string())
                .code == 0);
    REQUIRE(run("predict --model " + (dir / "member_00.fml").string() + " --ic 0.5,1.5 --horizon 50 --out " +
                b.string())
                .code == 0);
    CHECK(slurp(a) != slurp(b));
  }
}

TEST_CASE("memory models need warm-up data") {
  const fs::path dir = root() / "train512";
  BenchmarkConfig c = tiny("5.1.2");
  c.n_model = 1;
  const fs::path cfg = write_config(c, "train512.json");
  REQUIRE(run("generate --config " + cfg.string() + " --out " + dir.string()).code == 0);
  REQUIRE(run("train --config " + cfg.string() + " --out " + dir.string()).code == 0);
  CHECK(fs::exists(dir / "member_00.fml"));
  CHECK_FALSE(fs::exists(dir / "member_01.fml"));
  CHECK(load_ensemble((dir / "ensemble.json").string()).size() == 1);

  const Run bad = run("predict --model " + (dir / "ensemble.json").string() + " --ic 1 --horizon 5");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("missing warm-up data for n_M=10") != std::string::npos);

  const fs::path warm = root() / "warm.csv";
  {
    std::ofstream w(warm);
    w << "x\n";
    for (int k = 0; k <= 10; ++k) w << 1.0 - 0.01 * k << '\n';
  }
  const fs::path out = root() / "pred_warm.csv";
  REQUIRE(run("predict --model " + (dir / "ensemble.json").string() + " --warmup " + warm.string() +
              " --horizon 5 --out " + out.string())
              .code == 0);
  CHECK(lines(slurp(out)).size() == 1 + 11 + 5);

  const fs::path out2 = root() / "pred_cfg.csv";
  REQUIRE(run("predict --model " + (dir / "ensemble.json").string() + " --config " + cfg.string() +
              " --ic 1,1 --horizon 5 --out " + out2.string())
              .code == 0);
  CHECK(lines(slurp(out2))[0] == "step,time,pred_0,ref_0");
}

TEST_CASE("benchmark bundles are complete and reproducible") {
  const BenchmarkConfig c = tiny();
  const fs::path cfg = write_config(c, "bench.json");
  const fs::path a = root() / "bench_a", b = root() / "bench_b";
  REQUIRE(run("benchmark --config " + cfg.string() + " --out " + a.string()).code == 0);
  REQUIRE(run("benchmark --config " + cfg.string() + " --workers 2 --out " + b.string()).code == 0);

  std::vector<std::string> top;
  for (const auto& e : fs::directory_iterator(a))
    if (e.is_regular_file()) top.push_back(e.path().filename().string());
  std::sort(top.begin(), top.end());
  CHECK(top == std::vector<std::string>{"average_error.csv", "average_error.svg", "example_trajectory.svg",
                                        "summary.json"});
  CHECK(fs::exists(a / "work" / "ensemble.json"));
  CHECK(fs::exists(a / "work" / "example_trajectory.csv"));

  CHECK(slurp(a / "average_error.csv") == slurp(b / "average_error.csv"));
  CHECK(slurp(a / "work" / "example_trajectory.csv") == slurp(b / "work" / "example_trajectory.csv"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  const Json s = Json::parse(slurp(a / "summary.json"));
  CHECK(s["config_digest"] == config_digest(c));
  CHECK(s["evaluation"]["test_count"] == 4);
  CHECK(lines(slurp(a / "average_error.csv")).size() == 1 + 61);
  CHECK(slurp(a / "average_error.svg").find("<svg") != std::string::npos);

  // A dumped paper preset equals the built-in one.
  const Run dump = run("benchmark --id 5.1.1 --preset paper --dump-config " + (root() / "paper511.json").string());
  REQUIRE(dump.code == 0);
  CHECK(load_config((root() / "paper511.json").string()) == make_preset("5.1.1", "paper"));

  SUBCASE("report") {
    const fs::path one = root() / "report_one";
    REQUIRE(run("report " + a.string() + " --out " + one.string()).code == 0);
    const auto rows = lines(slurp(one / "comparison.csv"));
    const auto ref = lines(slurp(a / "average_error.csv"));
    REQUIRE(rows.size() == ref.size());
    const ErrorSeries curve = read_error_csv((a / "average_error.csv").string());
    for (std::size_t k = 1; k < rows.size(); ++k) {
      const double v = std::stod(rows[k].substr(rows[k].rfind(',') + 1));
      CHECK(v == curve.values[k - 1]);
    }
    CHECK(fs::exists(one / "comparison.svg"));
    CHECK(lines(slurp(one / "parameters.csv")).size() == 2);

    BenchmarkConfig m = tiny("5.1.2");
    m.n_model = 1;
    m.horizon = 40;
    const fs::path c512 = root() / "bench_512";
    REQUIRE(run("benchmark --config " + write_config(m, "bench512.json").string() + " --out " + c512.string()).code ==
            0);
    const fs::path two = root() / "report_two";
    const Run r2 = run("report " + a.string() + " " + c512.string() + " --out " + two.string());
    REQUIRE(r2.code == 0);
    CHECK(r2.err.find("resampled") != std::string::npos);
    const auto header = lines(slurp(two / "comparison.csv"))[0];
    CHECK(header.find("n_M=0") != std::string::npos);
    CHECK(header.find("n_M=10") != std::string::npos);
    const std::string svg = slurp(two / "comparison.svg");
    CHECK(svg.find("n_M=0") != std::string::npos);
    CHECK(svg.find("n_M=10") != std::string::npos);

    fs::create_directories(root() / "empty_bundle");
    CHECK(run("report " + (root() / "empty_bundle").string() + " --out " + (root() / "r3").string()).code == 1);
  }
}
