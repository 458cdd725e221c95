#include <doctest.h>

#include <filesystem>

#include "fmlkit/metrics.hpp"

using namespace fmlkit;

namespace {

Trajectory make_traj(std::size_t dim, Vector values, double dt = 0.1) {
  Trajectory t;
  t.dim = dim;
  t.dt = dt;
  t.values = std::move(values);
  return t;
}

ErrorSeries constant(double v, std::size_t n) { return ErrorSeries{0.1, Vector(n, v)}; }

}  // namespace

TEST_CASE("l2_error_series") {
  const Trajectory a = make_traj(2, {1.0, 2.0, 3.0, 4.0});
  CHECK(l2_error_series(a, a).values == Vector{0.0, 0.0});

  const Trajectory p = make_traj(1, {0.3, 1.3, -0.7});
  const Trajectory r = make_traj(1, {0.0, 1.0, -1.0});
  const ErrorSeries e = l2_error_series(p, r);
  for (double v : e.values) CHECK(v == doctest::Approx(0.3));
  CHECK(e.dt == 0.1);

  const Trajectory q = make_traj(2, {4.0, 6.0, 3.0, 4.0});
  CHECK(l2_error_series(q, a).values == Vector{5.0, 0.0});
  CHECK(l2_error_series(a, q).values == l2_error_series(q, a).values);

  const ErrorSeries rel = l2_error_series(q, make_traj(2, {1.0, 2.0, 0.0, 0.0}), true);
  CHECK(rel.values[0] == doctest::Approx(5.0 / std::sqrt(5.0)));
  CHECK(rel.values[1] == 5.0);

  CHECK_THROWS_AS(l2_error_series(a, make_traj(2, {1.0, 2.0})), Error);
  CHECK_THROWS_AS(l2_error_series(a, make_traj(1, {1.0, 2.0, 3.0, 4.0})), Error);
  CHECK_THROWS_AS(l2_error_series(a, make_traj(2, {1.0, 2.0, 3.0, 4.0}, 0.2)), Error);
}

TEST_CASE("average_error") {
  CHECK(average_error({constant(0.7, 4)}) == constant(0.7, 4));
  CHECK(average_error({constant(0.0, 4), constant(2.0, 4)}) == constant(1.0, 4));

  Rng rng(1);
  std::vector<ErrorSeries> many;
  for (int i = 0; i < 100; ++i) {
    ErrorSeries s{0.1, Vector(50)};
    for (double& v : s.values) v = rng.uniform(0.0, 3.0);
    many.push_back(std::move(s));
  }
  const ErrorSeries avg = average_error(many);
  for (std::size_t k = 0; k < 50; ++k) {
    long double sum = 0.0L;
    for (int i = 99; i >= 0; --i) sum += many[static_cast<std::size_t>(i)].values[k];
    CHECK(std::abs(avg.values[k] - static_cast<double>(sum / 100.0L)) < 1e-12);
  }

  std::vector<ErrorSeries> scaled = many;
  for (auto& s : scaled)
    for (double& v : s.values) v *= 4.0;
  const ErrorSeries avg4 = average_error(scaled);
  for (std::size_t k = 0; k < 50; ++k) CHECK(avg4.values[k] == doctest::Approx(4.0 * avg.values[k]).epsilon(1e-14));

  CHECK_THROWS_AS(average_error({}), Error);
  CHECK_THROWS_AS(average_error({constant(1.0, 3), constant(1.0, 4)}), Error);
}

TEST_CASE("time_average") {
  CHECK(time_average(ErrorSeries{0.1, {1.0, 2.0, 3.0}}) == 2.0);
  CHECK_THROWS_AS(time_average(ErrorSeries{0.1, {}}), Error);
}

TEST_CASE("loss_decay_ok") {
  LossHistory h;
  h.losses = {1.0, 0.3, 0.05, 0.009};
  LossDecay d = loss_decay_ok(h);
  CHECK(d.ok);
  CHECK(d.ratio == doctest::Approx(0.009));

  h.losses = {1.0, 0.5};
  d = loss_decay_ok(h);
  CHECK_FALSE(d.ok);
  CHECK(d.ratio == 0.5);

  h.losses = {0.2, 0.2, 0.2};
  d = loss_decay_ok(h);
  CHECK_FALSE(d.ok);
  CHECK(d.ratio == 1.0);

  h.losses = {1.0, 0.01};
  CHECK(loss_decay_ok(h).ok);
}

TEST_CASE("error csv round trip") {
  const auto path = (std::filesystem::temp_directory_path() / "fmlkit_test_metrics_err.csv").string();
  ErrorSeries s{0.02, {0.0, 1.0 / 3.0, 2.5e-7}};
  write_error_csv(s, path);
  CHECK(read_error_csv(path) == s);
}
