#include <gtest/gtest.h>

#include <atomic>
#include <fstream>

#include "cavitrack/study.hpp"

using namespace cavitrack;
using nlohmann::json;

namespace {

// small pillbox so each pipeline run takes well under a second
json coarse_pillbox(double low, double high) {
  return json::parse(R"({
    "problem": {"type": "pillbox", "r_nominal": 0.05, "length": 0.1, "p_max": 2,
                "distribution": {"type": "uniform", "low": 0.04, "high": 0.06}},
    "discretization": {"degree": 2, "elements": 5},
    "modes": 3,
    "grid": {"kind": "tensor", "family": "clenshaw_curtis", "points": 3}
  })")
      .patch(json::parse("[{\"op\":\"replace\",\"path\":\"/problem/distribution/low\",\"value\":" +
                         std::to_string(low) + "},{\"op\":\"replace\",\"path\":\"/problem/distribution/high\",\"value\":" +
                         std::to_string(high) + "}]"));
}

}  // namespace

TEST(Config, DefaultsFromAnEmptyObject) {
  const auto c = study::parse_config(json::object());
  EXPECT_EQ(c.problem, study::ProblemType::Pillbox);
  EXPECT_EQ(c.modes, 6);
  EXPECT_EQ(c.discretization.elements, 16);
  EXPECT_EQ(c.grid.points, 5);
  EXPECT_EQ(c.tracking.n1, 3);
  EXPECT_EQ(c.tracking.n2, 5);
  EXPECT_EQ(c.workers, 1);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  const auto bad = [](const char* text) { return study::parse_config(json::parse(text)); };
  EXPECT_THROW(bad(R"({"mode": 3})"), ConfigError);
  EXPECT_THROW(bad(R"({"tracking": {"eta2": 1.5}})"), ConfigError);
  EXPECT_THROW(bad(R"({"tracking": {"n1": 7}})"), ConfigError);
  EXPECT_THROW(bad(R"({"modes": 0})"), ConfigError);
  EXPECT_THROW(bad(R"({"modes": "six"})"), ConfigError);
  EXPECT_THROW(bad(R"({"grid": {"family": "simpson"}})"), ConfigError);
  EXPECT_THROW(bad(R"({"problem": {"type": "sphere"}})"), ConfigError);
  EXPECT_THROW(bad(R"({"problem": {"type": "pillbox", "distribution": {"type": "uniform", "low": 0.06, "high": 0.04}}})"),
               ConfigError);
  EXPECT_THROW(bad(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(bad(R"({"sweep": {"path": "curved"}})"), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstTheConfigDirectory) {
  const auto c = study::parse_config(
      json::parse(R"({"problem": {"type": "deformed_disk", "observations": "obs.csv"}, "observations": {"path": "/abs/x.csv"}})"),
      "/data/run");
  ASSERT_TRUE(c.disk.observations);
  EXPECT_EQ(*c.disk.observations, std::filesystem::path("/data/run/obs.csv"));
  EXPECT_EQ(c.observations->path, std::filesystem::path("/abs/x.csv"));
  EXPECT_THROW(study::load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, LoadRejectsInvalidJson) {
  const auto path = std::filesystem::temp_directory_path() / "cavitrack_bad_config.json";
  std::ofstream(path) << "{\"modes\": 3,";
  EXPECT_THROW(study::load_config(path), ConfigError);
  std::filesystem::remove(path);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(257);
  study::parallel_for(257, 6, [&](int i) { hits[static_cast<std::size_t>(i)]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsTheLowestFailingIndex) {
  for (int workers : {1, 4}) {
    try {
      study::parallel_for(50, workers, [](int i) {
        if (i == 31 || i == 17) throw std::runtime_error(std::to_string(i));
      });
      FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "17");
    }
  }
}

TEST(Pipeline, UqIsIndependentOfTheWorkerCount) {
  auto c = study::parse_config(coarse_pillbox(0.04, 0.06));
  const auto s = study::make_setup(c);
  const auto one = study::run_uq(c, s);
  c.workers = 4;
  const auto four = study::run_uq(c, s);
  ASSERT_TRUE(one.table.complete);
  EXPECT_EQ(one.grid.grid.size(), 3);
  EXPECT_EQ(one.moments.mean, four.moments.mean);
  EXPECT_EQ(one.moments.variance, four.moments.variance);
  EXPECT_EQ(one.tracking_solves, four.tracking_solves);
  EXPECT_LE(one.newton.max, 5);
}

TEST(Pipeline, PointMassDistributionHasNoSpread) {
  const auto c = study::parse_config(coarse_pillbox(0.05, 0.05));
  const auto s = study::make_setup(c);
  const auto r = study::run_uq(c, s);
  ASSERT_EQ(r.moments.mean.size(), 3u);
  for (std::size_t j = 0; j < r.moments.mean.size(); ++j) {
    EXPECT_LT(std::sqrt(std::max(0.0, r.moments.variance[j])), 1e-9 * r.moments.mean[j]);
    EXPECT_NEAR(r.moments.mean[j], frequency_from_lambda(r.base_pairs[j].lambda), 1e-9 * r.moments.mean[j]);
  }
}

TEST(Pipeline, NormalRadiusNeedsHermiteNodes) {
  auto j = coarse_pillbox(0.04, 0.06);
  j["problem"]["distribution"] = {{"type", "normal"}, {"mean", 0.05}, {"sd", 0.001}};
  const auto c = study::parse_config(j);
  EXPECT_THROW(study::make_grid(c, study::make_setup(c)), ConfigError);
  j["grid"]["family"] = "gauss_hermite";
  const auto ok = study::parse_config(j);
  const auto g = study::make_grid(ok, study::make_setup(ok));
  EXPECT_NEAR(g.physical(1, 0), 0.05, 1e-15);
  EXPECT_NEAR(g.physical(2, 0) - g.physical(0, 0), 2 * std::sqrt(3.0) * 0.001, 1e-12);
}

TEST(Pipeline, ConstantRadiusSweepIsASinglePoint) {
  auto j = coarse_pillbox(0.04, 0.06);
  j["sweep"] = {{"r_start", 0.05}, {"r_end", 0.05}, {"samples", 9}};
  const auto c = study::parse_config(j);
  const auto r = study::run_sweep(c, study::make_setup(c));
  EXPECT_TRUE(r.success);
  ASSERT_EQ(r.radii.size(), 1u);
  for (const auto& t : r.trajectories) EXPECT_EQ(t.size(), 1u);
  for (int m = 0; m < 3; ++m) EXPECT_EQ(r.tracked[0][static_cast<std::size_t>(m)], r.discrete[0][static_cast<std::size_t>(m)]);
}

TEST(Pipeline, BenchCountsBothApproaches) {
  auto j = coarse_pillbox(0.045, 0.055);
  j["grid"]["points"] = 1;
  const auto c = study::parse_config(j);
  const auto b = study::run_bench(c, study::make_setup(c));
  EXPECT_EQ(b.points, 1);
  EXPECT_EQ(b.modes, 3);
  EXPECT_GT(b.direct_solves, 0);
  EXPECT_GE(b.tracked_solves, 0);
}
