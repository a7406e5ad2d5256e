// Copyright 2026 The batchloop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "batchloop/rto.h"

#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.h"

namespace batchloop {
namespace {

TEST_CASE("operating cost of the constant extremes") {
  const RtoConfig cfg;
  const ReactorParams params;
  const BatchTimeGrid grid;
  const RtoObjectiveTerms low = RtoObjectiveBreakdown(
      Eigen::VectorXd::Zero(40), cfg, params, grid);
  const RtoObjectiveTerms high = RtoObjectiveBreakdown(
      Eigen::VectorXd::Constant(40, 10.0), cfg, params, grid);
  CHECK(low.operating == 0.0);
  CHECK(high.operating == doctest::Approx(200.0).epsilon(1e-12));

  RtoConfig doubled = cfg;
  doubled.flow_cost *= 2.0;
  const Eigen::VectorXd flows = Eigen::VectorXd::LinSpaced(40, 0.5, 6.0);
  const RtoObjectiveTerms a = RtoObjectiveBreakdown(flows, cfg, params, grid);
  const RtoObjectiveTerms b =
      RtoObjectiveBreakdown(flows, doubled, params, grid);
  CHECK(b.operating == doctest::Approx(2.0 * a.operating).epsilon(1e-14));
  CHECK(b.terminal == a.terminal);

  const Eigen::MatrixXd states = SimulateNominal(flows, params, grid);
  const double gap = states(40, kCb) - 0.58;
  CHECK(a.terminal == doctest::Approx(gap * gap * 1200.0).epsilon(1e-12));
  CHECK(RtoObjective(flows, cfg, params, grid) ==
        doctest::Approx(a.total()).epsilon(1e-14));
}

TEST_CASE("temperature penalty activates outside the band") {
  RtoConfig cfg;
  cfg.t_max = 330.0;
  const RtoObjectiveTerms terms = RtoObjectiveBreakdown(
      Eigen::VectorXd::Constant(40, 1.0), cfg, ReactorParams{},
      BatchTimeGrid{});
  CHECK(terms.penalty > 0.0);
  const RtoObjectiveTerms relaxed = RtoObjectiveBreakdown(
      Eigen::VectorXd::Constant(40, 1.0), RtoConfig{}, ReactorParams{},
      BatchTimeGrid{});
  CHECK(relaxed.penalty == 0.0);
  CHECK_THROWS_AS(RtoObjective(Eigen::VectorXd::Constant(40, 10.5),
                               RtoConfig{}, ReactorParams{}, BatchTimeGrid{}),
                  ConstraintError);
}

TEST_CASE("suffix finite-difference gradient matches full re-simulation") {
  const RtoConfig cfg;
  const ReactorParams params;
  const BatchTimeGrid grid;
  Eigen::VectorXd flows = Eigen::VectorXd::LinSpaced(40, 0.0, 10.0);
  flows[20] = 3.0;
  const Eigen::VectorXd g = RtoGradient(flows, cfg, params, grid);
  for (int t : {0, 1, 7, 20, 33, 39}) {
    const double h = 1e-4;
    Eigen::VectorXd plus = flows, minus = flows;
    double span = 0.0;
    if (flows[t] + h <= 10.0) {
      plus[t] += h;
      span += h;
    }
    if (flows[t] - h >= 0.0) {
      minus[t] -= h;
      span += h;
    }
    const double fd = (RtoObjective(plus, cfg, params, grid) -
                       RtoObjective(minus, cfg, params, grid)) /
                      span;
    CHECK(g[t] == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
  }
}

TEST_CASE("box projection is idempotent and clamps componentwise") {
  std::mt19937_64 rng(3);
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(6, -1.0);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(6, 2.0);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = oracle::RandomMatrix(rng, 6, 1, 5.0);
    const Eigen::VectorXd p = ProjectOntoBox(x, lo, hi);
    CHECK(ProjectOntoBox(p, lo, hi) == p);
    for (int j = 0; j < 6; ++j) {
      CHECK(p[j] == std::min(2.0, std::max(-1.0, x[j])));
    }
  }
  // Gradient pointing out of an active face has zero projected norm.
  Eigen::VectorXd x(2), g(2);
  x << -1.0, 0.5;
  g << 3.0, 0.0;
  CHECK(ProjectedGradientNorm(x, g, lo.head(2), hi.head(2)) == 0.0);
}

TEST_CASE("box QP matches the separable closed form") {
  Eigen::MatrixXd h = Eigen::Vector3d(2.0, 1.0, 4.0).asDiagonal();
  const Eigen::Vector3d b(-10.0, 0.5, -1.0);
  const Eigen::Vector3d lo(0.0, 0.0, 0.0), hi(3.0, 3.0, 3.0);
  ProjectedGradientOptions opt;
  opt.spectral_step = true;
  opt.tolerance = 1e-12;
  const ProjectedGradientResult r =
      MinimizeBoxQp(h, b, Eigen::Vector3d::Zero(), lo, hi, opt);
  CHECK(r.termination == Termination::kProjectedGradient);
  CHECK(r.x[0] == doctest::Approx(3.0));
  CHECK(r.x[1] == doctest::Approx(0.0));
  CHECK(r.x[2] == doctest::Approx(0.25));
}

TEST_CASE("box QP and generic projected gradient agree with a grid search") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::MatrixXd h = oracle::RandomSpd(rng, 2, 0.5);
    const Eigen::VectorXd b = oracle::RandomMatrix(rng, 2, 1, 3.0);
    const Eigen::Vector2d lo(-1.0, -1.0), hi(1.0, 1.0);
    auto f = [&](double a, double c) {
      const Eigen::Vector2d x(a, c);
      return 0.5 * x.dot(h * x) + b.dot(x);
    };
    const oracle::GridResult grid = oracle::GridSearch2d(f, lo, hi, 1e-3);
    ProjectedGradientOptions opt;
    opt.spectral_step = true;
    opt.tolerance = 1e-10;
    const ProjectedGradientResult qp =
        MinimizeBoxQp(h, b, Eigen::Vector2d::Zero(), lo, hi, opt);
    CHECK((qp.x - grid.argmin).norm() < 3e-3);
    CHECK(f(qp.x[0], qp.x[1]) <= grid.value + 1e-12);

    const ObjectiveFn fn = [&](const Eigen::VectorXd& x,
                               Eigen::VectorXd* grad) {
      if (grad) *grad = h * x + b;
      return 0.5 * x.dot(h * x) + b.dot(x);
    };
    const ProjectedGradientResult pg = MinimizeProjectedGradient(
        fn, Eigen::Vector2d::Zero(), lo, hi, ProjectedGradientOptions{});
    CHECK((pg.x - qp.x).norm() < 1e-6);
    for (std::size_t i = 1; i < pg.history.size(); ++i) {
      CHECK(pg.history[i] <= pg.history[i - 1]);
    }
  }
}

TEST_CASE("nominal optimization decreases monotonically and beats constants") {
  const RtoConfig cfg;
  const ReactorParams params;
  const BatchTimeGrid grid;
  const NominalTrajectory nominal = OptimizeNominal(cfg, params, grid);
  CHECK(nominal.objective < nominal.initial_objective);
  CHECK(nominal.temperature_within_bounds);
  CHECK(nominal.termination != Termination::kMaxIterations);
  for (std::size_t i = 1; i < nominal.history.size(); ++i) {
    CHECK(nominal.history[i] <= nominal.history[i - 1]);
  }
  CHECK(nominal.u_nom.minCoeff() >= 0.0);
  CHECK(nominal.u_nom.maxCoeff() <= 10.0);
  CHECK(nominal.x_nom.rows() == 41);
  CHECK((nominal.x_nom - SimulateNominal(nominal.u_nom, params, grid))
            .norm() == 0.0);

  double best_constant = std::numeric_limits<double>::infinity();
  for (double f = 0.0; f <= 10.0; f += 0.25) {
    best_constant = std::min(
        best_constant,
        RtoObjective(Eigen::VectorXd::Constant(40, f), cfg, params, grid));
  }
  CHECK(nominal.objective <= best_constant);

  const auto dir = std::filesystem::temp_directory_path() / "batchloop_rto";
  std::filesystem::create_directories(dir);
  WriteNominal(dir.string(), nominal, cfg, grid);
  CHECK(std::filesystem::exists(dir / "nominal.csv"));
  CHECK(std::filesystem::exists(dir / "nominal.json"));
  const Json j = NominalToJson(nominal, cfg);
  CHECK(j.contains("u_nom"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid optimizer settings are configuration errors") {
  RtoConfig cfg;
  cfg.u_min = 5.0;
  cfg.u_max = 1.0;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = RtoConfig{};
  cfg.u_max = 12.0;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = RtoConfig{};
  cfg.fd_step = 0.0;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
}

}  // namespace
}  // namespace batchloop
