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

#include "batchloop/reactor.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace batchloop {
namespace {

// Hand-coded balances with constants written out in seconds; shares no code
// with the library model. Index 4 accumulates C_C = integral of r2.
using Augmented = Eigen::Matrix<double, 5, 1>;

Augmented ReferenceRhs(const Augmented& s, double flow, double inlet) {
  const double k1 = 4000.0 * std::exp(-5000.0 / (2.0 * s[2])) / 3600.0;
  const double k2 = 6.2e5 * std::exp(-10000.0 / (2.0 * s[2])) / 3600.0;
  const double r1 = k1 * s[0] * s[0];
  const double r2 = k2 * s[1];
  const double heat = 10850.0 / 60.0 * 525.0 * (s[2] - s[3]);
  Augmented d;
  d[0] = -r1;
  d[1] = r1 - r2;
  d[2] = 1.8e5 / 800.0 * r1 - 2.25e5 / 800.0 * r2 - heat / (1200.0 * 800.0);
  d[3] = flow / 1200.0 * (inlet - s[3]) + heat / (1000.0 * 1200.0 * 0.8);
  d[4] = r2;
  return d;
}

Augmented ReferenceInterval(Augmented s, double flow, double inlet,
                            double interval, int substeps) {
  const double h = interval / substeps;
  for (int i = 0; i < substeps; ++i) {
    const Augmented a = ReferenceRhs(s, flow, inlet);
    const Augmented b = ReferenceRhs(s + 0.5 * h * a, flow, inlet);
    const Augmented c = ReferenceRhs(s + 0.5 * h * b, flow, inlet);
    const Augmented e = ReferenceRhs(s + h * c, flow, inlet);
    s += h / 6.0 * (a + 2.0 * b + 2.0 * c + e);
  }
  return s;
}

TEST_CASE("Arrhenius constants match hand-computed values") {
  const RateConstants k = ArrheniusRates(350.0, ReactorParams{});
  CHECK(k.k1 == doctest::Approx(3.1619612924798646).epsilon(1e-14));
  CHECK(k.k2 == doctest::Approx(0.3874224695867113).epsilon(1e-14));
  CHECK_THROWS_AS(ArrheniusRates(0.0, ReactorParams{}), DomainError);
  CHECK_THROWS_AS(ArrheniusRates(std::nan(""), ReactorParams{}), DomainError);
}

TEST_CASE("rate constants at the nominal jacket temperature") {
  const RateConstants k = ArrheniusRates(323.0, ReactorParams{});
  CHECK(k.k1 == doctest::Approx(1.740).epsilon(1e-3));
  CHECK(k.k2 == doctest::Approx(0.119).epsilon(5e-3));
  const RateConstants hot = ArrheniusRates(1e12, ReactorParams{});
  CHECK(hot.k1 == doctest::Approx(4000.0).epsilon(1e-6));
}

TEST_CASE("derivative signs and trivial limits") {
  const ReactorParams params;
  const ReactorState start = InitialState(params);
  CHECK(start == ReactorState(1.0, 0.0, 323.0, 323.0));
  const ReactorState d0 = StateDerivative(start, 0.0, 323.0, params);
  CHECK(d0[kCa] < 0.0);
  CHECK(d0[kTemp] > 0.0);
  // No reactants and T = T_J leaves the jacket as the only driver.
  const ReactorState empty(0.0, 0.0, 330.0, 330.0);
  const ReactorState de = StateDerivative(empty, 0.0, 318.0, params);
  CHECK(de[kCa] == 0.0);
  CHECK(de[kCb] == 0.0);
  CHECK(de[kTemp] == 0.0);
  CHECK(de[kJacketTemp] == 0.0);

  ReactorParams inert = params;
  inert.alpha1 = 0.0;
  inert.alpha2 = 0.0;
  const ReactorState x(0.8, 0.1, 320.0, 320.0);
  CHECK(IntegrateStep(x, 0.0, 318.0, BatchTimeGrid{}, inert) == x);
}

TEST_CASE("halving the substep changes a batch negligibly") {
  const Eigen::VectorXd flows = Eigen::VectorXd::Constant(40, 5.0);
  BatchTimeGrid fine;
  fine.dt_sub = 0.5;
  const Eigen::MatrixXd a = SimulateNominal(flows, ReactorParams{},
                                            BatchTimeGrid{});
  const Eigen::MatrixXd b = SimulateNominal(flows, ReactorParams{}, fine);
  CHECK((a.row(40) - b.row(40)).norm() / b.row(40).norm() < 1e-8);
  CHECK(a(40, kCa) < 1.0);
  CHECK(a(40, kCb) > 0.0);
  CHECK(a(1, kCa) < 1.0);
  CHECK(a(1, kCb) > 0.0);
}

TEST_CASE("state derivative agrees with the reference balances") {
  const ReactorParams params;
  for (const ReactorState& x :
       {ReactorState(1.0, 0.0, 323.0, 323.0),
        ReactorState(0.5, 0.4, 355.0, 330.0),
        ReactorState(0.2, 0.6, 340.0, 345.0)}) {
    for (double flow : {0.0, 3.5, 10.0}) {
      Augmented s;
      s << x, 0.0;
      const Augmented ref = ReferenceRhs(s, flow, 318.0);
      const ReactorState got = StateDerivative(x, flow, 318.0, params);
      for (int i = 0; i < 4; ++i) {
        CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("RK4 interval matches the reference integrator") {
  const ReactorParams params;
  const BatchTimeGrid grid;
  const ReactorState x(0.7, 0.25, 345.0, 330.0);
  Augmented s;
  s << x, 0.0;
  const Augmented ref =
      ReferenceInterval(s, 4.0, 323.0, grid.SampleInterval(), 90);
  const ReactorState got = IntegrateStepRaw(x, 4.0, 323.0, grid, params);
  for (int i = 0; i < 4; ++i) {
    CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-11));
  }
}

TEST_CASE("total moles A + B + C are conserved along a batch") {
  Augmented s;
  s << 1.0, 0.0, 323.0, 323.0, 0.0;
  for (int t = 0; t < 40; ++t) {
    s = ReferenceInterval(s, 2.0 + 0.1 * t, 323.0, 90.0, 90);
    CHECK(s[0] + s[1] + s[4] == doctest::Approx(1.0).epsilon(1e-10));
  }
  // The library trajectory carries the same A and B as the reference.
  const Eigen::VectorXd flows = Eigen::VectorXd::LinSpaced(40, 2.0, 5.9);
  const Eigen::MatrixXd states =
      SimulateNominal(flows, ReactorParams{}, BatchTimeGrid{});
  CHECK(states(40, kCa) == doctest::Approx(s[0]).epsilon(1e-9));
  CHECK(states(40, kCb) == doctest::Approx(s[1]).epsilon(1e-9));
}

TEST_CASE("C_A is non-increasing and concentrations stay non-negative") {
  for (double flow : {0.0, 2.0, 10.0}) {
    const Eigen::MatrixXd states = SimulateNominal(
        Eigen::VectorXd::Constant(40, flow), ReactorParams{},
        BatchTimeGrid{});
    for (int t = 1; t <= 40; ++t) {
      CHECK(states(t, kCa) <= states(t - 1, kCa));
      CHECK(states(t, kCa) >= 0.0);
      CHECK(states(t, kCb) >= 0.0);
    }
  }
}

TEST_CASE("RK4 error shrinks with the fourth power of the substep") {
  const ReactorParams params;
  const ReactorState x(0.7, 0.25, 345.0, 330.0);
  auto run = [&](double dt_sub) {
    BatchTimeGrid grid;
    grid.dt_sub = dt_sub;
    return IntegrateStepRaw(x, 6.0, 323.0, grid, params);
  };
  const ReactorState reference = run(0.05);
  const double coarse = (run(2.0) - reference).norm();
  const double fine = (run(1.0) - reference).norm();
  REQUIRE(fine > 0.0);
  const double ratio = coarse / fine;
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("out-of-range flows are rejected") {
  ReactorPlant plant(ReactorParams{}, BatchTimeGrid{}, NoiseConfig{});
  plant.BeginBatch();
  CHECK_THROWS_AS(plant.Step(-0.1), ConstraintError);
  CHECK_THROWS_AS(plant.Step(10.5), ConstraintError);
  CHECK_THROWS_AS(plant.Step(std::nan("")), ConstraintError);
  CHECK_NOTHROW(plant.Step(10.0));
  Eigen::VectorXd flows = Eigen::VectorXd::Constant(40, 1.0);
  flows[7] = 11.0;
  CHECK_THROWS_AS(CheckFlowBounds(flows), ConstraintError);
}

TEST_CASE("configuration validation names the field") {
  ReactorParams params;
  params.volume = -1.0;
  try {
    params.Validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "reactor.volume");
  }
  BatchTimeGrid grid;
  grid.n_steps = 0;
  CHECK_THROWS_AS(grid.Validate(), ConfigError);
  NoiseConfig noise;
  noise.var_m = -0.1;
  CHECK_THROWS_AS(noise.Validate(), ConfigError);
}

TEST_CASE("plant runs are deterministic for a seed and differ across seeds") {
  const Eigen::VectorXd flows = Eigen::VectorXd::Constant(40, 2.0);
  NoiseConfig noise;
  noise.seed = 11;
  ReactorPlant a(ReactorParams{}, BatchTimeGrid{}, noise);
  ReactorPlant b(ReactorParams{}, BatchTimeGrid{}, noise);
  noise.seed = 12;
  ReactorPlant c(ReactorParams{}, BatchTimeGrid{}, noise);
  for (int k = 0; k < 3; ++k) {
    const BatchTrace ta = a.RunBatch(flows);
    const BatchTrace tb = b.RunBatch(flows);
    const BatchTrace tc = c.RunBatch(flows);
    CHECK(ta.states == tb.states);
    CHECK(ta.observations == tb.observations);
    CHECK(ta.quality == tb.quality);
    CHECK(ta.observations != tc.observations);
  }
  CHECK(a.batches_completed() == 3);
}

TEST_CASE("disturbance offset drifts between batches only") {
  NoiseConfig noise;
  noise.var_v = 0.0;
  noise.var_w = 0.0;
  noise.var_m = 0.0;
  noise.var_n = 0.0;
  ReactorPlant plant(ReactorParams{}, BatchTimeGrid{}, noise);
  const BatchTrace trace =
      plant.RunBatch(Eigen::VectorXd::Constant(40, 2.0));
  CHECK((trace.disturbance.array() == -5.0).all());
  // Noise-free observations equal the true temperatures.
  for (int t = 1; t <= 40; ++t) {
    CHECK(trace.observations(t - 1, 0) == trace.states(t, kTemp));
    CHECK(trace.observations(t - 1, 1) == trace.states(t, kJacketTemp));
  }
  CHECK(trace.quality[0] == trace.states(40, kCa));
  CHECK(trace.quality[1] == trace.states(40, kCb));

  // With the offset applied, the nominal simulation reproduces the plant.
  const Eigen::VectorXd offset = Eigen::VectorXd::Constant(40, -5.0);
  const Eigen::MatrixXd replay =
      SimulateNominal(Eigen::VectorXd::Constant(40, 2.0), ReactorParams{},
                      BatchTimeGrid{}, &offset);
  CHECK((replay - trace.states).cwiseAbs().maxCoeff() == 0.0);

  NoiseConfig drift;
  drift.seed = 3;
  DisturbanceModel model(40, -5.0, drift);
  const Eigen::VectorXd before = model.deterministic();
  const Eigen::VectorXd w = model.EndBatch();
  CHECK((model.deterministic() - (before + w)).norm() == 0.0);
}

TEST_CASE("plant step counter counts every applied interval") {
  const auto before = ReactorPlant::TotalSteps();
  ReactorPlant plant(ReactorParams{}, BatchTimeGrid{}, NoiseConfig{});
  plant.RunBatch(Eigen::VectorXd::Constant(40, 1.0));
  CHECK(ReactorPlant::TotalSteps() - before == 40);
  CHECK_THROWS_AS(plant.Step(1.0), Error);
}

TEST_CASE("trajectory CSV has the documented header and row count") {
  const auto path =
      std::filesystem::temp_directory_path() / "batchloop_traj_test.csv";
  const Eigen::VectorXd flows = Eigen::VectorXd::Constant(40, 1.5);
  const Eigen::MatrixXd states =
      SimulateNominal(flows, ReactorParams{}, BatchTimeGrid{});
  WriteTrajectoryCsv(path.string(), BatchTimeGrid{}, states, flows,
                     Eigen::VectorXd::Zero(40));
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,time_s,C_A,C_B,T,T_J,F_ow,d");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 41);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace batchloop
