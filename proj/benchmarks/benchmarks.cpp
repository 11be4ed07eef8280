// Microbenchmarks for the hot paths: steady-state thermal solves, the policy
// derivation, dispatch assembly/solves on the bundled 33-bus case, and the
// end-to-end cost of one sweep candidate.

#include <optional>

#include <benchmark/benchmark.h>

#include "gridtherm/casefile.hpp"
#include "gridtherm/control.hpp"
#include "gridtherm/coordinator.hpp"
#include "gridtherm/lp.hpp"
#include "gridtherm/network.hpp"
#include "gridtherm/thermal.hpp"

namespace {

using namespace gridtherm;

const CaseBundle& bundle() {
  static const CaseBundle value = casefile::load_case(GRIDTHERM_CASE33);
  return value;
}

void BM_SteadyStateSolve(benchmark::State& state) {
  thermal::RackGeometry geometry = bundle().geometry;
  geometry.n_modules = static_cast<int>(state.range(0));
  const auto system = thermal::assemble_system(geometry, bundle().params);
  for (auto _ : state) {
    benchmark::DoNotOptimize(thermal::solve_steady_state(system, 2000.0, 2500.0));
  }
}
BENCHMARK(BM_SteadyStateSolve)->Arg(10)->Arg(40)->Arg(160);

void BM_PolicyDeriveAndApply(benchmark::State& state) {
  const CaseBundle& b = bundle();
  const auto system = thermal::assemble_system(b.geometry, b.params);
  thermal::OperatingPoint point{b.initial_fan_rpm, b.initial_current_a * b.initial_current_a, {}};
  point.temperatures =
      thermal::solve_steady_state(system, point.fan_speed, point.squared_current);
  const Eigen::VectorXd target =
      ((point.temperatures.array() - b.params.ambient_k) * 0.95 + b.params.ambient_k).matrix();
  for (auto _ : state) {
    const auto coeffs =
        control::compute_effort_coefficients(system, point, target, b.reduction);
    const auto effort = control::optimal_policy(coeffs, 0.25);
    benchmark::DoNotOptimize(control::apply_effort(system, point, effort));
  }
}
BENCHMARK(BM_PolicyDeriveAndApply);

void BM_DispatchAssemble(benchmark::State& state) {
  const CaseBundle& b = bundle();
  const double magnitude = b.ess->power_magnitude_kw(2500.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(network::assemble_opf(b.grid, b.ess, magnitude));
  }
}
BENCHMARK(BM_DispatchAssemble);

void BM_DispatchSolve(benchmark::State& state) {
  const CaseBundle& b = bundle();
  const double magnitude = b.ess->power_magnitude_kw(2500.0);
  const auto problem = network::assemble_opf(b.grid, b.ess, magnitude);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lp::solve_milp(problem.lp));
  }
}
BENCHMARK(BM_DispatchSolve);

void BM_SweepCandidate(benchmark::State& state) {
  const CaseBundle& b = bundle();
  SweepSpec sweep = b.sweep;
  sweep.target_scalings = {0.95};
  sweep.weights = {0.25};
  sweep.reference_scale = 0.95;
  for (auto _ : state) {
    benchmark::DoNotOptimize(coordinator::run_two_layer(b, sweep));
  }
}
BENCHMARK(BM_SweepCandidate);

} // namespace

BENCHMARK_MAIN();
