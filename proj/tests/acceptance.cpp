// Acceptance gate: runs the ten release criteria against the bundled 33-bus
// case and prints one [PASS]/[FAIL] line per criterion. Exit status is the
// number of failed criteria (0 when the gate is green). The case file path
// may be overridden as argv[1].

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridtherm/casefile.hpp"
#include "gridtherm/control.hpp"
#include "gridtherm/coordinator.hpp"
#include "gridtherm/csv.hpp"
#include "gridtherm/errors.hpp"
#include "gridtherm/lp.hpp"
#include "gridtherm/network.hpp"
#include "gridtherm/thermal.hpp"
#include "oracles.hpp"

using namespace gridtherm;
using testing::best_vertex_objective;
using testing::enumerate_milp_objective;
using testing::gauss_seidel_profile;
using testing::golden_section;
using testing::random_binary_milp;
using testing::random_box_lp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double value) { return csv::format_double(value); }

/// Outcome of one criterion: verdict plus a short detail string for the line.
struct Verdict {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void run_criterion(int index, const std::string& description,
                   const std::function<Verdict()>& body) {
  Verdict verdict;
  try {
    verdict = body();
  } catch (const std::exception& error) {
    verdict.pass = false;
    verdict.detail = std::string("exception: ") + error.what();
  }
  std::printf("[%s] %2d. %s (%s)\n", verdict.pass ? "PASS" : "FAIL", index, description.c_str(),
              verdict.detail.c_str());
  std::fflush(stdout);
  if (!verdict.pass) ++g_failures;
}

Eigen::VectorXd scaled_target(const Eigen::VectorXd& temperatures, double ambient_k,
                              double scale) {
  return (temperatures.array() - ambient_k) * scale + ambient_k;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw Error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// ---------------------------------------------------------------------------
// Criterion 1: steady-state solves against a damped Gauss-Seidel oracle.
// Draw ranges keep the fixed-point iteration contractive: the conduction
// coupling is capped relative to the weakest convective tie, and the
// resistive feedback is capped at 30% of the weakest module's convection so
// the runaway guard never trips.
// ---------------------------------------------------------------------------
Verdict thermal_oracle_criterion() {
  std::mt19937 rng(7081341u);
  std::uniform_int_distribution<int> module_count(2, 20);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double worst_deviation = 0.0;
  double worst_residual = 0.0;
  const auto start = Clock::now();
  for (int draw = 0; draw < 100; ++draw) {
    thermal::RackGeometry geometry;
    geometry.n_modules = module_count(rng);
    geometry.module_depth_m = 0.2 + 0.5 * unit(rng);
    geometry.contact_face_area_m2 = 0.02 + 0.08 * unit(rng);
    geometry.side_face_area_m2 = 0.04 + 0.16 * unit(rng);

    thermal::ThermalParams params;
    params.base_convection = 3.0 + 9.0 * unit(rng);
    params.fan_sensitivity = 0.03 * unit(rng);
    params.reference_fan_speed = 0.0;
    params.ambient_k = 290.0 + 25.0 * unit(rng);
    params.reference_resistance = 0.05 + 0.15 * unit(rng);
    params.resistance_temp_coeff = 0.005 * unit(rng);
    params.reference_temperature_k = 298.15;

    const double fan_speed = 3000.0 * unit(rng);
    const double h = params.convection_coeff(fan_speed);
    const double min_area = (geometry.n_modules >= 3)
                                ? 2.0 * geometry.side_face_area_m2
                                : geometry.convection_area(0);
    const double conduction_cap = 25.0 * h * 2.0 * geometry.side_face_area_m2 *
                                  geometry.module_depth_m / geometry.contact_face_area_m2;
    params.casing_conductivity = std::min(5.0 + 400.0 * unit(rng), 0.9 * conduction_cap);
    const double slope = params.resistance_slope();
    const double current_cap = slope > 0.0 ? 0.3 * h * min_area / slope : 4000.0;
    const double squared_current = unit(rng) * std::min(4000.0, current_cap);

    const auto system = thermal::assemble_system(geometry, params);
    const Eigen::VectorXd direct =
        thermal::solve_steady_state(system, fan_speed, squared_current);
    const Eigen::VectorXd oracle =
        gauss_seidel_profile(geometry, params, fan_speed, squared_current);
    worst_deviation =
        std::max(worst_deviation, (direct - oracle).lpNorm<Eigen::Infinity>());

    const thermal::OperatingPoint point{fan_speed, squared_current, direct};
    worst_residual = std::max(
        worst_residual, thermal::balance_residual(system, point).lpNorm<Eigen::Infinity>());
  }
  const double elapsed = seconds_since(start);

  const bool pass = worst_deviation <= 1e-6 && worst_residual < 1e-9 && elapsed < 1.0;
  return {pass, "max |T - oracle| = " + fmt(worst_deviation) + " K, max residual = " +
                    fmt(worst_residual) + " W, " + fmt(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// Criterion 2: the closed-form increment pair against a golden-section
// minimizer of (a + b d)^2 + c d^2. Draw ranges keep the oracle's own
// floating-point noise floor below the 1e-8 comparison tolerance.
// ---------------------------------------------------------------------------
Verdict policy_oracle_criterion() {
  std::mt19937 rng(550132u);
  std::uniform_real_distribution<double> offset_range(-10.0, 10.0);
  std::uniform_real_distribution<double> slope_magnitude(0.2, 2.0);
  std::uniform_real_distribution<double> weight_range(2.0, 10.0);
  std::bernoulli_distribution sign;

  double worst_minimizer = 0.0;
  double worst_constraint = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const double a = offset_range(rng);
    const double b = (sign(rng) ? 1.0 : -1.0) * slope_magnitude(rng);
    const double c = weight_range(rng);

    control::EffortCoefficients coeffs;
    coeffs.offset = a;
    coeffs.slope = b;
    const control::ControlEffort effort = control::optimal_policy(coeffs, c);

    const auto objective = [a, b, c](long double d) {
      const long double fan = static_cast<long double>(a) + static_cast<long double>(b) * d;
      return fan * fan + static_cast<long double>(c) * d * d;
    };
    const double radius = std::abs(a * b) / c + 1.0;
    const double oracle = golden_section(objective, -radius, radius);

    worst_minimizer =
        std::max(worst_minimizer, std::abs(effort.delta_squared_current - oracle));
    const double implied = a + b * effort.delta_squared_current;
    worst_constraint =
        std::max(worst_constraint,
                 std::abs(effort.delta_fan - implied) / (1.0 + std::abs(implied)));
  }

  const bool pass = worst_minimizer <= 1e-8 && worst_constraint <= 1e-12;
  return {pass, "max |d - oracle| = " + fmt(worst_minimizer) +
                    ", max constraint residual = " + fmt(worst_constraint)};
}

// ---------------------------------------------------------------------------
// Criterion 3: halving the target step quarters the prediction residual.
// ---------------------------------------------------------------------------
Verdict linearization_criterion(const CaseBundle& bundle) {
  const auto system = thermal::assemble_system(bundle.geometry, bundle.params);
  const double squared_current = bundle.initial_current_a * bundle.initial_current_a;
  thermal::OperatingPoint point{bundle.initial_fan_rpm, squared_current, {}};
  point.temperatures =
      thermal::solve_steady_state(system, point.fan_speed, point.squared_current);

  const Eigen::VectorXd direction =
      -0.01 * (point.temperatures.array() - bundle.params.ambient_k).matrix();
  const std::vector<double> epsilons = {1.0, 0.5, 0.25};
  const auto rows = control::linearization_order(system, point, direction, epsilons);

  bool pass = rows.size() == 3;
  std::string detail = "prediction residuals:";
  for (const auto& row : rows) {
    detail += " " + fmt(row.residual_vs_prediction);
    pass = pass && !row.degenerate;
  }
  detail += " K; target residuals:";
  for (const auto& row : rows) detail += " " + fmt(row.residual_vs_target);
  detail += " K; ratios:";
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const double ratio = rows[i + 1].residual_vs_prediction / rows[i].residual_vs_prediction;
    detail += " " + fmt(ratio);
    pass = pass && ratio >= 0.15 && ratio <= 0.35;
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// Criterion 4: weight sweep trend at target scale 0.95.
// ---------------------------------------------------------------------------
Verdict weight_trend_criterion(const CaseBundle& bundle) {
  const auto system = thermal::assemble_system(bundle.geometry, bundle.params);
  const double squared_current = bundle.initial_current_a * bundle.initial_current_a;
  thermal::OperatingPoint point{bundle.initial_fan_rpm, squared_current, {}};
  point.temperatures =
      thermal::solve_steady_state(system, point.fan_speed, point.squared_current);
  const Eigen::VectorXd target =
      scaled_target(point.temperatures, bundle.params.ambient_k, 0.95);
  const auto coeffs =
      control::compute_effort_coefficients(system, point, target, bundle.reduction);

  bool pass = true;
  double previous_fan = -1e300;
  double previous_current = 1e300;
  double first_fan = 0.0;
  double last_fan = 0.0;
  for (int i = 1; i <= 20; ++i) {
    const double weight = (i * 5) / 100.0;
    const auto effort = control::optimal_policy(coeffs, weight);
    pass = pass && effort.delta_fan > 0.0 && effort.delta_squared_current < 0.0;
    pass = pass && effort.delta_fan > previous_fan;
    pass = pass && std::abs(effort.delta_squared_current) < previous_current;
    previous_fan = effort.delta_fan;
    previous_current = std::abs(effort.delta_squared_current);
    if (i == 1) first_fan = effort.delta_fan;
    last_fan = effort.delta_fan;
  }
  return {pass, "delta_u_f rises " + fmt(first_fan) + " -> " + fmt(last_fan) +
                    " rpm while |delta_u_I| falls, both signs fixed"};
}

// ---------------------------------------------------------------------------
// Criterion 5: target-depth sweep trend at weight 0.25.
// ---------------------------------------------------------------------------
Verdict target_trend_criterion(const CaseBundle& bundle) {
  const auto system = thermal::assemble_system(bundle.geometry, bundle.params);
  const double squared_current = bundle.initial_current_a * bundle.initial_current_a;
  thermal::OperatingPoint point{bundle.initial_fan_rpm, squared_current, {}};
  point.temperatures =
      thermal::solve_steady_state(system, point.fan_speed, point.squared_current);

  bool pass = true;
  double previous_fan = -1.0;
  double previous_current = -1.0;
  double deepest_fan = 0.0;
  double deepest_current = 0.0;
  for (int step = 0; step <= 10; ++step) {
    const double scale = 1.0 - 0.01 * step;
    const Eigen::VectorXd target =
        scaled_target(point.temperatures, bundle.params.ambient_k, scale);
    const auto coeffs =
        control::compute_effort_coefficients(system, point, target, bundle.reduction);
    const auto effort = control::optimal_policy(coeffs, 0.25);
    const double fan_magnitude = std::abs(effort.delta_fan);
    const double current_magnitude = std::abs(effort.delta_squared_current);
    if (step > 0) {
      pass = pass && fan_magnitude > previous_fan && current_magnitude > previous_current;
    }
    previous_fan = fan_magnitude;
    previous_current = current_magnitude;
    deepest_fan = fan_magnitude;
    deepest_current = current_magnitude;
  }
  return {pass, "at scale 0.90: |delta_u_f| = " + fmt(deepest_fan) +
                    " rpm, |delta_u_I| = " + fmt(deepest_current) + " A^2"};
}

// ---------------------------------------------------------------------------
// Criterion 6: cost spread across the weight sweep at the reference scale.
// ---------------------------------------------------------------------------
Verdict cost_spread_criterion(const CaseBundle& bundle) {
  const auto report = coordinator::run_two_layer(bundle, bundle.sweep);
  const bool pass = std::isfinite(report.weight_cost_spread) &&
                    report.weight_cost_spread >= 0.0 && report.weight_cost_spread < 0.05;
  return {pass, "relative cost spread at scale " + fmt(report.spread_scale) + " is " +
                    fmt(report.weight_cost_spread)};
}

// ---------------------------------------------------------------------------
// Criterion 7: LP vertex-enumeration oracle, MILP full enumeration, and
// monotone phase-two objective traces.
// ---------------------------------------------------------------------------
Verdict lp_oracle_criterion() {
  double worst_lp = 0.0;
  double worst_milp = 0.0;
  bool traces_monotone = true;

  std::mt19937 lp_rng(1729u);
  for (int draw = 0; draw < 50; ++draw) {
    const lp::LinearProgram problem = random_box_lp(lp_rng);
    std::vector<double> trace;
    lp::LpOptions options;
    options.objective_trace = &trace;
    const auto outcome = lp::solve_lp(problem, options);
    if (outcome.status != lp::SolveStatus::Optimal) return {false, "random LP not optimal"};
    const double oracle = best_vertex_objective(problem);
    worst_lp = std::max(worst_lp, std::abs(outcome.objective_value - oracle));
    for (std::size_t i = 1; i < trace.size(); ++i) {
      traces_monotone = traces_monotone && trace[i] <= trace[i - 1] + 1e-7;
    }
  }

  std::mt19937 milp_rng(92583u);
  for (int draw = 0; draw < 20; ++draw) {
    const lp::LinearProgram problem = random_binary_milp(milp_rng);
    const auto outcome = lp::solve_milp(problem);
    if (outcome.status != lp::SolveStatus::Optimal) return {false, "random MILP not optimal"};
    const double oracle = enumerate_milp_objective(problem);
    worst_milp = std::max(worst_milp, std::abs(outcome.objective_value - oracle));
  }

  const bool pass = worst_lp <= 1e-7 && worst_milp <= 1e-9 && traces_monotone;
  return {pass, "max LP deviation = " + fmt(worst_lp) + ", max MILP deviation = " +
                    fmt(worst_milp) + ", traces " +
                    (traces_monotone ? "non-increasing" : "NOT monotone")};
}

// ---------------------------------------------------------------------------
// Criterion 8: 33-bus dispatch sanity with and without the storage unit.
// ---------------------------------------------------------------------------
Verdict opf_sanity_criterion(const CaseBundle& bundle) {
  const auto start = Clock::now();
  const auto base_problem = network::assemble_opf(bundle.grid, std::nullopt);
  const auto base_outcome = lp::solve_milp(base_problem.lp);
  const double elapsed = seconds_since(start);
  if (base_outcome.status != lp::SolveStatus::Optimal) {
    return {false, "no-storage dispatch not optimal"};
  }
  const auto base =
      network::extract_solution(base_problem, base_outcome, bundle.grid, std::nullopt);

  bool pass = elapsed < 1.0;
  const double import_error =
      std::abs(base.steps[0].import_mw - bundle.grid.total_load_mw());
  pass = pass && import_error <= 1e-7;
  double v_low = 1e300;
  double v_high = -1e300;
  for (const auto& step : base.steps) {
    v_low = std::min(v_low, step.v_sq.minCoeff());
    v_high = std::max(v_high, step.v_sq.maxCoeff());
  }
  pass = pass && v_low >= bundle.grid.v_min_sq - 1e-9 && v_high <= bundle.grid.v_max_sq + 1e-9;

  // Storage runs: the free formulation plus a spread of commanded magnitudes.
  // The charge/discharge indicators must never both engage.
  bool exclusivity = true;
  const std::vector<std::optional<double>> magnitudes = {
      std::nullopt, 0.0, 20.0, bundle.ess->power_magnitude_kw(2500.0), 60.0};
  for (const auto& magnitude : magnitudes) {
    const auto problem = network::assemble_opf(bundle.grid, bundle.ess, magnitude);
    const auto outcome = lp::solve_milp(problem.lp);
    if (outcome.status != lp::SolveStatus::Optimal) {
      return {false, "storage dispatch not optimal"};
    }
    const auto solution =
        network::extract_solution(problem, outcome, bundle.grid, bundle.ess);
    for (const auto& step : solution.steps) {
      exclusivity = exclusivity && (step.alpha_charge + step.alpha_discharge <= 1);
    }
  }
  pass = pass && exclusivity;
  return {pass, "solve " + fmt(elapsed) + " s, |import - load| = " + fmt(import_error) +
                    " MW, v^2 in [" + fmt(v_low) + ", " + fmt(v_high) +
                    "], exclusivity " + (exclusivity ? "held" : "VIOLATED")};
}

// ---------------------------------------------------------------------------
// Criterion 9: a mixed grid built over the two-layer operating points can
// only match or beat the two-layer best.
// ---------------------------------------------------------------------------
Verdict dominance_criterion(const CaseBundle& bundle) {
  SweepSpec sweep = bundle.sweep;
  sweep.target_scalings = {0.90, 0.95, 1.0};
  sweep.weights = {0.1, 0.5};
  sweep.reference_scale = 0.95;
  sweep.reference_weight = 0.5;
  const auto two_layer = coordinator::run_two_layer(bundle, sweep);

  MixedSpec spec;
  spec.fan_grid_rpm.clear();
  spec.current_grid_a.clear();
  spec.temp_max_k = 1.0e4;  // feasibility is the two-layer run's concern here
  for (const auto& row : two_layer.rows) {
    if (!row.feasible) continue;
    spec.fan_grid_rpm.push_back(row.fan_speed_rpm);
    spec.current_grid_a.push_back(std::sqrt(row.squared_current_a2));
  }
  const auto mixed = coordinator::run_mixed(bundle, spec);
  const auto record = coordinator::compare(two_layer, mixed);

  const bool pass = record.nested && record.dominance_checked && record.dominance_holds &&
                    record.mixed_best_cost <= record.two_layer_best_cost + 1e-6;
  return {pass, "two-layer best " + fmt(record.two_layer_best_cost) + " $, mixed best " +
                    fmt(record.mixed_best_cost) + " $ over " +
                    std::to_string(record.mixed_candidates) + " superset candidates"};
}

// ---------------------------------------------------------------------------
// Criterion 10: the full sweep finishes inside the desk budget and its
// report files are byte-identical across fresh runs.
// ---------------------------------------------------------------------------
Verdict determinism_criterion(const CaseBundle& bundle) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "gridtherm-acceptance";
  const fs::path first_dir = root / "first";
  const fs::path second_dir = root / "second";
  fs::remove_all(root);
  fs::create_directories(first_dir);
  fs::create_directories(second_dir);

  const auto start = Clock::now();
  const auto first = coordinator::run_two_layer(bundle, bundle.sweep);
  coordinator::write_two_layer_reports(first, bundle.sweep, first_dir);
  const double elapsed = seconds_since(start);

  const auto second = coordinator::run_two_layer(bundle, bundle.sweep);
  coordinator::write_two_layer_reports(second, bundle.sweep, second_dir);

  bool identical = true;
  for (const char* name :
       {"candidates.csv", "sweep_weight.csv", "sweep_target.csv", "cost_vs_weight.csv"}) {
    identical = identical && slurp(first_dir / name) == slurp(second_dir / name);
  }
  fs::remove_all(root);

  const bool pass = elapsed < 60.0 && identical &&
                    first.rows.size() == bundle.sweep.target_scalings.size() *
                                             bundle.sweep.weights.size();
  return {pass, std::to_string(first.rows.size()) + " candidates in " + fmt(elapsed) +
                    " s, reports " + (identical ? "byte-identical" : "DIFFER")};
}

} // namespace

int main(int argc, char** argv) {
  const std::string case_path = argc > 1 ? argv[1] : "cases/case33.toml";

  CaseBundle bundle;
  try {
    bundle = casefile::load_case(case_path);
  } catch (const std::exception& error) {
    std::fprintf(stderr, "cannot load case '%s': %s\n", case_path.c_str(), error.what());
    return 1;
  }

  run_criterion(1, "steady-state solves match the relaxation oracle", thermal_oracle_criterion);
  run_criterion(2, "closed-form increments match the golden-section oracle",
                policy_oracle_criterion);
  run_criterion(3, "halving the target step quarters the prediction residual",
                [&] { return linearization_criterion(bundle); });
  run_criterion(4, "weight sweep moves effort from current to fan monotonically",
                [&] { return weight_trend_criterion(bundle); });
  run_criterion(5, "deeper targets demand strictly more of both levers",
                [&] { return target_trend_criterion(bundle); });
  run_criterion(6, "cost spread across the weight sweep stays below 5%",
                [&] { return cost_spread_criterion(bundle); });
  run_criterion(7, "simplex and branch-and-bound match exhaustive enumeration",
                lp_oracle_criterion);
  run_criterion(8, "33-bus dispatch satisfies balance, voltage and exclusivity",
                [&] { return opf_sanity_criterion(bundle); });
  run_criterion(9, "superset mixed grid never loses to the two-layer sweep",
                [&] { return dominance_criterion(bundle); });
  run_criterion(10, "full sweep meets the desk budget and is byte-deterministic",
                [&] { return determinism_criterion(bundle); });

  std::printf("%d of 10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
