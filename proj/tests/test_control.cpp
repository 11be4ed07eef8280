#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "gridtherm/control.hpp"
#include "gridtherm/errors.hpp"
#include "gridtherm/thermal.hpp"

using namespace gridtherm;
using control::Reduction;

namespace {

thermal::ThermalSystem default_system() {
  return thermal::assemble_system(thermal::RackGeometry{}, thermal::ThermalParams{});
}

thermal::OperatingPoint default_point(const thermal::ThermalSystem& system) {
  thermal::OperatingPoint point;
  point.fan_speed = 2000.0;
  point.squared_current = 2500.0;
  point.temperatures = thermal::solve_steady_state(system, 2000.0, 2500.0);
  return point;
}

Eigen::VectorXd scaled_excess_target(const thermal::OperatingPoint& point, double ambient,
                                     double scale) {
  return ((point.temperatures.array() - ambient) * scale + ambient).matrix();
}

} // namespace

TEST_SUITE("control") {

TEST_CASE("reduction parsing covers every mode and rejects junk") {
  CHECK(Reduction::parse("mean").kind == control::ReductionKind::WeightedMean);
  CHECK(Reduction::parse("ls").kind == control::ReductionKind::LeastSquares);
  CHECK(Reduction::parse("least-squares").kind == control::ReductionKind::LeastSquares);
  const auto hottest = Reduction::parse("hottest");
  CHECK(hottest.kind == control::ReductionKind::SingleNode);
  CHECK(hottest.node == -1);
  const auto third = Reduction::parse("node:3");
  CHECK(third.kind == control::ReductionKind::SingleNode);
  CHECK(third.node == 2);

  CHECK_THROWS_AS(Reduction::parse("bogus"), ValidationError);
  CHECK_THROWS_AS(Reduction::parse("node:x"), ValidationError);
  CHECK_THROWS_AS(Reduction::parse("node:0"), ValidationError);
  CHECK_THROWS_AS(Reduction::parse(""), ValidationError);

  CHECK(Reduction::parse("mean").name() == "mean");
  CHECK(Reduction::parse("ls").name() == "ls");
  CHECK(Reduction::parse("hottest").name() == "hottest");
  CHECK(Reduction::parse("node:3").name() == "node:3");
}

TEST_CASE("target equal to the current profile needs no effort") {
  const auto system = default_system();
  const auto point = default_point(system);
  const auto coeffs = control::compute_effort_coefficients(system, point, point.temperatures,
                                                           Reduction::weighted_mean());
  CHECK(coeffs.per_node_offset.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(coeffs.offset == 0.0);

  const auto effort = control::optimal_policy(coeffs, 0.25);
  CHECK(effort.delta_fan == 0.0);
  CHECK(effort.delta_squared_current == 0.0);
}

TEST_CASE("mean-reduced coefficients match a from-scratch derivation") {
  const auto system = default_system();
  const auto point = default_point(system);
  const auto& params = system.params();
  const auto& geometry = system.geometry();
  const int n = system.size();
  const Eigen::VectorXd target = 0.95 * point.temperatures;

  // Independent assembly of the balance rows (same first principles as the
  // relaxation oracle) and the per-node effort relation.
  const double h = params.convection_coeff(point.fan_speed);
  const double coupling =
      params.casing_conductivity * geometry.contact_face_area_m2 / geometry.module_depth_m;
  const double alpha = params.resistance_temp_coeff * params.reference_resistance;
  const double intercept = params.reference_resistance *
                           (1.0 - params.resistance_temp_coeff * params.reference_temperature_k);

  Eigen::VectorXd offsets(n);
  Eigen::VectorXd slopes(n);
  const Eigen::VectorXd shift = target - point.temperatures;
  for (int i = 0; i < n; ++i) {
    const bool end = (i == 0 || i == n - 1);
    const double area = 2.0 * geometry.side_face_area_m2 + (end ? geometry.contact_face_area_m2 : 0.0);
    double row = (h * area + coupling * (end ? 1 : 2) - alpha * point.squared_current) * shift(i);
    if (i > 0) row -= coupling * shift(i - 1);
    if (i + 1 < n) row -= coupling * shift(i + 1);
    const double lever = params.base_convection * params.fan_sensitivity * area *
                         (point.temperatures(i) - params.ambient_k);
    offsets(i) = -row / lever;
    slopes(i) = (alpha * point.temperatures(i) + intercept) / lever;
  }

  const auto coeffs = control::compute_effort_coefficients(system, point, target,
                                                           Reduction::weighted_mean());
  CHECK((coeffs.per_node_offset - offsets).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((coeffs.per_node_slope - slopes).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(coeffs.offset == doctest::Approx(offsets.mean()).epsilon(1e-12));
  CHECK(coeffs.slope == doctest::Approx(slopes.mean()).epsilon(1e-12));
}

TEST_CASE("offsets are linear in the target shift, slopes are unaffected") {
  const auto system = default_system();
  const auto point = default_point(system);
  const double ambient = system.params().ambient_k;
  const Eigen::VectorXd near = scaled_excess_target(point, ambient, 0.98);
  const Eigen::VectorXd far = point.temperatures + 2.0 * (near - point.temperatures);

  const auto at_near = control::compute_effort_coefficients(system, point, near, {});
  const auto at_far = control::compute_effort_coefficients(system, point, far, {});
  CHECK((at_far.per_node_offset - 2.0 * at_near.per_node_offset).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((at_far.per_node_slope - at_near.per_node_slope).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("closed-form policy hits the textbook values") {
  control::EffortCoefficients coeffs;
  coeffs.offset = 1.0;
  coeffs.slope = 1.0;
  auto effort = control::optimal_policy(coeffs, 1.0);
  CHECK(effort.delta_fan == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(effort.delta_squared_current == doctest::Approx(-0.5).epsilon(1e-15));

  coeffs.offset = 2.0;
  auto fan_heavy = control::optimal_policy(coeffs, 1e9);
  CHECK(fan_heavy.delta_fan == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(std::abs(fan_heavy.delta_squared_current) < 1e-8);

  CHECK_THROWS_AS(control::optimal_policy(coeffs, 0.0), ValidationError);
  CHECK_THROWS_AS(control::optimal_policy(coeffs, -1.0), ValidationError);
}

TEST_CASE("policy matches a golden-section minimizer and satisfies the constraint") {
  std::mt19937 rng(20240811);
  std::uniform_real_distribution<double> offset_draw(-10.0, 10.0);
  std::uniform_real_distribution<double> slope_draw(0.2, 2.0);
  std::uniform_real_distribution<double> weight_draw(2.0, 10.0);
  std::bernoulli_distribution negate(0.5);

  for (int trial = 0; trial < 100; ++trial) {
    control::EffortCoefficients coeffs;
    coeffs.offset = offset_draw(rng);
    coeffs.slope = slope_draw(rng) * (negate(rng) ? -1.0 : 1.0);
    const double weight = weight_draw(rng);
    const auto effort = control::optimal_policy(coeffs, weight);

    // Constraint delta_u_f = a + b delta_u_I to 1e-12 relative.
    const double lhs = effort.delta_fan;
    const double rhs = coeffs.offset + coeffs.slope * effort.delta_squared_current;
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(lhs)));

    // Independent 1-D minimization of the substituted objective.
    const long double a = coeffs.offset;
    const long double b = coeffs.slope;
    const long double c = weight;
    const auto objective = [&](long double d) { return (a + b * d) * (a + b * d) + c * d * d; };
    const long double radius = std::abs(static_cast<double>(a * b)) / weight + 1.0;
    const double minimizer = gridtherm::testing::golden_section(objective, -radius, radius);
    CHECK(std::abs(effort.delta_squared_current - minimizer) < 1e-8);
    CHECK(std::abs(effort.delta_fan - static_cast<double>(a + b * minimizer)) < 1e-8);

    // Stationarity: sliding along the constraint in either direction only
    // increases the objective.
    const auto on_line = [&](double d) {
      const double fan = coeffs.offset + coeffs.slope * d;
      return fan * fan + weight * d * d;
    };
    const double at_opt = on_line(effort.delta_squared_current);
    for (const double delta : {1e-3, 1e-2}) {
      CHECK(on_line(effort.delta_squared_current + delta) >= at_opt);
      CHECK(on_line(effort.delta_squared_current - delta) >= at_opt);
    }
  }
}

TEST_CASE("cooling splits into faster fan and less current") {
  const auto system = default_system();
  const auto point = default_point(system);
  const double ambient = system.params().ambient_k;
  const Eigen::VectorXd target = scaled_excess_target(point, ambient, 0.95);

  const auto coeffs = control::compute_effort_coefficients(system, point, target, {});
  CHECK(coeffs.offset > 0.0);
  const auto effort = control::optimal_policy(coeffs, 0.25);
  CHECK(effort.delta_fan > 0.0);
  CHECK(effort.delta_squared_current < 0.0);
}

TEST_CASE("weight steers the split monotonically") {
  control::EffortCoefficients coeffs;
  coeffs.offset = 100.0;
  coeffs.slope = 0.8;
  double previous_fan = -1.0;
  double previous_current = 1e300;
  for (double weight = 0.05; weight <= 1.0 + 1e-12; weight += 0.05) {
    const auto effort = control::optimal_policy(coeffs, weight);
    CHECK(effort.delta_fan > previous_fan);
    CHECK(std::abs(effort.delta_squared_current) < previous_current);
    previous_fan = effort.delta_fan;
    previous_current = std::abs(effort.delta_squared_current);
  }
}

TEST_CASE("reduction modes agree with their definitions") {
  const auto system = default_system();
  const auto point = default_point(system);
  const double ambient = system.params().ambient_k;
  const Eigen::VectorXd target = scaled_excess_target(point, ambient, 0.95);

  const auto mean = control::compute_effort_coefficients(system, point, target,
                                                         Reduction::weighted_mean());

  SUBCASE("single node picks one row verbatim") {
    const auto third = control::compute_effort_coefficients(system, point, target,
                                                            Reduction::single_node(2));
    CHECK(third.offset == doctest::Approx(mean.per_node_offset(2)).epsilon(1e-15));
    CHECK(third.slope == doctest::Approx(mean.per_node_slope(2)).epsilon(1e-15));
  }

  SUBCASE("hottest resolves to the peak-temperature module") {
    const auto hottest = control::compute_effort_coefficients(system, point, target,
                                                              Reduction::single_node());
    int peak = 0;
    point.temperatures.maxCoeff(&peak);
    CHECK(hottest.offset == doctest::Approx(mean.per_node_offset(peak)).epsilon(1e-15));
    CHECK(hottest.slope == doctest::Approx(mean.per_node_slope(peak)).epsilon(1e-15));
  }

  SUBCASE("custom weights reweight the mean") {
    Eigen::VectorXd weights = Eigen::VectorXd::LinSpaced(system.size(), 1.0, 2.0);
    const auto weighted = control::compute_effort_coefficients(
        system, point, target, Reduction::weighted_mean(weights));
    const double expected_offset =
        weights.dot(mean.per_node_offset) / weights.sum();
    const double expected_slope = weights.dot(mean.per_node_slope) / weights.sum();
    CHECK(weighted.offset == doctest::Approx(expected_offset).epsilon(1e-12));
    CHECK(weighted.slope == doctest::Approx(expected_slope).epsilon(1e-12));

    Eigen::VectorXd wrong_size = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(control::compute_effort_coefficients(
                        system, point, target, Reduction::weighted_mean(wrong_size)),
                    ValidationError);
  }

  SUBCASE("least squares is the lever-squared weighted mean") {
    const auto ls = control::compute_effort_coefficients(system, point, target,
                                                         Reduction::least_squares());
    Eigen::VectorXd lever(system.size());
    for (int i = 0; i < system.size(); ++i) {
      lever(i) = system.params().base_convection * system.params().fan_sensitivity *
                 system.geometry().convection_area(i) *
                 (point.temperatures(i) - ambient);
    }
    const Eigen::VectorXd lever_sq = lever.cwiseProduct(lever);
    const double expected_offset =
        lever_sq.dot(mean.per_node_offset) / lever_sq.sum();
    const double expected_slope = lever_sq.dot(mean.per_node_slope) / lever_sq.sum();
    CHECK(ls.offset == doctest::Approx(expected_offset).epsilon(1e-10));
    CHECK(ls.slope == doctest::Approx(expected_slope).epsilon(1e-10));
  }
}

TEST_CASE("leverage guards refuse ambient nodes and dead fans") {
  thermal::ThermalParams params;
  params.fan_sensitivity = 0.0;
  const auto dead_fan = thermal::assemble_system(thermal::RackGeometry{}, params);
  thermal::OperatingPoint point;
  point.fan_speed = 2000.0;
  point.squared_current = 100.0;
  point.temperatures = thermal::solve_steady_state(dead_fan, 2000.0, 100.0);
  const Eigen::VectorXd target = point.temperatures.array() - 0.1;
  CHECK_THROWS_WITH_AS(
      control::compute_effort_coefficients(dead_fan, point, target, {}),
      doctest::Contains("no convective leverage"), InfeasibleError);

  const auto system = default_system();
  thermal::OperatingPoint ambient_point;
  ambient_point.fan_speed = 2000.0;
  ambient_point.squared_current = 0.0;
  ambient_point.temperatures = thermal::solve_steady_state(system, 2000.0, 0.0);
  CHECK_THROWS_WITH_AS(
      control::compute_effort_coefficients(system, ambient_point,
                                           ambient_point.temperatures.array() + 1.0, {}),
      doctest::Contains("no convective leverage"), InfeasibleError);
}

TEST_CASE("apply_effort re-solves and enforces physicality") {
  const auto system = default_system();
  const auto point = default_point(system);

  SUBCASE("zero effort is the identity") {
    const auto same = control::apply_effort(system, point, {});
    CHECK(same.fan_speed == point.fan_speed);
    CHECK(same.squared_current == point.squared_current);
    CHECK((same.temperatures - point.temperatures).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("a cooling effort lowers the peak") {
    const double ambient = system.params().ambient_k;
    const Eigen::VectorXd target = scaled_excess_target(point, ambient, 0.95);
    const auto coeffs = control::compute_effort_coefficients(system, point, target, {});
    const auto effort = control::optimal_policy(coeffs, 0.25);
    const auto cooled = control::apply_effort(system, point, effort);
    CHECK(cooled.temperatures.maxCoeff() < point.temperatures.maxCoeff());
  }

  SUBCASE("cutting the current to zero lands at ambient") {
    control::ControlEffort cut;
    cut.delta_squared_current = -point.squared_current;
    const auto off = control::apply_effort(system, point, cut);
    CHECK((off.temperatures.array() - system.params().ambient_k).abs().maxCoeff() < 1e-12);
  }

  SUBCASE("increments outside the envelope are named") {
    control::ControlEffort bad;
    bad.delta_squared_current = -point.squared_current - 1.0;
    CHECK_THROWS_WITH_AS(control::apply_effort(system, point, bad),
                         doctest::Contains("squared current"), InfeasibleError);

    control::ControlEffort stall;
    stall.delta_fan = -point.fan_speed - 60.0;
    CHECK_THROWS_WITH_AS(control::apply_effort(system, point, stall),
                         doctest::Contains("violating h > 0"), InfeasibleError);
  }
}

TEST_CASE("linearization drops only second-order terms") {
  const auto system = default_system();
  const auto point = default_point(system);
  const double ambient = system.params().ambient_k;
  const Eigen::VectorXd direction =
      (-0.01 * (point.temperatures.array() - ambient)).matrix();
  const std::vector<double> epsilons{1.0, 0.5, 0.25};

  const auto rows = control::linearization_order(system, point, direction, epsilons);
  REQUIRE(rows.size() == 3);
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    REQUIRE_FALSE(rows[k].degenerate);
    REQUIRE_FALSE(rows[k + 1].degenerate);
    const double ratio = rows[k + 1].residual_vs_prediction / rows[k].residual_vs_prediction;
    CHECK(ratio > 0.15);
    CHECK(ratio < 0.35);
  }
  // The scalar reduction leaves a first-order gap to the target itself, so
  // that residual shrinks roughly linearly, not quadratically.
  const double target_ratio = rows[1].residual_vs_target / rows[0].residual_vs_target;
  CHECK(target_ratio > 0.35);
  CHECK(target_ratio < 0.75);
}

TEST_CASE("tiny steps are flagged degenerate instead of failing") {
  const auto system = default_system();
  const auto point = default_point(system);
  const double ambient = system.params().ambient_k;
  const Eigen::VectorXd direction =
      (-0.01 * (point.temperatures.array() - ambient)).matrix();
  const std::vector<double> epsilons{1e-7};
  const auto rows = control::linearization_order(system, point, direction, epsilons);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].degenerate);
}

TEST_CASE("iterated policy converges onto a modest target") {
  const auto system = default_system();
  const auto point = default_point(system);
  const double ambient = system.params().ambient_k;
  const Eigen::VectorXd target = scaled_excess_target(point, ambient, 0.98);

  const auto result = control::iterate_policy(system, point, target, 0.25);
  CHECK(result.converged);
  CHECK(result.iterations <= 20);
  CHECK((result.point.temperatures - target).cwiseAbs().maxCoeff() < 0.01);
}

} // TEST_SUITE
