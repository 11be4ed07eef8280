#include "gridtherm/control.hpp"

#include <cmath>
#include <sstream>

namespace gridtherm::control {

Reduction Reduction::single_node(int node) {
  Reduction r;
  r.kind = ReductionKind::SingleNode;
  r.node = node;
  return r;
}

Reduction Reduction::weighted_mean(Eigen::VectorXd weights) {
  Reduction r;
  r.kind = ReductionKind::WeightedMean;
  r.weights = std::move(weights);
  return r;
}

Reduction Reduction::least_squares() {
  Reduction r;
  r.kind = ReductionKind::LeastSquares;
  return r;
}

Reduction Reduction::parse(std::string_view text) {
  if (text == "mean") return weighted_mean();
  if (text == "ls" || text == "least-squares") return least_squares();
  if (text == "hottest") return single_node();
  constexpr std::string_view prefix = "node:";
  if (text.size() > prefix.size() && text.substr(0, prefix.size()) == prefix) {
    const std::string index(text.substr(prefix.size()));
    std::size_t used = 0;
    int node = 0;
    try {
      node = std::stoi(index, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != index.size() || node < 1) {
      throw ValidationError("reduction: bad node index in '" + std::string(text) + "'");
    }
    return single_node(node - 1);
  }
  throw ValidationError("reduction: unknown mode '" + std::string(text) +
                        "' (expected mean, ls, hottest, or node:<index>)");
}

std::string Reduction::name() const {
  switch (kind) {
    case ReductionKind::WeightedMean: return "mean";
    case ReductionKind::LeastSquares: return "ls";
    case ReductionKind::SingleNode:
      return node < 0 ? "hottest" : "node:" + std::to_string(node + 1);
  }
  return "?";
}

namespace {

int resolve_node(const Reduction& reduction, const Eigen::VectorXd& temperatures) {
  if (reduction.node >= 0) {
    if (reduction.node >= temperatures.size()) {
      throw ValidationError("reduction: node index " + std::to_string(reduction.node + 1) +
                            " exceeds module count");
    }
    return reduction.node;
  }
  int hottest = 0;
  temperatures.maxCoeff(&hottest);
  return hottest;
}

void require_leverage(const thermal::ThermalSystem& system, const Eigen::VectorXd& temperatures,
                      const Eigen::VectorXd& lever, const Reduction& reduction) {
  const double ambient = system.params().ambient_k;
  if (system.params().fan_sensitivity == 0.0) {
    throw InfeasibleError(
        "no convective leverage: fan_sensitivity is zero, the fan cannot move the profile");
  }
  auto check = [&](int i) {
    if (!(temperatures(i) > ambient + kAmbientGuardK) || lever(i) == 0.0) {
      std::ostringstream msg;
      msg << "no convective leverage: module " << i + 1 << " sits at " << temperatures(i)
          << " K, within " << kAmbientGuardK << " K of ambient " << ambient << " K";
      throw InfeasibleError(msg.str());
    }
  };
  if (reduction.kind == ReductionKind::SingleNode) {
    check(resolve_node(reduction, temperatures));
  } else {
    for (int i = 0; i < temperatures.size(); ++i) check(i);
  }
}

} // namespace

EffortCoefficients compute_effort_coefficients(const thermal::ThermalSystem& system,
                                               const thermal::OperatingPoint& point,
                                               const Eigen::VectorXd& target,
                                               const Reduction& reduction) {
  const int n = system.size();
  if (point.temperatures.size() != n || target.size() != n) {
    throw ValidationError("effort coefficients: vector length does not match module count");
  }

  const auto& params = system.params();
  Eigen::VectorXd augmented(n + 1);
  augmented.head(n) = point.temperatures;
  augmented(n) = params.ambient_k;

  // Fan lever per node: [K Ttilde]_i = h0 lambda A_conv,i (T_i - T_a).
  const Eigen::VectorXd lever = system.fan_coupling() * augmented;
  require_leverage(system, point.temperatures, lever, reduction);

  // The target perturbs only the module temperatures (ambient is fixed), so
  // M (T* - T) uses the first N columns of the balance matrix.
  const Eigen::MatrixXd balance =
      system.balance_matrix(point.fan_speed, point.squared_current);
  const Eigen::VectorXd forcing =
      -(balance.leftCols(n) * (target - point.temperatures));

  const double alpha = params.resistance_slope();
  const double r0 = params.resistance_intercept();
  const Eigen::VectorXd resistance = (alpha * point.temperatures).array() + r0;

  EffortCoefficients coeffs;
  coeffs.reduction = reduction;
  coeffs.per_node_offset = forcing.cwiseQuotient(lever);
  coeffs.per_node_slope = resistance.cwiseQuotient(lever);

  switch (reduction.kind) {
    case ReductionKind::SingleNode: {
      const int node = resolve_node(reduction, point.temperatures);
      coeffs.offset = coeffs.per_node_offset(node);
      coeffs.slope = coeffs.per_node_slope(node);
      break;
    }
    case ReductionKind::WeightedMean: {
      Eigen::VectorXd w = reduction.weights.size() == 0
                              ? Eigen::VectorXd::Ones(n)
                              : reduction.weights;
      if (w.size() != n) {
        throw ValidationError("reduction: weight vector length does not match module count");
      }
      if (w.minCoeff() < 0.0 || !(w.sum() > 0.0)) {
        throw ValidationError("reduction: weights must be non-negative with positive sum");
      }
      coeffs.offset = w.dot(coeffs.per_node_offset) / w.sum();
      coeffs.slope = w.dot(coeffs.per_node_slope) / w.sum();
      break;
    }
    case ReductionKind::LeastSquares: {
      // Each row asks lever_i * offset = forcing_i and lever_i * slope =
      // resistance_i; stacking and solving in least squares gives the
      // lever^2-weighted per-node coefficients.
      const double denom = lever.squaredNorm();
      coeffs.offset = lever.dot(forcing) / denom;
      coeffs.slope = lever.dot(resistance) / denom;
      break;
    }
  }
  return coeffs;
}

ControlEffort optimal_policy(const EffortCoefficients& coeffs, double weight) {
  if (!(weight > 0.0)) {
    throw ValidationError("policy: weight c must be positive, got " + std::to_string(weight));
  }
  if (!std::isfinite(coeffs.slope) || !std::isfinite(coeffs.offset)) {
    throw ValidationError("policy: reduced coefficients are not finite");
  }
  ControlEffort effort;
  effort.weight = weight;
  effort.delta_squared_current =
      -coeffs.offset * coeffs.slope / (coeffs.slope * coeffs.slope + weight);
  // Evaluating the constraint directly keeps it exact to rounding.
  effort.delta_fan = coeffs.offset + coeffs.slope * effort.delta_squared_current;
  return effort;
}

thermal::OperatingPoint apply_effort(const thermal::ThermalSystem& system,
                                     const thermal::OperatingPoint& point,
                                     const ControlEffort& effort) {
  const double new_squared_current = point.squared_current + effort.delta_squared_current;
  if (new_squared_current < 0.0) {
    std::ostringstream msg;
    msg << "apply effort: squared current " << point.squared_current << " + "
        << effort.delta_squared_current << " = " << new_squared_current
        << " A^2 violates u_I >= 0";
    throw InfeasibleError(msg.str());
  }
  const double new_fan = point.fan_speed + effort.delta_fan;
  const double h = system.params().convection_coeff(new_fan);
  if (!(h > 0.0)) {
    std::ostringstream msg;
    msg << "apply effort: fan speed " << point.fan_speed << " + " << effort.delta_fan << " = "
        << new_fan << " rpm drives h to " << h << " W/m^2K, violating h > 0";
    throw InfeasibleError(msg.str());
  }

  thermal::OperatingPoint next;
  next.fan_speed = new_fan;
  next.squared_current = new_squared_current;
  next.temperatures = solve_steady_state(system, new_fan, new_squared_current);
  return next;
}

std::vector<LinearizationRow> linearization_order(const thermal::ThermalSystem& system,
                                                  const thermal::OperatingPoint& point,
                                                  const Eigen::VectorXd& direction,
                                                  std::span<const double> epsilons,
                                                  double weight, const Reduction& reduction) {
  const int n = system.size();
  if (direction.size() != n) {
    throw ValidationError("linearization: direction length does not match module count");
  }
  if (direction.isZero(0.0)) {
    throw ValidationError("linearization: direction must be nonzero");
  }
  const double ambient = system.params().ambient_k;
  for (const double eps : epsilons) {
    const Eigen::VectorXd target = point.temperatures + eps * direction;
    if (!(target.minCoeff() > ambient + kAmbientGuardK)) {
      std::ostringstream msg;
      msg << "linearization: target at epsilon " << eps << " drops to "
          << target.minCoeff() << " K, at or below ambient " << ambient << " K";
      throw ValidationError(msg.str());
    }
  }

  const auto& params = system.params();
  const double alpha = params.resistance_slope();
  const double r0 = params.resistance_intercept();
  const Eigen::MatrixXd balance =
      system.balance_matrix(point.fan_speed, point.squared_current);
  const Eigen::PartialPivLU<Eigen::MatrixXd> reduced_lu(
      Eigen::MatrixXd(balance.leftCols(n)));

  Eigen::VectorXd augmented(n + 1);
  augmented.head(n) = point.temperatures;
  augmented(n) = params.ambient_k;
  const Eigen::VectorXd lever = system.fan_coupling() * augmented;

  std::vector<LinearizationRow> table;
  table.reserve(epsilons.size());
  for (const double eps : epsilons) {
    const Eigen::VectorXd target = point.temperatures + eps * direction;
    LinearizationRow row;
    row.epsilon = eps;
    if (eps == 0.0) {
      row.degenerate = true;
      table.push_back(row);
      continue;
    }
    const auto coeffs = compute_effort_coefficients(system, point, target, reduction);
    const auto effort = optimal_policy(coeffs, weight);
    const auto next = apply_effort(system, point, effort);

    // Linear model: M dT = dbeta - dM Ttilde with dbeta = R0 du_I and
    // dM Ttilde = [K Ttilde] du_f - alpha du_I T.
    const Eigen::VectorXd rhs =
        Eigen::VectorXd::Constant(n, r0 * effort.delta_squared_current) -
        (lever * effort.delta_fan -
         alpha * effort.delta_squared_current * point.temperatures);
    const Eigen::VectorXd predicted = point.temperatures + reduced_lu.solve(rhs);

    row.residual_vs_prediction = (next.temperatures - predicted).cwiseAbs().maxCoeff();
    row.residual_vs_target = (next.temperatures - target).cwiseAbs().maxCoeff();
    row.degenerate = row.residual_vs_prediction < kDegenerateResidualK;
    table.push_back(row);
  }
  return table;
}

PolicyIterationResult iterate_policy(const thermal::ThermalSystem& system,
                                     const thermal::OperatingPoint& start,
                                     const Eigen::VectorXd& target, double weight,
                                     const Reduction& reduction, int max_iterations,
                                     double tolerance_k) {
  PolicyIterationResult result;
  result.point = start;
  for (int iteration = 0; iteration < max_iterations; ++iteration) {
    if ((result.point.temperatures - target).cwiseAbs().maxCoeff() < tolerance_k) {
      result.converged = true;
      return result;
    }
    const auto coeffs = compute_effort_coefficients(system, result.point, target, reduction);
    const auto effort = optimal_policy(coeffs, weight);
    result.point = apply_effort(system, result.point, effort);
    result.iterations = iteration + 1;
  }
  result.converged =
      (result.point.temperatures - target).cwiseAbs().maxCoeff() < tolerance_k;
  return result;
}

} // namespace gridtherm::control
