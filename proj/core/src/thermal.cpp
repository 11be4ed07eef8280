#include "gridtherm/thermal.hpp"

#include <cmath>
#include <sstream>

namespace gridtherm::thermal {

void RackGeometry::validate() const {
  if (n_modules < 2) {
    throw ValidationError("rack geometry: n_modules must be at least 2, got " +
                          std::to_string(n_modules));
  }
  if (!(module_depth_m > 0.0)) {
    throw ValidationError("rack geometry: module_depth_m must be positive");
  }
  if (!(contact_face_area_m2 > 0.0) || !(side_face_area_m2 > 0.0)) {
    throw ValidationError("rack geometry: face areas must be positive");
  }
}

void ThermalParams::validate() const {
  if (!(casing_conductivity > 0.0)) {
    throw ValidationError("thermal params: casing_conductivity must be positive");
  }
  if (!(base_convection > 0.0)) {
    throw ValidationError("thermal params: base_convection must be positive");
  }
  if (fan_sensitivity < 0.0) {
    throw ValidationError("thermal params: fan_sensitivity must be non-negative");
  }
  if (!(ambient_k > 0.0)) {
    throw ValidationError("thermal params: ambient_k must be positive");
  }
  if (!(reference_resistance > 0.0)) {
    throw ValidationError("thermal params: reference_resistance must be positive");
  }
  if (!std::isfinite(resistance_intercept()) || !std::isfinite(resistance_slope())) {
    throw ValidationError("thermal params: derived resistance coefficients not finite");
  }
}

double module_resistance(const ThermalParams& params, double temperature_k) {
  return params.resistance_intercept() + params.resistance_slope() * temperature_k;
}

ThermalSystem::ThermalSystem(RackGeometry geometry, ThermalParams params)
    : geometry_(geometry), params_(params) {
  geometry_.validate();
  params_.validate();

  const int n = geometry_.n_modules;
  conduction_coupling_ =
      params_.casing_conductivity * geometry_.contact_face_area_m2 / geometry_.module_depth_m;

  fan_independent_ = Eigen::MatrixXd::Zero(n, n + 1);
  fan_coupling_ = Eigen::MatrixXd::Zero(n, n + 1);

  // h(u_f) splits into a constant part and a slope in u_f; the constant part
  // lands in B0 together with conduction, the slope becomes K.
  const double h_const =
      params_.base_convection * (1.0 - params_.fan_sensitivity * params_.reference_fan_speed);
  const double h_slope = params_.base_convection * params_.fan_sensitivity;

  for (int i = 0; i < n; ++i) {
    const double area = geometry_.convection_area(i);
    fan_independent_(i, i) += h_const * area;
    fan_independent_(i, n) -= h_const * area;
    fan_coupling_(i, i) += h_slope * area;
    fan_coupling_(i, n) -= h_slope * area;
    if (i > 0) {
      fan_independent_(i, i) += conduction_coupling_;
      fan_independent_(i, i - 1) -= conduction_coupling_;
    }
    if (i < n - 1) {
      fan_independent_(i, i) += conduction_coupling_;
      fan_independent_(i, i + 1) -= conduction_coupling_;
    }
  }
}

Eigen::MatrixXd ThermalSystem::coefficient_matrix(double fan_speed) const {
  return fan_independent_ + fan_speed * fan_coupling_;
}

Eigen::MatrixXd ThermalSystem::balance_matrix(double fan_speed, double squared_current) const {
  Eigen::MatrixXd m = coefficient_matrix(fan_speed);
  const double alpha = params_.resistance_slope();
  m.topLeftCorner(size(), size()).diagonal().array() -= alpha * squared_current;
  return m;
}

ThermalSystem assemble_system(const RackGeometry& geometry, const ThermalParams& params) {
  return ThermalSystem(geometry, params);
}

Eigen::VectorXd solve_steady_state(const ThermalSystem& system, double fan_speed,
                                   double squared_current) {
  const auto& params = system.params();
  const int n = system.size();

  if (squared_current < 0.0) {
    throw ValidationError("steady state: squared current must be non-negative");
  }
  const double h = params.convection_coeff(fan_speed);
  if (!(h > 0.0)) {
    std::ostringstream msg;
    msg << "steady state: convection coefficient h(" << fan_speed << " rpm) = " << h
        << " W/m^2K is not positive";
    throw ValidationError(msg.str());
  }

  // Row i of the reduced matrix keeps diagonal dominance with margin
  // h*A_conv,i - alpha*u_I; a non-positive margin means resistive heating
  // outruns every heat path and no physical steady state exists.
  const double alpha = params.resistance_slope();
  for (int i = 0; i < n; ++i) {
    const double margin = h * system.geometry().convection_area(i) - alpha * squared_current;
    if (!(margin > 0.0)) {
      std::ostringstream msg;
      msg << "thermal runaway / model invalid: resistive feedback alpha*u_I = "
          << alpha * squared_current << " W/K overwhelms convection " << h
          << " * " << system.geometry().convection_area(i) << " W/K at module " << i + 1;
      throw InfeasibleError(msg.str());
    }
  }

  const Eigen::MatrixXd m = system.balance_matrix(fan_speed, squared_current);
  const Eigen::MatrixXd reduced = m.leftCols(n);
  // Move the ambient column to the right-hand side: M_N T = u_I R0 - m_amb T_a.
  const Eigen::VectorXd rhs =
      Eigen::VectorXd::Constant(n, squared_current * params.resistance_intercept()) -
      m.col(n) * params.ambient_k;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(reduced);
  Eigen::VectorXd temperatures = lu.solve(rhs);

  OperatingPoint point{fan_speed, squared_current, temperatures};
  const double residual = balance_residual(system, point).cwiseAbs().maxCoeff();
  if (!(residual < kResidualToleranceW)) {
    std::ostringstream msg;
    msg << "steady state: nodal balance residual " << residual << " W exceeds "
        << kResidualToleranceW << " W";
    throw InternalError(msg.str());
  }
  return temperatures;
}

Eigen::VectorXd balance_residual(const ThermalSystem& system, const OperatingPoint& point) {
  const auto& params = system.params();
  const int n = system.size();
  if (point.temperatures.size() != n) {
    throw ValidationError("balance residual: temperature vector has wrong length");
  }

  Eigen::VectorXd augmented(n + 1);
  augmented.head(n) = point.temperatures;
  augmented(n) = params.ambient_k;

  Eigen::VectorXd generation(n);
  for (int i = 0; i < n; ++i) {
    generation(i) = point.squared_current * module_resistance(params, point.temperatures(i));
  }
  return generation - system.coefficient_matrix(point.fan_speed) * augmented;
}

} // namespace gridtherm::thermal
