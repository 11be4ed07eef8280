#pragma once

#include <Eigen/Dense>

#include "gridtherm/errors.hpp"

namespace gridtherm::thermal {

/// Physical layout of one rack level: N identical modules in a straight row,
/// touching on their contact faces. The two end modules expose one extra
/// contact-sized face to the air stream.
struct RackGeometry {
  int n_modules = 10;
  double module_depth_m = 0.45;        // length along the row axis
  double contact_face_area_m2 = 0.0345; // face shared with the neighbouring module
  double side_face_area_m2 = 0.1035;    // one lateral face swept by the fan

  /// Air-swept area of module i (0-based): interior modules lose heat over
  /// both lateral faces, end modules additionally over the free contact face.
  double convection_area(int i) const {
    const bool end = (i == 0 || i == n_modules - 1);
    return 2.0 * side_face_area_m2 + (end ? contact_face_area_m2 : 0.0);
  }

  void validate() const;
};

/// Material and environment constants of the rack.
struct ThermalParams {
  double casing_conductivity = 205.0;    // k_b, W/(m K)
  double base_convection = 5.0;          // h0, W/(m^2 K)
  double fan_sensitivity = 0.01814;      // lambda, per rpm
  double reference_fan_speed = 0.0;      // u_f0, rpm
  double ambient_k = 308.0;              // T_a
  double reference_resistance = 0.1;     // R_ref per module, ohm
  double resistance_temp_coeff = 0.004;  // alpha_T, per K
  double reference_temperature_k = 298.15;

  /// h(u_f) = h0 (1 + lambda (u_f - u_f0)), the fan-boosted film coefficient.
  double convection_coeff(double fan_speed) const {
    return base_convection * (1.0 + fan_sensitivity * (fan_speed - reference_fan_speed));
  }
  /// Affine resistance split R(T) = R0 + alpha T.
  double resistance_intercept() const {
    return reference_resistance * (1.0 - resistance_temp_coeff * reference_temperature_k);
  }
  double resistance_slope() const { return resistance_temp_coeff * reference_resistance; }

  void validate() const;
};

/// R(T) = R_ref (1 + alpha_T (T - T_ref)), evaluated per module.
double module_resistance(const ThermalParams& params, double temperature_k);

/// A control setting plus the temperature profile it produced.
struct OperatingPoint {
  double fan_speed = 0.0;        // rpm
  double squared_current = 0.0;  // A^2
  Eigen::VectorXd temperatures;  // K, one entry per module
};

/// The assembled steady-state heat balance. Each of the N rows balances one
/// module; the augmented column N (0-based) multiplies the ambient
/// temperature, so the coefficient matrix at fan speed u_f is
///   B(u_f) = B0 + K u_f,  B(u_f) [T; T_a] = C,
/// with C the per-module generated heat in watts. Every row of B(u_f) sums to
/// zero: a uniform profile at ambient with no generation balances exactly.
class ThermalSystem {
public:
  ThermalSystem(RackGeometry geometry, ThermalParams params);

  const RackGeometry& geometry() const { return geometry_; }
  const ThermalParams& params() const { return params_; }
  int size() const { return geometry_.n_modules; }

  /// Fan-independent part B0, N x (N+1).
  const Eigen::MatrixXd& fan_independent() const { return fan_independent_; }
  /// Fan sensitivity K, N x (N+1): h0*lambda times the convection pattern.
  const Eigen::MatrixXd& fan_coupling() const { return fan_coupling_; }
  /// Inter-module conduction conductance k_b' = k_b A1 / l, W/K.
  double conduction_coupling() const { return conduction_coupling_; }

  /// B(u_f) = B0 + K u_f.
  Eigen::MatrixXd coefficient_matrix(double fan_speed) const;

  /// The generation-shifted balance matrix
  ///   M = B0 + K u_f - alpha u_I [I | 0],
  /// still over the N+1 augmented columns; moving the temperature-dependent
  /// part of the resistive heating to the left-hand side makes M [T; T_a]
  /// equal to the constant source u_I R0.
  Eigen::MatrixXd balance_matrix(double fan_speed, double squared_current) const;

private:
  RackGeometry geometry_;
  ThermalParams params_;
  Eigen::MatrixXd fan_independent_;
  Eigen::MatrixXd fan_coupling_;
  double conduction_coupling_ = 0.0;
};

/// Validates inputs and assembles B0 and K for the given rack.
ThermalSystem assemble_system(const RackGeometry& geometry, const ThermalParams& params);

/// Solves the reduced N x N system for the steady temperature profile at the
/// given fan speed and squared module current. Throws InfeasibleError when the
/// resistive feedback alpha*u_I erodes the diagonal dominance of the balance
/// matrix (thermal runaway; the steady-state model is invalid there), and
/// InternalError if the post-solve nodal residual exceeds 1e-9 W.
Eigen::VectorXd solve_steady_state(const ThermalSystem& system, double fan_speed,
                                   double squared_current);

/// Per-module generated-minus-removed heat, in watts, at an arbitrary
/// operating point. Zero exactly at the steady state.
Eigen::VectorXd balance_residual(const ThermalSystem& system, const OperatingPoint& point);

/// Tolerance on the nodal balance residual accepted from solve_steady_state.
inline constexpr double kResidualToleranceW = 1e-9;

} // namespace gridtherm::thermal
