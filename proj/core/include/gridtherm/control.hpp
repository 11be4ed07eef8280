#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridtherm/thermal.hpp"

namespace gridtherm::control {

/// How the N per-module effort-coefficient rows collapse to one scalar pair.
enum class ReductionKind {
  SingleNode,    // use one module's row verbatim (default: the hottest)
  WeightedMean,  // weighted average of the per-node coefficients
  LeastSquares,  // least-squares fit of the N rows onto a single scalar line
};

struct Reduction {
  ReductionKind kind = ReductionKind::WeightedMean;
  int node = -1;                 // SingleNode only; -1 selects the hottest module
  Eigen::VectorXd weights;       // WeightedMean only; empty means uniform

  static Reduction single_node(int node = -1);
  static Reduction weighted_mean(Eigen::VectorXd weights = {});
  static Reduction least_squares();

  /// Accepts "mean", "ls", "hottest", or "node:<1-based index>".
  static Reduction parse(std::string_view text);
  std::string name() const;
};

/// Per-node offsets a_i and slopes b_i of the effort relation
///   delta_u_f = a_i + b_i * delta_u_I,
/// plus their reduction to the scalar pair (offset, slope) the policy uses.
struct EffortCoefficients {
  Eigen::VectorXd per_node_offset;  // a
  Eigen::VectorXd per_node_slope;   // b
  double offset = 0.0;              // reduced a
  double slope = 0.0;               // reduced b
  Reduction reduction;
};

/// A fan-speed / squared-current increment pair with the weight that produced it.
struct ControlEffort {
  double delta_fan = 0.0;              // rpm
  double delta_squared_current = 0.0;  // A^2
  double weight = 0.0;                 // c
};

/// Margin above ambient a module needs before the fan has any leverage on it.
inline constexpr double kAmbientGuardK = 1e-6;

/// Derives the per-node effort coefficients for steering the profile at
/// `point` toward `target`, then reduces them. Requires every node used by
/// the reduction to sit measurably above ambient and the fan sensitivity to
/// be nonzero; otherwise the fan has no handle on the profile and an
/// InfeasibleError ("no convective leverage") is thrown.
EffortCoefficients compute_effort_coefficients(const thermal::ThermalSystem& system,
                                               const thermal::OperatingPoint& point,
                                               const Eigen::VectorXd& target,
                                               const Reduction& reduction);

/// Closed-form minimizer of (delta_u_f)^2 + c (delta_u_I)^2 subject to
/// delta_u_f = a + b delta_u_I:
///   delta_u_I = -a b / (b^2 + c),  delta_u_f = a + b delta_u_I.
ControlEffort optimal_policy(const EffortCoefficients& coeffs, double weight);

/// Applies an effort to an operating point and re-solves the steady state.
/// Rejects increments that leave the physical envelope (negative squared
/// current, non-positive convection), naming the violated bound.
thermal::OperatingPoint apply_effort(const thermal::ThermalSystem& system,
                                     const thermal::OperatingPoint& point,
                                     const ControlEffort& effort);

/// One row of the linearization study at a given step scale epsilon.
struct LinearizationRow {
  double epsilon = 0.0;
  /// ||T_new - T_lin||inf where T_lin is the linear model's prediction for
  /// the applied effort; isolates the dropped second-order term.
  double residual_vs_prediction = 0.0;
  /// ||T_new - T*||inf; additionally carries the scalar-reduction mismatch,
  /// which is first order in epsilon whenever the N rows disagree.
  double residual_vs_target = 0.0;
  /// Set when residual_vs_prediction is below 10x the solver tolerance and
  /// the ratio test is meaningless at this epsilon.
  bool degenerate = false;
};

/// Walks targets T* = T + eps*direction for each requested epsilon, applies
/// the policy effort, and reports both residuals per row. Successive
/// residual_vs_prediction ratios near 1/4 certify that the linearization
/// drops only second-order terms.
std::vector<LinearizationRow> linearization_order(const thermal::ThermalSystem& system,
                                                  const thermal::OperatingPoint& point,
                                                  const Eigen::VectorXd& direction,
                                                  std::span<const double> epsilons,
                                                  double weight = 0.25,
                                                  const Reduction& reduction = {});

/// Residual level below which a linearization row is flagged degenerate.
inline constexpr double kDegenerateResidualK = 1e-8;

struct PolicyIterationResult {
  thermal::OperatingPoint point;
  int iterations = 0;
  bool converged = false;
};

/// Optional loop re-deriving and applying the one-shot policy until the
/// profile lands within `tolerance_k` of the target (max-norm) or the
/// iteration cap is hit.
PolicyIterationResult iterate_policy(const thermal::ThermalSystem& system,
                                     const thermal::OperatingPoint& start,
                                     const Eigen::VectorXd& target, double weight,
                                     const Reduction& reduction = {}, int max_iterations = 20,
                                     double tolerance_k = 0.01);

} // namespace gridtherm::control
