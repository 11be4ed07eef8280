#pragma once

#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "gridtherm/errors.hpp"

namespace gridtherm::lp {

/// minimize objective . x  subject to  equalities x = rhs,  lower <= x <= upper,
/// and x_j integral in {0,1} for every j in binary_indices. Infinite bounds are
/// allowed; inequality rows are expected to arrive with their slack column
/// already appended.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::SparseMatrix<double, Eigen::RowMajor> equalities;
  Eigen::VectorXd rhs;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<int> binary_indices;

  int variables() const { return static_cast<int>(objective.size()); }
  int rows() const { return static_cast<int>(rhs.size()); }

  /// Convenience for small hand-built problems and tests.
  void set_equalities(const Eigen::MatrixXd& coefficients, const Eigen::VectorXd& right_hand);

  /// Dimension and bound consistency; binaries must have bounds within [0, 1].
  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded };

struct SolveOutcome {
  SolveStatus status = SolveStatus::Infeasible;
  Eigen::VectorXd values;        // empty unless Optimal
  double objective_value = 0.0;  // NaN when Infeasible, -inf when Unbounded
  long iterations = 0;           // simplex pivots (summed over nodes for a MILP)
};

/// Solver tolerances; the defaults are used everywhere in the toolkit.
inline constexpr double kPivotTolerance = 1e-10;
inline constexpr double kFeasibilityTolerance = 1e-9;
inline constexpr double kRowTolerance = 1e-7;
inline constexpr double kIntegralityTolerance = 1e-6;

struct LpOptions {
  long iteration_limit = 50000;
  /// When set, the phase-two objective value is appended after every pivot;
  /// the sequence is non-increasing.
  std::vector<double>* objective_trace = nullptr;
};

struct MilpOptions {
  long node_limit = 100000;
  /// When set, each strictly improving incumbent objective is appended; the
  /// sequence is non-increasing and ends at the reported optimum.
  std::vector<double>* incumbent_trace = nullptr;
};

/// Bounded-variable primal simplex (dense revised form, phase one/phase two,
/// Dantzig pricing with an automatic switch to Bland's rule after 50
/// degenerate pivots). The problem must carry no binary restrictions.
/// Deterministic: identical inputs yield identical outcomes.
SolveOutcome solve_lp(const LinearProgram& problem, const LpOptions& options = {});

/// Best-first branch-and-bound over the binary variables, bounding each node
/// by its LP relaxation. Branches on the most fractional binary, lowest index
/// first; the search is exact and deterministic. Exhausting the node limit
/// throws (never returns a silently suboptimal incumbent).
SolveOutcome solve_milp(const LinearProgram& problem, const MilpOptions& options = {});

} // namespace gridtherm::lp
