#include "gridtherm/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <utility>

namespace gridtherm::lp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDualTolerance = 1e-9;
constexpr long kDegeneratePivotLimit = 50;
constexpr long kRefactorInterval = 64;

enum class Resting { AtLower, AtUpper, Free };

struct SimplexResult {
  SolveStatus status = SolveStatus::Infeasible;
  Eigen::VectorXd values;  // structural variables only
  double objective = 0.0;
  long iterations = 0;
};

/// Bounded-variable primal simplex over  A x = b, lower <= x <= upper, with m
/// artificial columns appended for phase one. The basis inverse is held
/// explicitly and product-form updated, with a periodic refactorization that
/// also re-derives the basic values from the nonbasic ones.
class BoundedSimplex {
public:
  BoundedSimplex(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                 const LpOptions& options)
      : m_(static_cast<int>(b.size())),
        n_(static_cast<int>(c.size())),
        total_(n_ + m_),
        b_(b),
        cost_struct_(c),
        options_(options) {
    columns_.resize(m_, total_);
    columns_.leftCols(n_) = a;
    columns_.rightCols(m_).setZero();

    lower_.resize(total_);
    upper_.resize(total_);
    lower_.head(n_) = lower;
    upper_.head(n_) = upper;

    x_ = Eigen::VectorXd::Zero(total_);
    resting_.assign(total_, Resting::Free);
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(lower_(j))) {
        resting_[j] = Resting::AtLower;
        x_(j) = lower_(j);
      } else if (std::isfinite(upper_(j))) {
        resting_[j] = Resting::AtUpper;
        x_(j) = upper_(j);
      }
    }

    // One artificial per row, signed so that it starts feasible at the
    // residual magnitude left by the resting structural variables.
    const Eigen::VectorXd residual = b_ - columns_.leftCols(n_) * x_.head(n_);
    basis_.resize(m_);
    position_.assign(total_, -1);
    binv_ = Eigen::MatrixXd::Zero(m_, m_);
    for (int i = 0; i < m_; ++i) {
      const double sign = residual(i) < 0.0 ? -1.0 : 1.0;
      columns_(i, n_ + i) = sign;
      lower_(n_ + i) = 0.0;
      upper_(n_ + i) = kInf;
      x_(n_ + i) = sign * residual(i);
      basis_[i] = n_ + i;
      position_[n_ + i] = i;
      binv_(i, i) = sign;
    }
  }

  SimplexResult run() {
    SimplexResult result;

    // Phase one: minimize the artificial mass.
    Eigen::VectorXd phase_cost = Eigen::VectorXd::Zero(total_);
    phase_cost.tail(m_).setOnes();
    if (run_phase(phase_cost, /*trace=*/false) == SolveStatus::Unbounded) {
      throw InternalError("simplex: phase one reported unbounded");
    }
    double artificial_mass = 0.0;
    for (int j = n_; j < total_; ++j) artificial_mass += std::max(x_(j), 0.0);
    if (artificial_mass > kRowTolerance) {
      result.status = SolveStatus::Infeasible;
      result.objective = std::numeric_limits<double>::quiet_NaN();
      result.iterations = iterations_;
      return result;
    }
    drive_out_artificials();
    for (int j = n_; j < total_; ++j) {
      lower_(j) = 0.0;
      upper_(j) = 0.0;
      if (position_[j] < 0) x_(j) = 0.0;
    }

    // Phase two: the real objective, artificials pinned at zero.
    phase_cost.setZero();
    phase_cost.head(n_) = cost_struct_;
    const SolveStatus status = run_phase(phase_cost, options_.objective_trace != nullptr);
    result.iterations = iterations_;
    if (status == SolveStatus::Unbounded) {
      result.status = SolveStatus::Unbounded;
      result.objective = -kInf;
      return result;
    }

    refactorize();
    polish_and_check();
    result.status = SolveStatus::Optimal;
    result.values = x_.head(n_);
    result.objective = cost_struct_.dot(x_.head(n_));
    return result;
  }

private:
  SolveStatus run_phase(const Eigen::VectorXd& cost, bool trace) {
    degenerate_streak_ = 0;
    bland_ = false;
    while (true) {
      if (iterations_ >= options_.iteration_limit) {
        std::ostringstream msg;
        msg << "simplex: iteration limit " << options_.iteration_limit << " exhausted";
        throw InternalError(msg.str());
      }

      // Pricing.
      Eigen::VectorXd basic_cost(m_);
      for (int i = 0; i < m_; ++i) basic_cost(i) = cost(basis_[i]);
      const Eigen::VectorXd y = binv_.transpose() * basic_cost;

      int entering = -1;
      double entering_direction = 0.0;
      double best_violation = kDualTolerance;
      for (int j = 0; j < total_; ++j) {
        if (position_[j] >= 0) continue;                          // basic
        if (upper_(j) - lower_(j) <= 0.0) continue;               // fixed
        const double reduced = cost(j) - columns_.col(j).dot(y);
        double direction = 0.0;
        switch (resting_[j]) {
          case Resting::AtLower:
            if (reduced < -kDualTolerance) direction = 1.0;
            break;
          case Resting::AtUpper:
            if (reduced > kDualTolerance) direction = -1.0;
            break;
          case Resting::Free:
            if (std::abs(reduced) > kDualTolerance) direction = reduced < 0.0 ? 1.0 : -1.0;
            break;
        }
        if (direction == 0.0) continue;
        if (bland_) {
          entering = j;
          entering_direction = direction;
          break;
        }
        if (std::abs(reduced) > best_violation) {
          best_violation = std::abs(reduced);
          entering = j;
          entering_direction = direction;
        }
      }
      if (entering < 0) return SolveStatus::Optimal;

      const Eigen::VectorXd w = binv_ * columns_.col(entering);

      // Ratio test: the entering variable moves entering_direction * t, each
      // basic variable i moves -entering_direction * w(i) * t.
      const double flip_step =
          (std::isfinite(lower_(entering)) && std::isfinite(upper_(entering)))
              ? upper_(entering) - lower_(entering)
              : kInf;
      double best_step = kInf;
      int leaving_row = -1;
      bool leaving_to_upper = false;
      for (int i = 0; i < m_; ++i) {
        const int var = basis_[i];
        const double rate = -entering_direction * w(i);
        double step;
        bool to_upper;
        if (rate > kPivotTolerance) {
          if (!std::isfinite(upper_(var))) continue;
          step = (upper_(var) - x_(var)) / rate;
          to_upper = true;
        } else if (rate < -kPivotTolerance) {
          if (!std::isfinite(lower_(var))) continue;
          step = (lower_(var) - x_(var)) / rate;
          to_upper = false;
        } else {
          continue;
        }
        if (step < 0.0) step = 0.0;
        bool take = false;
        if (leaving_row < 0 || step < best_step - 1e-12) {
          take = true;
        } else if (step <= best_step + 1e-12) {
          if (bland_) {
            take = var < basis_[leaving_row];
          } else {
            const double held = std::abs(w(leaving_row));
            take = std::abs(w(i)) > held ||
                   (std::abs(w(i)) == held && var < basis_[leaving_row]);
          }
        }
        if (take) {
          best_step = step;
          leaving_row = i;
          leaving_to_upper = to_upper;
        }
      }

      if (leaving_row < 0 && !std::isfinite(flip_step)) return SolveStatus::Unbounded;

      if (flip_step <= best_step) {
        // Bound flip: no basis change.
        for (int i = 0; i < m_; ++i) {
          x_(basis_[i]) += -entering_direction * w(i) * flip_step;
        }
        x_(entering) = entering_direction > 0.0 ? upper_(entering) : lower_(entering);
        resting_[entering] =
            entering_direction > 0.0 ? Resting::AtUpper : Resting::AtLower;
        note_step(flip_step);
      } else {
        const double step = best_step;
        for (int i = 0; i < m_; ++i) {
          if (i == leaving_row) continue;
          x_(basis_[i]) += -entering_direction * w(i) * step;
        }
        const int leaving = basis_[leaving_row];
        x_(entering) += entering_direction * step;
        x_(leaving) = leaving_to_upper ? upper_(leaving) : lower_(leaving);
        resting_[leaving] = leaving_to_upper ? Resting::AtUpper : Resting::AtLower;
        position_[leaving] = -1;
        position_[entering] = leaving_row;
        basis_[leaving_row] = entering;
        update_inverse(w, leaving_row);
        note_step(step);
      }
      ++iterations_;
      if (++updates_since_refactor_ >= kRefactorInterval) refactorize();
      if (trace && options_.objective_trace != nullptr) {
        options_.objective_trace->push_back(cost.dot(x_));
      }
    }
  }

  void note_step(double step) {
    if (step <= kPivotTolerance) {
      if (++degenerate_streak_ >= kDegeneratePivotLimit) bland_ = true;
    } else {
      degenerate_streak_ = 0;
    }
  }

  /// Product-form update of the explicit inverse after column `row` of the
  /// basis is replaced; w = binv * entering column.
  void update_inverse(const Eigen::VectorXd& w, int row) {
    const double pivot = w(row);
    if (std::abs(pivot) <= kPivotTolerance) {
      refactorize();
      return;
    }
    binv_.row(row) /= pivot;
    for (int i = 0; i < m_; ++i) {
      if (i == row || w(i) == 0.0) continue;
      binv_.row(i) -= w(i) * binv_.row(row);
    }
  }

  void refactorize() {
    if (m_ > 0) {
      Eigen::MatrixXd basis_matrix(m_, m_);
      for (int i = 0; i < m_; ++i) basis_matrix.col(i) = columns_.col(basis_[i]);
      binv_ = Eigen::PartialPivLU<Eigen::MatrixXd>(basis_matrix).inverse();

      Eigen::VectorXd residual = b_;
      for (int j = 0; j < total_; ++j) {
        if (position_[j] >= 0 || x_(j) == 0.0) continue;
        residual -= columns_.col(j) * x_(j);
      }
      const Eigen::VectorXd basic_values = binv_ * residual;
      for (int i = 0; i < m_; ++i) x_(basis_[i]) = basic_values(i);
    }
    updates_since_refactor_ = 0;
  }

  /// Swap zero-valued artificials out of the basis where a usable structural
  /// pivot exists; rows with none are redundant and keep their artificial
  /// pinned at zero.
  void drive_out_artificials() {
    for (int row = 0; row < m_; ++row) {
      if (basis_[row] < n_) continue;
      const Eigen::RowVectorXd tableau_row = binv_.row(row) * columns_.leftCols(n_);
      int best = -1;
      double best_pivot = 1e-8;
      for (int j = 0; j < n_; ++j) {
        if (position_[j] >= 0) continue;
        if (std::abs(tableau_row(j)) > best_pivot) {
          best_pivot = std::abs(tableau_row(j));
          best = j;
        }
      }
      if (best < 0) {
        x_(basis_[row]) = 0.0;
        continue;
      }
      const int artificial = basis_[row];
      position_[artificial] = -1;
      x_(artificial) = 0.0;
      resting_[artificial] = Resting::AtLower;
      position_[best] = row;
      basis_[row] = best;
      const Eigen::VectorXd w = binv_ * columns_.col(best);
      update_inverse(w, row);
    }
  }

  void polish_and_check() {
    for (int j = 0; j < total_; ++j) {
      if (x_(j) < lower_(j)) {
        if (lower_(j) - x_(j) > kFeasibilityTolerance * (1.0 + std::abs(lower_(j)))) {
          throw InternalError("simplex: optimal point violates a lower bound");
        }
        x_(j) = lower_(j);
      } else if (x_(j) > upper_(j)) {
        if (x_(j) - upper_(j) > kFeasibilityTolerance * (1.0 + std::abs(upper_(j)))) {
          throw InternalError("simplex: optimal point violates an upper bound");
        }
        x_(j) = upper_(j);
      }
    }
    const Eigen::VectorXd residual = b_ - columns_ * x_;
    if (m_ > 0 && residual.cwiseAbs().maxCoeff() > kRowTolerance) {
      throw InternalError("simplex: optimal point violates an equality row");
    }
  }

  int m_;
  int n_;
  int total_;
  Eigen::MatrixXd columns_;
  Eigen::VectorXd b_;
  Eigen::VectorXd cost_struct_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  Eigen::VectorXd x_;
  std::vector<Resting> resting_;
  std::vector<int> basis_;
  std::vector<int> position_;
  Eigen::MatrixXd binv_;
  LpOptions options_;
  long iterations_ = 0;
  long degenerate_streak_ = 0;
  long updates_since_refactor_ = 0;
  bool bland_ = false;
};

Eigen::MatrixXd densify(const LinearProgram& problem) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(problem.rows(), problem.variables());
  for (int row = 0; row < problem.equalities.outerSize(); ++row) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(problem.equalities, row);
         it; ++it) {
      a(it.row(), it.col()) = it.value();
    }
  }
  return a;
}

SimplexResult run_simplex(const Eigen::MatrixXd& a, const LinearProgram& problem,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                          const LpOptions& options) {
  return BoundedSimplex(a, problem.rhs, problem.objective, lower, upper, options).run();
}

} // namespace

void LinearProgram::set_equalities(const Eigen::MatrixXd& coefficients,
                                   const Eigen::VectorXd& right_hand) {
  equalities = coefficients.sparseView();
  rhs = right_hand;
}

void LinearProgram::validate() const {
  const int n = variables();
  if (lower.size() != n || upper.size() != n) {
    std::ostringstream msg;
    msg << "linear program: " << n << " objective coefficients but " << lower.size() << "/"
        << upper.size() << " bounds";
    throw ValidationError(msg.str());
  }
  if (rows() > 0) {
    if (equalities.rows() != rows() || equalities.cols() != n) {
      std::ostringstream msg;
      msg << "linear program: equality matrix is " << equalities.rows() << "x"
          << equalities.cols() << ", expected " << rows() << "x" << n;
      throw ValidationError(msg.str());
    }
  }
  for (int j = 0; j < n; ++j) {
    if (!(lower(j) <= upper(j))) {
      std::ostringstream msg;
      msg << "linear program: variable " << j << " has empty bound interval [" << lower(j)
          << ", " << upper(j) << "]";
      throw ValidationError(msg.str());
    }
    if (lower(j) == kInf || upper(j) == -kInf) {
      std::ostringstream msg;
      msg << "linear program: variable " << j << " has an unattainable bound";
      throw ValidationError(msg.str());
    }
  }
  for (const int idx : binary_indices) {
    if (idx < 0 || idx >= n) {
      std::ostringstream msg;
      msg << "linear program: binary index " << idx << " out of range [0, " << n << ")";
      throw ValidationError(msg.str());
    }
    if (lower(idx) < 0.0 || upper(idx) > 1.0) {
      std::ostringstream msg;
      msg << "linear program: binary variable " << idx << " has bounds [" << lower(idx) << ", "
          << upper(idx) << "] outside [0, 1]";
      throw ValidationError(msg.str());
    }
  }
}

SolveOutcome solve_lp(const LinearProgram& problem, const LpOptions& options) {
  problem.validate();
  if (!problem.binary_indices.empty()) {
    throw ValidationError("solve_lp: problem carries binary restrictions; use solve_milp");
  }
  const Eigen::MatrixXd a = densify(problem);
  const SimplexResult result = run_simplex(a, problem, problem.lower, problem.upper, options);
  SolveOutcome outcome;
  outcome.status = result.status;
  outcome.values = result.values;
  outcome.objective_value = result.objective;
  outcome.iterations = result.iterations;
  return outcome;
}

SolveOutcome solve_milp(const LinearProgram& problem, const MilpOptions& options) {
  problem.validate();
  if (problem.binary_indices.empty()) return solve_lp(problem);

  std::vector<int> binaries = problem.binary_indices;
  std::sort(binaries.begin(), binaries.end());
  binaries.erase(std::unique(binaries.begin(), binaries.end()), binaries.end());

  const Eigen::MatrixXd a = densify(problem);
  const LpOptions lp_options;

  struct Node {
    double bound;
    long id;
    std::vector<std::pair<int, double>> fixes;  // (variable, value in {0, 1})
  };
  struct Worse {
    bool operator()(const Node& a, const Node& b) const {
      if (a.bound != b.bound) return a.bound > b.bound;  // min-heap on the bound
      return a.id > b.id;                                // then first-created first
    }
  };
  std::priority_queue<Node, std::vector<Node>, Worse> open;
  open.push({-kInf, 0, {}});
  long next_id = 1;

  SolveOutcome incumbent;
  incumbent.status = SolveStatus::Infeasible;
  incumbent.objective_value = std::numeric_limits<double>::quiet_NaN();
  bool have_incumbent = false;
  double incumbent_objective = kInf;
  long nodes = 0;
  long total_iterations = 0;

  while (!open.empty()) {
    const Node node = open.top();
    open.pop();
    if (have_incumbent && node.bound >= incumbent_objective - kFeasibilityTolerance) continue;
    if (++nodes > options.node_limit) {
      std::ostringstream msg;
      msg << "milp: node limit " << options.node_limit
          << " exhausted before optimality was proven";
      throw Error(msg.str());
    }

    Eigen::VectorXd lower = problem.lower;
    Eigen::VectorXd upper = problem.upper;
    for (const auto& [var, value] : node.fixes) {
      lower(var) = value;
      upper(var) = value;
    }
    const SimplexResult relaxed = run_simplex(a, problem, lower, upper, lp_options);
    total_iterations += relaxed.iterations;

    if (relaxed.status == SolveStatus::Infeasible) continue;
    if (relaxed.status == SolveStatus::Unbounded) {
      // Binaries are bounded, so no recession direction touches them: if a
      // fully fixed assignment is unbounded, so is the integer problem. Keep
      // branching until an assignment is complete or everything is pruned.
      if (node.fixes.size() == binaries.size()) {
        SolveOutcome outcome;
        outcome.status = SolveStatus::Unbounded;
        outcome.objective_value = -kInf;
        outcome.iterations = total_iterations;
        return outcome;
      }
      int branch = -1;
      for (const int candidate : binaries) {
        const bool fixed = std::any_of(node.fixes.begin(), node.fixes.end(),
                                       [&](const auto& f) { return f.first == candidate; });
        if (!fixed) {
          branch = candidate;
          break;
        }
      }
      for (const double value : {0.0, 1.0}) {
        Node child{-kInf, next_id++, node.fixes};
        child.fixes.emplace_back(branch, value);
        open.push(std::move(child));
      }
      continue;
    }

    if (have_incumbent && relaxed.objective >= incumbent_objective - kFeasibilityTolerance) {
      continue;
    }

    int branch = -1;
    double most_fractional = kIntegralityTolerance;
    for (const int idx : binaries) {
      const double value = relaxed.values(idx);
      const double distance = std::abs(value - std::round(value));
      if (distance > most_fractional) {
        most_fractional = distance;
        branch = idx;
      }
    }

    if (branch < 0) {
      // Integral: a new incumbent.
      have_incumbent = true;
      incumbent_objective = relaxed.objective;
      incumbent.status = SolveStatus::Optimal;
      incumbent.values = relaxed.values;
      incumbent.objective_value = relaxed.objective;
      if (options.incumbent_trace != nullptr) {
        options.incumbent_trace->push_back(relaxed.objective);
      }
      continue;
    }

    for (const double value : {0.0, 1.0}) {
      Node child{relaxed.objective, next_id++, node.fixes};
      child.fixes.emplace_back(branch, value);
      open.push(std::move(child));
    }
  }

  incumbent.iterations = total_iterations;
  return incumbent;  // optimal incumbent, or an infeasible verdict
}

} // namespace gridtherm::lp
