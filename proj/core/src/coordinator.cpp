#include "gridtherm/coordinator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gridtherm/csv.hpp"

namespace gridtherm::coordinator {

namespace {

constexpr double kDominanceSlackUsd = 1e-6;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Fixed-magnitude dispatch cost of one operating point.
double dispatch_cost(const CaseBundle& bundle, double squared_current) {
  std::optional<double> magnitude;
  if (bundle.ess) magnitude = bundle.ess->power_magnitude_kw(squared_current);
  const network::OpfProblem problem = network::assemble_opf(bundle.grid, bundle.ess, magnitude);
  const lp::SolveOutcome outcome = lp::solve_milp(problem.lp);
  if (outcome.status == lp::SolveStatus::Infeasible) {
    throw InfeasibleError("dispatch infeasible at the commanded ESS magnitude");
  }
  if (outcome.status == lp::SolveStatus::Unbounded) {
    throw InternalError("dispatch unbounded; the tariff setup admits infinite profit");
  }
  const network::DispatchSolution dispatch =
      network::extract_solution(problem, outcome, bundle.grid, bundle.ess);
  return dispatch.total_cost;
}

void select_best(RunReport& report) {
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const CandidateRow& row = report.rows[i];
    if (!row.feasible) continue;
    if (report.best_index < 0 || row.cost_usd < report.rows[report.best_index].cost_usd) {
      report.best_index = static_cast<int>(i);
    }
  }
}

double nearest(const std::vector<double>& values, double wanted) {
  double best = values.front();
  for (const double value : values) {
    if (std::abs(value - wanted) < std::abs(best - wanted)) best = value;
  }
  return best;
}

void compute_spread(RunReport& report, double reference_scale) {
  report.spread_scale = reference_scale;
  double low = std::numeric_limits<double>::infinity();
  double high = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  int count = 0;
  for (const CandidateRow& row : report.rows) {
    if (!row.feasible || row.target_scale != reference_scale) continue;
    low = std::min(low, row.cost_usd);
    high = std::max(high, row.cost_usd);
    sum += row.cost_usd;
    ++count;
  }
  if (count == 0) return;
  const double mean = sum / count;
  report.weight_cost_spread = mean == 0.0 ? 0.0 : (high - low) / mean;
}

std::string yes_no(bool value) { return value ? "yes" : "no"; }

} // namespace

const CandidateRow& RunReport::best() const {
  if (best_index < 0) throw InfeasibleError("report: no feasible candidate");
  return rows[static_cast<std::size_t>(best_index)];
}

RunReport run_two_layer(const CaseBundle& bundle, const SweepSpec& sweep) {
  const auto start = std::chrono::steady_clock::now();
  sweep.validate();

  const thermal::ThermalSystem system = thermal::assemble_system(bundle.geometry, bundle.params);
  thermal::OperatingPoint initial;
  initial.fan_speed = bundle.initial_fan_rpm;
  initial.squared_current = bundle.initial_current_a * bundle.initial_current_a;
  initial.temperatures =
      thermal::solve_steady_state(system, initial.fan_speed, initial.squared_current);
  const double ambient = bundle.params.ambient_k;

  RunReport report;
  report.kind = ReportKind::TwoLayer;
  report.rows.reserve(sweep.target_scalings.size() * sweep.weights.size());

  for (const double scale : sweep.target_scalings) {
    Eigen::VectorXd target;
    if (sweep.raw_targets) {
      target = scale * initial.temperatures;
    } else {
      target = (ambient + scale * (initial.temperatures.array() - ambient)).matrix();
    }
    for (const double weight : sweep.weights) {
      CandidateRow row;
      row.target_scale = scale;
      row.weight = weight;
      try {
        const control::EffortCoefficients coeffs =
            control::compute_effort_coefficients(system, initial, target, sweep.reduction);
        const control::ControlEffort effort = control::optimal_policy(coeffs, weight);
        const thermal::OperatingPoint applied = control::apply_effort(system, initial, effort);
        row.delta_fan_rpm = effort.delta_fan;
        row.delta_squared_current_a2 = effort.delta_squared_current;
        row.fan_speed_rpm = applied.fan_speed;
        row.squared_current_a2 = applied.squared_current;
        row.max_temperature_k = applied.temperatures.maxCoeff();
        row.cost_usd = dispatch_cost(bundle, applied.squared_current);
        row.feasible = true;
      } catch (const InfeasibleError& error) {
        row.note = error.what();
      } catch (const ValidationError& error) {
        row.note = error.what();
      }
      report.rows.push_back(std::move(row));
    }
  }

  select_best(report);
  compute_spread(report, nearest(sweep.target_scalings, sweep.reference_scale));
  report.elapsed_seconds = seconds_since(start);
  return report;
}

RunReport run_mixed(const CaseBundle& bundle, const MixedSpec& spec) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate(bundle.params.ambient_k);

  const thermal::ThermalSystem system = thermal::assemble_system(bundle.geometry, bundle.params);
  const double initial_squared = bundle.initial_current_a * bundle.initial_current_a;

  RunReport report;
  report.kind = ReportKind::Mixed;
  report.rows.reserve(spec.fan_grid_rpm.size() * spec.current_grid_a.size());

  for (const double fan : spec.fan_grid_rpm) {
    for (const double current : spec.current_grid_a) {
      CandidateRow row;
      row.fan_speed_rpm = fan;
      row.squared_current_a2 = current * current;
      row.delta_fan_rpm = fan - bundle.initial_fan_rpm;
      row.delta_squared_current_a2 = row.squared_current_a2 - initial_squared;
      try {
        const Eigen::VectorXd temperatures =
            thermal::solve_steady_state(system, fan, row.squared_current_a2);
        row.max_temperature_k = temperatures.maxCoeff();
        if (row.max_temperature_k > spec.temp_max_k) {
          std::ostringstream note;
          note << "peak temperature " << row.max_temperature_k << " K exceeds cap "
               << spec.temp_max_k << " K";
          row.note = note.str();
        } else {
          row.cost_usd = dispatch_cost(bundle, row.squared_current_a2);
          row.feasible = true;
        }
      } catch (const InfeasibleError& error) {
        row.note = error.what();
      } catch (const ValidationError& error) {
        row.note = error.what();
      }
      report.rows.push_back(std::move(row));
    }
  }

  select_best(report);
  report.elapsed_seconds = seconds_since(start);
  return report;
}

ComparisonRecord compare(const RunReport& two_layer, const RunReport& mixed) {
  if (two_layer.rows.empty() || mixed.rows.empty()) {
    throw ValidationError("compare: both reports must contain candidates");
  }

  ComparisonRecord record;
  record.two_layer_candidates = static_cast<int>(two_layer.rows.size());
  record.mixed_candidates = static_cast<int>(mixed.rows.size());
  for (const CandidateRow& row : two_layer.rows) record.two_layer_feasible += row.feasible;
  for (const CandidateRow& row : mixed.rows) record.mixed_feasible += row.feasible;
  record.two_layer_seconds = two_layer.elapsed_seconds;
  record.mixed_seconds = mixed.elapsed_seconds;

  if (two_layer.has_best()) {
    const CandidateRow& best = two_layer.best();
    record.two_layer_best_cost = best.cost_usd;
    record.two_layer_best_at = "s=" + csv::format_double(best.target_scale) +
                               ", c=" + csv::format_double(best.weight);
  }
  if (mixed.has_best()) {
    const CandidateRow& best = mixed.best();
    record.mixed_best_cost = best.cost_usd;
    record.mixed_best_at = "u_f=" + csv::format_double(best.fan_speed_rpm) + " rpm, I=" +
                           csv::format_double(std::sqrt(best.squared_current_a2)) + " A";
  }
  record.cost_gap = record.two_layer_best_cost - record.mixed_best_cost;

  // The mixed grid "covers" the two-layer run when every feasible two-layer
  // operating point also appears as a mixed candidate.
  auto matches = [](double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
  };
  record.nested = true;
  for (const CandidateRow& row : two_layer.rows) {
    if (!row.feasible) continue;
    bool found = false;
    for (const CandidateRow& candidate : mixed.rows) {
      if (matches(candidate.fan_speed_rpm, row.fan_speed_rpm) &&
          matches(candidate.squared_current_a2, row.squared_current_a2)) {
        found = true;
        break;
      }
    }
    if (!found) {
      record.nested = false;
      break;
    }
  }

  if (record.nested && two_layer.has_best() && mixed.has_best()) {
    record.dominance_checked = true;
    record.dominance_holds =
        record.mixed_best_cost <= record.two_layer_best_cost + kDominanceSlackUsd;
  }
  return record;
}

std::string ComparisonRecord::text() const {
  std::ostringstream out;
  out << "two-layer: " << two_layer_candidates << " candidates, " << two_layer_feasible
      << " feasible";
  if (two_layer_best_at.empty()) {
    out << ", no feasible best\n";
  } else {
    out << ", best cost " << csv::format_double(two_layer_best_cost) << " $ at "
        << two_layer_best_at << "\n";
  }
  out << "mixed: " << mixed_candidates << " candidates, " << mixed_feasible << " feasible";
  if (mixed_best_at.empty()) {
    out << ", no feasible best\n";
  } else {
    out << ", best cost " << csv::format_double(mixed_best_cost) << " $ at " << mixed_best_at
        << "\n";
  }
  out << "cost gap (two-layer - mixed): " << csv::format_double(cost_gap) << " $\n";
  out << "grids nested: " << yes_no(nested) << "\n";
  out << "dominance (mixed best <= two-layer best + 1e-6 $): ";
  if (!dominance_checked) {
    out << "not asserted\n";
  } else {
    out << (dominance_holds ? "holds" : "violated") << "\n";
  }
  return out.str();
}

namespace {

std::vector<std::string> candidate_cells(const CandidateRow& row) {
  return {csv::format_double(row.target_scale),
          csv::format_double(row.weight),
          csv::format_double(row.fan_speed_rpm),
          csv::format_double(row.squared_current_a2),
          csv::format_double(row.delta_fan_rpm),
          csv::format_double(row.delta_squared_current_a2),
          csv::format_double(row.max_temperature_k),
          csv::format_double(row.cost_usd),
          row.feasible ? "1" : "0",
          row.note};
}

} // namespace

void write_two_layer_reports(const RunReport& report, const SweepSpec& sweep,
                             const std::filesystem::path& out_dir) {
  csv::Writer candidates({"target_scale", "weight", "fan_rpm", "squared_current_a2",
                          "delta_fan_rpm", "delta_squared_current_a2", "max_temperature_k",
                          "cost_usd", "feasible", "note"});
  for (const CandidateRow& row : report.rows) candidates.row(candidate_cells(row));
  candidates.save(out_dir / "candidates.csv");

  const double weight_scale = nearest(sweep.target_scalings, sweep.reference_scale);
  const double target_weight = nearest(sweep.weights, sweep.reference_weight);

  csv::Writer by_weight({"weight", "delta_fan_rpm", "delta_squared_current_a2",
                         "max_temperature_k", "cost_usd", "feasible"});
  csv::Writer cost_by_weight({"weight", "cost_usd"});
  for (const CandidateRow& row : report.rows) {
    if (row.target_scale != weight_scale) continue;
    by_weight.row({csv::format_double(row.weight), csv::format_double(row.delta_fan_rpm),
                   csv::format_double(row.delta_squared_current_a2),
                   csv::format_double(row.max_temperature_k), csv::format_double(row.cost_usd),
                   row.feasible ? "1" : "0"});
    cost_by_weight.row({csv::format_double(row.weight), csv::format_double(row.cost_usd)});
  }
  by_weight.save(out_dir / "sweep_weight.csv");
  cost_by_weight.save(out_dir / "cost_vs_weight.csv");

  csv::Writer by_target({"target_scale", "delta_fan_rpm", "delta_squared_current_a2",
                         "max_temperature_k", "cost_usd", "feasible"});
  for (const CandidateRow& row : report.rows) {
    if (row.weight != target_weight) continue;
    by_target.row({csv::format_double(row.target_scale), csv::format_double(row.delta_fan_rpm),
                   csv::format_double(row.delta_squared_current_a2),
                   csv::format_double(row.max_temperature_k), csv::format_double(row.cost_usd),
                   row.feasible ? "1" : "0"});
  }
  by_target.save(out_dir / "sweep_target.csv");
}

void write_mixed_report(const RunReport& report, const std::filesystem::path& out_dir) {
  csv::Writer grid({"fan_rpm", "current_a", "max_temperature_k", "cost_usd", "feasible",
                    "note"});
  for (const CandidateRow& row : report.rows) {
    grid.row({csv::format_double(row.fan_speed_rpm),
              csv::format_double(std::sqrt(row.squared_current_a2)),
              csv::format_double(row.max_temperature_k), csv::format_double(row.cost_usd),
              row.feasible ? "1" : "0", row.note});
  }
  grid.save(out_dir / "mixed_grid.csv");
}

void write_comparison(const ComparisonRecord& record, const std::filesystem::path& out_dir) {
  std::ofstream stream(out_dir / "comparison.txt", std::ios::binary);
  if (!stream) {
    throw Error("report: cannot open " + (out_dir / "comparison.txt").string() +
                " for writing");
  }
  const std::string text = record.text();
  stream.write(text.data(), static_cast<std::streamsize>(text.size()));
}

} // namespace gridtherm::coordinator
