#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "gridtherm/casefile.hpp"

namespace gridtherm::coordinator {

/// One evaluated candidate. Two-layer rows carry (target_scale, weight) and
/// the policy increments; mixed rows carry NaN there and describe the grid
/// point directly. Either way the operating point and its exact steady-state
/// peak temperature are recorded, and `cost_usd` is NaN when infeasible.
struct CandidateRow {
  double target_scale = std::numeric_limits<double>::quiet_NaN();
  double weight = std::numeric_limits<double>::quiet_NaN();
  double fan_speed_rpm = 0.0;
  double squared_current_a2 = 0.0;
  double delta_fan_rpm = 0.0;
  double delta_squared_current_a2 = 0.0;
  double max_temperature_k = std::numeric_limits<double>::quiet_NaN();
  double cost_usd = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
  std::string note;  // names the guard or constraint that rejected the candidate
};

enum class ReportKind { TwoLayer, Mixed };

struct RunReport {
  ReportKind kind = ReportKind::TwoLayer;
  std::vector<CandidateRow> rows;
  int best_index = -1;  // feasible row of minimum cost; -1 when none
  /// Relative cost spread (max-min)/mean across the weight sweep at
  /// `spread_scale` (the scaling nearest the reference); NaN for mixed runs.
  double weight_cost_spread = std::numeric_limits<double>::quiet_NaN();
  double spread_scale = std::numeric_limits<double>::quiet_NaN();
  double elapsed_seconds = 0.0;  // wall clock; never written into report files

  bool has_best() const { return best_index >= 0; }
  const CandidateRow& best() const;
};

struct ComparisonRecord {
  int two_layer_candidates = 0;
  int two_layer_feasible = 0;
  int mixed_candidates = 0;
  int mixed_feasible = 0;
  double two_layer_best_cost = std::numeric_limits<double>::quiet_NaN();
  double mixed_best_cost = std::numeric_limits<double>::quiet_NaN();
  double cost_gap = std::numeric_limits<double>::quiet_NaN();  // two-layer minus mixed
  std::string two_layer_best_at;  // "s=..., c=..." when a best exists
  std::string mixed_best_at;      // "u_f=... rpm, I=... A"
  bool nested = false;            // mixed grid covers every feasible two-layer point
  bool dominance_checked = false;
  bool dominance_holds = false;
  double two_layer_seconds = 0.0;
  double mixed_seconds = 0.0;

  /// Deterministic summary block (no timings) written to comparison.txt.
  std::string text() const;
};

/// Runs the full two-layer sweep from the case's initial operating point: for
/// each (s, c) candidate, derive the policy effort toward the scaled target,
/// re-solve the exact steady state, fix the ESS power magnitude implied by
/// the new current, and price the dispatch with the OPF. Candidates that trip
/// a policy guard or an infeasible dispatch stay in the report, marked.
RunReport run_two_layer(const CaseBundle& bundle, const SweepSpec& sweep);

/// Exhaustive mixed-formulation baseline over fan x current grid points, with
/// the exact thermal model as feasibility check (peak temperature cap).
RunReport run_mixed(const CaseBundle& bundle, const MixedSpec& spec);

/// Cost gap, candidate counts and the grid-nesting/dominance verdict.
ComparisonRecord compare(const RunReport& two_layer, const RunReport& mixed);

/// candidates.csv plus the three figure files sweep_weight.csv,
/// sweep_target.csv and cost_vs_weight.csv (rows at the reference scale /
/// reference weight).
void write_two_layer_reports(const RunReport& report, const SweepSpec& sweep,
                             const std::filesystem::path& out_dir);

/// mixed_grid.csv.
void write_mixed_report(const RunReport& report, const std::filesystem::path& out_dir);

/// comparison.txt.
void write_comparison(const ComparisonRecord& record, const std::filesystem::path& out_dir);

} // namespace gridtherm::coordinator
