#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridtherm/errors.hpp"
#include "gridtherm/lp.hpp"

namespace gridtherm::network {

/// $/MWh-equivalent rates; grid rates are seen by the operator, ESS rates are
/// the operator's cost for discharged energy and credit while charging.
struct Tariffs {
  double grid_buy = 30.0;       // f_e+
  double grid_sell = 26.0;      // f_e-
  double ess_discharge = 32.0;  // f_ess+
  double ess_charge = 26.0;     // f_ess-
};

struct Bus {
  int id = 0;
  double p_load_mw = 0.0;
  double q_load_mvar = 0.0;
};

/// Directed as listed: positive flow runs from `from` to `to`.
struct Line {
  int from = 0;
  int to = 0;
  double r_pu = 0.0;
  double x_pu = 0.0;
};

/// A radial feeder rooted at the slack (utility) bus, with per-unit line
/// impedances, MW/MVAr loads, squared-voltage limits and tariff rates.
struct GridCase {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  int slack_bus = 1;
  double v_min_sq = 0.81;
  double v_max_sq = 1.21;
  Tariffs tariffs;
  int horizon = 1;
  double dt_hours = 1.0 / 12.0;

  int bus_index(int id) const;  // position in `buses`; throws on unknown id
  double total_load_mw() const;

  /// Structural checks: unique bus ids, slack present, endpoints known,
  /// non-negative impedances, and the line graph a tree spanning every bus.
  void validate() const;
};

struct EssConfig {
  int bus = 6;
  double capacity_kwh = 66.304;
  double soc_min_kwh = 5.0;
  double soc_max_kwh = 66.304;
  double initial_soc_kwh = 40.0;
  double eta_charge = 0.95;
  double eta_discharge = 0.95;
  double p_charge_max_kw = 60.0;
  double p_discharge_max_kw = 60.0;
  double rated_voltage_v = 259.0;  // series string voltage
  int series_modules = 10;
  int parallel_strings = 4;

  /// Terminal power magnitude implied by a squared per-module current:
  /// V_ess * strings * sqrt(u_I) / 1000, in kW.
  double power_magnitude_kw(double squared_current) const;

  void validate() const;
};

/// Index bookkeeping for one assembled OPF. All offsets are absolute column
/// positions in the LinearProgram; per-step blocks repeat with `stride`.
struct OpfLayout {
  int horizon = 1;
  int n_buses = 0;
  int n_lines = 0;
  bool has_ess = false;
  bool fixed_magnitude = false;
  double magnitude_kw = 0.0;
  int stride = 0;

  // Offsets within one step block.
  int p_flow = 0;      // n_lines entries, MW
  int q_flow = 0;      // n_lines entries, MVAr
  int v_sq = 0;        // n_buses entries, squared p.u.
  int import_mw = 0;
  int export_mw = 0;
  int q_slack = 0;     // reactive support at the slack bus, MVAr
  int p_charge = 0;    // kW (ESS only)
  int p_discharge = 0; // kW
  int alpha_charge = 0;
  int alpha_discharge = 0;
  int alpha_slack = 0;
  int link_charge_slack = 0;
  int link_discharge_slack = 0;
  int soc = 0;         // end-of-step stored energy, kWh

  int variables = 0;

  int at(int step, int offset) const { return step * stride + offset; }
};

struct OpfProblem {
  lp::LinearProgram lp;
  OpfLayout layout;
};

struct StepDispatch {
  Eigen::VectorXd p_flow_mw;
  Eigen::VectorXd q_flow_mvar;
  Eigen::VectorXd v_sq;
  double import_mw = 0.0;
  double export_mw = 0.0;
  double p_charge_kw = 0.0;
  double p_discharge_kw = 0.0;
  int alpha_charge = 0;
  int alpha_discharge = 0;
  double soc_end_kwh = 0.0;
};

struct DispatchSolution {
  std::vector<StepDispatch> steps;
  double soc_initial_kwh = 0.0;
  double grid_cost = 0.0;  // $ over the horizon
  double ess_cost = 0.0;
  double total_cost = 0.0;
};

/// Builds the horizon-long LinDistFlow dispatch problem: nodal P/Q balance,
/// per-line voltage drops, slack voltage fixed at 1, grid exchange split into
/// non-negative import/export, and (with an ESS) charge/discharge power gated
/// by its binary, the exclusivity row, and the SOC recursion. When
/// `ess_power_magnitude_kw` is given, each step additionally enforces
/// P_bc + P_bd = magnitude * (alpha_bc + alpha_bd), so the terminal power is
/// either idle or exactly the commanded magnitude.
OpfProblem assemble_opf(const GridCase& grid, const std::optional<EssConfig>& ess,
                        std::optional<double> ess_power_magnitude_kw = std::nullopt);

/// Reads an optimal outcome back into physical quantities and re-verifies
/// every dispatch invariant (balances, voltage recursion, SOC recursion,
/// exclusivity, cost decomposition) before returning.
DispatchSolution extract_solution(const OpfProblem& problem, const lp::SolveOutcome& outcome,
                                  const GridCase& grid, const std::optional<EssConfig>& ess);

} // namespace gridtherm::network
