#include "gridtherm/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <vector>

namespace gridtherm::network {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBalanceTolerance = 1e-7;
constexpr double kSocTolerance = 1e-9;
constexpr double kCostTolerance = 1e-9;
constexpr double kKwPerMw = 1000.0;

std::unordered_map<int, int> index_of(const std::vector<Bus>& buses) {
  std::unordered_map<int, int> map;
  map.reserve(buses.size());
  for (std::size_t i = 0; i < buses.size(); ++i) map.emplace(buses[i].id, static_cast<int>(i));
  return map;
}

int locate_ess_bus(const std::unordered_map<int, int>& ids, const EssConfig& ess) {
  const auto it = ids.find(ess.bus);
  if (it == ids.end()) {
    throw ValidationError("ess: bus " + std::to_string(ess.bus) + " is not in the grid");
  }
  return it->second;
}

} // namespace

int GridCase::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return static_cast<int>(i);
  }
  throw ValidationError("grid: unknown bus id " + std::to_string(id));
}

double GridCase::total_load_mw() const {
  double total = 0.0;
  for (const Bus& bus : buses) total += bus.p_load_mw;
  return total;
}

void GridCase::validate() const {
  if (buses.empty()) throw ValidationError("grid: no buses");
  const auto ids = index_of(buses);
  if (ids.size() != buses.size()) {
    std::set<int> seen;
    for (const Bus& bus : buses) {
      if (!seen.insert(bus.id).second) {
        throw ValidationError("grid: duplicate bus id " + std::to_string(bus.id));
      }
    }
  }
  if (ids.find(slack_bus) == ids.end()) {
    throw ValidationError("grid: missing slack bus " + std::to_string(slack_bus));
  }
  if (!(v_min_sq > 0.0) || !(v_min_sq < v_max_sq)) {
    std::ostringstream msg;
    msg << "grid: voltage bounds [" << v_min_sq << ", " << v_max_sq
        << "] must satisfy 0 < v_min^2 < v_max^2";
    throw ValidationError(msg.str());
  }
  if (horizon < 1) throw ValidationError("grid: horizon must be at least 1 step");
  if (!(dt_hours > 0.0)) throw ValidationError("grid: dt must be positive");

  std::set<std::pair<int, int>> undirected;
  for (const Line& line : lines) {
    std::ostringstream where;
    where << "line " << line.from << "-" << line.to;
    if (ids.find(line.from) == ids.end() || ids.find(line.to) == ids.end()) {
      throw ValidationError("grid: " + where.str() + " references an unknown bus");
    }
    if (line.from == line.to) {
      throw ValidationError("grid: not radial: " + where.str() + " is a self-loop");
    }
    if (line.r_pu < 0.0 || line.x_pu < 0.0) {
      std::ostringstream msg;
      msg << "grid: " << where.str() << " has negative impedance (r=" << line.r_pu
          << ", x=" << line.x_pu << ")";
      throw ValidationError(msg.str());
    }
    const auto key = std::minmax(line.from, line.to);
    if (!undirected.insert(key).second) {
      throw ValidationError("grid: not radial: duplicate " + where.str() + " forms a loop");
    }
  }
  if (lines.size() > buses.size() - 1) {
    std::ostringstream msg;
    msg << "grid: not radial: " << lines.size() << " lines over " << buses.size()
        << " buses must contain a cycle";
    throw ValidationError(msg.str());
  }

  // Breadth-first sweep from the slack over the undirected line graph.
  std::vector<std::vector<std::pair<int, int>>> adjacency(buses.size());  // (neighbor, line)
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const int a = ids.at(lines[l].from);
    const int b = ids.at(lines[l].to);
    adjacency[a].emplace_back(b, static_cast<int>(l));
    adjacency[b].emplace_back(a, static_cast<int>(l));
  }
  std::vector<char> visited(buses.size(), 0);
  std::vector<int> entered_by(buses.size(), -1);
  std::deque<int> frontier{ids.at(slack_bus)};
  visited[ids.at(slack_bus)] = 1;
  while (!frontier.empty()) {
    const int here = frontier.front();
    frontier.pop_front();
    for (const auto& [next, line] : adjacency[here]) {
      if (line == entered_by[here]) continue;
      if (visited[next]) {
        std::ostringstream msg;
        msg << "grid: not radial: cycle detected through line " << lines[line].from << "-"
            << lines[line].to;
        throw ValidationError(msg.str());
      }
      visited[next] = 1;
      entered_by[next] = line;
      frontier.push_back(next);
    }
  }
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!visited[i]) {
      std::ostringstream msg;
      msg << "grid: dangling bus " << buses[i].id << " is unreachable from slack bus "
          << slack_bus;
      throw ValidationError(msg.str());
    }
  }
}

double EssConfig::power_magnitude_kw(double squared_current) const {
  if (squared_current < 0.0) {
    throw ValidationError("ess: squared current must be non-negative");
  }
  return rated_voltage_v * parallel_strings * std::sqrt(squared_current) / kKwPerMw;
}

void EssConfig::validate() const {
  if (!(soc_min_kwh <= initial_soc_kwh && initial_soc_kwh <= soc_max_kwh &&
        soc_max_kwh <= capacity_kwh)) {
    std::ostringstream msg;
    msg << "ess: SOC ordering violated: min " << soc_min_kwh << " <= initial "
        << initial_soc_kwh << " <= max " << soc_max_kwh << " <= capacity " << capacity_kwh;
    throw ValidationError(msg.str());
  }
  if (!(eta_charge > 0.0 && eta_charge <= 1.0) || !(eta_discharge > 0.0 && eta_discharge <= 1.0)) {
    throw ValidationError("ess: efficiencies must lie in (0, 1]");
  }
  if (!(p_charge_max_kw > 0.0) || !(p_discharge_max_kw > 0.0)) {
    throw ValidationError("ess: power limits must be positive");
  }
  if (!(rated_voltage_v > 0.0) || series_modules < 1 || parallel_strings < 1) {
    throw ValidationError("ess: rating fields must be positive");
  }
}

OpfProblem assemble_opf(const GridCase& grid, const std::optional<EssConfig>& ess,
                        std::optional<double> ess_power_magnitude_kw) {
  grid.validate();
  if (ess) ess->validate();
  if (ess_power_magnitude_kw) {
    if (!ess) {
      throw ValidationError("opf: a power magnitude was supplied without an ESS");
    }
    const double magnitude = *ess_power_magnitude_kw;
    if (magnitude < 0.0) {
      throw ValidationError("opf: ESS power magnitude must be non-negative");
    }
    const double cap = std::min(ess->p_charge_max_kw, ess->p_discharge_max_kw);
    if (magnitude > cap + 1e-9) {
      std::ostringstream msg;
      msg << "opf: ESS power magnitude " << magnitude << " kW exceeds the power limit " << cap
          << " kW";
      throw ValidationError(msg.str());
    }
  }

  const int n_buses = static_cast<int>(grid.buses.size());
  const int n_lines = static_cast<int>(grid.lines.size());
  const int horizon = grid.horizon;
  const auto ids = index_of(grid.buses);
  const int slack = ids.at(grid.slack_bus);
  const int ess_bus = ess ? locate_ess_bus(ids, *ess) : -1;

  OpfLayout layout;
  layout.horizon = horizon;
  layout.n_buses = n_buses;
  layout.n_lines = n_lines;
  layout.has_ess = ess.has_value();
  layout.fixed_magnitude = ess_power_magnitude_kw.has_value();
  layout.magnitude_kw = ess_power_magnitude_kw.value_or(0.0);
  layout.p_flow = 0;
  layout.q_flow = n_lines;
  layout.v_sq = 2 * n_lines;
  layout.import_mw = 2 * n_lines + n_buses;
  layout.export_mw = layout.import_mw + 1;
  layout.q_slack = layout.import_mw + 2;
  int cursor = layout.import_mw + 3;
  if (ess) {
    layout.p_charge = cursor++;
    layout.p_discharge = cursor++;
    layout.alpha_charge = cursor++;
    layout.alpha_discharge = cursor++;
    layout.alpha_slack = cursor++;
    layout.link_charge_slack = cursor++;
    layout.link_discharge_slack = cursor++;
    layout.soc = cursor++;
  }
  layout.stride = cursor;
  layout.variables = horizon * layout.stride;

  const int rows_per_step =
      2 * n_buses + n_lines + (ess ? (layout.fixed_magnitude ? 5 : 4) : 0);

  lp::LinearProgram problem;
  problem.objective = Eigen::VectorXd::Zero(layout.variables);
  problem.lower = Eigen::VectorXd::Constant(layout.variables, -kInf);
  problem.upper = Eigen::VectorXd::Constant(layout.variables, kInf);
  problem.rhs = Eigen::VectorXd::Zero(horizon * rows_per_step);

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(horizon) * (6 * n_lines + 4 * n_buses + 16));

  const Tariffs& rates = grid.tariffs;
  const double dt = grid.dt_hours;

  for (int t = 0; t < horizon; ++t) {
    // Bounds and objective.
    for (int b = 0; b < n_buses; ++b) {
      const int var = layout.at(t, layout.v_sq + b);
      problem.lower(var) = (b == slack) ? 1.0 : grid.v_min_sq;
      problem.upper(var) = (b == slack) ? 1.0 : grid.v_max_sq;
    }
    problem.lower(layout.at(t, layout.import_mw)) = 0.0;
    problem.lower(layout.at(t, layout.export_mw)) = 0.0;
    problem.objective(layout.at(t, layout.import_mw)) = dt * rates.grid_buy;
    problem.objective(layout.at(t, layout.export_mw)) = -dt * rates.grid_sell;
    if (ess) {
      problem.lower(layout.at(t, layout.p_charge)) = 0.0;
      problem.upper(layout.at(t, layout.p_charge)) = ess->p_charge_max_kw;
      problem.lower(layout.at(t, layout.p_discharge)) = 0.0;
      problem.upper(layout.at(t, layout.p_discharge)) = ess->p_discharge_max_kw;
      for (const int offset : {layout.alpha_charge, layout.alpha_discharge, layout.alpha_slack}) {
        problem.lower(layout.at(t, offset)) = 0.0;
        problem.upper(layout.at(t, offset)) = 1.0;
      }
      problem.lower(layout.at(t, layout.link_charge_slack)) = 0.0;
      problem.upper(layout.at(t, layout.link_charge_slack)) = ess->p_charge_max_kw;
      problem.lower(layout.at(t, layout.link_discharge_slack)) = 0.0;
      problem.upper(layout.at(t, layout.link_discharge_slack)) = ess->p_discharge_max_kw;
      problem.lower(layout.at(t, layout.soc)) = ess->soc_min_kwh;
      problem.upper(layout.at(t, layout.soc)) = ess->soc_max_kwh;
      problem.objective(layout.at(t, layout.p_discharge)) = dt * rates.ess_discharge / kKwPerMw;
      problem.objective(layout.at(t, layout.p_charge)) = -dt * rates.ess_charge / kKwPerMw;
      problem.binary_indices.push_back(layout.at(t, layout.alpha_charge));
      problem.binary_indices.push_back(layout.at(t, layout.alpha_discharge));
    }

    // Rows.
    const int row0 = t * rows_per_step;
    for (int l = 0; l < n_lines; ++l) {
      const Line& line = grid.lines[l];
      const int from = ids.at(line.from);
      const int to = ids.at(line.to);
      entries.emplace_back(row0 + to, layout.at(t, layout.p_flow + l), 1.0);
      entries.emplace_back(row0 + from, layout.at(t, layout.p_flow + l), -1.0);
      entries.emplace_back(row0 + n_buses + to, layout.at(t, layout.q_flow + l), 1.0);
      entries.emplace_back(row0 + n_buses + from, layout.at(t, layout.q_flow + l), -1.0);
      // v_to = v_from - 2 (r P + x Q)
      const int drop_row = row0 + 2 * n_buses + l;
      entries.emplace_back(drop_row, layout.at(t, layout.v_sq + from), 1.0);
      entries.emplace_back(drop_row, layout.at(t, layout.v_sq + to), -1.0);
      entries.emplace_back(drop_row, layout.at(t, layout.p_flow + l), -2.0 * line.r_pu);
      entries.emplace_back(drop_row, layout.at(t, layout.q_flow + l), -2.0 * line.x_pu);
    }
    for (int b = 0; b < n_buses; ++b) {
      problem.rhs(row0 + b) = grid.buses[b].p_load_mw;
      problem.rhs(row0 + n_buses + b) = grid.buses[b].q_load_mvar;
    }
    entries.emplace_back(row0 + slack, layout.at(t, layout.import_mw), 1.0);
    entries.emplace_back(row0 + slack, layout.at(t, layout.export_mw), -1.0);
    entries.emplace_back(row0 + n_buses + slack, layout.at(t, layout.q_slack), 1.0);

    if (ess) {
      entries.emplace_back(row0 + ess_bus, layout.at(t, layout.p_discharge), 1.0 / kKwPerMw);
      entries.emplace_back(row0 + ess_bus, layout.at(t, layout.p_charge), -1.0 / kKwPerMw);

      int row = row0 + 2 * n_buses + n_lines;
      // alpha_bc + alpha_bd <= 1
      entries.emplace_back(row, layout.at(t, layout.alpha_charge), 1.0);
      entries.emplace_back(row, layout.at(t, layout.alpha_discharge), 1.0);
      entries.emplace_back(row, layout.at(t, layout.alpha_slack), 1.0);
      problem.rhs(row) = 1.0;
      ++row;
      // P_bc <= alpha_bc * Pbar_bc
      entries.emplace_back(row, layout.at(t, layout.p_charge), 1.0);
      entries.emplace_back(row, layout.at(t, layout.alpha_charge), -ess->p_charge_max_kw);
      entries.emplace_back(row, layout.at(t, layout.link_charge_slack), 1.0);
      ++row;
      // P_bd <= alpha_bd * Pbar_bd
      entries.emplace_back(row, layout.at(t, layout.p_discharge), 1.0);
      entries.emplace_back(row, layout.at(t, layout.alpha_discharge), -ess->p_discharge_max_kw);
      entries.emplace_back(row, layout.at(t, layout.link_discharge_slack), 1.0);
      ++row;
      // E_{t+1} - E_t = dt (eta_bc P_bc - P_bd / eta_bd)
      entries.emplace_back(row, layout.at(t, layout.soc), 1.0);
      entries.emplace_back(row, layout.at(t, layout.p_charge), -dt * ess->eta_charge);
      entries.emplace_back(row, layout.at(t, layout.p_discharge), dt / ess->eta_discharge);
      if (t == 0) {
        problem.rhs(row) = ess->initial_soc_kwh;
      } else {
        entries.emplace_back(row, layout.at(t - 1, layout.soc), -1.0);
      }
      ++row;
      if (layout.fixed_magnitude) {
        // P_bc + P_bd = magnitude (alpha_bc + alpha_bd): idle or exact.
        entries.emplace_back(row, layout.at(t, layout.p_charge), 1.0);
        entries.emplace_back(row, layout.at(t, layout.p_discharge), 1.0);
        entries.emplace_back(row, layout.at(t, layout.alpha_charge), -layout.magnitude_kw);
        entries.emplace_back(row, layout.at(t, layout.alpha_discharge), -layout.magnitude_kw);
      }
    }
  }

  problem.equalities.resize(horizon * rows_per_step, layout.variables);
  problem.equalities.setFromTriplets(entries.begin(), entries.end());

  OpfProblem assembled;
  assembled.lp = std::move(problem);
  assembled.layout = layout;
  return assembled;
}

DispatchSolution extract_solution(const OpfProblem& problem, const lp::SolveOutcome& outcome,
                                  const GridCase& grid, const std::optional<EssConfig>& ess) {
  if (outcome.status != lp::SolveStatus::Optimal) {
    throw ValidationError("dispatch: outcome is not optimal");
  }
  const OpfLayout& layout = problem.layout;
  if (outcome.values.size() != layout.variables) {
    throw ValidationError("dispatch: outcome does not match the assembled layout");
  }
  if (layout.has_ess != ess.has_value()) {
    throw ValidationError("dispatch: ESS presence differs between layout and config");
  }

  const auto ids = index_of(grid.buses);
  const int slack = ids.at(grid.slack_bus);
  const int ess_bus = ess ? locate_ess_bus(ids, *ess) : -1;
  const Eigen::VectorXd& x = outcome.values;

  DispatchSolution dispatch;
  dispatch.soc_initial_kwh = ess ? ess->initial_soc_kwh : 0.0;

  auto fail = [](const std::string& what) { throw InternalError("dispatch: " + what); };

  double previous_soc = dispatch.soc_initial_kwh;
  for (int t = 0; t < layout.horizon; ++t) {
    StepDispatch step;
    step.p_flow_mw.resize(layout.n_lines);
    step.q_flow_mvar.resize(layout.n_lines);
    step.v_sq.resize(layout.n_buses);
    for (int l = 0; l < layout.n_lines; ++l) {
      step.p_flow_mw(l) = x(layout.at(t, layout.p_flow + l));
      step.q_flow_mvar(l) = x(layout.at(t, layout.q_flow + l));
    }
    for (int b = 0; b < layout.n_buses; ++b) step.v_sq(b) = x(layout.at(t, layout.v_sq + b));
    step.import_mw = x(layout.at(t, layout.import_mw));
    step.export_mw = x(layout.at(t, layout.export_mw));

    if (ess) {
      step.p_charge_kw = x(layout.at(t, layout.p_charge));
      step.p_discharge_kw = x(layout.at(t, layout.p_discharge));
      const double a_bc = x(layout.at(t, layout.alpha_charge));
      const double a_bd = x(layout.at(t, layout.alpha_discharge));
      if (std::abs(a_bc - std::round(a_bc)) > lp::kIntegralityTolerance ||
          std::abs(a_bd - std::round(a_bd)) > lp::kIntegralityTolerance) {
        fail("charging/discharging binaries are not integral at step " + std::to_string(t));
      }
      step.alpha_charge = static_cast<int>(std::round(a_bc));
      step.alpha_discharge = static_cast<int>(std::round(a_bd));
      if (step.alpha_charge + step.alpha_discharge > 1) {
        fail("alpha_bc + alpha_bd <= 1 violated at step " + std::to_string(t));
      }
      if (step.p_charge_kw > step.alpha_charge * ess->p_charge_max_kw + 1e-6) {
        fail("P_bc <= alpha_bc * Pbar_bc violated at step " + std::to_string(t));
      }
      if (step.p_discharge_kw > step.alpha_discharge * ess->p_discharge_max_kw + 1e-6) {
        fail("P_bd <= alpha_bd * Pbar_bd violated at step " + std::to_string(t));
      }
      step.soc_end_kwh = x(layout.at(t, layout.soc));
      const double predicted =
          previous_soc + (step.p_charge_kw * ess->eta_charge -
                          step.p_discharge_kw / ess->eta_discharge) *
                             grid.dt_hours;
      if (std::abs(step.soc_end_kwh - predicted) > kSocTolerance) {
        fail("SOC recursion violated at step " + std::to_string(t));
      }
      previous_soc = step.soc_end_kwh;
    }

    // Nodal balances and voltage drops, recomputed from the extracted values.
    Eigen::VectorXd p_balance(layout.n_buses);
    Eigen::VectorXd q_balance(layout.n_buses);
    for (int b = 0; b < layout.n_buses; ++b) {
      p_balance(b) = -grid.buses[b].p_load_mw;
      q_balance(b) = -grid.buses[b].q_load_mvar;
    }
    for (int l = 0; l < layout.n_lines; ++l) {
      const Line& line = grid.lines[l];
      const int from = ids.at(line.from);
      const int to = ids.at(line.to);
      p_balance(to) += step.p_flow_mw(l);
      p_balance(from) -= step.p_flow_mw(l);
      q_balance(to) += step.q_flow_mvar(l);
      q_balance(from) -= step.q_flow_mvar(l);
      const double drop = step.v_sq(from) - step.v_sq(to) -
                          2.0 * (line.r_pu * step.p_flow_mw(l) + line.x_pu * step.q_flow_mvar(l));
      if (std::abs(drop) > kBalanceTolerance) {
        std::ostringstream msg;
        msg << "voltage recursion violated on line " << line.from << "-" << line.to
            << " at step " << t;
        fail(msg.str());
      }
    }
    p_balance(slack) += step.import_mw - step.export_mw;
    q_balance(slack) += x(layout.at(t, layout.q_slack));
    if (ess) {
      p_balance(ess_bus) += (step.p_discharge_kw - step.p_charge_kw) / kKwPerMw;
    }
    for (int b = 0; b < layout.n_buses; ++b) {
      if (std::abs(p_balance(b)) > kBalanceTolerance ||
          std::abs(q_balance(b)) > kBalanceTolerance) {
        std::ostringstream msg;
        msg << "nodal balance violated at bus " << grid.buses[b].id << ", step " << t;
        fail(msg.str());
      }
    }

    dispatch.grid_cost += grid.dt_hours * (grid.tariffs.grid_buy * step.import_mw -
                                           grid.tariffs.grid_sell * step.export_mw);
    if (ess) {
      dispatch.ess_cost +=
          grid.dt_hours *
          (grid.tariffs.ess_discharge * step.p_discharge_kw -
           grid.tariffs.ess_charge * step.p_charge_kw) /
          kKwPerMw;
    }
    dispatch.steps.push_back(std::move(step));
  }

  dispatch.total_cost = dispatch.grid_cost + dispatch.ess_cost;
  if (std::abs(dispatch.total_cost - outcome.objective_value) >
      kCostTolerance * (1.0 + std::abs(dispatch.total_cost))) {
    fail("cost decomposition does not match the solver objective");
  }
  return dispatch;
}

} // namespace gridtherm::network
