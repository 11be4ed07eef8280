#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <system_error>
#include <vector>

#include "CLI11.hpp"

#include "gridtherm/casefile.hpp"
#include "gridtherm/coordinator.hpp"
#include "gridtherm/csv.hpp"
#include "gridtherm/errors.hpp"
#include "gridtherm/lp.hpp"
#include "gridtherm/network.hpp"

namespace gridtherm::cli {
namespace {

namespace fs = std::filesystem;

using csv::format_double;

/// Bound storage for every flag any subcommand accepts; presence is queried
/// through the owning subcommand's count() so unset values stay inert.
struct Overrides {
  std::string case_path;
  std::string out_dir = ".";
  double fan = 0.0;
  double current = 0.0;
  double target_scale = 0.0;
  double weight = 0.0;
  std::string reduction;
  int horizon = 1;
};

/// True when the flag exists on this subcommand and the user supplied it.
bool given(const CLI::App& sub, const std::string& name) {
  const CLI::Option* option = sub.get_option_no_throw(name);
  return option != nullptr && option->count() > 0;
}

fs::path ensure_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error("cannot create output directory '" + out + "': " + ec.message());
  }
  return dir;
}

std::string seconds_text(double seconds) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.3f", seconds);
  return buffer;
}

CaseBundle load_bundle(const Overrides& o, const CLI::App& sub) {
  CaseBundle bundle = casefile::load_case(o.case_path);
  if (given(sub, "--fan")) {
    bundle.initial_fan_rpm = o.fan;
  }
  if (given(sub, "--current")) {
    bundle.initial_current_a = o.current;
  }
  if (given(sub, "--reduction")) {
    bundle.reduction = control::Reduction::parse(o.reduction);
    bundle.sweep.reduction = bundle.reduction;
  }
  if (given(sub, "--horizon")) {
    bundle.grid.horizon = o.horizon;
  }
  bundle.validate();
  return bundle;
}

thermal::OperatingPoint initial_point(const CaseBundle& bundle,
                                      const thermal::ThermalSystem& system) {
  thermal::OperatingPoint point;
  point.fan_speed = bundle.initial_fan_rpm;
  point.squared_current = bundle.initial_current_a * bundle.initial_current_a;
  point.temperatures =
      thermal::solve_steady_state(system, point.fan_speed, point.squared_current);
  return point;
}

Eigen::VectorXd scaled_target(const CaseBundle& bundle, const Eigen::VectorXd& temperatures,
                              double scale) {
  if (bundle.sweep.raw_targets) {
    return scale * temperatures;
  }
  const double ambient = bundle.params.ambient_k;
  return ((temperatures.array() - ambient) * scale + ambient).matrix();
}

int count_feasible(const coordinator::RunReport& report) {
  int feasible = 0;
  for (const auto& row : report.rows) {
    feasible += row.feasible ? 1 : 0;
  }
  return feasible;
}

int cmd_thermal_solve(const Overrides& o, const CLI::App& sub) {
  const CaseBundle bundle = load_bundle(o, sub);
  const auto system = thermal::assemble_system(bundle.geometry, bundle.params);
  const auto point = initial_point(bundle, system);

  const fs::path out = ensure_out_dir(o.out_dir);
  csv::Writer writer({"module", "temperature_k"});
  for (int i = 0; i < point.temperatures.size(); ++i) {
    writer.row({static_cast<double>(i + 1), point.temperatures(i)});
  }
  writer.save(out / "temperatures.csv");

  std::cout << "steady state at u_f=" << format_double(point.fan_speed)
            << " rpm, I=" << format_double(bundle.initial_current_a) << " A: "
            << point.temperatures.size() << " modules, T in ["
            << format_double(point.temperatures.minCoeff()) << ", "
            << format_double(point.temperatures.maxCoeff()) << "] K (ambient "
            << format_double(bundle.params.ambient_k) << " K)\n";
  std::cout << "wrote " << (out / "temperatures.csv").string() << "\n";
  return 0;
}

int cmd_policy(const Overrides& o, const CLI::App& sub) {
  const CaseBundle bundle = load_bundle(o, sub);
  const auto system = thermal::assemble_system(bundle.geometry, bundle.params);
  const auto point = initial_point(bundle, system);

  const double scale =
      given(sub, "--target-scale") ? o.target_scale : bundle.sweep.reference_scale;
  const double weight = given(sub, "--weight") ? o.weight : bundle.default_weight;
  if (weight <= 0.0) {
    throw ValidationError("policy: weight must be positive");
  }
  const Eigen::VectorXd target = scaled_target(bundle, point.temperatures, scale);

  const auto coeffs =
      control::compute_effort_coefficients(system, point, target, bundle.reduction);
  const auto effort = control::optimal_policy(coeffs, weight);
  const auto applied = control::apply_effort(system, point, effort);

  const fs::path out = ensure_out_dir(o.out_dir);
  csv::Writer policy({"target_scale", "weight", "reduction", "offset_rpm",
                      "slope_rpm_per_a2", "delta_fan_rpm", "delta_squared_current_a2",
                      "fan_rpm", "squared_current_a2", "max_temperature_k"});
  policy.row(std::vector<std::string>{
      format_double(scale), format_double(weight), bundle.reduction.name(),
      format_double(coeffs.offset), format_double(coeffs.slope),
      format_double(effort.delta_fan), format_double(effort.delta_squared_current),
      format_double(applied.fan_speed), format_double(applied.squared_current),
      format_double(applied.temperatures.maxCoeff())});
  policy.save(out / "policy.csv");

  csv::Writer profile({"module", "initial_k", "target_k", "achieved_k"});
  for (int i = 0; i < point.temperatures.size(); ++i) {
    profile.row({static_cast<double>(i + 1), point.temperatures(i), target(i),
                 applied.temperatures(i)});
  }
  profile.save(out / "temperatures.csv");

  std::cout << "policy (" << bundle.reduction.name() << ", s=" << format_double(scale)
            << ", c=" << format_double(weight) << "):\n";
  std::cout << "  delta_u_f = " << format_double(effort.delta_fan)
            << " rpm  -> u_f = " << format_double(applied.fan_speed) << " rpm\n";
  std::cout << "  delta_u_I = " << format_double(effort.delta_squared_current)
            << " A^2 -> u_I = " << format_double(applied.squared_current)
            << " A^2 (I = " << format_double(std::sqrt(applied.squared_current)) << " A)\n";
  std::cout << "  peak temperature " << format_double(point.temperatures.maxCoeff())
            << " K -> " << format_double(applied.temperatures.maxCoeff())
            << " K (target peak " << format_double(target.maxCoeff()) << " K)\n";
  std::cout << "wrote " << (out / "policy.csv").string() << " and "
            << (out / "temperatures.csv").string() << "\n";
  return 0;
}

int cmd_opf(const Overrides& o, const CLI::App& sub) {
  const CaseBundle bundle = load_bundle(o, sub);

  std::optional<double> magnitude;
  if (given(sub, "--current")) {
    if (!bundle.ess.has_value()) {
      throw ValidationError(
          "opf: --current maps the module current to a storage power magnitude, "
          "but the case has no [ess] section");
    }
    magnitude = bundle.ess->power_magnitude_kw(bundle.initial_current_a *
                                               bundle.initial_current_a);
  }

  const auto problem = network::assemble_opf(bundle.grid, bundle.ess, magnitude);
  const auto outcome = lp::solve_milp(problem.lp);
  if (outcome.status == lp::SolveStatus::Infeasible) {
    throw InfeasibleError("opf: no dispatch satisfies the network constraints");
  }
  if (outcome.status == lp::SolveStatus::Unbounded) {
    throw InternalError("opf: dispatch problem is unbounded");
  }
  const auto dispatch = network::extract_solution(problem, outcome, bundle.grid, bundle.ess);

  const fs::path out = ensure_out_dir(o.out_dir);
  csv::Writer steps({"step", "import_mw", "export_mw", "p_charge_kw", "p_discharge_kw",
                     "alpha_charge", "alpha_discharge", "soc_end_kwh"});
  for (std::size_t t = 0; t < dispatch.steps.size(); ++t) {
    const auto& step = dispatch.steps[t];
    steps.row({static_cast<double>(t + 1), step.import_mw, step.export_mw,
               step.p_charge_kw, step.p_discharge_kw,
               static_cast<double>(step.alpha_charge),
               static_cast<double>(step.alpha_discharge), step.soc_end_kwh});
  }
  steps.save(out / "dispatch.csv");

  csv::Writer voltages({"step", "bus", "v_sq"});
  csv::Writer flows({"step", "from", "to", "p_mw", "q_mvar"});
  for (std::size_t t = 0; t < dispatch.steps.size(); ++t) {
    const auto& step = dispatch.steps[t];
    for (std::size_t b = 0; b < bundle.grid.buses.size(); ++b) {
      voltages.row({static_cast<double>(t + 1),
                    static_cast<double>(bundle.grid.buses[b].id), step.v_sq(b)});
    }
    for (std::size_t l = 0; l < bundle.grid.lines.size(); ++l) {
      flows.row({static_cast<double>(t + 1),
                 static_cast<double>(bundle.grid.lines[l].from),
                 static_cast<double>(bundle.grid.lines[l].to), step.p_flow_mw(l),
                 step.q_flow_mvar(l)});
    }
  }
  voltages.save(out / "voltages.csv");
  flows.save(out / "flows.csv");

  std::cout << "dispatch over " << dispatch.steps.size() << " step(s), dt = "
            << format_double(bundle.grid.dt_hours) << " h";
  if (magnitude.has_value()) {
    std::cout << ", storage magnitude fixed at " << format_double(*magnitude) << " kW";
  }
  std::cout << "\n";
  std::cout << "total cost " << format_double(dispatch.total_cost) << " $ (grid "
            << format_double(dispatch.grid_cost) << " $, storage "
            << format_double(dispatch.ess_cost) << " $)\n";
  std::cout << "wrote dispatch.csv, voltages.csv, flows.csv in " << out.string() << "\n";
  return 0;
}

int cmd_two_layer(const Overrides& o, const CLI::App& sub) {
  const CaseBundle bundle = load_bundle(o, sub);
  SweepSpec sweep = bundle.sweep;
  if (given(sub, "--target-scale")) {
    sweep.target_scalings = {o.target_scale};
    sweep.reference_scale = o.target_scale;
  }
  if (given(sub, "--weight")) {
    sweep.weights = {o.weight};
    sweep.reference_weight = o.weight;
  }

  const auto report = coordinator::run_two_layer(bundle, sweep);
  const fs::path out = ensure_out_dir(o.out_dir);
  coordinator::write_two_layer_reports(report, sweep, out);

  std::cout << "two-layer sweep: " << report.rows.size() << " candidates, "
            << count_feasible(report) << " feasible\n";
  if (report.has_best()) {
    const auto& best = report.best();
    std::cout << "best: s=" << format_double(best.target_scale) << ", c="
              << format_double(best.weight) << " -> u_f="
              << format_double(best.fan_speed_rpm) << " rpm, u_I="
              << format_double(best.squared_current_a2) << " A^2, cost "
              << format_double(best.cost_usd) << " $\n";
    if (std::isfinite(report.weight_cost_spread)) {
      std::cout << "relative cost spread across weights at s="
                << format_double(report.spread_scale) << ": "
                << format_double(report.weight_cost_spread) << "\n";
    }
  }
  std::cout << "elapsed: " << seconds_text(report.elapsed_seconds) << " s\n";
  std::cout << "wrote candidates.csv, sweep_weight.csv, sweep_target.csv, "
               "cost_vs_weight.csv in "
            << out.string() << "\n";
  if (!report.has_best()) {
    std::cerr << "two-layer: no feasible candidate in the sweep\n";
    return 2;
  }
  return 0;
}

int cmd_mixed(const Overrides& o, const CLI::App& sub) {
  const CaseBundle bundle = load_bundle(o, sub);
  const auto report = coordinator::run_mixed(bundle, bundle.mixed);
  const fs::path out = ensure_out_dir(o.out_dir);
  coordinator::write_mixed_report(report, out);

  std::cout << "mixed grid search: " << report.rows.size() << " candidates, "
            << count_feasible(report) << " feasible (cap "
            << format_double(bundle.mixed.temp_max_k) << " K)\n";
  if (report.has_best()) {
    const auto& best = report.best();
    std::cout << "best: u_f=" << format_double(best.fan_speed_rpm) << " rpm, I="
              << format_double(std::sqrt(best.squared_current_a2)) << " A -> cost "
              << format_double(best.cost_usd) << " $\n";
  }
  std::cout << "elapsed: " << seconds_text(report.elapsed_seconds) << " s\n";
  std::cout << "wrote " << (out / "mixed_grid.csv").string() << "\n";
  if (!report.has_best()) {
    std::cerr << "mixed: every grid point is infeasible\n";
    return 2;
  }
  return 0;
}

int cmd_compare(const Overrides& o, const CLI::App& sub) {
  const CaseBundle bundle = load_bundle(o, sub);
  const auto two_layer = coordinator::run_two_layer(bundle, bundle.sweep);
  const auto mixed = coordinator::run_mixed(bundle, bundle.mixed);
  const auto record = coordinator::compare(two_layer, mixed);

  const fs::path out = ensure_out_dir(o.out_dir);
  coordinator::write_two_layer_reports(two_layer, bundle.sweep, out);
  coordinator::write_mixed_report(mixed, out);
  coordinator::write_comparison(record, out);

  std::cout << record.text();
  std::cout << "two-layer wall clock: " << seconds_text(record.two_layer_seconds)
            << " s, mixed wall clock: " << seconds_text(record.mixed_seconds) << " s\n";
  std::cout << "wrote comparison.txt and all sweep reports in " << out.string() << "\n";
  return 0;
}

int dispatch_command(int argc, const char* const* argv) {
  CLI::App app{"gridtherm: rack thermal control and radial-feeder dispatch toolkit"};
  app.require_subcommand(1);

  Overrides o;
  const auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--case", o.case_path,
                    "case file with the feeder, storage, rack and search sections")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "directory for the report files")
        ->capture_default_str();
  };
  const auto add_operating_point = [&o](CLI::App* sub) {
    sub->add_option("--fan", o.fan, "fan speed override, rpm");
    sub->add_option("--current", o.current, "module current override, A");
  };

  CLI::App* thermal_cmd = app.add_subcommand(
      "thermal-solve", "solve the steady module temperatures at one operating point");
  add_common(thermal_cmd);
  add_operating_point(thermal_cmd);

  CLI::App* policy_cmd = app.add_subcommand(
      "policy", "derive and apply the closed-form control increment toward a scaled target");
  add_common(policy_cmd);
  add_operating_point(policy_cmd);
  policy_cmd->add_option("--target-scale", o.target_scale,
                         "target scaling s of the excess over ambient");
  policy_cmd->add_option("--weight", o.weight, "effort weight c on the current increment");
  policy_cmd->add_option("--reduction", o.reduction,
                         "coefficient reduction: mean | ls | hottest | node:<k>");

  CLI::App* opf_cmd = app.add_subcommand(
      "opf", "price one feeder dispatch (storage schedule is free unless --current is given)");
  add_common(opf_cmd);
  opf_cmd->add_option("--current", o.current,
                      "fix the storage power magnitude implied by this module current, A");
  opf_cmd->add_option("--horizon", o.horizon, "number of dispatch steps")
      ->check(CLI::PositiveNumber);

  CLI::App* two_layer_cmd = app.add_subcommand(
      "two-layer", "sweep target scalings and effort weights, pricing every candidate");
  add_common(two_layer_cmd);
  two_layer_cmd->add_option("--target-scale", o.target_scale,
                            "replace the sweep's scalings with this single value");
  two_layer_cmd->add_option("--weight", o.weight,
                            "replace the sweep's weights with this single value");
  two_layer_cmd->add_option("--reduction", o.reduction,
                            "coefficient reduction: mean | ls | hottest | node:<k>");
  two_layer_cmd->add_option("--horizon", o.horizon, "number of dispatch steps")
      ->check(CLI::PositiveNumber);

  CLI::App* mixed_cmd = app.add_subcommand(
      "mixed", "exhaustive fan x current grid baseline under the exact thermal cap");
  add_common(mixed_cmd);
  mixed_cmd->add_option("--horizon", o.horizon, "number of dispatch steps")
      ->check(CLI::PositiveNumber);

  CLI::App* compare_cmd = app.add_subcommand(
      "compare", "run both searches and report the cost gap and dominance check");
  add_common(compare_cmd);
  compare_cmd->add_option("--reduction", o.reduction,
                          "coefficient reduction: mean | ls | hottest | node:<k>");
  compare_cmd->add_option("--horizon", o.horizon, "number of dispatch steps")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (thermal_cmd->parsed()) return cmd_thermal_solve(o, *thermal_cmd);
    if (policy_cmd->parsed()) return cmd_policy(o, *policy_cmd);
    if (opf_cmd->parsed()) return cmd_opf(o, *opf_cmd);
    if (two_layer_cmd->parsed()) return cmd_two_layer(o, *two_layer_cmd);
    if (mixed_cmd->parsed()) return cmd_mixed(o, *mixed_cmd);
    if (compare_cmd->parsed()) return cmd_compare(o, *compare_cmd);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

} // namespace

int run(int argc, const char* const* argv) { return dispatch_command(argc, argv); }

int run(const std::vector<std::string>& arguments) {
  std::vector<std::string> args;
  args.reserve(arguments.size() + 1);
  args.emplace_back("gridtherm");
  args.insert(args.end(), arguments.begin(), arguments.end());
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& arg : args) {
    argv.push_back(arg.c_str());
  }
  return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace gridtherm::cli
