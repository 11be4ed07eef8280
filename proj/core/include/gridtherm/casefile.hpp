#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gridtherm/control.hpp"
#include "gridtherm/network.hpp"
#include "gridtherm/thermal.hpp"

namespace gridtherm {

/// The two-layer candidate grid: temperature-reference scalings s (targets
/// T* = T_a + s (T - T_a), or s T in raw mode) crossed with effort weights c.
struct SweepSpec {
  std::vector<double> target_scalings{0.90, 0.925, 0.95, 0.975, 1.0};
  std::vector<double> weights = default_weights();
  control::Reduction reduction;
  bool raw_targets = false;
  double reference_scale = 0.95;   // the scale whose c-sweep feeds the weight report
  double reference_weight = 0.25;  // the weight whose s-sweep feeds the target report

  /// 0.05 to 1.0 in steps of 0.05.
  static std::vector<double> default_weights();
  void validate() const;
};

/// The mixed-formulation search grid: fan speeds crossed with current
/// magnitudes, with an exact-model temperature cap for feasibility.
struct MixedSpec {
  std::vector<double> fan_grid_rpm{1800.0, 1900.0, 2000.0, 2100.0, 2200.0};
  std::vector<double> current_grid_a{44.0, 46.0, 48.0, 49.0, 50.0};
  double temp_max_k = 318.0;

  void validate(double ambient_k) const;
};

/// Everything a case file describes: the feeder, the optional ESS, the rack
/// thermal model, the control setup, and both search grids.
struct CaseBundle {
  network::GridCase grid;
  std::optional<network::EssConfig> ess;
  thermal::RackGeometry geometry;
  thermal::ThermalParams params;
  double initial_fan_rpm = 2000.0;
  double initial_current_a = 50.0;
  control::Reduction reduction;
  double default_weight = 0.25;
  SweepSpec sweep;
  MixedSpec mixed;
  std::string source;  // path or name, used in diagnostics

  /// Cross-section consistency plus every member's own checks.
  void validate() const;
};

namespace casefile {

/// Reads and validates a sectioned case file. Sections: [network] (line and
/// load tables, bases, tariffs, horizon), [ess], [thermal], [control],
/// [sweep], [mixed]. Omitted keys fall back to the battery-rack case-study
/// defaults baked into the structs; an omitted [ess] section means no ESS.
/// Paths inside the file resolve relative to the file's directory.
CaseBundle load_case(const std::filesystem::path& path);

/// Same, from an in-memory string; `base_dir` anchors relative table paths.
CaseBundle parse_case(std::string_view text, const std::string& source_name,
                      const std::filesystem::path& base_dir);

} // namespace casefile
} // namespace gridtherm
