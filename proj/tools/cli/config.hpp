#ifndef PVCAL_CLI_CONFIG_HPP
#define PVCAL_CLI_CONFIG_HPP

#include <optional>
#include <string>
#include <vector>

#include "pvcal/cumulants.hpp"
#include "pvcal/edgeworth.hpp"
#include "pvcal/harness.hpp"

namespace pvcal::cli {

inline constexpr int kSchemaVersion = 1;

/// Explicit calibration of the test statistic for `predict`/`correct`.
struct CalibrationBlock {
  long n = 1;
  std::optional<double> a_n;  // default: family mean
  std::optional<double> b_n;  // default: family sd
  Sidedness sided = Sidedness::two_sided;
};

/// One experiment parameter varied over a list of values.
struct Sweep {
  std::string parameter;  // dotted path, e.g. "gamma.true_rate"
  std::vector<double> values;
};

struct ConfigFile {
  std::string description;
  std::optional<ExperimentConfig> experiment;
  std::optional<Sweep> sweep;
  std::optional<FamilySpec> family;
  std::optional<CalibrationBlock> calibration;
};

/// Throws Error(config) with the offending key path or byte offset.
ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::string& path);

/// Copy of `base` with the sweep parameter set to `value`.
ExperimentConfig apply_sweep(const ExperimentConfig& base, const std::string& parameter, double value);

TestMethod parse_method(const std::string& name);
Sidedness parse_sided(const std::string& name);

}  // namespace pvcal::cli

#endif  // PVCAL_CLI_CONFIG_HPP
