#pragma once

#include <string>
#include <vector>

namespace selinf {

// Tidy projections of a summary file into per-figure plot data:
//   coverage          one row per (scenario, method) with the coverage block
//   model-selection   true-model and false-positive frequencies
//   freq-vs-coverage  per-variable selection frequency vs conditional coverage
//   width             median/IQR widths and stability rates
//   prediction        mean validation R^2 against the scenario target
const std::vector<std::string>& report_kinds();

std::string build_report(const std::string& summary_path, const std::string& kind);

}  // namespace selinf
