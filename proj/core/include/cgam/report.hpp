#pragma once

#include <filesystem>
#include <string>

#include "cgam/bench.hpp"

namespace cgam {

enum class ReportFormat { kJson, kCsv };

ReportFormat parse_report_format(const std::string& text);

// Full report as JSON. Without timings, per-click seconds, SPC and total time
// are left out so that reruns with one seed compare byte for byte.
std::string report_json(const EvalReport& report, bool with_timings = true);
EvalReport parse_report_json(const std::string& text);

// One line per row. Header: id,initial_iou,noc85,noc90,reached85,reached90,spc
// (one noc/reached column per target, named by its percentage).
std::string report_csv(const EvalReport& report);
// Header: click,mean_iou
std::string curve_csv(const EvalReport& report);

// Writes the report to `path` and the curve to curve.csv beside it. IO
// failures throw std::runtime_error naming the path.
void report_write(const EvalReport& report, const std::filesystem::path& path, ReportFormat format,
                  bool with_timings = true);

}  // namespace cgam
