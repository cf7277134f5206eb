#include "cgam/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cgam {
namespace {

using nlohmann::json;

std::string target_label(double t) { return std::to_string(static_cast<int>(std::lround(t * 100.0))); }

// Shortest text that reads back to the same double.
std::string number(double v) { return json(v).dump(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

ReportFormat parse_report_format(const std::string& text) {
  if (text == "json") return ReportFormat::kJson;
  if (text == "csv") return ReportFormat::kCsv;
  throw std::invalid_argument("unknown report format '" + text + "' (expected json or csv)");
}

std::string report_json(const EvalReport& report, bool with_timings) {
  json j;
  j["protocol"] = {{"target_ious", report.target_ious},
                   {"max_clicks", report.max_clicks},
                   {"refine_mode", to_string(report.refine_mode)},
                   {"clickmap_mode", to_string(report.clickmap_mode)},
                   {"seed", report.seed},
                   {"iou_window", report.iou_window ? json::array({report.iou_window->first, report.iou_window->second})
                                                    : json(nullptr)}};
  json rows = json::array();
  for (const auto& r : report.rows) {
    json clicks = json::array();
    for (const auto& c : r.clicks) {
      clicks.push_back({{"row", c.row}, {"col", c.col}, {"label", c.sign()}, {"radius", c.radius}});
    }
    json row{{"id", r.id},
             {"initial_iou", r.initial_iou},
             {"clicks_to_target", r.clicks_to_target},
             {"reached", r.reached},
             {"iou_per_click", r.iou_per_click},
             {"clicks", clicks}};
    if (with_timings) {
      row["click_seconds"] = r.click_seconds;
      row["spc"] = r.spc;
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  j["skipped"] = report.skipped;
  if (report.aggregates) {
    json targets = json::array();
    for (const auto& t : report.aggregates->targets) {
      targets.push_back({{"target", t.target}, {"noc", t.noc}, {"nof", t.nof}});
    }
    json agg{{"targets", targets}, {"total_clicks", report.aggregates->total_clicks}};
    if (with_timings) {
      agg["spc"] = report.aggregates->spc;
      agg["total_seconds"] = report.aggregates->total_seconds;
    }
    j["aggregates"] = std::move(agg);
  } else {
    j["aggregates"] = nullptr;
  }
  j["mean_iou_curve"] = report.mean_iou_curve;
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text) {
  EvalReport report;
  try {
    const json j = json::parse(text);
    const auto& p = j.at("protocol");
    report.target_ious = p.at("target_ious").get<std::vector<double>>();
    report.max_clicks = p.at("max_clicks").get<int>();
    report.refine_mode = parse_refine_mode(p.at("refine_mode").get<std::string>());
    report.clickmap_mode = parse_guidance_mode(p.at("clickmap_mode").get<std::string>());
    report.seed = p.at("seed").get<std::uint64_t>();
    if (!p.at("iou_window").is_null()) {
      report.iou_window = std::make_pair(p.at("iou_window").at(0).get<double>(), p.at("iou_window").at(1).get<double>());
    }
    for (const auto& r : j.at("rows")) {
      EvalRow row;
      row.id = r.at("id").get<std::string>();
      row.initial_iou = r.at("initial_iou").get<double>();
      row.clicks_to_target = r.at("clicks_to_target").get<std::vector<int>>();
      row.reached = r.at("reached").get<std::vector<bool>>();
      row.iou_per_click = r.at("iou_per_click").get<std::vector<double>>();
      for (const auto& c : r.at("clicks")) {
        ClickRecord click;
        click.row = c.at("row").get<int>();
        click.col = c.at("col").get<int>();
        click.label = c.at("label").get<int>() > 0 ? ClickLabel::kPositive : ClickLabel::kNegative;
        click.radius = c.at("radius").get<int>();
        row.clicks.push_back(click);
      }
      row.click_seconds = r.value("click_seconds", std::vector<double>{});
      row.spc = r.value("spc", 0.0);
      report.rows.push_back(std::move(row));
    }
    report.skipped = j.at("skipped").get<std::size_t>();
    if (!j.at("aggregates").is_null()) {
      const auto& a = j.at("aggregates");
      Aggregates agg;
      for (const auto& t : a.at("targets")) {
        agg.targets.push_back({t.at("target").get<double>(), t.at("noc").get<double>(), t.at("nof").get<int>()});
      }
      agg.total_clicks = a.at("total_clicks").get<int>();
      agg.spc = a.value("spc", 0.0);
      agg.total_seconds = a.value("total_seconds", 0.0);
      report.aggregates = agg;
    }
    report.mean_iou_curve = j.at("mean_iou_curve").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "id,initial_iou";
  for (double t : report.target_ious) out << ",noc" << target_label(t);
  for (double t : report.target_ious) out << ",reached" << target_label(t);
  out << ",spc\n";
  for (const auto& r : report.rows) {
    out << r.id << ',' << number(r.initial_iou);
    for (int c : r.clicks_to_target) out << ',' << c;
    for (bool b : r.reached) out << ',' << (b ? 1 : 0);
    out << ',' << number(r.spc) << '\n';
  }
  return out.str();
}

std::string curve_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "click,mean_iou\n";
  for (std::size_t k = 0; k < report.mean_iou_curve.size(); ++k) {
    out << k << ',' << number(report.mean_iou_curve[k]) << '\n';
  }
  return out.str();
}

void report_write(const EvalReport& report, const std::filesystem::path& path, ReportFormat format,
                  bool with_timings) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw std::runtime_error("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  write_text(path, format == ReportFormat::kJson ? report_json(report, with_timings) : report_csv(report));
  write_text(path.parent_path() / "curve.csv", curve_csv(report));
}

}  // namespace cgam
