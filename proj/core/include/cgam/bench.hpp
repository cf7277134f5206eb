#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cgam/click.hpp"
#include "cgam/dataset.hpp"
#include "cgam/refine.hpp"
#include "cgam/seg_model.hpp"

namespace cgam {

struct Protocol {
  std::vector<double> target_ious{0.85, 0.90};
  int max_clicks = 20;
  RefineMode refine_mode = RefineMode::kCgam;
  GuidanceMode clickmap_mode = GuidanceMode::kProper;
  std::uint64_t seed = 0;
  // Images whose zero-click IoU falls outside this closed range are skipped.
  std::optional<std::pair<double, double>> iou_window = std::make_pair(0.5, 0.7);
  // Optimizer settings; mode, guidance and seed are taken from the fields above.
  RefineOptions refine;
  unsigned workers = 0;  // 0: one per hardware thread
  bool allow_untrained = false;
};

// Throws std::invalid_argument for targets outside (0, 1], max_clicks < 1 or
// a malformed window.
void validate(const Protocol& protocol);

struct EvalRow {
  std::string id;
  double initial_iou = 0.0;
  std::vector<int> clicks_to_target;  // per target; max_clicks when not reached
  std::vector<bool> reached;          // per target
  std::vector<double> iou_per_click;  // index 0 is the zero-click prediction
  std::vector<ClickRecord> clicks;
  std::vector<double> click_seconds;  // refinement time per click
  double spc = 0.0;

  bool operator==(const EvalRow&) const = default;
};

struct TargetAggregate {
  double target = 0.0;
  double noc = 0.0;
  int nof = 0;
  bool operator==(const TargetAggregate&) const = default;
};

struct Aggregates {
  std::vector<TargetAggregate> targets;
  double spc = 0.0;
  double total_seconds = 0.0;
  int total_clicks = 0;
  bool operator==(const Aggregates&) const = default;
};

struct EvalReport {
  std::vector<double> target_ious;
  int max_clicks = 0;
  RefineMode refine_mode = RefineMode::kCgam;
  GuidanceMode clickmap_mode = GuidanceMode::kProper;
  std::uint64_t seed = 0;
  std::optional<std::pair<double, double>> iou_window;

  std::vector<EvalRow> rows;
  std::size_t skipped = 0;              // filtered out by the IoU window
  std::optional<Aggregates> aggregates;  // absent when no row was evaluated
  // Mean IoU after k clicks for k = 0..max_clicks. Rows that stopped early
  // carry their last IoU forward. Empty when there are no rows.
  std::vector<double> mean_iou_curve;

  const TargetAggregate* find_target(double target) const;
  bool operator==(const EvalReport&) const = default;
};

// Called after each evaluated or skipped image with (done, total).
using ProgressFn = std::function<void(std::size_t, std::size_t)>;

// Runs the automatic click protocol on every sample and aggregates NoC, NoF
// and SPC. Deterministic for a fixed protocol seed regardless of workers.
EvalReport evaluate(std::shared_ptr<const SegModel> model, std::span<const Sample> dataset,
                    const Protocol& protocol, const ProgressFn& progress = {});

// evaluate() with refinement forced on; protocol.clickmap_mode selects what
// the attention module sees.
EvalReport ablation_run(std::shared_ptr<const SegModel> model, std::span<const Sample> dataset,
                        const Protocol& protocol, const ProgressFn& progress = {});

// Recomputes aggregates and the curve from report.rows.
void finalize(EvalReport& report);

}  // namespace cgam
