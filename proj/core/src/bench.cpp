#include "cgam/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "cgam/click_sim.hpp"

namespace cgam {
namespace {

std::uint64_t image_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::optional<EvalRow> evaluate_one(const std::shared_ptr<const SegModel>& model, const Sample& sample,
                                    const Protocol& protocol, std::size_t index) {
  RefineOptions options = protocol.refine;
  options.mode = protocol.refine_mode;
  options.guidance = protocol.clickmap_mode;
  options.seed = image_seed(protocol.seed, index);
  RefinementSession session(model, sample.image, options, sample.mask);

  EvalRow row;
  row.id = sample.id;
  row.initial_iou = *session.current().iou;
  if (protocol.iou_window &&
      (row.initial_iou < protocol.iou_window->first || row.initial_iou > protocol.iou_window->second)) {
    return std::nullopt;
  }

  const std::size_t targets = protocol.target_ious.size();
  row.clicks_to_target.assign(targets, protocol.max_clicks);
  row.reached.assign(targets, false);
  row.iou_per_click.push_back(row.initial_iou);

  auto mark = [&](double value, int clicks) {
    bool all = true;
    for (std::size_t t = 0; t < targets; ++t) {
      if (!row.reached[t] && value >= protocol.target_ious[t]) {
        row.reached[t] = true;
        row.clicks_to_target[t] = clicks;
      }
      all = all && row.reached[t];
    }
    return all;
  };

  Mask prediction = session.current().mask;
  bool done = mark(row.initial_iou, 0);
  for (int k = 1; k <= protocol.max_clicks && !done; ++k) {
    const auto click = generate_next_click(prediction, sample.mask);
    if (!click) break;
    RefinementResult r = session.add_click(*click);
    row.clicks.push_back(*click);
    row.click_seconds.push_back(r.seconds);
    row.iou_per_click.push_back(*r.iou);
    prediction = std::move(r.mask);
    done = mark(row.iou_per_click.back(), k);
  }
  double total = 0.0;
  for (double s : row.click_seconds) total += s;
  row.spc = row.clicks.empty() ? 0.0 : total / static_cast<double>(row.clicks.size());
  return row;
}

}  // namespace

void validate(const Protocol& protocol) {
  if (protocol.target_ious.empty()) throw std::invalid_argument("at least one target IoU is required");
  for (double t : protocol.target_ious) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw std::invalid_argument("target IoU " + std::to_string(t) + " is outside (0, 1]");
    }
  }
  if (protocol.max_clicks < 1) throw std::invalid_argument("max_clicks must be >= 1");
  if (protocol.iou_window && !(protocol.iou_window->first <= protocol.iou_window->second)) {
    throw std::invalid_argument("IoU window must satisfy lo <= hi");
  }
}

const TargetAggregate* EvalReport::find_target(double target) const {
  if (!aggregates) return nullptr;
  for (const auto& t : aggregates->targets) {
    if (std::abs(t.target - target) < 1e-12) return &t;
  }
  return nullptr;
}

void finalize(EvalReport& report) {
  report.aggregates.reset();
  report.mean_iou_curve.clear();
  if (report.rows.empty()) return;

  Aggregates agg;
  const double n = static_cast<double>(report.rows.size());
  for (std::size_t t = 0; t < report.target_ious.size(); ++t) {
    TargetAggregate ta;
    ta.target = report.target_ious[t];
    double sum = 0.0;
    for (const auto& row : report.rows) {
      sum += row.clicks_to_target[t];
      if (!row.reached[t]) ++ta.nof;
    }
    ta.noc = sum / n;
    agg.targets.push_back(ta);
  }
  for (const auto& row : report.rows) {
    for (double s : row.click_seconds) agg.total_seconds += s;
    agg.total_clicks += static_cast<int>(row.clicks.size());
  }
  agg.spc = agg.total_clicks > 0 ? agg.total_seconds / agg.total_clicks : 0.0;
  report.aggregates = agg;

  report.mean_iou_curve.assign(static_cast<std::size_t>(report.max_clicks) + 1, 0.0);
  for (const auto& row : report.rows) {
    for (std::size_t k = 0; k < report.mean_iou_curve.size(); ++k) {
      report.mean_iou_curve[k] += row.iou_per_click[std::min(k, row.iou_per_click.size() - 1)];
    }
  }
  for (double& v : report.mean_iou_curve) v /= n;
}

EvalReport evaluate(std::shared_ptr<const SegModel> model, std::span<const Sample> dataset,
                    const Protocol& protocol, const ProgressFn& progress) {
  validate(protocol);
  if (!model) throw std::invalid_argument("evaluate needs a model");
  if (model->trained_epochs() == 0 && !protocol.allow_untrained) {
    throw std::invalid_argument("model has no training epochs recorded; train it first");
  }
  for (const auto& s : dataset) {
    if (s.image.channels != 3 || s.image.height % SegModel::kStride != 0 ||
        s.image.width % SegModel::kStride != 0) {
      throw std::invalid_argument("sample " + s.id + " is not an RGB image with sides divisible by 4");
    }
  }

  EvalReport report;
  report.target_ious = protocol.target_ious;
  report.max_clicks = protocol.max_clicks;
  report.refine_mode = protocol.refine_mode;
  report.clickmap_mode = protocol.clickmap_mode;
  report.seed = protocol.seed;
  report.iou_window = protocol.iou_window;

  std::vector<std::optional<EvalRow>> slots(dataset.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < dataset.size(); i = next++) {
      try {
        slots[i] = evaluate_one(model, dataset[i], protocol, i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = dataset.size();
        return;
      }
      const std::size_t finished = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, dataset.size());
      }
    }
  };

  unsigned workers = protocol.workers ? protocol.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(1, dataset.size())));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& slot : slots) {
    if (slot) {
      report.rows.push_back(std::move(*slot));
    } else {
      ++report.skipped;
    }
  }
  finalize(report);
  return report;
}

EvalReport ablation_run(std::shared_ptr<const SegModel> model, std::span<const Sample> dataset,
                        const Protocol& protocol, const ProgressFn& progress) {
  Protocol p = protocol;
  p.refine_mode = RefineMode::kCgam;
  return evaluate(std::move(model), dataset, p, progress);
}

}  // namespace cgam
