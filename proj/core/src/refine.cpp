#include "cgam/refine.hpp"

#include <chrono>
#include <random>
#include <stdexcept>

#include "cgam/click_sim.hpp"

namespace cgam {

std::string to_string(RefineMode mode) { return mode == RefineMode::kCgam ? "cgam" : "none"; }

std::string to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::kProper: return "proper";
    case GuidanceMode::kRandom: return "random";
    case GuidanceMode::kZero: return "zero";
  }
  return "proper";
}

RefineMode parse_refine_mode(const std::string& text) {
  if (text == "cgam") return RefineMode::kCgam;
  if (text == "none") return RefineMode::kNone;
  throw std::invalid_argument("unknown refine mode '" + text + "' (expected cgam or none)");
}

GuidanceMode parse_guidance_mode(const std::string& text) {
  if (text == "proper") return GuidanceMode::kProper;
  if (text == "random") return GuidanceMode::kRandom;
  if (text == "zero") return GuidanceMode::kZero;
  throw std::invalid_argument("unknown click-map mode '" + text +
                              "' (expected proper, random or zero)");
}

Tensor build_exclusion_mask(const ClickRecord& click, std::size_t height, std::size_t width) {
  if (!click.in_bounds(height, width)) {
    throw std::out_of_range("click outside the image");
  }
  Tensor m = Tensor::full({1, 1, height, width}, 1.0);
  auto v = m.data();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (in_disk(click, static_cast<long>(y), static_cast<long>(x))) v[y * width + x] = 0.0;
    }
  }
  return m;
}

Tensor refinement_loss(Tape& tape, const Tensor& logits, std::span<const ClickRecord> clicks,
                       const Tensor& reference, const Tensor& exclusion, double lambda) {
  if (clicks.empty()) throw std::invalid_argument("refinement_loss needs at least one click");
  if (logits.rank() != 4 || logits.dim(0) != 1 || logits.dim(1) != 1) {
    throw ShapeError("refinement_loss expects logits [1,1,H,W], got " + to_string(logits.shape()));
  }
  if (reference.requires_grad()) {
    throw std::invalid_argument("refinement_loss: reference logits must be detached");
  }
  const std::size_t h = logits.dim(2), w = logits.dim(3);
  std::vector<std::size_t> indices;
  std::vector<double> signs;
  for (const auto& c : clicks) {
    if (!c.in_bounds(h, w)) throw std::out_of_range("click outside the logit map");
    indices.push_back(static_cast<std::size_t>(c.row) * w + static_cast<std::size_t>(c.col));
    signs.push_back(c.sign());
  }
  // l * (l - f) == 1 - l * f for l in {-1, +1}.
  Tensor picked = ops::gather(tape, logits, indices);
  Tensor signed_logits = ops::mul(tape, picked, Tensor::from({signs.size()}, signs));
  Tensor violation = ops::relu(tape, ops::add_scalar(tape, ops::scale(tape, signed_logits, -1.0), 1.0));
  Tensor click_term = ops::mean(tape, ops::square(tape, violation));

  Tensor drift = ops::mul(tape, ops::sub(tape, reference, logits), exclusion);
  Tensor stability = ops::scale(tape, ops::sum(tape, ops::square(tape, drift)), lambda);
  return ops::add(tape, click_term, stability);
}

RefinementSession::RefinementSession(std::shared_ptr<const SegModel> model, Image image,
                                     RefineOptions options, std::optional<Mask> ground_truth)
    : model_(std::move(model)),
      image_(std::move(image)),
      options_(options),
      ground_truth_(std::move(ground_truth)) {
  if (!model_) throw std::invalid_argument("RefinementSession needs a model");
  for (const auto& p : model_->parameters()) {
    if (p.requires_grad()) {
      throw std::invalid_argument("RefinementSession needs a frozen model (set_trainable(false))");
    }
  }
  if (image_.channels != 3) {
    throw std::invalid_argument("RefinementSession expects an RGB image, got " +
                                std::to_string(image_.channels) + " channels");
  }
  if (image_.height % SegModel::kStride != 0 || image_.width % SegModel::kStride != 0 ||
      image_.height == 0 || image_.width == 0) {
    throw std::invalid_argument("image size " + std::to_string(image_.height) + "x" +
                                std::to_string(image_.width) + " is not a multiple of 4");
  }
  if (ground_truth_ &&
      (ground_truth_->height != image_.height || ground_truth_->width != image_.width)) {
    throw std::invalid_argument("ground truth size does not match the image");
  }
  if (options_.iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  image_tensor_ = to_tensor(image_);
  initial_cgam_ = cgam_init(model_->channels(), options_.seed);
  cgam_ = initial_cgam_.clone();
  click_maps_ = render_click_maps({}, image_.height, image_.width);
  recompute_features();
  refresh_prediction();
}

void RefinementSession::recompute_features() {
  Tape tape;
  feature_ = model_->forward_g(tape, image_tensor_, click_maps_);
  ++feature_evaluations_;
  guidance_ = downsample_clicks(guidance_maps(), feature_.dim(2), feature_.dim(3));
}

Tensor RefinementSession::guidance_maps() const {
  switch (options_.guidance) {
    case GuidanceMode::kProper:
      return click_maps_;
    case GuidanceMode::kZero:
      return Tensor::zeros(click_maps_.shape());
    case GuidanceMode::kRandom: {
      std::vector<ClickRecord> fake;
      for (std::size_t i = 0; i < clicks_.size(); ++i) {
        std::mt19937_64 rng(options_.seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
        std::uniform_int_distribution<int> row(0, static_cast<int>(image_.height) - 1);
        std::uniform_int_distribution<int> col(0, static_cast<int>(image_.width) - 1);
        std::bernoulli_distribution positive(0.5);
        ClickRecord c;
        c.row = row(rng);
        c.col = col(rng);
        c.label = positive(rng) ? ClickLabel::kPositive : ClickLabel::kNegative;
        c.radius = clicks_[i].radius;
        fake.push_back(c);
      }
      return render_click_maps(fake, image_.height, image_.width);
    }
  }
  return click_maps_;
}

void RefinementSession::refresh_prediction() {
  Tape tape;
  CgamOutput out = cgam_forward(tape, cgam_, feature_, guidance_);
  logits_ = model_->forward_h(tape, out.features).detach();
  attention_ = out.attention.detach();
}

RefinementResult RefinementSession::add_click(const ClickRecord& click) {
  if (!click.in_bounds(image_.height, image_.width)) {
    throw std::out_of_range("click (" + std::to_string(click.row) + "," +
                            std::to_string(click.col) + ") is outside the " +
                            std::to_string(image_.height) + "x" + std::to_string(image_.width) +
                            " image");
  }
  if (click.radius < 1) throw std::out_of_range("click radius must be >= 1");

  history_.push_back(
      Snapshot{cgam_.clone(), clicks_.size(), click_maps_, guidance_, feature_, logits_, attention_});
  clicks_.push_back(click);
  click_maps_ = render_click_maps(clicks_, image_.height, image_.width);
  recompute_features();

  RefinementResult result;
  const auto start = std::chrono::steady_clock::now();
  if (options_.mode == RefineMode::kCgam && options_.iterations > 0) {
    Adam adam(cgam_.tensors(), AdamConfig{options_.learning_rate, options_.beta1, options_.beta2,
                                          options_.epsilon});
    adam.zero_grad();
    const Tensor exclusion = build_exclusion_mask(click, image_.height, image_.width);
    Tensor reference;
    for (int it = 0; it < options_.iterations; ++it) {
      Tape tape;
      CgamOutput out = cgam_forward(tape, cgam_, feature_, guidance_);
      Tensor logits = model_->forward_h(tape, out.features);
      if (it == 0) reference = logits.detach();
      Tensor loss = refinement_loss(tape, logits, clicks_, reference, exclusion, options_.lambda);
      result.loss_trajectory.push_back(loss.item());
      tape.backward(loss);
      adam.step();
      adam.zero_grad();
    }
    refresh_prediction();
    Tape scratch;
    result.final_loss =
        refinement_loss(scratch, logits_, clicks_, reference, exclusion, options_.lambda).item();
    result.reference_logits = reference;
  } else {
    refresh_prediction();
    result.reference_logits = logits_;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  click_seconds_.push_back(result.seconds);

  RefinementResult snapshot = current();
  snapshot.loss_trajectory = std::move(result.loss_trajectory);
  snapshot.final_loss = result.final_loss;
  snapshot.reference_logits = std::move(result.reference_logits);
  snapshot.seconds = result.seconds;
  return snapshot;
}

bool RefinementSession::undo() {
  if (history_.empty()) return false;
  Snapshot snap = std::move(history_.back());
  history_.pop_back();
  cgam_.assign(snap.cgam);
  clicks_.resize(snap.click_count);
  click_maps_ = snap.click_maps;
  guidance_ = snap.guidance;
  feature_ = snap.feature;
  logits_ = snap.logits;
  attention_ = snap.attention;
  if (!click_seconds_.empty()) click_seconds_.pop_back();
  return true;
}

void RefinementSession::reset() {
  cgam_.assign(initial_cgam_);
  clicks_.clear();
  history_.clear();
  click_seconds_.clear();
  click_maps_ = render_click_maps({}, image_.height, image_.width);
  recompute_features();
  refresh_prediction();
}

Image RefinementSession::attention_heatmap() const {
  return cgam::attention_heatmap(attention_, image_.height, image_.width);
}

RefinementResult RefinementSession::current() const {
  RefinementResult r;
  r.logits = logits_;
  r.mask = threshold_logits(logits_);
  if (ground_truth_) r.iou = iou(r.mask, *ground_truth_);
  r.heatmap = attention_heatmap();
  return r;
}

}  // namespace cgam
