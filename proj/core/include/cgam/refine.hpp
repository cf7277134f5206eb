#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgam/adam.hpp"
#include "cgam/attention.hpp"
#include "cgam/click.hpp"
#include "cgam/image.hpp"
#include "cgam/seg_model.hpp"

namespace cgam {

enum class RefineMode { kCgam, kNone };
// What the attention module receives as click guidance. The loss always uses
// the real clicks; only the module input changes.
enum class GuidanceMode { kProper, kRandom, kZero };

std::string to_string(RefineMode mode);
std::string to_string(GuidanceMode mode);
RefineMode parse_refine_mode(const std::string& text);
GuidanceMode parse_guidance_mode(const std::string& text);

struct RefineOptions {
  RefineMode mode = RefineMode::kCgam;
  GuidanceMode guidance = GuidanceMode::kProper;
  int iterations = 20;
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda = 1.0;
  std::uint64_t seed = 0;  // attention init and random guidance
};

// [1,1,H,W]: 0 inside the closed disk of `click`, 1 elsewhere.
Tensor build_exclusion_mask(const ClickRecord& click, std::size_t height, std::size_t width);

// mean_i max(l_i * (l_i - f(u_i, v_i)), 0)^2
//   + lambda * || exclusion (.) (reference - logits) ||_2^2
// `reference` must be detached. Differentiable in `logits` only.
Tensor refinement_loss(Tape& tape, const Tensor& logits, std::span<const ClickRecord> clicks,
                       const Tensor& reference, const Tensor& exclusion, double lambda);

struct RefinementResult {
  Tensor logits;                          // [1,1,H,W]
  Mask mask;                              // logits > 0
  std::optional<double> iou;              // when ground truth is known
  std::vector<double> loss_trajectory;    // loss before each optimizer step
  std::optional<double> final_loss;       // loss at the returned parameters
  Tensor reference_logits;                // logits before this click's optimization
  Image heatmap;                          // attention heat map at image resolution
  double seconds = 0.0;                   // refinement time for this click
};

// Interactive refinement state for one image.
//
// Every add_click re-renders the click maps, evaluates the frozen feature
// extractor once, snapshots the logits under the previous attention weights,
// and runs a fresh Adam optimizer over the attention parameters only.
class RefinementSession {
 public:
  RefinementSession(std::shared_ptr<const SegModel> model, Image image, RefineOptions options = {},
                    std::optional<Mask> ground_truth = std::nullopt);

  // Throws std::out_of_range for clicks outside the image or radius < 1;
  // the session is left untouched in that case.
  RefinementResult add_click(const ClickRecord& click);

  // Restores the state before the last click. Returns false (and changes
  // nothing) when there is no click to undo.
  bool undo();
  void reset();

  RefinementResult current() const;

  const std::vector<ClickRecord>& clicks() const { return clicks_; }
  const CgamParams& attention_params() const { return cgam_; }
  const Tensor& logits() const { return logits_; }
  const Tensor& attention() const { return attention_; }
  const Tensor& click_maps() const { return click_maps_; }
  const Tensor& guidance() const { return guidance_; }
  const Image& image() const { return image_; }
  const std::optional<Mask>& ground_truth() const { return ground_truth_; }
  const RefineOptions& options() const { return options_; }
  const SegModel& model() const { return *model_; }

  Image attention_heatmap() const;
  std::size_t feature_evaluations() const { return feature_evaluations_; }
  const std::vector<double>& click_seconds() const { return click_seconds_; }

 private:
  struct Snapshot {
    CgamParams cgam;
    std::size_t click_count;
    Tensor click_maps;
    Tensor guidance;
    Tensor feature;
    Tensor logits;
    Tensor attention;
  };

  void recompute_features();
  void refresh_prediction();
  Tensor guidance_maps() const;

  std::shared_ptr<const SegModel> model_;
  Image image_;
  Tensor image_tensor_;
  RefineOptions options_;
  std::optional<Mask> ground_truth_;

  CgamParams initial_cgam_;
  CgamParams cgam_;
  std::vector<ClickRecord> clicks_;
  Tensor click_maps_;
  Tensor guidance_;
  Tensor feature_;
  Tensor logits_;
  Tensor attention_;
  std::vector<Snapshot> history_;
  std::vector<double> click_seconds_;
  std::size_t feature_evaluations_ = 0;
};

}  // namespace cgam
