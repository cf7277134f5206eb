#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgam/dataset.hpp"
#include "cgam/seg_model.hpp"

namespace cgam {

// Focal loss with gamma, normalized per batch item by sum((1 - p_t)^gamma)
// so the gradient scale stays constant as predictions sharpen. With
// `normalize` false it is the plain pixel-mean focal loss. logits and
// target are [N,1,H,W]; target holds 0/1.
Tensor normalized_focal_loss(Tape& tape, const Tensor& logits, const Tensor& target,
                             double gamma = 2.0, bool normalize = true);

struct TrainStage {
  int epochs = 0;
  double learning_rate = 0.0;
};

struct TrainSchedule {
  std::vector<TrainStage> stages{{40, 5e-4}, {8, 5e-5}};
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double focal_gamma = 2.0;
  bool normalized_focal = true;
  bool flip_augment = true;

  int total_epochs() const;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double learning_rate = 0.0;
  double mean_loss = 0.0;
  double validation_iou = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mean IoU of zero-click predictions (logit > 0).
double validation_iou(const SegModel& model, std::span<const Sample> samples);

// Offline training of the feature extractor and head with sampled training
// clicks. Samples are never modified. The model is left frozen.
TrainLog train(SegModel& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
               const TrainSchedule& schedule,
               const std::function<void(const EpochLog&)>& on_epoch = {});

// Training configuration document:
// {"model": {...ModelConfig}, "schedule": {"stages": [{"epochs", "learning_rate"}],
//  "batch_size", "focal_gamma", "normalized_focal", "flip_augment"},
//  "dataset": {"count", "validation", "ambiguity"}, "seed"}
// Images are generated at model.input_size.
struct TrainConfig {
  ModelConfig model;
  TrainSchedule schedule;
  std::size_t dataset_count = 512;
  std::size_t validation_count = 64;
  double ambiguity = 0.5;
  std::uint64_t seed = 0;
};

TrainConfig train_config_from_json(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string to_json(const TrainConfig& config);

}  // namespace cgam
