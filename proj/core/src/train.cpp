#include "cgam/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cgam/adam.hpp"
#include "cgam/click_sim.hpp"
#include "json.hpp"

namespace cgam {
namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Copies sample `s` into batch slot `slot`, optionally flipped.
void fill_slot(const Sample& s, const Tensor& clicks, bool flip_h, bool flip_v, std::size_t slot,
               std::vector<double>& images, std::vector<double>& maps, std::vector<double>& target) {
  const std::size_t h = s.image.height, w = s.image.width, plane = h * w;
  const auto cm = clicks.data();
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = flip_v ? h - 1 - y : y;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = flip_h ? w - 1 - x : x;
      for (std::size_t c = 0; c < 3; ++c) images[(slot * 3 + c) * plane + y * w + x] = s.image.at(c, sy, sx);
      for (std::size_t c = 0; c < 2; ++c) maps[(slot * 2 + c) * plane + y * w + x] = cm[c * plane + sy * w + sx];
      target[slot * plane + y * w + x] = s.mask.at(sy, sx) ? 1.0 : 0.0;
    }
  }
}

}  // namespace

Tensor normalized_focal_loss(Tape& tape, const Tensor& logits, const Tensor& target, double gamma,
                             bool normalize) {
  if (logits.shape() != target.shape() || logits.rank() != 4 || logits.dim(1) != 1) {
    throw ShapeError("focal loss expects matching [N,1,H,W] logits and target, got " +
                     to_string(logits.shape()) + " and " + to_string(target.shape()));
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t plane = logits.dim(2) * logits.dim(3);
  const auto z = logits.data();
  const auto t = target.data();

  // Per-pixel quantities in terms of u = s * z with s = +1 for foreground.
  std::vector<double> p(z.size()), weight(z.size()), nll(z.size());
  std::vector<double> item_loss(batch, 0.0), item_norm(batch, 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = n * plane; i < (n + 1) * plane; ++i) {
      const double u = t[i] > 0.5 ? z[i] : -z[i];
      p[i] = stable_sigmoid(u);
      weight[i] = std::pow(stable_sigmoid(-u), gamma);
      nll[i] = softplus(-u);
      num += weight[i] * nll[i];
      den += weight[i];
    }
    item_norm[n] = normalize ? den : static_cast<double>(plane);
    item_loss[n] = item_norm[n] == 0.0 ? 0.0 : num / item_norm[n];
  }
  const double loss = std::accumulate(item_loss.begin(), item_loss.end(), 0.0) / static_cast<double>(batch);

  Tensor result = Tensor::from({1}, {loss}, logits.requires_grad());
  if (logits.requires_grad()) {
    tape.record(result, [logits, target, p = std::move(p), weight = std::move(weight),
                         item_loss = std::move(item_loss), item_norm = std::move(item_norm), batch,
                         plane, gamma, normalize](std::span<const double> go) mutable {
      auto gz = logits.grad_buffer();
      const auto t = target.data();
      const double scale = go[0] / static_cast<double>(batch);
      for (std::size_t n = 0; n < batch; ++n) {
        if (item_norm[n] <= 0.0) continue;
        for (std::size_t i = n * plane; i < (n + 1) * plane; ++i) {
          const double s = t[i] > 0.5 ? 1.0 : -1.0;
          const double one_minus_p = 1.0 - p[i];
          // d weight / du = -gamma * p * (1-p)^gamma ; d nll / du = -(1-p)
          const double dweight = -gamma * p[i] * weight[i];
          const double dnll = -one_minus_p;
          const double nll_i = -std::log(std::max(p[i], 1e-300));
          double du = weight[i] * dnll;
          du += normalize ? dweight * (nll_i - item_loss[n]) : dweight * nll_i;
          gz[i] += scale * s * du / item_norm[n];
        }
      }
    });
  }
  return result;
}

int TrainSchedule::total_epochs() const {
  int n = 0;
  for (const auto& s : stages) n += s.epochs;
  return n;
}

double validation_iou(const SegModel& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) {
    Tape tape;
    const Tensor maps = Tensor::zeros({1, 2, s.image.height, s.image.width});
    Tensor logits = model.forward(tape, to_tensor(s.image), maps);
    acc += iou(threshold_logits(logits), s.mask);
  }
  return acc / static_cast<double>(samples.size());
}

TrainLog train(SegModel& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
               const TrainSchedule& schedule, const std::function<void(const EpochLog&)>& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("train needs a non-empty dataset");
  if (schedule.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  const std::size_t h = train_set.front().image.height, w = train_set.front().image.width;
  for (const auto& s : train_set) {
    if (s.image.height != h || s.image.width != w || s.image.channels != 3) {
      throw std::invalid_argument("training samples must share one RGB size; " + s.id + " differs");
    }
  }

  model.set_trainable(true);
  Adam adam(model.parameters(), AdamConfig{});
  std::mt19937_64 rng(schedule.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  int epoch = 0;
  const std::size_t plane = h * w;
  for (const auto& stage : schedule.stages) {
    adam.set_learning_rate(stage.learning_rate);
    for (int e = 0; e < stage.epochs; ++e) {
      const auto start = std::chrono::steady_clock::now();
      ++epoch;
      std::shuffle(order.begin(), order.end(), rng);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t b0 = 0; b0 < order.size(); b0 += schedule.batch_size) {
        const std::size_t bs = std::min(schedule.batch_size, order.size() - b0);
        std::vector<double> images(bs * 3 * plane), maps(bs * 2 * plane), target(bs * plane);
        for (std::size_t k = 0; k < bs; ++k) {
          const Sample& s = train_set[order[b0 + k]];
          const auto clicks = sample_training_clicks(s.mask, rng);
          const bool fh = schedule.flip_augment && coin(rng);
          const bool fv = schedule.flip_augment && coin(rng);
          fill_slot(s, render_click_maps(clicks, h, w), fh, fv, k, images, maps, target);
        }
        Tape tape;
        Tensor logits = model.forward(tape, Tensor::from({bs, 3, h, w}, std::move(images)),
                                      Tensor::from({bs, 2, h, w}, std::move(maps)));
        Tensor loss = normalized_focal_loss(tape, logits, Tensor::from({bs, 1, h, w}, std::move(target)),
                                            schedule.focal_gamma, schedule.normalized_focal);
        if (!std::isfinite(loss.item())) {
          model.set_trainable(false);
          throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches + 1) +
                                 " (learning rate " + std::to_string(stage.learning_rate) + ")");
        }
        tape.backward(loss);
        adam.step();
        adam.zero_grad();
        loss_sum += loss.item();
        ++batches;
      }
      model.set_trainable(false);
      EpochLog entry;
      entry.epoch = epoch;
      entry.learning_rate = stage.learning_rate;
      entry.mean_loss = loss_sum / static_cast<double>(batches);
      entry.validation_iou = validation_iou(model, val_set);
      entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      model.set_trainable(true);
      log.epochs.push_back(entry);
      if (on_epoch) on_epoch(entry);
    }
  }
  model.set_trainable(false);
  model.add_trained_epochs(epoch);
  return log;
}

TrainConfig train_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TrainConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model").dump());
  c.seed = j.value("seed", c.seed);
  c.model.seed = j.contains("model") ? j.at("model").value("seed", c.seed) : c.seed;
  c.schedule.seed = c.seed;
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    if (s.contains("stages")) {
      c.schedule.stages.clear();
      for (const auto& st : s.at("stages")) {
        c.schedule.stages.push_back({st.at("epochs").get<int>(), st.at("learning_rate").get<double>()});
      }
    }
    c.schedule.batch_size = s.value("batch_size", c.schedule.batch_size);
    c.schedule.focal_gamma = s.value("focal_gamma", c.schedule.focal_gamma);
    c.schedule.normalized_focal = s.value("normalized_focal", c.schedule.normalized_focal);
    c.schedule.flip_augment = s.value("flip_augment", c.schedule.flip_augment);
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset_count = d.value("count", c.dataset_count);
    c.validation_count = d.value("validation", c.validation_count);
    c.ambiguity = d.value("ambiguity", c.ambiguity);
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open training config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_json(ss.str());
}

std::string to_json(const TrainConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.schedule.stages) stages.push_back({{"epochs", s.epochs}, {"learning_rate", s.learning_rate}});
  nlohmann::json j{{"model", nlohmann::json::parse(to_json(c.model))},
                   {"schedule",
                    {{"stages", stages},
                     {"batch_size", c.schedule.batch_size},
                     {"focal_gamma", c.schedule.focal_gamma},
                     {"normalized_focal", c.schedule.normalized_focal},
                     {"flip_augment", c.schedule.flip_augment}}},
                   {"dataset",
                    {{"count", c.dataset_count}, {"validation", c.validation_count}, {"ambiguity", c.ambiguity}}},
                   {"seed", c.seed}};
  return j.dump(2);
}

}  // namespace cgam
