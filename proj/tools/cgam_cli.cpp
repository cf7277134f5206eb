// cgam: train the toy segmentation model, run click benchmarks, generate
// synthetic data and serve interactive sessions.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cgam/bench.hpp"
#include "cgam/dataset.hpp"
#include "cgam/report.hpp"
#include "cgam/seg_model.hpp"
#include "cgam/service.hpp"
#include "cgam/train.hpp"
#include "json.hpp"

namespace {

using namespace cgam;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string dataset;
  std::string split;
  std::string weights;
  std::string out = "out";
};

struct EvalFlags {
  std::string refine = "cgam";
  std::string clickmaps = "proper";
  std::string targets = "0.85,0.90";
  int max_clicks = 20;
  std::string iou_window = "0.5,0.7";
  std::string format = "json";
  unsigned workers = 0;
  bool omit_timings = false;
  bool allow_untrained = false;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse number '" + item + "' in '" + text + "'");
    }
  }
  return out;
}

Protocol build_protocol(const Common& common, const EvalFlags& flags) {
  Protocol p;
  if (!common.config.empty()) {
    const auto j = nlohmann::json::parse(read_text(common.config));
    const auto& pj = j.contains("protocol") ? j.at("protocol") : j;
    if (pj.contains("refine")) {
      const auto& r = pj.at("refine");
      p.refine.iterations = r.value("iterations", p.refine.iterations);
      p.refine.learning_rate = r.value("learning_rate", p.refine.learning_rate);
      p.refine.lambda = r.value("lambda", p.refine.lambda);
    }
  }
  p.seed = common.seed;
  p.refine_mode = parse_refine_mode(flags.refine);
  p.clickmap_mode = parse_guidance_mode(flags.clickmaps);
  p.target_ious = parse_list(flags.targets);
  p.max_clicks = flags.max_clicks;
  if (flags.iou_window == "off") {
    p.iou_window.reset();
  } else {
    const auto w = parse_list(flags.iou_window);
    if (w.size() != 2) throw std::invalid_argument("--iou-window takes lo,hi or off");
    p.iou_window = std::make_pair(w[0], w[1]);
  }
  p.workers = flags.workers;
  p.allow_untrained = flags.allow_untrained;
  validate(p);
  return p;
}

std::vector<Sample> load_samples(const Common& common) {
  if (common.dataset.empty()) throw std::invalid_argument("--dataset is required");
  auto samples = load_dataset(common.dataset, common.split.empty() ? std::nullopt
                                                                   : std::optional<std::string>(common.split));
  return samples;
}

int run_train(const Common& common, const std::string& log_path) {
  TrainConfig config = common.config.empty() ? TrainConfig{} : load_train_config(common.config);
  if (common.seed_set) {
    config.seed = config.schedule.seed = config.model.seed = common.seed;
  }
  validate(config.model);
  std::vector<Sample> train_set, val_set;
  const auto size = static_cast<std::size_t>(config.model.input_size);
  if (!common.dataset.empty()) {
    train_set = load_dataset(common.dataset, std::string("train"));
    val_set = load_dataset(common.dataset, std::string("val"));
  } else {
    train_set = synth_generate(config.dataset_count, size, config.seed, config.ambiguity);
    val_set = synth_generate(config.validation_count, size, config.seed ^ 0x5eedull, config.ambiguity);
  }
  std::cerr << "training on " << train_set.size() << " samples, validating on " << val_set.size() << "\n";
  SegModel model = SegModel::build(config.model, config.model.seed);
  const TrainLog log = train(model, train_set, val_set, config.schedule, [](const EpochLog& e) {
    std::cerr << "epoch " << e.epoch << " lr " << e.learning_rate << " loss " << e.mean_loss << " val_iou "
              << e.validation_iou << " (" << e.seconds << " s)\n";
  });

  fs::create_directories(common.out);
  const fs::path weights = common.weights.empty() ? fs::path(common.out) / "model.cgw" : fs::path(common.weights);
  save_weights(model, weights);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : log.epochs) {
    j.push_back({{"epoch", e.epoch},
                 {"learning_rate", e.learning_rate},
                 {"mean_loss", e.mean_loss},
                 {"validation_iou", e.validation_iou},
                 {"seconds", e.seconds}});
  }
  std::ofstream(log_path.empty() ? fs::path(common.out) / "train_log.json" : fs::path(log_path)) << j.dump(2) << "\n";
  std::ofstream(fs::path(common.out) / "train_config.json") << to_json(config) << "\n";
  std::cout << "weights written to " << weights.string() << "\n";
  return 0;
}

int run_eval(const Common& common, const EvalFlags& flags, bool ablation) {
  if (common.weights.empty()) throw std::invalid_argument("--weights is required");
  const Protocol protocol = build_protocol(common, flags);
  auto model = std::make_shared<SegModel>(load_weights(common.weights));
  model->set_trainable(false);
  const auto samples = load_samples(common);
  auto progress = [](std::size_t done, std::size_t total) {
    if (done % 10 == 0 || done == total) std::cerr << "evaluated " << done << "/" << total << "\n";
  };
  const EvalReport report = ablation ? ablation_run(model, samples, protocol, progress)
                                     : evaluate(model, samples, protocol, progress);
  const ReportFormat format = parse_report_format(flags.format);
  const fs::path path = fs::path(common.out) / (format == ReportFormat::kJson ? "report.json" : "report.csv");
  report_write(report, path, format, !flags.omit_timings);

  std::cout << "evaluated " << report.rows.size() << " images (" << report.skipped << " outside the IoU window)\n";
  if (report.aggregates) {
    for (const auto& t : report.aggregates->targets) {
      std::cout << "NoC@" << t.target << " " << t.noc << "  NoF@" << t.target << " " << t.nof << "\n";
    }
    std::cout << "SPC " << report.aggregates->spc << " s over " << report.aggregates->total_clicks << " clicks\n";
  }
  std::cout << "report written to " << path.string() << "\n";
  return 0;
}

int run_synth(const Common& common, std::size_t count, std::size_t size, double ambiguity,
              std::size_t first_index, const std::string& split) {
  const auto samples = synth_generate(count, size, common.seed, ambiguity, first_index);
  write_dataset(common.out, samples, std::vector<std::string>(samples.size(), split));
  std::cout << "wrote " << samples.size() << " samples to " << common.out << "\n";
  return 0;
}

cgam::HttpServer* g_server = nullptr;

int run_serve(const Common& common, const std::string& host, int port, int idle_timeout,
              const std::string& static_dir) {
  if (common.weights.empty()) throw std::invalid_argument("--weights is required");
  auto model = std::make_shared<SegModel>(load_weights(common.weights));
  model->set_trainable(false);
  ServiceConfig config;
  if (!common.dataset.empty()) config.dataset_dir = common.dataset;
  if (!static_dir.empty()) config.static_dir = static_dir;
  config.idle_timeout = std::chrono::seconds(idle_timeout);
  config.refine.seed = common.seed;
  SessionService service(model, config);
  HttpServer server(service);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::cerr << "serving on http://" << host << ":" << port << "\n";
  server.listen(host, port);
  return 0;
}

void add_common(CLI::App* cmd, Common& common, bool with_split) {
  cmd->add_option("--config", common.config, "JSON configuration file");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { common.seed = s; common.seed_set = true; }, "random seed");
  cmd->add_option("--dataset", common.dataset, "dataset directory (images/, masks/, manifest.json)");
  if (with_split) cmd->add_option("--split", common.split, "only use samples with this split label");
  cmd->add_option("--weights", common.weights, "model weights file");
  cmd->add_option("--out", common.out, "output directory");
}

void add_eval_flags(CLI::App* cmd, EvalFlags& flags) {
  cmd->add_option("--refine", flags.refine, "cgam or none")->check(CLI::IsMember({"cgam", "none"}));
  cmd->add_option("--clickmaps", flags.clickmaps, "proper, random or zero")
      ->check(CLI::IsMember({"proper", "random", "zero"}));
  cmd->add_option("--targets", flags.targets, "comma separated target IoUs");
  cmd->add_option("--max-clicks", flags.max_clicks, "click budget per image");
  cmd->add_option("--iou-window", flags.iou_window, "lo,hi initial IoU filter, or off");
  cmd->add_option("--format", flags.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--workers", flags.workers, "parallel images (0: all hardware threads)");
  cmd->add_flag("--omit-timings", flags.omit_timings, "leave timing fields out of the JSON report");
  cmd->add_flag("--allow-untrained", flags.allow_untrained, "accept weights with no training epochs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Click-guided attention refinement toolkit"};
  app.require_subcommand(1);

  Common common;
  EvalFlags eval_flags;

  auto* train_cmd = app.add_subcommand("train", "train the segmentation model");
  add_common(train_cmd, common, false);
  std::string log_path;
  train_cmd->add_option("--log", log_path, "training log path (default <out>/train_log.json)");

  auto* eval_cmd = app.add_subcommand("eval", "run the automatic click benchmark");
  add_common(eval_cmd, common, true);
  add_eval_flags(eval_cmd, eval_flags);

  auto* ablate_cmd = app.add_subcommand("ablate", "benchmark with ablated click guidance");
  add_common(ablate_cmd, common, true);
  add_eval_flags(ablate_cmd, eval_flags);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth_cmd, common, false);
  std::size_t count = 64, size = 128, first_index = 0;
  double ambiguity = 0.5;
  std::string split = "test";
  synth_cmd->add_option("--count", count, "number of samples")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--size", size, "image side in pixels")->check(CLI::Range(8, 4096));
  synth_cmd->add_option("--ambiguity", ambiguity, "boundary ambiguity in [0, 1]")->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--first-index", first_index, "index of the first sample");
  synth_cmd->add_option("--split", split, "split label written to the manifest");

  auto* serve_cmd = app.add_subcommand("serve", "start the interactive session service");
  add_common(serve_cmd, common, false);
  std::string host = "127.0.0.1", static_dir;
  int port = 8080, idle_timeout = 1800;
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--idle-timeout", idle_timeout, "seconds before idle sessions are dropped")
      ->check(CLI::PositiveNumber);
  serve_cmd->add_option("--static", static_dir, "directory with the browser UI bundle");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return run_train(common, log_path);
    if (eval_cmd->parsed()) return run_eval(common, eval_flags, false);
    if (ablate_cmd->parsed()) return run_eval(common, eval_flags, true);
    if (synth_cmd->parsed()) return run_synth(common, count, size, ambiguity, first_index, split);
    if (serve_cmd->parsed()) return run_serve(common, host, port, idle_timeout, static_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
