#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cgam/dataset.hpp"
#include "cgam/refine.hpp"
#include "cgam/seg_model.hpp"

namespace cgam {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
// Throws std::invalid_argument on characters outside the standard alphabet
// or a bad length. Whitespace is ignored.
std::vector<std::uint8_t> base64_decode(const std::string& text);

struct ServiceConfig {
  using Clock = std::chrono::steady_clock;

  std::optional<std::filesystem::path> dataset_dir;
  std::optional<std::filesystem::path> static_dir;  // served under /
  std::chrono::seconds idle_timeout{30 * 60};
  // Clicks allowed in flight or waiting per session before 409.
  std::size_t max_queue = 4;
  int default_radius = 3;
  int max_radius = 40;
  std::size_t thumbnail_size = 128;
  RefineOptions refine;
  std::function<Clock::time_point()> clock = [] { return Clock::now(); };
};

struct ServiceResponse {
  int status = 200;
  std::string body;  // JSON
};

// Transport-independent request handlers. Every handler returns a JSON body;
// errors come back as {"error": message} with a 4xx status. Clicks on one
// session run one at a time in arrival order; different sessions proceed in
// parallel.
class SessionService {
 public:
  SessionService(std::shared_ptr<const SegModel> model, ServiceConfig config = {});
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  // {"sample_id": id} or {"image_png": base64, "mask_png": base64 (optional)}
  ServiceResponse create_session(const std::string& body);
  // {"u": column, "v": row, "label": "positive" | "negative", "radius": int (optional)}
  ServiceResponse add_click(const std::string& session_id, const std::string& body);
  ServiceResponse undo(const std::string& session_id);
  ServiceResponse reset(const std::string& session_id);
  ServiceResponse get_session(const std::string& session_id);
  ServiceResponse list_samples(std::size_t page = 0, std::size_t page_size = 20);

  // Drops sessions idle for longer than the timeout. Runs before every
  // request too; returns how many were removed.
  std::size_t evict_idle();
  std::size_t session_count() const;
  // Clicks in flight or queued for a session, 0 for unknown ids.
  std::size_t pending_clicks(const std::string& session_id) const;

  const ServiceConfig& config() const { return config_; }

 private:
  struct Entry;

  std::shared_ptr<Entry> find(const std::string& id);
  std::string new_id();
  std::string payload(Entry& entry, const RefinementResult& result, bool include_image) const;
  const Sample* find_sample(const std::string& id) const;
  const std::vector<std::uint8_t>& thumbnail(std::size_t index);

  std::shared_ptr<const SegModel> model_;
  ServiceConfig config_;
  std::vector<Sample> samples_;
  std::vector<std::vector<std::uint8_t>> thumbnails_;
  std::mutex thumbnail_mutex_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t id_counter_ = 0;
  std::uint64_t id_salt_ = 0;
};

// HTTP front end (cpp-httplib) for a SessionService. Adds CORS headers to
// every response and serves config.static_dir when set.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and serves on a background thread. port 0 picks a free port.
  // Returns the bound port; throws std::runtime_error when binding fails.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cgam
