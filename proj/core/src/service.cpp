#include "cgam/service.hpp"

#include <array>
#include <condition_variable>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cgam/click_sim.hpp"
#include "cgam/png_io.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cgam {
namespace {

using nlohmann::json;

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

ServiceResponse error(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

std::string png_base64(const Image& image) { return base64_encode(encode_png(image)); }

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int k = 0; k < 64; ++k) lookup[static_cast<unsigned char>(kAlphabet[k])] = k;

  std::string clean;
  for (char c : text) {
    if (c != ' ' && c != '\n' && c != '\r' && c != '\t') clean += c;
  }
  if (clean.size() % 4 != 0) throw std::invalid_argument("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(clean.size() / 4 * 3);
  for (std::size_t i = 0; i < clean.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = clean[i + k];
      int d;
      if (c == '=') {
        if (i + 4 != clean.size() || k < 2) throw std::invalid_argument("misplaced base64 padding");
        ++pad;
        d = 0;
      } else {
        if (pad) throw std::invalid_argument("misplaced base64 padding");
        d = lookup[static_cast<unsigned char>(c)];
        if (d < 0) throw std::invalid_argument("invalid base64 character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

struct SessionService::Entry {
  std::string id;
  std::unique_ptr<RefinementSession> session;
  ServiceConfig::Clock::time_point created;
  ServiceConfig::Clock::time_point last_activity;
  std::mutex mutex;
  std::condition_variable turn;
  std::uint64_t next_ticket = 0;
  std::uint64_t serving = 0;
  std::size_t pending = 0;
};

SessionService::SessionService(std::shared_ptr<const SegModel> model, ServiceConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  if (!model_) throw std::invalid_argument("SessionService needs a model");
  if (config_.max_queue < 1) throw std::invalid_argument("max_queue must be >= 1");
  if (config_.dataset_dir && std::filesystem::exists(*config_.dataset_dir / "manifest.json")) {
    samples_ = load_dataset(*config_.dataset_dir);
  }
  thumbnails_.resize(samples_.size());
  std::random_device rd;
  id_salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

SessionService::~SessionService() = default;

std::string SessionService::new_id() {
  // Caller holds mutex_.
  std::mt19937_64 mix(id_salt_ ^ (++id_counter_ * 0x9e3779b97f4a7c15ull));
  std::ostringstream out;
  out << std::hex << mix() << '-' << id_counter_;
  return out.str();
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

const Sample* SessionService::find_sample(const std::string& id) const {
  for (const auto& s : samples_) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const std::vector<std::uint8_t>& SessionService::thumbnail(std::size_t index) {
  std::lock_guard lock(thumbnail_mutex_);
  if (thumbnails_[index].empty()) {
    thumbnails_[index] = encode_png(downscale(samples_[index].image, config_.thumbnail_size));
  }
  return thumbnails_[index];
}

std::string SessionService::payload(Entry& entry, const RefinementResult& result, bool include_image) const {
  const RefinementSession& s = *entry.session;
  json j{{"session_id", entry.id},
         {"mask", png_base64(mask_to_image(result.mask))},
         {"heatmap", png_base64(result.heatmap)},
         {"loss_trajectory", result.loss_trajectory},
         {"spc_seconds", result.seconds},
         {"click_count", s.clicks().size()},
         {"width", s.image().width},
         {"height", s.image().height}};
  j["iou"] = result.iou ? json(*result.iou) : json(nullptr);
  json clicks = json::array();
  for (const auto& c : s.clicks()) {
    clicks.push_back({{"u", c.col}, {"v", c.row}, {"label", c.positive() ? "positive" : "negative"},
                      {"radius", c.radius}});
  }
  j["clicks"] = std::move(clicks);
  if (include_image) {
    j["image"] = png_base64(s.image());
    j["initial_mask"] = j["mask"];
  }
  return j.dump();
}

ServiceResponse SessionService::create_session(const std::string& body) {
  evict_idle();
  Image image;
  std::optional<Mask> truth;
  try {
    const json j = json::parse(body);
    if (j.contains("sample_id")) {
      const Sample* sample = find_sample(j.at("sample_id").get<std::string>());
      if (!sample) return error(404, "unknown sample '" + j.at("sample_id").get<std::string>() + "'");
      image = sample->image;
      truth = sample->mask;
    } else if (j.contains("image_png")) {
      image = decode_png(base64_decode(j.at("image_png").get<std::string>()));
      if (image.channels == 1) {
        Image rgb = Image::zeros(3, image.height, image.width);
        for (std::size_t c = 0; c < 3; ++c) {
          std::copy(image.pixels.begin(), image.pixels.end(),
                    rgb.pixels.begin() + static_cast<long>(c * image.height * image.width));
        }
        image = std::move(rgb);
      }
      if (j.contains("mask_png") && !j.at("mask_png").is_null()) {
        const Image m = decode_png(base64_decode(j.at("mask_png").get<std::string>()));
        if (m.height != image.height || m.width != image.width) {
          return error(400, "mask size does not match the image");
        }
        truth = binarize(m, 128);
      }
    } else {
      return error(400, "request needs sample_id or image_png");
    }
  } catch (const json::exception& e) {
    return error(400, std::string("malformed request: ") + e.what());
  } catch (const PngError& e) {
    return error(400, std::string("malformed PNG: ") + e.what());
  } catch (const std::invalid_argument& e) {
    return error(400, e.what());
  }
  if (image.height % SegModel::kStride != 0 || image.width % SegModel::kStride != 0) {
    return error(400, "image sides must be multiples of 4");
  }

  auto entry = std::make_shared<Entry>();
  try {
    entry->session = std::make_unique<RefinementSession>(model_, std::move(image), config_.refine, std::move(truth));
  } catch (const std::invalid_argument& e) {
    return error(400, e.what());
  }
  entry->created = entry->last_activity = config_.clock();
  {
    std::lock_guard lock(mutex_);
    entry->id = new_id();
    sessions_[entry->id] = entry;
  }
  return {200, payload(*entry, entry->session->current(), true)};
}

namespace {

// Runs `work` when it is this request's turn on the session. Returns 409
// when the session already has max_queue requests in flight or waiting.
template <class Work>
ServiceResponse serialized(std::mutex& m, std::condition_variable& turn, std::uint64_t& next_ticket,
                           std::uint64_t& serving, std::size_t& pending, std::size_t max_queue,
                           const std::function<void()>& touch, Work&& work) {
  std::unique_lock lock(m);
  if (pending >= max_queue) return error(409, "session is busy; too many queued requests");
  const std::uint64_t ticket = next_ticket++;
  ++pending;
  turn.wait(lock, [&] { return serving == ticket; });
  lock.unlock();
  ServiceResponse response;
  try {
    response = work();
  } catch (const std::out_of_range& e) {
    response = error(400, e.what());
  } catch (const std::invalid_argument& e) {
    response = error(400, e.what());
  } catch (const std::exception& e) {
    response = error(500, e.what());
  }
  lock.lock();
  ++serving;
  --pending;
  touch();
  turn.notify_all();
  return response;
}

}  // namespace

ServiceResponse SessionService::add_click(const std::string& session_id, const std::string& body) {
  evict_idle();
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session '" + session_id + "'");

  ClickRecord click;
  try {
    const json j = json::parse(body);
    click.col = j.at("u").get<int>();
    click.row = j.at("v").get<int>();
    const std::string label = j.at("label").get<std::string>();
    if (label == "positive") {
      click.label = ClickLabel::kPositive;
    } else if (label == "negative") {
      click.label = ClickLabel::kNegative;
    } else {
      return error(400, "label must be positive or negative");
    }
    click.radius = j.contains("radius") && !j.at("radius").is_null() ? j.at("radius").get<int>()
                                                                      : config_.default_radius;
    click.radius = std::clamp(click.radius, 1, config_.max_radius);
  } catch (const json::exception& e) {
    return error(400, std::string("malformed click: ") + e.what());
  }

  Entry& e = *entry;
  return serialized(e.mutex, e.turn, e.next_ticket, e.serving, e.pending, config_.max_queue,
                    [&] { e.last_activity = config_.clock(); },
                    [&]() -> ServiceResponse { return {200, payload(e, e.session->add_click(click), false)}; });
}

ServiceResponse SessionService::undo(const std::string& session_id) {
  evict_idle();
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session '" + session_id + "'");
  Entry& e = *entry;
  return serialized(e.mutex, e.turn, e.next_ticket, e.serving, e.pending, config_.max_queue,
                    [&] { e.last_activity = config_.clock(); }, [&]() -> ServiceResponse {
                      const bool undone = e.session->undo();
                      json j = json::parse(payload(e, e.session->current(), false));
                      j["noop"] = !undone;
                      return {200, j.dump()};
                    });
}

ServiceResponse SessionService::reset(const std::string& session_id) {
  evict_idle();
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session '" + session_id + "'");
  Entry& e = *entry;
  return serialized(e.mutex, e.turn, e.next_ticket, e.serving, e.pending, config_.max_queue,
                    [&] { e.last_activity = config_.clock(); }, [&]() -> ServiceResponse {
                      e.session->reset();
                      return {200, payload(e, e.session->current(), false)};
                    });
}

ServiceResponse SessionService::get_session(const std::string& session_id) {
  evict_idle();
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session '" + session_id + "'");
  Entry& e = *entry;
  return serialized(e.mutex, e.turn, e.next_ticket, e.serving, e.pending, config_.max_queue,
                    [&] { e.last_activity = config_.clock(); },
                    [&]() -> ServiceResponse { return {200, payload(e, e.session->current(), true)}; });
}

ServiceResponse SessionService::list_samples(std::size_t page, std::size_t page_size) {
  if (page_size < 1 || page_size > 500) return error(400, "page_size must lie in [1, 500]");
  json items = json::array();
  const std::size_t first = page * page_size;
  for (std::size_t i = first; i < samples_.size() && i < first + page_size; ++i) {
    items.push_back({{"id", samples_[i].id},
                     {"thumbnail", base64_encode(thumbnail(i))},
                     {"foreground_fraction", samples_[i].foreground_fraction()}});
  }
  return {200, json{{"samples", items}, {"page", page}, {"page_size", page_size}, {"total", samples_.size()}}.dump()};
}

std::size_t SessionService::evict_idle() {
  const auto now = config_.clock();
  std::lock_guard lock(mutex_);
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    Entry& e = *it->second;
    std::lock_guard entry_lock(e.mutex);
    if (e.pending == 0 && now - e.last_activity > config_.idle_timeout) {
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::size_t SessionService::pending_clicks(const std::string& session_id) const {
  std::shared_ptr<Entry> entry;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return 0;
    entry = it->second;
  }
  std::lock_guard lock(entry->mutex);
  return entry->pending;
}

struct HttpServer::Impl {
  SessionService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(SessionService& s) : service(s) {
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body, "application/json");
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Post("/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.create_session(req.body));
    });
    server.Get(R"(/sessions/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.get_session(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/clicks)", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.add_click(req.matches[1], req.body));
    });
    server.Post(R"(/sessions/([^/]+)/undo)", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.undo(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/reset)", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.reset(req.matches[1]));
    });
    server.Get("/samples", [this, reply](const httplib::Request& req, httplib::Response& res) {
      std::size_t page = 0, page_size = 20;
      try {
        if (req.has_param("page")) page = std::stoul(req.get_param_value("page"));
        if (req.has_param("page_size")) page_size = std::stoul(req.get_param_value("page_size"));
      } catch (const std::exception&) {
        reply(res, error(400, "page and page_size must be non-negative integers"));
        return;
      }
      reply(res, service.list_samples(page, page_size));
    });
    server.Get("/health", [reply](const httplib::Request&, httplib::Response& res) {
      reply(res, {200, R"({"status":"ok"})"});
    });
    if (service.config().static_dir) server.set_mount_point("/", service.config().static_dir->string());
  }
};

HttpServer::HttpServer(SessionService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace cgam
