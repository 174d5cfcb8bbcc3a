#include "service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <thread>
#include <vector>

namespace cseg::service {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

SessionConfig session_config_from_json(const json& j, SessionConfig base) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "session config must be a JSON object");
  for (const auto& [raw_key, v] : j.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    try {
      if (key == "algo") {
        base.algorithm = parse_algorithm(v.get<std::string>());
      } else if (key == "lambda") {
        base.lambda = v.get<double>();
      } else if (key == "eta") {
        base.eta = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "time-limit") {
        base.budget.time_limit_seconds = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "node-limit") {
        base.budget.node_limit = v.is_null() ? std::nullopt : std::optional<std::int64_t>(v.get<std::int64_t>());
      } else if (key == "cut-k") {
        base.cut_k = v.get<int>();
      } else if (key == "superpixel-target") {
        base.superpixel_target = v.get<int>();
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown session config key '" + raw_key + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "session config key '" + raw_key + "': " + e.what());
    }
  }
  if (base.lambda < 0) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
  if (base.eta && !(*base.eta > 0)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  if (base.cut_k < 1) throw Error(ErrorCode::InvalidArgument, "cut-k must be at least 1");
  if (base.superpixel_target < 1) throw Error(ErrorCode::InvalidArgument, "superpixel-target must be positive");
  return base;
}

void configure_logging_from_env() {
  const char* level = std::getenv("CSEG_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

namespace {

struct RoundArtifacts {
  int round = 0;
  std::string summary;  // body of GET .../segmentation
  std::string report;
  EncodedMaps maps;
};

struct SessionEntry {
  std::string id;
  std::unique_ptr<Session> session;  // touched only by the holder of `busy`
  std::atomic<bool> busy{false};
  std::atomic<Clock::rep> last_access{0};

  mutable std::mutex mu;  // guards the fields below
  std::vector<std::shared_ptr<const RoundArtifacts>> rounds;
  std::optional<json> last_error;
  std::vector<std::uint8_t> image_png;
  std::vector<std::uint8_t> boundary_png;
  int width = 0;
  int height = 0;
  std::int32_t superpixels = 0;

  void touch() { last_access = Clock::now().time_since_epoch().count(); }
};

json error_body(std::string_view code, const std::string& message) {
  return json{{"error", code}, {"message", message}};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::vector<std::uint8_t> boundary_png(const SuperpixelMap& sp) {
  GrayPng png{sp.width, sp.height, 8, std::vector<std::uint16_t>(sp.ids.size(), 0)};
  for (int y = 0; y < sp.height; ++y)
    for (int x = 0; x < sp.width; ++x) {
      const auto p = static_cast<std::size_t>(y) * sp.width + x;
      if ((x + 1 < sp.width && sp.ids[p + 1] != sp.ids[p]) ||
          (y + 1 < sp.height && sp.ids[p + sp.width] != sp.ids[p]))
        png.values[p] = 255;
    }
  return encode_gray_png(png);
}

std::string artifact_url(const std::string& id, int round, std::string_view name) {
  return "/sessions/" + id + "/segmentation/" + std::string(name) + "?round=" + std::to_string(round);
}

std::shared_ptr<const RoundArtifacts> make_artifacts(const std::string& id, const Session& s, const RoundRecord& r) {
  auto a = std::make_shared<RoundArtifacts>();
  a->round = r.round;
  const json report = s.round_report(r, true);
  a->report = report.dump(2) + "\n";
  a->maps = encode_maps(s.inputs().image, r.maps);
  json summary{{"id", id},
               {"round", r.round},
               {"status", r.status},
               {"report", report},
               {"artifacts",
                {{"class", artifact_url(id, r.round, "class.png")},
                 {"instance", artifact_url(id, r.round, "instance.png")},
                 {"region", artifact_url(id, r.round, "region.png")},
                 {"overlay", artifact_url(id, r.round, "overlay.png")},
                 {"report", artifact_url(id, r.round, "report.json")}}}};
  a->summary = summary.dump();
  return a;
}

}  // namespace

struct Service::Impl {
  ServiceConfig cfg;
  httplib::Server server;
  bool bound = false;

  mutable std::mutex registry_mu;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions;
  std::mt19937_64 id_rng{std::random_device{}()};

  std::mutex workers_mu;
  std::vector<std::pair<std::thread, std::shared_ptr<std::atomic<bool>>>> workers;

  std::mutex sweep_mu;
  std::condition_variable sweep_cv;
  bool stopping = false;
  std::thread sweeper;

  explicit Impl(ServiceConfig c) : cfg(std::move(c)) {}

  std::string new_id() {
    std::lock_guard lock(registry_mu);
    for (;;) {
      char buf[33];
      std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(id_rng()),
                    static_cast<unsigned long long>(id_rng()));
      if (!sessions.count(buf)) return buf;
    }
  }

  std::shared_ptr<SessionEntry> find(const std::string& id) {
    std::lock_guard lock(registry_mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) return nullptr;
    it->second->touch();
    return it->second;
  }

  void routes();
  void create_session(const httplib::Request& req, httplib::Response& res);
  void post_scribbles(const httplib::Request& req, httplib::Response& res);
  void get_segmentation(const httplib::Request& req, httplib::Response& res);
  void get_artifact(const httplib::Request& req, httplib::Response& res);
  void get_session(const httplib::Request& req, httplib::Response& res);

  // Runs one round on an entry whose busy flag is held; returns the artifacts or
  // records the error and rethrows.
  std::shared_ptr<const RoundArtifacts> run_round(SessionEntry& e, const ScribbleSet& additions);
  void spawn(std::function<void()> job);
  void reap_workers(bool all);
};

void Service::Impl::routes() {
  server.set_payload_max_length(cfg.max_upload_bytes);
  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::info("{} {} -> {}", req.method, req.path, res.status);
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("unhandled: {}", what);
    send_json(res, 500, error_body("Internal", what));
  });

  server.Post("/sessions", [this](const auto& req, auto& res) { create_session(req, res); });
  server.Post(R"(/sessions/([0-9a-f]+)/scribbles)", [this](const auto& req, auto& res) { post_scribbles(req, res); });
  server.Get(R"(/sessions/([0-9a-f]+)/segmentation)", [this](const auto& req, auto& res) { get_segmentation(req, res); });
  server.Get(R"(/sessions/([0-9a-f]+)/segmentation/(class\.png|instance\.png|region\.png|overlay\.png|report\.json))",
             [this](const auto& req, auto& res) { get_artifact(req, res); });
  server.Get(R"(/sessions/([0-9a-f]+)/(image\.png|superpixels\.png))",
             [this](const auto& req, auto& res) { get_artifact(req, res); });
  server.Get(R"(/sessions/([0-9a-f]+))", [this](const auto& req, auto& res) { get_session(req, res); });
  server.Delete(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(registry_mu);
    auto it = sessions.find(req.matches[1]);
    if (it == sessions.end()) return send_json(res, 404, error_body("NotFound", "unknown session"));
    if (it->second->busy) return send_json(res, 409, error_body("Busy", "a round is in flight"));
    sessions.erase(it);
    res.status = 204;
  });
}

void Service::Impl::create_session(const httplib::Request& req, httplib::Response& res) {
  if (!req.is_multipart_form_data())
    return send_json(res, 400, error_body("Malformed", "expected multipart/form-data"));
  if (!req.has_file("image")) return send_json(res, 400, error_body("Malformed", "missing 'image' part"));

  SessionConfig config = cfg.session;
  if (req.has_file("config")) {
    const auto text = req.get_file_value("config").content;
    try {
      config = session_config_from_json(json::parse(text), config);
    } catch (const json::exception& e) {
      return send_json(res, 400, error_body("Malformed", std::string("config: ") + e.what()));
    } catch (const Error& e) {
      return send_json(res, 400, error_body(to_string(e.code()), e.what()));
    }
  }

  const std::string id = new_id();
  const fs::path tmp = fs::temp_directory_path() / ("cseg-upload-" + id);
  std::unique_ptr<Session> session;
  try {
    fs::create_directories(tmp);
    auto stage = [&](const char* part) -> std::optional<fs::path> {
      if (!req.has_file(part)) return std::nullopt;
      const auto& content = req.get_file_value(part).content;
      const fs::path p = tmp / part;
      write_bytes(p, {reinterpret_cast<const std::uint8_t*>(content.data()), content.size()});
      return p;
    };
    SessionInputs in;
    in.image = load_image(*stage("image"));
    if (auto p = stage("superpixels")) in.superpixels = load_superpixels(*p);
    if (auto p = stage("features")) in.features = load_field(*p, false);
    if (auto p = stage("probmap")) in.probabilities = load_field(*p, true);
    if (auto p = stage("truth")) in.truth = load_truth(*p);
    session = std::make_unique<Session>(std::move(in), config);
  } catch (const Error& e) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    return send_json(res, 422, error_body(to_string(e.code()), e.what()));
  }
  std::error_code ec;
  fs::remove_all(tmp, ec);

  auto entry = std::make_shared<SessionEntry>();
  entry->id = id;
  entry->width = session->inputs().image.width;
  entry->height = session->inputs().image.height;
  entry->superpixels = session->base_superpixels().count;
  {
    const auto& img = session->inputs().image;
    std::vector<std::uint8_t> rgb(img.pixel_count() * 3);
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
      for (int c = 0; c < 3; ++c) {
        const float v = img.data[p * img.channels + std::min(c, img.channels - 1)];
        rgb[p * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
      }
    entry->image_png = encode_rgb_png(img.width, img.height, rgb);
    entry->boundary_png = boundary_png(session->base_superpixels());
  }
  entry->session = std::move(session);
  entry->touch();
  {
    std::lock_guard lock(registry_mu);
    sessions.emplace(id, entry);
  }
  spdlog::debug("session {} created ({}x{}, {} superpixels)", id, entry->width, entry->height, entry->superpixels);
  send_json(res, 201,
            json{{"id", id},
                 {"width", entry->width},
                 {"height", entry->height},
                 {"superpixels", entry->superpixels},
                 {"config", entry->session->config()},
                 {"links",
                  {{"scribbles", "/sessions/" + id + "/scribbles"},
                   {"segmentation", "/sessions/" + id + "/segmentation"},
                   {"image", "/sessions/" + id + "/image.png"},
                   {"superpixels", "/sessions/" + id + "/superpixels.png"}}}});
}

std::shared_ptr<const RoundArtifacts> Service::Impl::run_round(SessionEntry& e, const ScribbleSet& additions) {
  try {
    const RoundRecord& rec = e.session->run_round(additions, true);
    auto art = make_artifacts(e.id, *e.session, rec);
    std::lock_guard lock(e.mu);
    e.rounds.push_back(art);
    e.last_error.reset();
    return art;
  } catch (const PolicyError& err) {
    std::lock_guard lock(e.mu);
    e.last_error = json{{"error", "PolicyViolation"}, {"message", err.what()}, {"violations", err.report()}};
    throw;
  } catch (const Error& err) {
    std::lock_guard lock(e.mu);
    e.last_error = error_body(to_string(err.code()), err.what());
    throw;
  }
}

void Service::Impl::post_scribbles(const httplib::Request& req, httplib::Response& res) {
  auto entry = find(req.matches[1]);
  if (!entry) return send_json(res, 404, error_body("NotFound", "unknown session"));

  ScribbleSet additions;
  try {
    additions = parse_scribbles(req.body);
  } catch (const Error& e) {
    return send_json(res, 400, error_body(to_string(e.code()), e.what()));
  }

  bool expected = false;
  if (!entry->busy.compare_exchange_strong(expected, true))
    return send_json(res, 409, error_body("Busy", "a round is already in flight for this session"));

  // Policy is checked up front so that asynchronous submissions still get their 422.
  {
    ScribbleSet merged = entry->session->scribbles();
    for (const auto& [c, kind] : additions.class_map) merged.class_map[c] = kind;
    merged.scribbles.insert(merged.scribbles.end(), additions.scribbles.begin(), additions.scribbles.end());
    const PolicyReport report = validate_policy(merged, entry->width, entry->height);
    if (!report.ok()) {
      entry->busy = false;
      return send_json(res, 422,
                       json{{"error", "PolicyViolation"}, {"message", "scribble set violates the drawing policy"},
                            {"violations", report}});
    }
  }

  if (cfg.async) {
    const int next = static_cast<int>(entry->session->history().size());
    spawn([this, entry, additions] {
      try {
        run_round(*entry, additions);
      } catch (const std::exception& e) {
        spdlog::warn("session {}: round failed: {}", entry->id, e.what());
      }
      entry->touch();
      entry->busy = false;
    });
    return send_json(res, 202,
                     json{{"id", entry->id}, {"round", next}, {"state", "running"},
                          {"poll", "/sessions/" + entry->id}});
  }

  try {
    auto art = run_round(*entry, additions);
    entry->busy = false;
    entry->touch();
    res.status = 200;
    res.set_content(art->summary, "application/json");
  } catch (const PolicyError& e) {
    entry->busy = false;
    send_json(res, 422, json{{"error", "PolicyViolation"}, {"message", e.what()}, {"violations", e.report()}});
  } catch (const Error& e) {
    entry->busy = false;
    send_json(res, 422, error_body(to_string(e.code()), e.what()));
  } catch (...) {
    entry->busy = false;
    throw;
  }
}

namespace {

// Resolves ?round=; latest when omitted. Null when the round does not exist.
std::shared_ptr<const RoundArtifacts> pick_round(const SessionEntry& e, const httplib::Request& req, bool& bad) {
  bad = false;
  std::lock_guard lock(e.mu);
  if (!req.has_param("round")) return e.rounds.empty() ? nullptr : e.rounds.back();
  const auto text = req.get_param_value("round");
  int r = -1;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), r);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    bad = true;
    return nullptr;
  }
  if (r < 0 || r >= static_cast<int>(e.rounds.size())) return nullptr;
  return e.rounds[r];
}

}  // namespace

void Service::Impl::get_segmentation(const httplib::Request& req, httplib::Response& res) {
  auto entry = find(req.matches[1]);
  if (!entry) return send_json(res, 404, error_body("NotFound", "unknown session"));
  bool bad = false;
  auto art = pick_round(*entry, req, bad);
  if (bad) return send_json(res, 400, error_body("Malformed", "round must be a non-negative integer"));
  if (!art) return send_json(res, 404, error_body("NotFound", "no such round"));
  res.status = 200;
  res.set_content(art->summary, "application/json");
}

void Service::Impl::get_artifact(const httplib::Request& req, httplib::Response& res) {
  auto entry = find(req.matches[1]);
  if (!entry) return send_json(res, 404, error_body("NotFound", "unknown session"));
  const std::string name = req.matches[2];
  auto send_png = [&](const std::vector<std::uint8_t>& bytes) {
    res.status = 200;
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
  };
  if (name == "image.png") return send_png(entry->image_png);
  if (name == "superpixels.png") return send_png(entry->boundary_png);

  bool bad = false;
  auto art = pick_round(*entry, req, bad);
  if (bad) return send_json(res, 400, error_body("Malformed", "round must be a non-negative integer"));
  if (!art) return send_json(res, 404, error_body("NotFound", "no such round"));
  if (name == "report.json") {
    res.status = 200;
    res.set_content(art->report, "application/json");
  } else if (name == "class.png") {
    send_png(art->maps.class_png);
  } else if (name == "instance.png") {
    send_png(art->maps.instance_png);
  } else if (name == "region.png") {
    send_png(art->maps.region_png);
  } else {
    send_png(art->maps.overlay_png);
  }
}

void Service::Impl::get_session(const httplib::Request& req, httplib::Response& res) {
  auto entry = find(req.matches[1]);
  if (!entry) return send_json(res, 404, error_body("NotFound", "unknown session"));
  json body{{"id", entry->id},
            {"width", entry->width},
            {"height", entry->height},
            {"superpixels", entry->superpixels},
            {"state", entry->busy ? "running" : "idle"}};
  std::lock_guard lock(entry->mu);
  body["rounds"] = entry->rounds.size();
  body["latest_round"] = entry->rounds.empty() ? json(nullptr) : json(entry->rounds.back()->round);
  body["last_error"] = entry->last_error ? *entry->last_error : json(nullptr);
  send_json(res, 200, body);
}

void Service::Impl::spawn(std::function<void()> job) {
  reap_workers(false);
  auto done = std::make_shared<std::atomic<bool>>(false);
  std::lock_guard lock(workers_mu);
  workers.emplace_back(std::thread([job = std::move(job), done] {
                         job();
                         *done = true;
                       }),
                       done);
}

void Service::Impl::reap_workers(bool all) {
  std::vector<std::thread> finished;
  {
    std::lock_guard lock(workers_mu);
    for (auto it = workers.begin(); it != workers.end();) {
      if (all || *it->second) {
        finished.push_back(std::move(it->first));
        it = workers.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& t : finished) t.join();
}

Service::Service(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {
  impl_->routes();
  const auto interval = std::clamp(impl_->cfg.idle_timeout / 4, std::chrono::seconds(1), std::chrono::seconds(30));
  impl_->sweeper = std::thread([this, interval] {
    std::unique_lock lock(impl_->sweep_mu);
    while (!impl_->sweep_cv.wait_for(lock, interval, [this] { return impl_->stopping; })) {
      lock.unlock();
      const auto n = expire_idle(Clock::now());
      if (n) spdlog::info("expired {} idle session(s)", n);
      lock.lock();
    }
  });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(impl_->sweep_mu);
    impl_->stopping = true;
  }
  impl_->sweep_cv.notify_all();
  impl_->sweeper.join();
  impl_->reap_workers(true);
}

int Service::bind() {
  const int port = impl_->cfg.port == 0 ? impl_->server.bind_to_any_port(impl_->cfg.bind)
                                        : (impl_->server.bind_to_port(impl_->cfg.bind, impl_->cfg.port)
                                               ? impl_->cfg.port
                                               : -1);
  if (port < 0)
    throw Error(ErrorCode::IoError, "cannot bind " + impl_->cfg.bind + ":" + std::to_string(impl_->cfg.port));
  impl_->bound = true;
  spdlog::info("listening on {}:{}", impl_->cfg.bind, port);
  return port;
}

void Service::run() {
  if (!impl_->bound) throw Error(ErrorCode::InvalidArgument, "bind() must precede run()");
  impl_->server.listen_after_bind();
}

void Service::stop() { impl_->server.stop(); }

std::size_t Service::expire_idle(Clock::time_point now) {
  std::lock_guard lock(impl_->registry_mu);
  std::size_t removed = 0;
  for (auto it = impl_->sessions.begin(); it != impl_->sessions.end();) {
    const Clock::time_point last{Clock::duration(it->second->last_access.load())};
    if (!it->second->busy && now - last > impl_->cfg.idle_timeout) {
      spdlog::debug("session {} expired", it->first);
      it = impl_->sessions.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t Service::session_count() const {
  std::lock_guard lock(impl_->registry_mu);
  return impl_->sessions.size();
}

}  // namespace cseg::service
