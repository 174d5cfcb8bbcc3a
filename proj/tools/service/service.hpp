#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "cseg/session.hpp"

namespace cseg::service {

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_upload_bytes = 32u * 1024u * 1024u;
  std::chrono::seconds idle_timeout{30 * 60};
  bool async = false;
  SessionConfig session;  // defaults for new sessions; the multipart "config" part overrides
};

/// Applies the keys of a session config object ("algo", "lambda", "eta",
/// "time-limit", "node-limit", "cut-k", "superpixel-target") on top of `base`.
/// Throws InvalidArgument for unknown keys or badly typed values.
SessionConfig session_config_from_json(const nlohmann::json& j, SessionConfig base);

/// Reads CSEG_LOG (trace, debug, info, warn, error, off) for the service logger.
void configure_logging_from_env();

class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the bound port; throws IoError when binding fails.
  int bind();
  /// Serves requests until stop() is called. Requires bind().
  void run();
  void stop();

  /// Drops sessions idle for longer than the configured timeout with no round
  /// in flight. Returns the number removed.
  std::size_t expire_idle(std::chrono::steady_clock::time_point now);
  std::size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cseg::service
