#pragma once

#include <memory>
#include <string>

#include "mews/common.hpp"
#include "mews/engine.hpp"

namespace mews {

// HTTP status for a library error code.
int http_status(ErrorCode code) noexcept;
// {"error": {"code": ..., "message": ...}}
Json error_doc(ErrorCode code, std::string_view message);

// JSON API over an Engine. Handlers run on the server's thread pool; the
// engine serializes writes.
class Service {
 public:
  explicit Service(Engine& engine);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  bool run();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mews
