#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "sketchfill/editor.hpp"

namespace httplib {
class Server;
}

namespace sketchfill {

struct HttpReply {
  int status = 200;
  std::string body;
};

/// Stateless /v1 edit API over a shared, read-only Editor.
///
///   GET  /v1/health          -> {"status": "ok", "model": hash}
///   POST /v1/edit            -> {"image": b64png}
///   POST /v1/copy-paste      -> {"image": b64png}
///   POST /v1/sketch-preview  -> conditioning channels, no generator forward
///
/// Malformed payloads get 400 with a field path, semantic violations 422, anything else 500
/// with an opaque error id (details go to stderr only).
class EditService {
 public:
  explicit EditService(std::shared_ptr<const Editor> editor);
  ~EditService();
  EditService(const EditService&) = delete;
  EditService& operator=(const EditService&) = delete;

  /// Socket-free dispatch, shared by the HTTP handlers.
  HttpReply handle(const std::string& method, const std::string& path, const std::string& body) const;

  /// Binds to host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  void run();
  /// Blocks until run() is accepting connections.
  void wait_until_ready() const;
  void stop();

  const Editor& editor() const noexcept { return *editor_; }

 private:
  HttpReply internal_error(const std::string& what) const;

  std::shared_ptr<const Editor> editor_;
  std::unique_ptr<httplib::Server> server_;
  mutable std::atomic<std::uint64_t> errors_{0};
};

}  // namespace sketchfill
