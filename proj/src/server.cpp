#include "sketchfill/server.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "httplib.h"
#include "sketchfill/api.hpp"
#include "sketchfill/error.hpp"

namespace sketchfill {

EditService::EditService(std::shared_ptr<const Editor> editor)
    : editor_(std::move(editor)), server_(std::make_unique<httplib::Server>()) {
  if (!editor_) throw InvalidArgument("EditService needs an editor");
  const auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpReply r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->Get("/v1/health", route);
  server_->Post("/v1/edit", route);
  server_->Post("/v1/copy-paste", route);
  server_->Post("/v1/sketch-preview", route);
}

EditService::~EditService() = default;

HttpReply EditService::internal_error(const std::string& what) const {
  // Opaque id: a per-process counter mixed with the clock, enough to find the stderr line.
  const auto now = std::chrono::system_clock::now().time_since_epoch().count();
  std::ostringstream id;
  id << std::hex << std::setw(16) << std::setfill('0')
     << (static_cast<std::uint64_t>(now) ^ (errors_.fetch_add(1) * 0x9e3779b97f4a7c15ull));
  std::fprintf(stderr, "error %s: %s\n", id.str().c_str(), what.c_str());
  return {500, "{\"error\":\"internal error\",\"id\":\"" + id.str() + "\"}"};
}

HttpReply EditService::handle(const std::string& method, const std::string& path, const std::string& body) const {
  try {
    if (path == "/v1/health") {
      if (method != "GET") return {405, api::error_response("use GET", "")};
      return {200, api::health_response(editor_->model_id())};
    }
    if (path != "/v1/edit" && path != "/v1/copy-paste" && path != "/v1/sketch-preview")
      return {404, api::error_response("no such endpoint", "")};
    if (method != "POST") return {405, api::error_response("use POST", "")};
    if (path == "/v1/edit") return {200, api::image_response(editor_->edit(api::parse_edit(body)))};
    if (path == "/v1/copy-paste") return {200, api::image_response(editor_->copy_paste(api::parse_copy_paste(body)))};
    return {200, api::preview_response(editor_->preview(api::parse_edit(body)))};
  } catch (const PayloadError& e) {
    return {400, api::error_response(e.what(), e.field())};
  } catch (const RequestError& e) {
    return {422, api::error_response(e.what(), e.field())};
  } catch (const std::exception& e) {
    return internal_error(e.what());
  }
}

int EditService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void EditService::run() {
  if (!server_->listen_after_bind()) throw IoError("server stopped with an error");
}

void EditService::wait_until_ready() const { server_->wait_until_ready(); }

void EditService::stop() { server_->stop(); }

}  // namespace sketchfill
