#pragma once

#include <memory>
#include <string>
#include <thread>

#include "imn/service/api.hpp"

namespace httplib {
class Server;
}

namespace imn {

inline constexpr const char* kDefaultHost = "127.0.0.1";
inline constexpr int kDefaultPort = 8080;

/// JSON-over-HTTP front end for an ExplorerService. The service must outlive
/// the server.
class HttpServer {
 public:
  explicit HttpServer(const ExplorerService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port; throws std::runtime_error if binding fails.
  int start(const std::string& host, int port);

  /// Binds and serves on the calling thread until stop() is called.
  void listen(const std::string& host, int port);

  void stop();
  int port() const noexcept { return port_; }

 private:
  const ExplorerService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace imn
