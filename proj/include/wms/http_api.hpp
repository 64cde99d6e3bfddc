#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "wms/service.hpp"

namespace httplib {
class Server;
}

namespace wms {

struct HttpOptions {
  std::vector<std::string> allowed_origins{"http://localhost:5173", "http://localhost:3000",
                                           "http://127.0.0.1:5173"};
  std::chrono::milliseconds heartbeat{15'000};
  std::size_t worker_threads = 64;
  std::size_t multipart_overhead_bytes = 1024 * 1024;
};

/// Event as delivered to clients: user snapshots are reduced to their public view.
[[nodiscard]] Json wire_event(const MutationEvent& e);

/// The REST surface under /api plus the text/event-stream feed.
class HttpApi {
public:
  HttpApi(Service& service, HttpOptions options);
  ~HttpApi();

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds host:port (port 0 picks a free one). Returns the bound port, or -1.
  int bind(const std::string& host, int port);

  /// Serves until stop(). Returns false if the listener failed.
  bool listen();

  /// Closes event streams and the listener; safe from any thread.
  void stop();

  void wait_until_ready() const;

private:
  void register_routes();

  Service& service_;
  HttpOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stopping_{false};
};

}  // namespace wms
