// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iposter/canvas.hpp"
#include "iposter/inference.hpp"
#include "json.hpp"

namespace iposter {

struct ServiceConfig {
  int max_inflight = 4;
  int max_samples = 32;
  std::size_t cache_capacity = 64;
  std::chrono::seconds cache_ttl{600};
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Transport-independent request handling. Every handler is safe to call concurrently.
class PosterService {
 public:
  explicit PosterService(ServiceConfig cfg = {});

  void set_model(std::shared_ptr<const LoadedModel> model);
  std::shared_ptr<const LoadedModel> model() const;
  bool ready() const { return model() != nullptr; }

  ServiceResponse health() const;
  ServiceResponse model_info() const;
  ServiceResponse generate(const std::string& body);
  ServiceResponse refine(const std::string& body);
  ServiceResponse evaluate(const std::string& body);

  /// Streaming generation. `emit(event, data)` receives one "step" event per denoising step and a
  /// "done" event per sample; returning false aborts the run. A non-200 result means nothing was emitted.
  using Emit = std::function<bool(const std::string& event, const nlohmann::json& data)>;
  ServiceResponse generate_stream(const std::string& body, const Emit& emit);

  /// Validated streaming run; `run` is empty when `error` holds the rejection.
  struct StreamRun {
    ServiceResponse error;
    std::function<void(const Emit&)> run;
  };
  StreamRun prepare_stream(const std::string& body);

  /// Stops admitting sampling runs (503) and waits until the in-flight ones finish.
  void drain();
  int inflight() const { return inflight_.load(); }

 private:
  struct Canvas {
    Raster canvas;
    Raster saliency;
    std::chrono::steady_clock::time_point last_used;
  };
  struct Job;

  std::optional<ServiceResponse> parse_job(const std::string& body, bool refine, Job& job);
  std::shared_ptr<const Canvas> resolve_canvas(const nlohmann::json& req, std::string& canvas_id);
  ServiceResponse run(const Job& job, const Emit* emit);
  /// Holds one in-flight slot until released; null when the limit is reached.
  std::shared_ptr<void> acquire();

  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::shared_ptr<const LoadedModel> model_;
  std::map<std::string, std::shared_ptr<Canvas>> cache_;
  std::atomic<int> inflight_{0};
  std::atomic<bool> draining_{false};
};

/// HTTP front end for a PosterService.
class HttpServer {
 public:
  explicit HttpServer(PosterService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the listening socket; false when the port is unavailable. Port 0 picks a free port.
  bool bind(const std::string& host, int port);
  int port() const { return port_; }
  /// Serves until stop(); returns after in-flight requests complete.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

std::vector<std::uint8_t> base64_decode(const std::string& text);
std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace iposter
