// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/service.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <thread>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "iposter/layout_json.hpp"
#include "iposter/metrics.hpp"

namespace iposter {

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::string s = text;
  if (s.rfind("data:", 0) == 0) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw InvalidInput("malformed data URL");
    s = s.substr(comma + 1);
  }
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; }), s.end());
  if (s.size() % 4 != 0) throw InvalidInput("base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out(s.size() / 4 * 3);
  if (s.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(s.data()), static_cast<int>(s.size()));
  if (n < 0) throw InvalidInput("invalid base64");
  std::size_t pad = 0;
  if (s.back() == '=') ++pad;
  if (s.size() >= 2 && s[s.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out((bytes.size() + 2) / 3 * 4 + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

namespace {

ServiceResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

std::uint64_t fresh_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace

struct PosterService::Job {
  std::shared_ptr<const LoadedModel> model;
  bool refine = false;
  Task task = Task::Unconstrained;
  Layout user;
  std::vector<bool> anchors;
  std::optional<int> free_slots;
  double strength = kDefaultRefineStrength;
  int num_samples = 1;
  std::uint64_t seed = 0;
  std::shared_ptr<const Canvas> canvas;
  std::string canvas_id;
  std::shared_ptr<void> slot;
};

PosterService::PosterService(ServiceConfig cfg) : cfg_(cfg) {
  if (cfg_.max_inflight < 1 || cfg_.max_samples < 1) throw InvalidInput("service: limits must be >= 1");
}

void PosterService::set_model(std::shared_ptr<const LoadedModel> model) {
  std::lock_guard lock(mu_);
  model_ = std::move(model);
}

std::shared_ptr<const LoadedModel> PosterService::model() const {
  std::lock_guard lock(mu_);
  return model_;
}

ServiceResponse PosterService::health() const { return {200, {{"ready", ready()}}}; }

ServiceResponse PosterService::model_info() const {
  const auto m = model();
  if (!m) return error(503, "model not loaded");
  return {200, m->describe()};
}

std::shared_ptr<void> PosterService::acquire() {
  int cur = inflight_.load();
  do {
    if (cur >= cfg_.max_inflight) return nullptr;
  } while (!inflight_.compare_exchange_weak(cur, cur + 1));
  // the pointer only needs to be non-null; the deleter releases the slot
  return std::shared_ptr<void>(this, [this](void*) { --inflight_; });
}

void PosterService::drain() {
  draining_ = true;
  while (inflight_.load() > 0) std::this_thread::sleep_for(std::chrono::milliseconds(10));
}

std::shared_ptr<const PosterService::Canvas> PosterService::resolve_canvas(const nlohmann::json& req,
                                                                         std::string& canvas_id) {
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lock(mu_);
  for (auto it = cache_.begin(); it != cache_.end();) {
    it = now - it->second->last_used > cfg_.cache_ttl ? cache_.erase(it) : std::next(it);
  }
  if (req.contains("canvas_id") && !req.at("canvas_id").is_null()) {
    if (!req.at("canvas_id").is_string()) throw InvalidInput("canvas_id must be a string");
    canvas_id = req.at("canvas_id").get<std::string>();
    auto it = cache_.find(canvas_id);
    if (it == cache_.end()) throw InvalidInput("unknown or expired canvas_id");
    it->second->last_used = now;
    return it->second;
  }
  for (const char* key : {"canvas_png", "saliency_png"}) {
    if (!req.contains(key) || !req.at(key).is_string()) {
      throw InvalidInput(std::string("missing '") + key + "' (base64 PNG) or 'canvas_id'");
    }
  }
  const auto canvas_bytes = base64_decode(req.at("canvas_png").get<std::string>());
  const auto sal_bytes = base64_decode(req.at("saliency_png").get<std::string>());
  auto entry = std::make_shared<Canvas>();
  entry->canvas = decode_png(canvas_bytes);
  entry->saliency = decode_png(sal_bytes);
  if (entry->canvas.channels() != 3) throw InvalidInput("canvas must be an RGB PNG");
  if (entry->saliency.channels() == 3) entry->saliency = to_grayscale(entry->saliency);
  if (entry->canvas.width() != entry->saliency.width() || entry->canvas.height() != entry->saliency.height()) {
    throw InvalidInput("canvas and saliency dimensions differ");
  }
  entry->last_used = now;
  std::vector<std::uint8_t> both(canvas_bytes);
  both.insert(both.end(), sal_bytes.begin(), sal_bytes.end());
  canvas_id = sha256_hex(both).substr(0, 32);
  if (auto it = cache_.find(canvas_id); it != cache_.end()) {
    it->second->last_used = now;
    return it->second;
  }
  while (!cache_.empty() && cache_.size() >= cfg_.cache_capacity) {
    auto oldest = std::min_element(cache_.begin(), cache_.end(), [](const auto& a, const auto& b) {
      return a.second->last_used < b.second->last_used;
    });
    cache_.erase(oldest);
  }
  if (cfg_.cache_capacity > 0) cache_.emplace(canvas_id, entry);
  return entry;
}

std::optional<ServiceResponse> PosterService::parse_job(const std::string& body, bool refine, Job& job) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return error(400, std::string("invalid JSON: ") + e.what());
  }
  if (!req.is_object()) return error(400, "request body must be a JSON object");
  job.model = model();
  if (!job.model) return error(503, "model not loaded");
  if (draining_) return error(503, "server is shutting down");
  const int n = job.model->config.max_elements;
  try {
    if (refine) {
      job.task = Task::Refinement;
    } else {
      if (!req.contains("task") || !req.at("task").is_string()) throw InvalidInput("missing 'task'");
      const auto task = parse_task(req.at("task").get<std::string>());
      if (!task) throw InvalidInput("unknown task '" + req.at("task").get<std::string>() + "'");
      job.task = *task;
    }
    job.refine = job.task == Task::Refinement;

    nlohmann::json elements = nlohmann::json::array();
    if (req.contains("elements")) {
      elements = req.at("elements");
    } else if (req.contains("layout")) {
      if (!req.at("layout").is_object() || !req.at("layout").contains("elements")) {
        throw InvalidInput("'layout' must be an object with 'elements'");
      }
      elements = req.at("layout").at("elements");
    }
    auto parsed = parse_user_elements(elements, job.task, n);
    job.user = std::move(parsed.layout);
    job.anchors = std::move(parsed.anchors);

    if (req.contains("free_slots")) {
      if (job.task != Task::Completion) throw InvalidInput("'free_slots' is only valid for completion");
      if (!req.at("free_slots").is_number_integer()) throw InvalidInput("'free_slots' must be an integer");
      const int slots = req.at("free_slots").get<int>();
      if (slots < 0 || slots > n - static_cast<int>(job.user.size())) throw InvalidInput("'free_slots' out of range");
      job.free_slots = slots;
    }
    if (req.contains("strength")) {
      if (!job.refine) throw InvalidInput("'strength' is only valid for refinement");
      if (!req.at("strength").is_number()) throw InvalidInput("'strength' must be a number");
      job.strength = req.at("strength").get<double>();
    }
    if (job.refine && !(job.strength > 0.0 && job.strength <= 1.0)) throw InvalidInput("'strength' must lie in (0, 1]");

    if (req.contains("num_samples")) {
      if (!req.at("num_samples").is_number_integer()) throw InvalidInput("'num_samples' must be an integer");
      job.num_samples = req.at("num_samples").get<int>();
    }
    if (job.num_samples < 1 || job.num_samples > cfg_.max_samples) {
      throw InvalidInput("'num_samples' must lie in [1, " + std::to_string(cfg_.max_samples) + "]");
    }
    if (req.contains("seed") && !req.at("seed").is_null()) {
      if (!req.at("seed").is_number_unsigned()) throw InvalidInput("'seed' must be a non-negative integer");
      job.seed = req.at("seed").get<std::uint64_t>();
    } else {
      job.seed = fresh_seed();
    }
    job.canvas = resolve_canvas(req, job.canvas_id);
  } catch (const InvalidInput& e) {
    return error(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    return error(400, e.what());
  }
  job.slot = acquire();
  if (!job.slot) return error(429, "too many in-flight sampling runs");
  return std::nullopt;
}

ServiceResponse PosterService::run(const Job& job, const Emit* emit) {
  const auto start = std::chrono::steady_clock::now();
  const LoadedModel& m = *job.model;
  const Condition cond = make_condition(job.canvas->canvas, job.canvas->saliency, m.config);
  const ConstraintSpec spec = job.refine ? make_constraint(Task::Refinement, job.user, {}, m.config.max_elements, m.codec)
                                         : make_constraint(job.task, job.user, job.anchors, m.config.max_elements,
                                                           m.codec, job.free_slots);
  nlohmann::json samples = nlohmann::json::array();
  for (int k = 0; k < job.num_samples; ++k) {
    const std::uint64_t seed = job.seed + static_cast<std::uint64_t>(k);
    StepCallback on_step;
    if (emit) {
      on_step = [&](int t, const LayoutState& x) {
        return (*emit)("step", {{"sample", k}, {"t", t}, {"layout", layout_to_json(finalize_layout(x, spec, job.user, m.codec))}});
      };
    }
    const SampleResult r = job.refine ? refine_layout(m, cond, job.user, job.strength, seed, false, on_step)
                                      : generate_layout(m, cond, spec, seed, false, on_step);
    if (r.aborted) return error(499, "client disconnected");
    const Layout layout = finalize_layout(r.final_state, spec, job.user, m.codec);
    nlohmann::json item = {{"sample", k},
                           {"seed", seed},
                           {"layout", layout_to_json(layout)},
                           {"metrics", iposter::evaluate(layout, job.canvas->canvas, job.canvas->saliency).to_json()}};
    if (emit && !(*emit)("done", item)) return error(499, "client disconnected");
    samples.push_back(std::move(item));
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return {200,
          {{"task", std::string(task_name(job.task))},
           {"canvas_id", job.canvas_id},
           {"samples", std::move(samples)},
           {"timing", {{"milliseconds", ms}}}}};
}

ServiceResponse PosterService::generate(const std::string& body) {
  Job job;
  if (auto err = parse_job(body, false, job)) return *err;
  return run(job, nullptr);
}

ServiceResponse PosterService::refine(const std::string& body) {
  Job job;
  if (auto err = parse_job(body, true, job)) return *err;
  return run(job, nullptr);
}

PosterService::StreamRun PosterService::prepare_stream(const std::string& body) {
  auto job = std::make_shared<Job>();
  StreamRun out;
  if (auto err = parse_job(body, false, *job)) {
    out.error = *err;
    return out;
  }
  out.run = [this, job](const Emit& emit) { run(*job, &emit); };
  return out;
}

ServiceResponse PosterService::generate_stream(const std::string& body, const Emit& emit) {
  auto job = std::make_shared<Job>();
  if (auto err = parse_job(body, false, *job)) return *err;
  return run(*job, &emit);
}

ServiceResponse PosterService::evaluate(const std::string& body) {
  try {
    const auto req = nlohmann::json::parse(body);
    if (!req.is_object() || !req.contains("layout")) throw InvalidInput("missing 'layout'");
    const Layout layout = layout_from_json(req.at("layout"));
    std::string id;
    const auto canvas = resolve_canvas(req, id);
    auto body_json = iposter::evaluate(layout, canvas->canvas, canvas->saliency).to_json();
    body_json["canvas_id"] = id;
    return {200, body_json};
  } catch (const InvalidInput& e) {
    return error(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    return error(400, e.what());
  }
}

struct HttpServer::Impl {
  explicit Impl(PosterService& s) : svc(s) {}
  PosterService& svc;
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(PosterService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  auto& svc = impl_->svc;
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  svr.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  svr.Get("/v1/health", [&svc](const httplib::Request&, httplib::Response& res) { reply(res, svc.health()); });
  svr.Get("/v1/model", [&svc](const httplib::Request&, httplib::Response& res) { reply(res, svc.model_info()); });
  svr.Post("/v1/generate", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.generate(req.body));
  });
  svr.Post("/v1/refine", [&svc](const httplib::Request& req, httplib::Response& res) { reply(res, svc.refine(req.body)); });
  svr.Post("/v1/evaluate", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.evaluate(req.body));
  });
  svr.Post("/v1/generate/stream", [&svc](const httplib::Request& req, httplib::Response& res) {
    auto prepared = svc.prepare_stream(req.body);
    if (!prepared.run) {
      reply(res, prepared.error);
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    auto run = std::move(prepared.run);
    res.set_chunked_content_provider("text/event-stream", [run](std::size_t, httplib::DataSink& sink) {
      run([&sink](const std::string& event, const nlohmann::json& data) {
        const std::string msg = "event: " + event + "\ndata: " + data.dump() + "\n\n";
        return sink.is_writable() && sink.write(msg.data(), msg.size());
      });
      sink.done();
      return true;
    });
  });
  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", what);
    reply(res, error(500, what));
  });
  svr.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
}

HttpServer::~HttpServer() = default;

bool HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
    return port_ > 0;
  }
  if (!impl_->server.bind_to_port(host, port)) return false;
  port_ = port;
  return true;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace iposter
