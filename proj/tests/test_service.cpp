// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include <thread>

#include "doctest.h"
#include "iposter/layout_json.hpp"
#include "iposter/metrics.hpp"
#include "iposter/service.hpp"
#include "iposter/training.hpp"
#include "test_support.hpp"

// after Eigen: resolv.h defines a `_res` macro that clashes with Eigen internals
#include "httplib.h"

using namespace iposter;
using nlohmann::json;

namespace {

struct Env {
  std::shared_ptr<const LoadedModel> model;
  PosterSample sample;
  std::string canvas_b64;
  std::string saliency_b64;

  Env() {
    const ModelConfig cfg = test::tiny_model();
    auto samples = generate_synthetic(test::tiny_synth(4)).samples;
    std::vector<TrainingExample> ex;
    for (const auto& s : samples) ex.push_back(prepare_example(s, cfg, CategoryCodec(cfg.num_categories)));
    TrainConfig tc;
    tc.batch_size = 4;
    tc.eval_batch = 4;
    Trainer tr(cfg, tc, ex);
    tr.init();
    tr.step();
    model = std::make_shared<const LoadedModel>(tr.checkpoint(), "test");
    sample = samples.front();
    canvas_b64 = base64_encode(encode_png(sample.canvas));
    saliency_b64 = base64_encode(encode_png(sample.saliency));
  }

  json request(const std::string& task, json elements = json::array()) const {
    return {{"task", task},
            {"elements", std::move(elements)},
            {"seed", 42},
            {"canvas_png", canvas_b64},
            {"saliency_png", saliency_b64}};
  }
};

const Env& env() {
  static const Env e;
  return e;
}

json without_timing(json body) {
  body.erase("timing");
  return body;
}

json elements_of(const Layout& l, bool anchored) {
  json arr = json::array();
  for (const auto& e : l.elements) {
    arr.push_back({{"category", std::string(category_name(e.category))},
                   {"cx", e.box.cx},
                   {"cy", e.box.cy},
                   {"w", e.box.w},
                   {"h", e.box.h},
                   {"anchored", anchored}});
  }
  return arr;
}

}  // namespace

TEST_CASE("base64 round trip") {
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 100u}) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 1);
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a'}) == "TWE=");
  CHECK(base64_decode("data:image/png;base64,TWE=") == std::vector<std::uint8_t>{'M', 'a'});
  CHECK_THROWS_AS(base64_decode("abc"), InvalidInput);
  CHECK_THROWS_AS(base64_decode("ab!d"), InvalidInput);
}

TEST_CASE("no model means 503") {
  PosterService svc;
  CHECK(svc.health().body.at("ready") == false);
  CHECK(svc.model_info().status == 503);
  CHECK(svc.generate(env().request("unconstrained").dump()).status == 503);
  svc.set_model(env().model);
  CHECK(svc.health().body.at("ready") == true);
  CHECK(svc.model_info().body.at("parameter_count") == env().model->parameter_count);
}

TEST_CASE("request validation returns 400") {
  PosterService svc;
  svc.set_model(env().model);
  const Env& e = env();
  auto status = [&](const json& req) { return svc.generate(req.dump()).status; };
  CHECK(svc.generate("{broken").status == 400);
  CHECK(svc.generate("[1,2]").status == 400);
  json r = e.request("unconstrained");
  r.erase("task");
  CHECK(status(r) == 400);
  CHECK(status(e.request("bogus")) == 400);
  CHECK(status(e.request("unconstrained", json::array({{{"category", "text"}}}))) == 400);
  CHECK(status(e.request("cs_to_p", json::array({{{"category", "text"}, {"w", 0.3}}}))) == 400);
  CHECK(status(e.request("c_to_sp", json::array({{{"category", "banner"}}}))) == 400);
  CHECK(status(e.request("c_to_sp", json::array({{{"category", "text"}, {"cx", 1.5}}}))) == 400);
  CHECK(status(e.request("c_to_sp", json::array({{{"category", "text"}, {"anchored", true}}}))) == 400);
  CHECK(status(e.request("completion", json::array({{{"category", "text"}, {"anchored", true}, {"w", 0.1}, {"h", 0.1}}}))) == 400);
  CHECK(status(e.request("completion", json::array({{{"category", "text"}, {"anchored", true}, {"cx", 0.02}, {"cy", 0.5}, {"w", 0.1}, {"h", 0.1}}}))) == 400);
  json too_many = json::array();
  for (int i = 0; i < 7; ++i) too_many.push_back({{"category", "text"}});
  CHECK(status(e.request("c_to_sp", too_many)) == 400);
  r = e.request("unconstrained");
  r["num_samples"] = 0;
  CHECK(status(r) == 400);
  r["num_samples"] = 1000;
  CHECK(status(r) == 400);
  r = e.request("unconstrained");
  r["seed"] = -3;
  CHECK(status(r) == 400);
  r = e.request("unconstrained");
  r["strength"] = 0.5;
  CHECK(status(r) == 400);
  r = e.request("c_to_sp", json::array({{{"category", "text"}}}));
  r["free_slots"] = 1;
  CHECK(status(r) == 400);
  r = e.request("unconstrained");
  r.erase("canvas_png");
  CHECK(status(r) == 400);
  r["canvas_id"] = "nope";
  CHECK(status(r) == 400);
  r = e.request("unconstrained");
  r["canvas_png"] = base64_encode(std::vector<std::uint8_t>{1, 2, 3});
  CHECK(status(r) == 400);

  json refine = e.request("refinement");
  refine.erase("task");
  refine.erase("elements");
  CHECK(svc.refine(refine.dump()).status == 400);  // empty layout
  refine["layout"] = layout_to_json(e.sample.layout);
  refine["strength"] = 0.0;
  CHECK(svc.refine(refine.dump()).status == 400);
  refine["strength"] = 1.5;
  CHECK(svc.refine(refine.dump()).status == 400);
  refine["strength"] = 0.2;
  CHECK(svc.refine(refine.dump()).status == 200);
}

TEST_CASE("generation responses") {
  PosterService svc;
  svc.set_model(env().model);
  const Env& e = env();
  json r = e.request("c_to_sp", json::array({{{"category", "text"}}, {{"category", "logo"}}}));
  r["num_samples"] = 3;
  const auto res = svc.generate(r.dump());
  REQUIRE(res.status == 200);
  CHECK(res.body.at("task") == "c_to_sp");
  CHECK(res.body.at("canvas_id").get<std::string>().size() == 32);
  REQUIRE(res.body.at("samples").size() == 3);
  for (int k = 0; k < 3; ++k) {
    const auto& s = res.body.at("samples")[static_cast<std::size_t>(k)];
    CHECK(s.at("seed") == 42 + k);
    const Layout l = layout_from_json(s.at("layout"));
    CHECK(l.size() == 2);
    CHECK(l.elements[0].category == Category::Text);
    CHECK(l.elements[1].category == Category::Logo);
    for (const auto& el : l.elements) CHECK(inside_canvas(el.box));
    CHECK(s.at("metrics").contains("occ"));
  }

  SUBCASE("identical seeds give identical bodies") {
    CHECK(without_timing(svc.generate(r.dump()).body) == without_timing(res.body));
  }
  SUBCASE("sample k reproduces with seed + k") {
    json one = r;
    one["num_samples"] = 1;
    one["seed"] = 44;
    const auto single = svc.generate(one.dump());
    CHECK(single.body.at("samples")[0].at("layout") == res.body.at("samples")[2].at("layout"));
  }
  SUBCASE("cached canvases are reused by id") {
    json by_id = r;
    by_id.erase("canvas_png");
    by_id.erase("saliency_png");
    by_id["canvas_id"] = res.body.at("canvas_id");
    CHECK(without_timing(svc.generate(by_id.dump()).body) == without_timing(res.body));
  }
}

TEST_CASE("fixed attributes are echoed exactly") {
  PosterService svc;
  svc.set_model(env().model);
  const Env& e = env();
  const Layout& gt = e.sample.layout;
  SUBCASE("all anchored completion returns the input") {
    const auto res = svc.generate(e.request("completion", elements_of(gt, true)).dump());
    REQUIRE(res.status == 200);
    CHECK(layout_from_json(res.body.at("samples")[0].at("layout")) == gt);
  }
  SUBCASE("cs_to_p keeps categories and sizes") {
    json els = elements_of(gt, false);
    for (auto& el : els) {
      el.erase("cx");
      el.erase("cy");
      el.erase("anchored");
    }
    const auto res = svc.generate(e.request("cs_to_p", els).dump());
    REQUIRE(res.status == 200);
    const Layout l = layout_from_json(res.body.at("samples")[0].at("layout"));
    REQUIRE(l.size() == gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
      CHECK(l.elements[i].category == gt.elements[i].category);
      CHECK(l.elements[i].box.w == gt.elements[i].box.w);
      CHECK(l.elements[i].box.h == gt.elements[i].box.h);
      CHECK(inside_canvas(l.elements[i].box));
    }
  }
  SUBCASE("partially anchored completion keeps the anchors") {
    json els = elements_of(gt, false);
    els[0]["anchored"] = true;
    const auto res = svc.generate(e.request("completion", els).dump());
    REQUIRE(res.status == 200);
    const Layout l = layout_from_json(res.body.at("samples")[0].at("layout"));
    REQUIRE_FALSE(l.empty());
    CHECK(l.elements[0] == gt.elements[0]);
  }
}

TEST_CASE("refinement at full strength equals unconstrained generation") {
  PosterService svc;
  svc.set_model(env().model);
  const Env& e = env();
  json refine = e.request("refinement");
  refine.erase("task");
  refine.erase("elements");
  refine["layout"] = layout_to_json(e.sample.layout);
  refine["strength"] = 1.0;
  const auto a = svc.refine(refine.dump());
  const auto b = svc.generate(e.request("unconstrained").dump());
  REQUIRE(a.status == 200);
  CHECK(a.body.at("samples") == b.body.at("samples"));
}

TEST_CASE("streaming emits one event per step plus done") {
  PosterService svc;
  svc.set_model(env().model);
  std::vector<std::string> events;
  std::vector<int> ts;
  json done;
  const auto res = svc.generate_stream(env().request("unconstrained").dump(), [&](const std::string& ev, const json& d) {
    events.push_back(ev);
    if (ev == "step") ts.push_back(d.at("t").get<int>());
    if (ev == "done") done = d;
    return true;
  });
  const int T = env().model->config.timesteps;
  CHECK(res.status == 200);
  CHECK(static_cast<int>(events.size()) == T + 1);
  CHECK(events.back() == "done");
  REQUIRE(static_cast<int>(ts.size()) == T);
  CHECK(ts.front() == T);
  CHECK(ts.back() == 1);
  CHECK(done.at("layout") == res.body.at("samples")[0].at("layout"));
  CHECK(svc.inflight() == 0);

  SUBCASE("disconnects abort the run") {
    int calls = 0;
    const auto aborted = svc.generate_stream(env().request("unconstrained").dump(), [&](const std::string&, const json&) {
      return ++calls < 3;
    });
    CHECK(aborted.status == 499);
    CHECK(calls == 3);
  }
}

TEST_CASE("constrained attributes hold in every streamed event") {
  PosterService svc;
  svc.set_model(env().model);
  const Layout& gt = env().sample.layout;
  json els = elements_of(gt, false);
  for (auto& el : els) {
    el.erase("cx");
    el.erase("cy");
    el.erase("anchored");
  }
  int steps = 0;
  bool held = true;
  const auto res = svc.generate_stream(env().request("cs_to_p", els).dump(), [&](const std::string& ev, const json& d) {
    if (ev != "step") return true;
    ++steps;
    const Layout l = layout_from_json(d.at("layout"));
    held = held && l.size() == gt.size();
    for (std::size_t i = 0; held && i < gt.size(); ++i) {
      held = l.elements[i].category == gt.elements[i].category && l.elements[i].box.w == gt.elements[i].box.w &&
             l.elements[i].box.h == gt.elements[i].box.h;
    }
    return true;
  });
  CHECK(res.status == 200);
  CHECK(steps == env().model->config.timesteps);
  CHECK(held);
}

TEST_CASE("in-flight limit returns 429 and drain returns 503") {
  ServiceConfig cfg;
  cfg.max_inflight = 1;
  PosterService svc(cfg);
  svc.set_model(env().model);
  int inner = 0;
  svc.generate_stream(env().request("unconstrained").dump(), [&](const std::string&, const json&) {
    if (inner == 0) inner = svc.generate(env().request("unconstrained").dump()).status;
    return true;
  });
  CHECK(inner == 429);
  CHECK(svc.inflight() == 0);
  CHECK(svc.generate(env().request("unconstrained").dump()).status == 200);
  svc.drain();
  CHECK(svc.generate(env().request("unconstrained").dump()).status == 503);
}

TEST_CASE("evaluate matches the metrics library") {
  PosterService svc;
  const Env& e = env();
  json req = {{"layout", layout_to_json(e.sample.layout)}, {"canvas_png", e.canvas_b64}, {"saliency_png", e.saliency_b64}};
  const auto res = svc.evaluate(req.dump());
  REQUIRE(res.status == 200);
  const MetricsReport m = evaluate(e.sample.layout, e.sample.canvas, e.sample.saliency);
  json expect = m.to_json();
  expect["canvas_id"] = res.body.at("canvas_id");
  CHECK(res.body == expect);
  CHECK(svc.evaluate(R"({"layout":{"elements":[]}})").status == 400);
}

TEST_CASE("canvas cache evicts by capacity and ttl") {
  ServiceConfig cfg;
  cfg.cache_capacity = 1;
  PosterService svc(cfg);
  const Env& e = env();
  const auto other = generate_synthetic(test::tiny_synth(2, 99)).samples.back();
  json a = {{"layout", layout_to_json(Layout{})}, {"canvas_png", e.canvas_b64}, {"saliency_png", e.saliency_b64}};
  json b = {{"layout", layout_to_json(Layout{})},
            {"canvas_png", base64_encode(encode_png(other.canvas))},
            {"saliency_png", base64_encode(encode_png(other.saliency))}};
  const std::string id_a = svc.evaluate(a.dump()).body.at("canvas_id");
  CHECK(svc.evaluate(json{{"layout", layout_to_json(Layout{})}, {"canvas_id", id_a}}.dump()).status == 200);
  const std::string id_b = svc.evaluate(b.dump()).body.at("canvas_id");
  CHECK(id_a != id_b);
  CHECK(svc.evaluate(json{{"layout", layout_to_json(Layout{})}, {"canvas_id", id_a}}.dump()).status == 400);

  ServiceConfig short_ttl;
  short_ttl.cache_ttl = std::chrono::seconds(0);
  PosterService expiring(short_ttl);
  const std::string id = expiring.evaluate(a.dump()).body.at("canvas_id");
  std::this_thread::sleep_for(std::chrono::milliseconds(5));
  CHECK(expiring.evaluate(json{{"layout", layout_to_json(Layout{})}, {"canvas_id", id}}.dump()).status == 400);
}

TEST_CASE("http front end") {
  PosterService svc;
  svc.set_model(env().model);
  HttpServer server(svc);
  REQUIRE(server.bind("127.0.0.1", 0));
  std::thread th([&] { server.listen(); });
  httplib::Client cli("127.0.0.1", server.port());
  cli.set_read_timeout(30, 0);

  auto health = cli.Get("/v1/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body).at("ready") == true);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");
  auto model = cli.Get("/v1/model");
  REQUIRE(model);
  CHECK(json::parse(model->body).contains("config"));

  const std::string body = env().request("unconstrained").dump();
  auto gen = cli.Post("/v1/generate", body, "application/json");
  REQUIRE(gen);
  CHECK(gen->status == 200);
  CHECK(without_timing(json::parse(gen->body)) == without_timing(svc.generate(body).body));
  auto bad = cli.Post("/v1/generate", "{}", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  auto stream = cli.Post("/v1/generate/stream", body, "application/json");
  REQUIRE(stream);
  CHECK(stream->status == 200);
  CHECK(stream->get_header_value("Content-Type") == "text/event-stream");
  std::size_t steps = 0, dones = 0, pos = 0;
  while ((pos = stream->body.find("event: ", pos)) != std::string::npos) {
    pos += 7;
    if (stream->body.compare(pos, 4, "step") == 0) ++steps;
    if (stream->body.compare(pos, 4, "done") == 0) ++dones;
  }
  CHECK(static_cast<int>(steps) == env().model->config.timesteps);
  CHECK(dones == 1);
  auto opts = cli.Options("/v1/generate");
  REQUIRE(opts);
  CHECK(opts->status == 204);

  server.stop();
  th.join();
}
