// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "iposter/data.hpp"
#include "iposter/gradcheck.hpp"
#include "iposter/inference.hpp"
#include "iposter/layout_json.hpp"
#include "iposter/metrics.hpp"
#include "iposter/service.hpp"
#include "iposter/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iposter;

namespace {

/// Distinguishes "the check ran and failed" from input errors.
struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("iposter");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("IPOSTER_LOG_LEVEL")) {
    const auto level = spdlog::level::from_str(lvl);
    if (level == spdlog::level::off && std::string(lvl) != "off") {
      spdlog::warn("unknown IPOSTER_LOG_LEVEL '{}', keeping info", lvl);
    } else {
      spdlog::set_level(level);
    }
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void summary(const json& j) { std::cout << j.dump() << std::endl; }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

std::vector<PosterSample> load_dataset(const fs::path& dir) {
  auto loaded = load_manifest(dir);
  if (!loaded.errors.empty()) {
    const auto& e = loaded.errors.front();
    throw InvalidInput(std::to_string(loaded.errors.size()) + " malformed manifest entries; first at entry " +
                       std::to_string(e.line) + ": " + e.message);
  }
  return std::move(loaded.samples);
}

// ---------------------------------------------------------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  SynthConfig cfg;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth-data", "Generate a synthetic poster dataset");
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--num", a.cfg.num_samples, "Number of samples")->capture_default_str();
  c->add_option("--seed", a.cfg.seed, "Master seed")->capture_default_str();
  c->add_option("--resolution", a.cfg.resolution, "Canvas side in pixels")->capture_default_str();
  c->add_option("--min-elements", a.cfg.min_elements)->capture_default_str();
  c->add_option("--max-elements", a.cfg.max_elements)->capture_default_str();
  c->add_option("--grid-columns", a.cfg.grid_columns)->capture_default_str();
  c->add_option("--min-blobs", a.cfg.min_blobs)->capture_default_str();
  c->add_option("--max-blobs", a.cfg.max_blobs)->capture_default_str();
  c->add_option("--min-blob-size", a.cfg.min_blob_size)->capture_default_str();
  c->add_option("--max-blob-size", a.cfg.max_blob_size)->capture_default_str();
  c->add_option("--underlay-margin", a.cfg.underlay_margin)->capture_default_str();
  c->add_option("--weights", a.cfg.category_weights, "Category weights: logo text underlay")->expected(3);
}

int run_synth(const SynthArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  spdlog::info("synth-data: out={} num={} seed={} resolution={} elements=[{}, {}]", a.out.string(), a.cfg.num_samples,
               a.cfg.seed, a.cfg.resolution, a.cfg.min_elements, a.cfg.max_elements);
  const auto result = generate_synthetic(a.cfg);
  save_dataset(a.out, result.samples);
  summary({{"command", "synth-data"},
           {"out", a.out.string()},
           {"samples", result.samples.size()},
           {"skipped", result.skipped},
           {"seconds", seconds_since(t0)}});
  return 0;
}

// ---------------------------------------------------------------------------------------------------------------

struct TrainArgs {
  fs::path data;
  fs::path out;
  fs::path resume;
  fs::path loss_log;
  ModelConfig model;
  TrainConfig train;
  std::string attn = "blm";
  long log_every = 100;
  long checkpoint_every = 1000;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train the noise model");
  c->add_option("--data", a.data, "Dataset directory or manifest")->required();
  c->add_option("--out", a.out, "Checkpoint path")->required();
  c->add_option("--resume", a.resume, "Continue from this checkpoint");
  c->add_option("--loss-log", a.loss_log, "JSON-lines loss log (default: <out>.loss.jsonl)");
  c->add_option("--steps", a.train.steps, "Total optimizer steps")->capture_default_str();
  c->add_option("--batch", a.train.batch_size)->capture_default_str();
  c->add_option("--lr", a.train.adam.lr)->capture_default_str();
  c->add_option("--lr-schedule", a.train.lr_schedule, "constant or cosine")->capture_default_str();
  c->add_option("--lr-floor", a.train.lr_floor, "Cosine end point as a fraction of --lr")->capture_default_str();
  c->add_option("--clip", a.train.clip_norm, "Global gradient norm limit")->capture_default_str();
  c->add_option("--ema", a.train.ema_decay, "EMA decay of sampling weights")->capture_default_str();
  c->add_option("--seed", a.train.seed)->capture_default_str();
  c->add_option("--eval-batch", a.train.eval_batch)->capture_default_str();
  c->add_option("--log-every", a.log_every)->capture_default_str();
  c->add_option("--checkpoint-every", a.checkpoint_every)->capture_default_str();
  c->add_option("--d-model", a.model.d_model)->capture_default_str();
  c->add_option("--gnn-layers", a.model.gnn_layers)->capture_default_str();
  c->add_option("--heads", a.model.attn_heads)->capture_default_str();
  c->add_option("--image-blocks", a.model.image_blocks)->capture_default_str();
  c->add_option("--patch-size", a.model.patch_size)->capture_default_str();
  c->add_option("--resolution", a.model.resolution)->capture_default_str();
  c->add_option("--max-elements", a.model.max_elements)->capture_default_str();
  c->add_option("--timesteps", a.model.timesteps)->capture_default_str();
  c->add_option("--attn-direction", a.attn, "Cross-attention queries: blm or ilm")
      ->check(CLI::IsMember({"blm", "ilm"}))
      ->capture_default_str();
}

void save_with_state(const Trainer& trainer, const fs::path& path, double initial_eval) {
  nn::Checkpoint ckpt = trainer.checkpoint();
  auto j = json::parse(ckpt.config_json);
  j["train_state"]["initial_eval_loss"] = initial_eval;
  ckpt.config_json = j.dump();
  nn::save_checkpoint(path, ckpt);
}

int run_train(TrainArgs a) {
  const auto t0 = std::chrono::steady_clock::now();
  a.model.attn_direction = a.attn == "ilm" ? AttnDirection::IlmQueries : AttnDirection::BlmQueries;
  std::optional<nn::Checkpoint> resume;
  double initial_eval = std::numeric_limits<double>::quiet_NaN();
  if (!a.resume.empty()) {
    resume = nn::load_checkpoint(a.resume);
    const auto j = json::parse(resume->config_json);
    const long steps = a.train.steps;
    a.model = ModelConfig::from_json(j.at("model").dump());
    a.train = TrainConfig::from_json(j.at("train"));
    a.train.steps = steps;
    initial_eval = j.at("train_state").value("initial_eval_loss", initial_eval);
  }
  a.model.validate();
  a.train.validate();
  if (a.loss_log.empty()) a.loss_log = a.out.string() + ".loss.jsonl";
  spdlog::info("train: data={} out={} model={} train={}", a.data.string(), a.out.string(), a.model.to_json(),
               a.train.to_json().dump());

  const auto samples = load_dataset(a.data);
  const CategoryCodec codec(a.model.num_categories);
  std::vector<TrainingExample> examples;
  examples.reserve(samples.size());
  for (const auto& s : samples) examples.push_back(prepare_example(s, a.model, codec));
  spdlog::info("train: {} examples", examples.size());

  Trainer trainer(a.model, a.train, std::move(examples));
  if (resume) {
    trainer.resume(*resume);
    spdlog::info("train: resumed at step {}", trainer.current_step());
  } else {
    trainer.init();
    initial_eval = trainer.eval_loss();
  }
  spdlog::info("train: {} parameters, initial eval loss {:.6f}", trainer.params().parameter_count(), initial_eval);

  std::ofstream log(a.loss_log, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw InvalidInput("cannot write loss log " + a.loss_log.string());
  if (!resume) log << json{{"step", 0}, {"eval_loss", initial_eval}}.dump() << '\n';

  double window = 0.0;
  long window_n = 0;
  double first_loss = std::numeric_limits<double>::quiet_NaN();
  while (trainer.current_step() < a.train.steps) {
    const double loss = trainer.step();
    const long s = trainer.current_step();
    if (s == 1) first_loss = loss;
    window += loss;
    ++window_n;
    if (s % a.log_every == 0 || s == a.train.steps) {
      const double mean = window / static_cast<double>(window_n);
      log << json{{"step", s}, {"loss", mean}}.dump() << '\n';
      log.flush();
      spdlog::info("step {} loss {:.5f} ({:.1f}s)", s, mean, seconds_since(t0));
      window = 0.0;
      window_n = 0;
    }
    if (a.checkpoint_every > 0 && s % a.checkpoint_every == 0) save_with_state(trainer, a.out, initial_eval);
  }
  const double final_eval = trainer.eval_loss();
  const double final_ema_eval = trainer.eval_loss(trainer.ema());
  log << json{{"step", trainer.current_step()}, {"eval_loss", final_eval}}.dump() << '\n';
  save_with_state(trainer, a.out, initial_eval);
  summary({{"command", "train"},
           {"checkpoint", a.out.string()},
           {"steps", trainer.current_step()},
           {"parameter_count", trainer.params().parameter_count()},
           {"initial_eval_loss", initial_eval},
           {"final_eval_loss", final_eval},
           {"final_ema_eval_loss", final_ema_eval},
           {"first_batch_loss", first_loss},
           {"seconds", seconds_since(t0)}});
  return 0;
}

// ---------------------------------------------------------------------------------------------------------------

struct SampleArgs {
  fs::path ckpt;
  std::string task = "unconstrained";
  fs::path constraints;
  fs::path canvas;
  fs::path saliency;
  fs::path data;
  fs::path out;
  int n = 1;
  std::uint64_t seed = 0;
  int limit = -1;
  std::optional<int> free_slots;
  double strength = kDefaultRefineStrength;
  bool dump_steps = false;
};

void add_sample(CLI::App& app, SampleArgs& a) {
  auto* c = app.add_subcommand("sample", "Generate layouts from a checkpoint");
  c->add_option("--ckpt,--checkpoint", a.ckpt, "Checkpoint path")->required();
  c->add_option("--task", a.task, "c_to_sp, cs_to_p, completion, refinement or unconstrained")->capture_default_str();
  c->add_option("--constraints", a.constraints, "Layout JSON with the user elements");
  c->add_option("--canvas", a.canvas, "Background PNG");
  c->add_option("--saliency", a.saliency, "Saliency PNG");
  c->add_option("--data", a.data, "Dataset: one layout per canvas, written as <id>.json");
  c->add_option("--limit", a.limit, "Use at most this many dataset canvases");
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--n", a.n, "Samples per canvas")->capture_default_str();
  c->add_option("--seed", a.seed, "Sample k uses seed + k")->capture_default_str();
  c->add_option("--free-slots", a.free_slots, "Completion: padding rows the model may fill");
  c->add_option("--strength", a.strength, "Refinement strength in (0, 1]")->capture_default_str();
  c->add_flag("--dump-steps", a.dump_steps, "Write every denoising state to <name>.steps.jsonl");
}

json state_json(const LayoutState& x) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < x.cols(); ++k) r.push_back(x(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

int run_sample(const SampleArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto task = parse_task(a.task);
  if (!task) throw InvalidInput("unknown task '" + a.task + "'");
  if (a.n < 1) throw InvalidInput("--n must be >= 1");
  if (a.data.empty() == (a.canvas.empty() && a.saliency.empty())) {
    throw InvalidInput("give either --data or both --canvas and --saliency");
  }
  if (a.data.empty() && (a.canvas.empty() || a.saliency.empty())) throw InvalidInput("--canvas needs --saliency");
  const auto model = load_model(a.ckpt);
  spdlog::info("sample: ckpt={} sha256={} task={} n={} seed={}", a.ckpt.string(), model->sha256, a.task, a.n, a.seed);

  json elements = json::array();
  if (!a.constraints.empty()) {
    const json c = read_json_file(a.constraints);
    if (!c.is_object() || !c.contains("elements")) throw InvalidInput("constraints file needs an 'elements' array");
    elements = c.at("elements");
  }
  const auto user = parse_user_elements(elements, *task, model->config.max_elements);
  if (a.free_slots && *task != Task::Completion) throw InvalidInput("--free-slots is only valid for completion");
  if (*task == Task::Refinement && !(a.strength > 0 && a.strength <= 1)) throw InvalidInput("--strength must lie in (0, 1]");
  const int n = model->config.max_elements;
  const ConstraintSpec spec = make_constraint(*task, user.layout, user.anchors, n, model->codec, a.free_slots);

  struct Target {
    std::string name;
    Raster canvas;
    Raster saliency;
  };
  std::vector<Target> targets;
  if (!a.data.empty()) {
    auto samples = load_dataset(a.data);
    if (a.limit >= 0 && static_cast<std::size_t>(a.limit) < samples.size()) samples.resize(static_cast<std::size_t>(a.limit));
    for (auto& s : samples) targets.push_back({s.id, std::move(s.canvas), std::move(s.saliency)});
  } else {
    Raster sal = read_png(a.saliency);
    if (sal.channels() == 3) sal = to_grayscale(sal);
    targets.push_back({"sample", read_png(a.canvas), std::move(sal)});
  }

  fs::create_directories(a.out);
  json outputs = json::array();
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const auto& tgt = targets[ti];
    const Condition cond = make_condition(tgt.canvas, tgt.saliency, model->config);
    for (int k = 0; k < a.n; ++k) {
      // dataset mode advances the seed per canvas so every canvas gets an independent draw
      const std::uint64_t seed = a.seed + (a.data.empty() ? 0 : ti * static_cast<std::uint64_t>(a.n)) +
                                 static_cast<std::uint64_t>(k);
      const SampleResult r = *task == Task::Refinement
                                 ? refine_layout(*model, cond, user.layout, a.strength, seed, a.dump_steps)
                                 : generate_layout(*model, cond, spec, seed, a.dump_steps);
      const Layout layout = finalize_layout(r.final_state, spec, user.layout, model->codec);
      std::string stem = tgt.name;
      if (a.n > 1 || a.data.empty()) stem += "_" + std::to_string(k);
      const fs::path path = a.out / (stem + ".json");
      write_layout_file(path, layout);
      if (a.dump_steps) {
        std::ofstream dump(a.out / (stem + ".steps.jsonl"));
        int t = static_cast<int>(r.trajectory.size());
        for (const auto& x : r.trajectory) {
          dump << json{{"t", t--}, {"state", state_json(x)}, {"layout", layout_to_json(finalize_layout(x, spec, user.layout, model->codec))}}
                      .dump()
               << '\n';
        }
        dump << json{{"x_user", state_json(spec.x_user)}, {"mask", state_json(build_mask(spec, n))}}.dump() << '\n';
      }
      outputs.push_back({{"path", path.string()}, {"seed", seed}});
    }
  }
  summary({{"command", "sample"},
           {"task", std::string(task_name(*task))},
           {"checkpoint_sha256", model->sha256},
           {"outputs", outputs},
           {"seconds", seconds_since(t0)}});
  return 0;
}

// ---------------------------------------------------------------------------------------------------------------

struct EvalArgs {
  fs::path layouts;
  fs::path data;
  fs::path out;
  fs::path csv;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Score layouts against their canvases");
  c->add_option("--layouts", a.layouts, "Directory of <id>.json layouts")->required();
  c->add_option("--data", a.data, "Dataset holding the matching canvases")->required();
  c->add_option("--out", a.out, "Report JSON path")->required();
  c->add_option("--csv", a.csv, "Optional per-layout CSV");
}

int run_eval(const EvalArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  spdlog::info("eval: layouts={} data={} out={}", a.layouts.string(), a.data.string(), a.out.string());
  if (!fs::is_directory(a.layouts)) throw InvalidInput("not a directory: " + a.layouts.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.layouts)) {
    const auto& p = entry.path();
    if (p.extension() == ".json" && p.filename().string().find(".steps") == std::string::npos) files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, PosterSample> by_id;
  if (!files.empty()) {
    for (auto& s : load_dataset(a.data)) by_id.emplace(s.id, std::move(s));
  }
  std::vector<MetricsReport> reports;
  json per = json::array();
  std::ofstream csv;
  if (!a.csv.empty()) {
    csv.open(a.csv);
    if (!csv) throw InvalidInput("cannot write " + a.csv.string());
    csv << "id,occ,rea,und_l,und_s,ove,elements\n";
  }
  for (const auto& f : files) {
    std::string id = f.stem().string();
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      // sample_<k> style names fall back to the canvas id before the last underscore
      const auto us = id.rfind('_');
      if (us != std::string::npos) it = by_id.find(id.substr(0, us));
    }
    if (it == by_id.end()) throw InvalidInput("no canvas in the dataset for layout " + f.string());
    const auto r = evaluate(read_layout_file(f), it->second.canvas, it->second.saliency);
    reports.push_back(r);
    json j = r.to_json();
    j["id"] = id;
    per.push_back(j);
    if (csv.is_open()) {
      csv << id << ',' << r.occ << ',' << r.rea << ',' << r.und_l << ',' << r.und_s << ',' << r.ove << ',' << r.elements
          << '\n';
    }
  }
  const MetricsReport agg = aggregate(reports);
  int with_underlays = 0;
  double und_s_present = 0.0;
  for (const auto& r : reports) {
    if (r.underlays > 0) {
      ++with_underlays;
      und_s_present += r.und_s;
    }
  }
  json report = {{"count", reports.size()},
                 {"aggregate", agg.to_json()},
                 {"with_underlays", with_underlays},
                 {"und_s_with_underlays", with_underlays > 0 ? und_s_present / with_underlays : 1.0},
                 {"max_occ", reports.empty() ? 0.0 : std::max_element(reports.begin(), reports.end(), [](auto& x, auto& y) { return x.occ < y.occ; })->occ},
                 {"max_ove", reports.empty() ? 0.0 : std::max_element(reports.begin(), reports.end(), [](auto& x, auto& y) { return x.ove < y.ove; })->ove},
                 {"min_und_s", reports.empty() ? 1.0 : std::min_element(reports.begin(), reports.end(), [](auto& x, auto& y) { return x.und_s < y.und_s; })->und_s},
                 {"samples", per}};
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  std::ofstream out(a.out);
  if (!out) throw InvalidInput("cannot write " + a.out.string());
  out << report.dump(2) << '\n';
  json s = {{"command", "eval"}, {"out", a.out.string()}, {"seconds", seconds_since(t0)}};
  for (const char* k : {"count", "aggregate", "with_underlays", "und_s_with_underlays", "max_occ", "max_ove", "min_und_s"}) {
    s[k] = report[k];
  }
  summary(s);
  return 0;
}

// ---------------------------------------------------------------------------------------------------------------

void add_gradcheck(CLI::App& app, GradcheckOptions& o) {
  auto* c = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  c->add_option("--seed", o.seed)->capture_default_str();
  c->add_option("--coordinates", o.coordinates, "Sampled entries per block")->capture_default_str();
  c->add_option("--tolerance", o.tolerance, "Maximum relative error")->capture_default_str();
  c->add_flag("--corrupt", o.corrupt, "Perturb analytic gradients (must fail)");
}

int run_gradcheck_cmd(const GradcheckOptions& o) {
  spdlog::info("gradcheck: seed={} coordinates={} tolerance={} corrupt={}", o.seed, o.coordinates, o.tolerance, o.corrupt);
  const auto report = run_gradcheck(o);
  json j = report.to_json();
  j["command"] = "gradcheck";
  for (const auto& b : report.blocks) {
    spdlog::info("{:16s} coords={} max_rel={:.3e} max_abs={:.3e} {}", b.name, b.coordinates, b.max_rel_error,
                 b.max_abs_error, b.passed ? "PASS" : "FAIL");
  }
  summary(j);
  if (!report.passed) throw CheckFailed("gradcheck failed");
  return 0;
}

// ---------------------------------------------------------------------------------------------------------------

struct ServeArgs {
  fs::path ckpt;
  std::string host = "127.0.0.1";
  int port = 8080;
  ServiceConfig svc;
  int cache_ttl = 600;
};

void add_serve(CLI::App& app, ServeArgs& a) {
  auto* c = app.add_subcommand("serve", "Run the HTTP service");
  c->add_option("--ckpt,--checkpoint", a.ckpt, "Checkpoint path")->required();
  c->add_option("--host", a.host)->capture_default_str();
  c->add_option("--port", a.port, "0 picks a free port")->capture_default_str();
  c->add_option("--max-inflight", a.svc.max_inflight)->capture_default_str();
  c->add_option("--max-samples", a.svc.max_samples)->capture_default_str();
  c->add_option("--cache-capacity", a.svc.cache_capacity)->capture_default_str();
  c->add_option("--cache-ttl", a.cache_ttl, "Seconds")->capture_default_str();
}

int run_serve(ServeArgs a) {
  a.svc.cache_ttl = std::chrono::seconds(a.cache_ttl);
  spdlog::info("serve: ckpt={} host={} port={} max_inflight={}", a.ckpt.string(), a.host, a.port, a.svc.max_inflight);
  PosterService service(a.svc);
  HttpServer server(service);
  if (!server.bind(a.host, a.port)) {
    throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(a.port) + " (port in use?)");
  }
  std::signal(SIGTERM, on_signal);
  std::signal(SIGINT, on_signal);
  std::thread listener([&] { server.listen(); });
  spdlog::info("listening on {}:{}", a.host, server.port());
  std::cerr << "LISTENING " << server.port() << std::endl;
  try {
    service.set_model(load_model(a.ckpt));
    spdlog::info("model loaded: {}", service.model()->describe().dump());
  } catch (...) {
    server.stop();
    listener.join();
    throw;
  }
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  spdlog::info("shutting down; draining {} in-flight runs", service.inflight());
  service.drain();
  server.stop();
  listener.join();
  summary({{"command", "serve"}, {"port", server.port()}, {"status", "stopped"}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Constrained poster layout generation"};
  app.require_subcommand(1);
  SynthArgs synth;
  TrainArgs train;
  SampleArgs sample;
  EvalArgs eval;
  GradcheckOptions grad;
  ServeArgs serve;
  add_synth(app, synth);
  add_train(app, train);
  add_sample(app, sample);
  add_eval(app, eval);
  add_gradcheck(app, grad);
  add_serve(app, serve);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth-data") return run_synth(synth);
    if (cmd == "train") return run_train(train);
    if (cmd == "sample") return run_sample(sample);
    if (cmd == "eval") return run_eval(eval);
    if (cmd == "gradcheck") return run_gradcheck_cmd(grad);
    if (cmd == "serve") return run_serve(serve);
  } catch (const InvalidInput& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 2;
}
