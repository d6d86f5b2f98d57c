// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>

#include "doctest.h"
#include "iposter/data.hpp"
#include "iposter/errors.hpp"
#include "iposter/metrics.hpp"
#include "test_support.hpp"

using namespace iposter;

TEST_CASE("synthetic generation is deterministic per seed") {
  const auto a = generate_synthetic(test::tiny_synth(12, 3));
  const auto b = generate_synthetic(test::tiny_synth(12, 3));
  const auto c = generate_synthetic(test::tiny_synth(12, 4));
  REQUIRE(a.samples.size() == 12);
  CHECK(a.skipped == 0);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].id == b.samples[i].id);
    CHECK(a.samples[i].layout == b.samples[i].layout);
    CHECK(a.samples[i].canvas == b.samples[i].canvas);
    CHECK(a.samples[i].saliency == b.samples[i].saliency);
  }
  CHECK(a.samples[0].layout != c.samples[0].layout);
}

TEST_CASE("synthetic layouts respect the generator invariants") {
  SynthConfig cfg = test::tiny_synth(60, 11);
  cfg.resolution = 64;
  const auto r = generate_synthetic(cfg);
  std::set<std::string> ids;
  int with_underlay = 0;
  for (const auto& s : r.samples) {
    ids.insert(s.id);
    CHECK(s.canvas.width() == 64);
    CHECK(s.canvas.channels() == 3);
    CHECK(s.saliency.channels() == 1);
    CHECK(static_cast<int>(s.layout.size()) >= cfg.min_elements);
    CHECK(static_cast<int>(s.layout.size()) <= cfg.max_elements);
    for (const auto& e : s.layout.elements) {
      CHECK(inside_canvas(e.box));
      CHECK(e.category != Category::Empty);
    }
    for (float v : s.saliency.data()) CHECK((v >= 0.0f && v <= 1.0f));
    const auto m = evaluate(s.layout, s.canvas, s.saliency);
    CHECK(m.occ <= 0.05);
    CHECK(m.ove <= 0.01);
    CHECK(m.und_s == 1.0);
    with_underlay += m.underlays > 0 ? 1 : 0;
  }
  CHECK(ids.size() == r.samples.size());
  CHECK(with_underlay > 0);
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.min_elements = 5;
  cfg.max_elements = 3;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = SynthConfig{};
  cfg.resolution = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = SynthConfig{};
  cfg.category_weights = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("dataset save and manifest load round trip") {
  test::TempDir dir("data");
  const auto r = generate_synthetic(test::tiny_synth(5));
  save_dataset(dir.path(), r.samples);
  CHECK(std::filesystem::exists(dir.path() / "manifest.jsonl"));
  CHECK(manifest_path(dir.path()) == dir.path() / "manifest.jsonl");
  const ManifestLoad loaded = load_manifest(dir.path());
  CHECK(loaded.errors.empty());
  REQUIRE(loaded.samples.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(loaded.samples[i].id == r.samples[i].id);
    CHECK(loaded.samples[i].canvas == r.samples[i].canvas);
    CHECK(loaded.samples[i].saliency == r.samples[i].saliency);
    CHECK(loaded.samples[i].layout == r.samples[i].layout);
  }

  SUBCASE("bad entries are reported and skipped") {
    std::filesystem::remove(dir.path() / "canvas" / (r.samples[1].id + ".png"));
    {
      std::ofstream out(dir.path() / "manifest.jsonl", std::ios::app);
      out << "{not json\n";
      out << R"({"id":"x","canvas":"c.png"})" << "\n";
    }
    const ManifestLoad partial = load_manifest(dir.path() / "manifest.jsonl");
    CHECK(partial.samples.size() == 4);
    REQUIRE(partial.errors.size() == 3);
    CHECK(partial.errors[0].line == 1);
    CHECK(partial.errors[1].line == 5);
  }
  SUBCASE("missing manifest") {
    test::TempDir empty("empty");
    CHECK_THROWS_AS(load_manifest(empty.path()), InvalidInput);
  }
}

TEST_CASE("split partitions indices") {
  const Split s = split(100, {0.8, 0.1, 0.1}, 3);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 100);
  CHECK(split(100, {0.8, 0.1, 0.1}, 3).train == s.train);
  CHECK(split(100, {0.8, 0.1, 0.1}, 4).train != s.train);
  CHECK_THROWS_AS(split(10, {0.5, 0.1, 0.1}, 0), InvalidInput);
  CHECK_THROWS_AS(split(10, {1.2, -0.1, -0.1}, 0), InvalidInput);
}
