// Copyright 2026 The Ovis Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <set>
#include <sstream>
#include <thread>

#include "capi_support.hpp"
#include "doctest.h"
#include "json.hpp"

using nlohmann::json;
using ovis::testing::ScratchDir;

namespace {

struct Handles {
  ovis_model* model = nullptr;
  std::vector<ovis_scene*> scenes;
  ~Handles() {
    ovis_model_free(model);
    for (auto* s : scenes) ovis_scene_free(s);
  }
};

void open_all(Handles& h, const std::string& ckpt, const std::vector<std::string>& dirs) {
  REQUIRE(ovis_model_load(ckpt.c_str(), &h.model) == OVIS_OK);
  for (const auto& d : dirs) {
    ovis_scene* s = nullptr;
    REQUIRE(ovis_scene_load(d.c_str(), &s) == OVIS_OK);
    h.scenes.push_back(s);
  }
}

std::pair<ovis_status, std::string> query(const Handles& h, const std::string& request, std::size_t scene = 0) {
  char* out = nullptr;
  const ovis_status st = ovis_query(h.model, h.scenes.at(scene), request.c_str(), &out);
  return {st, st == OVIS_OK ? ovis::testing::take_string(out) : std::string(ovis_last_error())};
}

std::uint32_t u32_at(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

float f32_at(const unsigned char* p) {
  const std::uint32_t bits = u32_at(p);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

}  // namespace

TEST_CASE("status names and argument checks") {
  CHECK(std::string(ovis_version()) == OVIS_VERSION);
  CHECK(std::string(ovis_status_name(OVIS_OK)) == "ok");
  CHECK(std::string(ovis_status_name(OVIS_ERR_REQUEST)) == "request");
  CHECK(std::string(ovis_status_name(static_cast<ovis_status>(77))) == "unknown");

  ovis_scene* scene = nullptr;
  CHECK(ovis_scene_load(nullptr, &scene) == OVIS_ERR_ARGUMENT);
  CHECK(std::string(ovis_last_error()).find("dir") != std::string::npos);
  CHECK(ovis_query(nullptr, nullptr, "{}", nullptr) == OVIS_ERR_ARGUMENT);
  CHECK(ovis_scene_id(nullptr) == std::string());
  CHECK(ovis_scene_num_points(nullptr) == 0);
  ovis_model_free(nullptr);
  ovis_scene_free(nullptr);

  ScratchDir tmp("capi-missing");
  CHECK(ovis_scene_load((tmp / "absent").c_str(), &scene) != OVIS_OK);
  CHECK(scene == nullptr);
  CHECK(std::strlen(ovis_last_error()) > 0);
  ovis_model* model = nullptr;
  CHECK(ovis_model_load((tmp / "absent").c_str(), &model) != OVIS_OK);
  CHECK(model == nullptr);

  CHECK(ovis_fixtures_generate("{\"categories\": [\"a\"], \"bogus\": 1}", (tmp / "x").c_str(), nullptr) ==
        OVIS_ERR_FORMAT);
  CHECK(ovis_fixtures_generate(ovis::testing::kFixtureSpec, (tmp / "ok").c_str(), nullptr) == OVIS_OK);
  CHECK(std::string(ovis_last_error()).empty());
}

TEST_CASE("fixture generation is deterministic and the point payload is exact") {
  ScratchDir a("capi-fix-a"), b("capi-fix-b");
  char* ids = nullptr;
  REQUIRE(ovis_fixtures_generate(ovis::testing::kFixtureSpec, (a / "scenes").c_str(), &ids) == OVIS_OK);
  const auto id_list = json::parse(ovis::testing::take_string(ids));
  REQUIRE(id_list.size() == 2);
  const auto dirs_a = ovis::testing::make_scenes(a);
  const auto dirs_b = ovis::testing::make_scenes(b);
  REQUIRE(dirs_a.size() == 2);
  REQUIRE(dirs_b.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(std::filesystem::path(dirs_a[s]).filename() == id_list[s].get<std::string>());
    for (const auto& e : std::filesystem::directory_iterator(dirs_a[s])) {
      if (!e.is_regular_file()) continue;
      const auto other = std::filesystem::path(dirs_b[s]) / e.path().filename();
      CHECK_MESSAGE(ovis::testing::read_file(e.path().string()) == ovis::testing::read_file(other.string()),
                    e.path().filename().string());
    }
  }

  ovis_scene* scene = nullptr;
  REQUIRE(ovis_scene_load(dirs_a[0].c_str(), &scene) == OVIS_OK);
  CHECK(std::string(ovis_scene_id(scene)) == id_list[0].get<std::string>());
  const std::size_t m = ovis_scene_num_points(scene);
  CHECK(m == 180);
  unsigned char* data = nullptr;
  std::size_t size = 0;
  REQUIRE(ovis_scene_points(scene, &data, &size) == OVIS_OK);
  CHECK(size == 4 + 24 * m);
  CHECK(u32_at(data) == m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t d = 0; d < 6; ++d) {
      const float v = f32_at(data + 4 + 24 * i + 4 * d);
      CHECK(std::isfinite(v));
      if (d >= 3) CHECK((v >= 0.0f && v <= 1.0f));
    }
  }
  ovis_buffer_free(data);
  ovis_scene_free(scene);
}

TEST_CASE("training round trip through checkpoints") {
  ScratchDir tmp("capi-train");
  const auto dirs = ovis::testing::make_scenes(tmp);
  REQUIRE(dirs.size() == 2);
  std::vector<const char*> raw;
  for (const auto& d : dirs) raw.push_back(d.c_str());

  SUBCASE("zero epochs save the initial model") {
    char* summary = nullptr;
    REQUIRE(ovis_train(ovis::testing::train_config(0).c_str(), raw.data(), raw.size(), (tmp / "c0").c_str(),
                       (tmp / "h0.csv").c_str(), &summary) == OVIS_OK);
    const auto s = json::parse(ovis::testing::take_string(summary));
    CHECK(s["steps"] == 0);
    CHECK(s["initial_loss"].is_null());
    CHECK(ovis::testing::read_file(tmp / "h0.csv") == "step,epoch,scene,total,mma,dice,bce,learning_rate\n");
    REQUIRE(ovis::testing::train_model(dirs, tmp / "c0b", 0));
    Handles h0, h1;
    open_all(h0, tmp / "c0", dirs);
    open_all(h1, tmp / "c0b", dirs);
    const std::string req = R"({"text": "chair", "top_k": 4})";
    CHECK(query(h0, req).second == query(h1, req).second);
  }

  SUBCASE("histories and responses are reproducible") {
    char* summary = nullptr;
    REQUIRE(ovis_train(ovis::testing::train_config(3).c_str(), raw.data(), raw.size(), (tmp / "c1").c_str(),
                       (tmp / "h1.csv").c_str(), &summary) == OVIS_OK);
    const auto s = json::parse(ovis::testing::take_string(summary));
    CHECK(s["steps"] == 6);
    CHECK(s["final_loss"].get<double>() < s["initial_loss"].get<double>());
    REQUIRE(ovis::testing::train_model(dirs, tmp / "c2", 3, tmp / "h2.csv"));
    CHECK(ovis::testing::read_file(tmp / "h1.csv") == ovis::testing::read_file(tmp / "h2.csv"));
    Handles a, b;
    open_all(a, tmp / "c1", dirs);
    open_all(b, tmp / "c2", dirs);
    for (const char* text : {"chair", "a sofa in a scene.", "something unseen"}) {
      const std::string req = json{{"text", text}, {"top_k", 5}}.dump();
      CHECK(query(a, req, 1).second == query(b, req, 1).second);
    }
    char* cfg = nullptr;
    REQUIRE(ovis_model_config(a.model, &cfg) == OVIS_OK);
    CHECK(json::parse(ovis::testing::take_string(cfg))["embed_dim"] == 16);
  }

  SUBCASE("bad configs are rejected") {
    CHECK(ovis_train("{\"epochs\": 1, \"nope\": 0}", raw.data(), raw.size(), (tmp / "bad").c_str(), nullptr,
                     nullptr) == OVIS_ERR_FORMAT);
    CHECK(ovis_train("not json", raw.data(), raw.size(), (tmp / "bad").c_str(), nullptr, nullptr) ==
          OVIS_ERR_FORMAT);
    CHECK(ovis_train(ovis::testing::train_config(1).c_str(), raw.data(), 0, (tmp / "bad").c_str(), nullptr,
                     nullptr) == OVIS_ERR_CONTRACT);
  }
}

TEST_CASE("query requests") {
  ScratchDir tmp("capi-query");
  const auto dirs = ovis::testing::make_scenes(tmp);
  REQUIRE(ovis::testing::train_model(dirs, tmp / "ckpt", 2));
  Handles h;
  open_all(h, tmp / "ckpt", dirs);
  const std::size_t m = ovis_scene_num_points(h.scenes[0]);

  SUBCASE("field errors name the field") {
    const std::vector<std::pair<std::string, std::string>> bad{
        {R"({})", "field 'text'"},
        {R"({"text": ""})", "field 'text'"},
        {R"({"text": 4})", "field 'text'"},
        {R"({"text": "chair", "top_k": -1})", "field 'top_k'"},
        {R"({"text": "chair", "top_k": 1.5})", "field 'top_k'"},
        {R"({"text": "chair", "tau": 0.4})", "field 'tau'"},
        {R"({"text": "chair", "tau": 1.01})", "field 'tau'"},
        {R"({"text": "chair", "mode": "median"})", "field 'mode'"},
        {R"({"text": "chair", "colour": "red"})", "field 'colour'"},
        {R"([1, 2])", "JSON object"},
        {R"({"text": )", "not valid JSON"}};
    for (const auto& [req, needle] : bad) {
      const auto [st, msg] = query(h, req);
      CHECK_MESSAGE(st == OVIS_ERR_REQUEST, req);
      CHECK_MESSAGE(msg.find(needle) != std::string::npos, (req + " -> " + msg));
    }
  }

  SUBCASE("responses are well formed") {
    const auto [st, text] = query(h, R"({"text": "table", "top_k": 3, "tau": 0.8, "mode": "hard", "scene_id": "x"})");
    REQUIRE(st == OVIS_OK);
    const auto r = json::parse(text);
    CHECK(r["text"] == "table");
    CHECK(r["mode"] == "hard");
    CHECK(r["tau"] == doctest::Approx(0.8));
    CHECK(r["results"].size() <= 3);
    std::set<std::string> ids;
    double prev = 2.0;
    for (const auto& c : r["results"]) {
      CHECK(ids.insert(c["mask_id"].get<std::string>()).second);
      CHECK(c["mask_id"] == std::to_string(c["query"].get<int>()) + "." + std::to_string(c["fragment"].get<int>()));
      const double score = c["score"];
      CHECK(score <= prev);
      CHECK(score >= 0.0);
      prev = score;
      CHECK_FALSE(c["point_indices"].empty());
      for (const auto& p : c["point_indices"]) CHECK(p.get<std::size_t>() < m);
    }
    const auto empty = json::parse(query(h, R"({"text": "table", "top_k": 0})").second);
    CHECK(empty["results"].empty());
  }

  SUBCASE("concurrent queries agree") {
    const std::string req = R"({"text": "a chair in a scene.", "top_k": 5})";
    const std::string expected = query(h, req).second;
    std::vector<std::string> got(4);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < got.size(); ++t)
      pool.emplace_back([&, t] {
        for (int rep = 0; rep < 3; ++rep) got[t] = query(h, req).second;
      });
    for (auto& th : pool) th.join();
    for (const auto& g : got) CHECK(g == expected);
  }

  SUBCASE("scene width must match the model") {
    ScratchDir other("capi-width");
    const auto wide = ovis::testing::make_scenes(
        other, R"({"categories": ["chair"], "points_per_instance": 20, "embed_dim": 8, "num_scenes": 1})");
    ovis_scene* s = nullptr;
    REQUIRE(ovis_scene_load(wide.at(0).c_str(), &s) == OVIS_OK);
    char* out = nullptr;
    CHECK(ovis_query(h.model, s, R"({"text": "chair"})", &out) == OVIS_ERR_DIMENSION);
    ovis_scene_free(s);
  }
}

TEST_CASE("evaluation report") {
  ScratchDir tmp("capi-eval");
  const auto dirs = ovis::testing::make_scenes(tmp);
  REQUIRE(ovis::testing::train_model(dirs, tmp / "ckpt", 2));
  Handles h;
  open_all(h, tmp / "ckpt", dirs);
  std::vector<const ovis_scene*> raw(h.scenes.begin(), h.scenes.end());

  char* report = nullptr;
  const std::string opts = json{{"curves_path", tmp / "curves.csv"}}.dump();
  REQUIRE(ovis_evaluate(h.model, raw.data(), raw.size(), opts.c_str(), &report) == OVIS_OK);
  const auto r = json::parse(ovis::testing::take_string(report));
  REQUIRE(r["categories"].size() == 3);
  for (const auto& c : r["categories"]) {
    CHECK(c["num_gt"] == 2);
    CHECK(c["ap"].get<double>() >= 0.0);
    CHECK(c["ap50"].get<double>() <= c["ap25"].get<double>() + 1e-12);
  }
  CHECK(r["mean"]["ap"].get<double>() <= 1.0);
  CHECK(r["grounding"]["num_queries"] == 6);
  CHECK(ovis::testing::read_file(tmp / "curves.csv").rfind("category,threshold,rank,precision,recall\n", 0) == 0);

  REQUIRE(ovis_evaluate(h.model, raw.data(), raw.size(), R"({"grounding": false})", &report) == OVIS_OK);
  CHECK_FALSE(json::parse(ovis::testing::take_string(report)).contains("grounding"));
  CHECK(ovis_evaluate(h.model, raw.data(), raw.size(), R"({"grounding": 1})", &report) == OVIS_ERR_REQUEST);
  CHECK(ovis_evaluate(h.model, raw.data(), 0, nullptr, &report) == OVIS_ERR_CONTRACT);
}

TEST_CASE("PLY export") {
  ScratchDir tmp("capi-ply");
  const auto dirs = ovis::testing::make_scenes(tmp);
  REQUIRE(ovis::testing::train_model(dirs, tmp / "ckpt", 1));
  Handles h;
  open_all(h, tmp / "ckpt", dirs);
  const std::size_t m = ovis_scene_num_points(h.scenes[0]);
  REQUIRE(ovis_export_ply(h.model, h.scenes[0], R"({"text": "sofa", "top_k": 2})", (tmp / "out.ply").c_str()) ==
          OVIS_OK);
  std::istringstream in(ovis::testing::read_file(tmp / "out.ply"));
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line) && line != "end_header") header.push_back(line);
  REQUIRE(header.size() == 9);
  CHECK(header[0] == "ply");
  CHECK(header[1] == "format ascii 1.0");
  CHECK(header[2] == "element vertex " + std::to_string(m));
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    double x, y, z;
    int r, g, b;
    REQUIRE(static_cast<bool>(row >> x >> y >> z >> r >> g >> b));
    for (int c : {r, g, b}) CHECK((c >= 0 && c <= 255));
    ++rows;
  }
  CHECK(rows == m);
  CHECK(ovis_export_ply(h.model, h.scenes[0], R"({"text": "sofa"})", (tmp / "no/such/dir.ply").c_str()) ==
        OVIS_ERR_IO);
  CHECK(ovis_export_ply(h.model, h.scenes[0], R"({"top_k": 1})", (tmp / "x.ply").c_str()) == OVIS_ERR_REQUEST);
}
