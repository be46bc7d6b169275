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

#include <cstring>
#include <thread>

#include "capi_support.hpp"
#include "doctest.h"
#include "json.hpp"
#include "service.hpp"

using nlohmann::json;
using ovis::testing::ScratchDir;

namespace {

class Running {
 public:
  explicit Running(const ovis::service::Service& service) {
    service.install(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::unique_ptr<ovis::service::Service> make_service(const ScratchDir& tmp, std::vector<std::string>& dirs) {
  dirs = ovis::testing::make_scenes(tmp);
  REQUIRE(dirs.size() == 2);
  REQUIRE(ovis::testing::train_model(dirs, tmp / "ckpt", 2));
  std::vector<ovis::service::SceneHandle> scenes;
  for (const auto& d : dirs) scenes.push_back(ovis::service::load_scene(d));
  return std::make_unique<ovis::service::Service>(ovis::service::load_model(tmp / "ckpt"), std::move(scenes));
}

}  // namespace

TEST_CASE("service endpoints") {
  ScratchDir tmp("service");
  std::vector<std::string> dirs;
  const auto service = make_service(tmp, dirs);
  const auto ids = service->scene_ids();
  REQUIRE(ids.size() == 2);
  Running running(*service);
  auto cli = running.client();

  SUBCASE("health and scene list") {
    auto res = cli.Get("/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["status"] == "ok");
    res = cli.Get("/scenes");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["scenes"] == json(ids));
  }

  SUBCASE("points payload") {
    auto res = cli.Get("/scenes/" + ids[0] + "/points");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "application/octet-stream");
    ovis_scene* s = nullptr;
    REQUIRE(ovis_scene_load(dirs[0].c_str(), &s) == OVIS_OK);
    const std::size_t m = ovis_scene_num_points(s);
    unsigned char* data = nullptr;
    std::size_t size = 0;
    REQUIRE(ovis_scene_points(s, &data, &size) == OVIS_OK);
    CHECK(res->body.size() == 4 + 24 * m);
    CHECK(res->get_header_value("Content-Length") == std::to_string(4 + 24 * m));
    CHECK(std::memcmp(res->body.data(), data, size) == 0);
    ovis_buffer_free(data);
    ovis_scene_free(s);

    res = cli.Get("/scenes/nowhere/points");
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["error"].get<std::string>().find("nowhere") != std::string::npos);
  }

  SUBCASE("query responses") {
    const std::string body = json{{"scene_id", ids[1]}, {"text", "sofa"}, {"top_k", 3}}.dump();
    auto first = cli.Post("/query", body, "application/json");
    auto second = cli.Post("/query", body, "application/json");
    REQUIRE(first);
    REQUIRE(second);
    CHECK(first->status == 200);
    CHECK(first->body == second->body);
    const auto r = json::parse(first->body);
    CHECK(r["scene_id"] == ids[1]);
    CHECK(r["results"].size() <= 3);

    auto none = cli.Post("/query", json{{"scene_id", ids[1]}, {"text", "sofa"}, {"top_k", 0}}.dump(),
                         "application/json");
    REQUIRE(none);
    CHECK(none->status == 200);
    CHECK(json::parse(none->body)["results"] == json::array());
  }

  SUBCASE("query errors") {
    const std::vector<std::tuple<std::string, int, std::string>> cases{
        {json{{"scene_id", "nowhere"}, {"text", "sofa"}}.dump(), 404, "nowhere"},
        {json{{"text", "sofa"}}.dump(), 400, "field 'scene_id'"},
        {json{{"scene_id", 3}, {"text", "sofa"}}.dump(), 400, "field 'scene_id'"},
        {json{{"scene_id", ids[0]}}.dump(), 400, "field 'text'"},
        {json{{"scene_id", ids[0]}, {"text", "sofa"}, {"top_k", -2}}.dump(), 400, "field 'top_k'"},
        {json{{"scene_id", ids[0]}, {"text", "sofa"}, {"tau", 0.1}}.dump(), 400, "field 'tau'"},
        {json{{"scene_id", ids[0]}, {"text", "sofa"}, {"mode", "x"}}.dump(), 400, "field 'mode'"},
        {"{broken", 400, "not valid JSON"},
        {"[]", 400, "JSON object"}};
    for (const auto& [body, status, needle] : cases) {
      auto res = cli.Post("/query", body, "application/json");
      REQUIRE(res);
      CHECK_MESSAGE(res->status == status, body);
      CHECK_MESSAGE(json::parse(res->body)["error"].get<std::string>().find(needle) != std::string::npos, body);
    }
  }

  SUBCASE("concurrent clients see identical answers") {
    const std::string body = json{{"scene_id", ids[0]}, {"text", "a table in a scene."}, {"top_k", 5}}.dump();
    auto reference = cli.Post("/query", body, "application/json");
    REQUIRE(reference);
    std::vector<std::string> got(4);
    std::vector<int> status(4, 0);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < got.size(); ++t)
      pool.emplace_back([&, t] {
        auto c = running.client();
        auto res = c.Post("/query", body, "application/json");
        if (res) {
          status[t] = res->status;
          got[t] = res->body;
        }
      });
    for (auto& th : pool) th.join();
    for (std::size_t t = 0; t < got.size(); ++t) {
      CHECK(status[t] == 200);
      CHECK(got[t] == reference->body);
    }
  }
}

TEST_CASE("service construction") {
  ScratchDir tmp("service-ctor");
  const auto dirs = ovis::testing::make_scenes(tmp);
  REQUIRE(ovis::testing::train_model(dirs, tmp / "ckpt", 0));
  std::vector<ovis::service::SceneHandle> twice;
  twice.push_back(ovis::service::load_scene(dirs[0]));
  twice.push_back(ovis::service::load_scene(dirs[0]));
  CHECK_THROWS_AS(ovis::service::Service(ovis::service::load_model(tmp / "ckpt"), std::move(twice)),
                  std::invalid_argument);
  CHECK_THROWS_AS(ovis::service::load_scene(tmp / "missing"), std::runtime_error);
}
