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

#include "service.hpp"

#include <stdexcept>

#include "json.hpp"

namespace ovis::service {

using nlohmann::json;

namespace {

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

int http_status(ovis_status status) {
  switch (status) {
    case OVIS_ERR_REQUEST:
    case OVIS_ERR_DIMENSION:
    case OVIS_ERR_CONTRACT:
      return 400;
    default:
      return 500;
  }
}

}  // namespace

ModelHandle load_model(const std::string& dir) {
  ovis_model* m = nullptr;
  if (ovis_model_load(dir.c_str(), &m) != OVIS_OK)
    throw std::runtime_error("cannot load model " + dir + ": " + ovis_last_error());
  return ModelHandle(m);
}

SceneHandle load_scene(const std::string& dir) {
  ovis_scene* s = nullptr;
  if (ovis_scene_load(dir.c_str(), &s) != OVIS_OK)
    throw std::runtime_error("cannot load scene " + dir + ": " + ovis_last_error());
  return SceneHandle(s);
}

Service::Service(ModelHandle model, std::vector<SceneHandle> scenes) : model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("service needs a model");
  for (auto& s : scenes) {
    std::string id = ovis_scene_id(s.get());
    if (scenes_.count(id) != 0) throw std::invalid_argument("duplicate scene id '" + id + "'");
    scenes_.emplace(std::move(id), std::move(s));
  }
}

std::vector<std::string> Service::scene_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : scenes_) ids.push_back(id);
  return ids;
}

void Service::install(httplib::Server& server) const {
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"status", "ok"}, {"version", ovis_version()}}.dump(), "application/json");
  });

  server.Get("/scenes", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"scenes", scene_ids()}}.dump(), "application/json");
  });

  server.Get(R"(/scenes/([^/]+)/points)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto it = scenes_.find(id);
    if (it == scenes_.end()) return send_error(res, 404, "unknown scene '" + id + "'");
    unsigned char* data = nullptr;
    std::size_t size = 0;
    const ovis_status st = ovis_scene_points(it->second.get(), &data, &size);
    if (st != OVIS_OK) return send_error(res, 500, ovis_last_error());
    res.set_content(reinterpret_cast<const char*>(data), size, "application/octet-stream");
    ovis_buffer_free(data);
  });

  server.Post("/query", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("request: not valid JSON (") + e.what() + ")");
    }
    if (!body.is_object()) return send_error(res, 400, "request: must be a JSON object");
    if (!body.contains("scene_id")) return send_error(res, 400, "field 'scene_id': required");
    if (!body["scene_id"].is_string()) return send_error(res, 400, "field 'scene_id': must be a string");
    const std::string id = body["scene_id"].get<std::string>();
    const auto it = scenes_.find(id);
    if (it == scenes_.end()) return send_error(res, 404, "unknown scene '" + id + "'");
    char* out = nullptr;
    const ovis_status st = ovis_query(model_.get(), it->second.get(), req.body.c_str(), &out);
    if (st != OVIS_OK) return send_error(res, http_status(st), ovis_last_error());
    json response = json::parse(out);
    ovis_string_free(out);
    response["scene_id"] = id;
    res.set_content(response.dump(), "application/json");
  });
}

}  // namespace ovis::service
