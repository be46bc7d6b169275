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

#ifndef OVIS_TOOLS_SERVICE_HPP_
#define OVIS_TOOLS_SERVICE_HPP_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "httplib.h"
#include "ovis/ovis.h"

namespace ovis::service {

struct ModelDeleter {
  void operator()(ovis_model* m) const { ovis_model_free(m); }
};
struct SceneDeleter {
  void operator()(ovis_scene* s) const { ovis_scene_free(s); }
};
using ModelHandle = std::unique_ptr<ovis_model, ModelDeleter>;
using SceneHandle = std::unique_ptr<ovis_scene, SceneDeleter>;

// Throws std::runtime_error carrying ovis_last_error() on failure.
ModelHandle load_model(const std::string& dir);
SceneHandle load_scene(const std::string& dir);

// HTTP front end for the viewer:
//   GET  /health
//   GET  /scenes                 {"scenes": [id, ...]}
//   GET  /scenes/{id}/points     binary point payload
//   POST /query                  {"scene_id", "text", "top_k"?, "tau"?, "mode"?}
// Errors are {"error": message} with 400 for bad requests, 404 for unknown
// scenes and 500 otherwise.
class Service {
 public:
  Service(ModelHandle model, std::vector<SceneHandle> scenes);

  std::vector<std::string> scene_ids() const;
  void install(httplib::Server& server) const;

 private:
  ModelHandle model_;
  std::map<std::string, SceneHandle> scenes_;
};

}  // namespace ovis::service

#endif
