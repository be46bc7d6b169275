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

#include "ovis/ovis.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ovis/error.hpp"
#include "ovis/evaluation.hpp"
#include "ovis/fixture.hpp"
#include "ovis/inference.hpp"
#include "ovis/model.hpp"
#include "ovis/scene.hpp"
#include "ovis/training.hpp"

using nlohmann::json;

struct ovis_scene {
  ovis::SceneBundle bundle;
  ovis::LiftedFeatures lifted;
};

struct ovis_model {
  explicit ovis_model(ovis::SegModel m) : model(std::move(m)) {}
  ovis::SegModel model;
  std::unique_ptr<ovis::EmbeddingProvider> provider;
};

namespace {

thread_local std::string last_error;

class RequestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename F>
ovis_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return OVIS_OK;
  } catch (const ArgumentError& e) {
    last_error = e.what();
    return OVIS_ERR_ARGUMENT;
  } catch (const RequestError& e) {
    last_error = e.what();
    return OVIS_ERR_REQUEST;
  } catch (const ovis::DimensionError& e) {
    last_error = e.what();
    return OVIS_ERR_DIMENSION;
  } catch (const ovis::ContractError& e) {
    last_error = e.what();
    return OVIS_ERR_CONTRACT;
  } catch (const ovis::DomainError& e) {
    last_error = e.what();
    return OVIS_ERR_DOMAIN;
  } catch (const ovis::FormatError& e) {
    last_error = e.what();
    return OVIS_ERR_FORMAT;
  } catch (const ovis::DataError& e) {
    last_error = e.what();
    return OVIS_ERR_DATA;
  } catch (const ovis::IoError& e) {
    last_error = e.what();
    return OVIS_ERR_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
    return OVIS_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return OVIS_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw ArgumentError(std::string(what) + " must not be null");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_body(const char* text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw RequestError(std::string(what) + ": not valid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw RequestError(std::string(what) + ": must be a JSON object");
  return j;
}

[[noreturn]] void bad_field(const std::string& field, const std::string& message) {
  throw RequestError("field '" + field + "': " + message);
}

void reject_unknown(const json& j, const std::vector<std::string>& known) {
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) bad_field(key, "unknown field");
}

void read_ensemble(const json& j, ovis::EnsembleMode& mode) {
  if (j.contains("tau")) {
    const auto& t = j["tau"];
    if (!t.is_number() || t.get<double>() < 0.5 || t.get<double>() > 1.0)
      bad_field("tau", "must be a number in [0.5, 1]");
    mode.tau = t.get<double>();
  }
  if (j.contains("mode")) {
    const auto& m = j["mode"];
    if (!m.is_string()) bad_field("mode", "must be one of none, hard, soft");
    try {
      mode.kind = ovis::parse_ensemble_kind(m.get<std::string>());
    } catch (const ovis::ContractError&) {
      bad_field("mode", "must be one of none, hard, soft");
    }
  }
}

struct QueryRequest {
  std::string text;
  std::size_t top_k = 5;
  ovis::InferenceOptions options;
};

QueryRequest parse_query(const char* request_json) {
  const json j = parse_body(request_json, "request");
  reject_unknown(j, {"text", "top_k", "tau", "mode", "scene_id"});
  QueryRequest r;
  if (!j.contains("text")) bad_field("text", "required");
  if (!j["text"].is_string() || j["text"].get<std::string>().empty()) bad_field("text", "must be a non-empty string");
  r.text = j["text"].get<std::string>();
  if (j.contains("top_k")) {
    const auto& k = j["top_k"];
    if (!k.is_number_integer() || k.get<long long>() < 0) bad_field("top_k", "must be a non-negative integer");
    r.top_k = static_cast<std::size_t>(k.get<long long>());
  }
  read_ensemble(j, r.options.ensemble);
  return r;
}

void check_widths(const ovis_model* model, const ovis_scene* scene) {
  const std::size_t c = model->model.config().embed_dim;
  ovis::require<ovis::DimensionError>(scene->lifted.features.cols == c, "scene '", scene->bundle.id,
                                      "' has embeddings of width ", scene->lifted.features.cols,
                                      " but the model expects ", c);
}

ovis::QueryResult run_query(const ovis_model* model, const ovis_scene* scene, const QueryRequest& req) {
  check_widths(model, scene);
  const auto input = ovis::prepare_scene(scene->bundle, scene->lifted, model->model.config());
  return ovis::answer_query(model->model, input, req.text, *model->provider, req.top_k, req.options);
}

json result_json(const ovis::QueryResult& r, const QueryRequest& req) {
  json out;
  out["text"] = r.text;
  out["mode"] = ovis::ensemble_kind_name(req.options.ensemble.kind);
  out["tau"] = req.options.ensemble.tau;
  out["results"] = json::array();
  for (const auto& c : r.candidates)
    out["results"].push_back({{"mask_id", std::to_string(c.query) + "." + std::to_string(c.fragment)},
                              {"query", c.query},
                              {"fragment", c.fragment},
                              {"score", c.score},
                              {"point_indices", c.points}});
  return out;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xFFU));
}

void put_f32(std::vector<unsigned char>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

constexpr unsigned char kPalette[][3] = {{230, 25, 25},  {245, 130, 30}, {255, 215, 0},   {60, 180, 75},
                                         {70, 240, 240}, {0, 90, 230},   {145, 30, 180}, {240, 50, 230}};

}  // namespace

extern "C" {

const char* ovis_version(void) { return OVIS_VERSION; }

const char* ovis_status_name(ovis_status status) {
  switch (status) {
    case OVIS_OK:
      return "ok";
    case OVIS_ERR_ARGUMENT:
      return "argument";
    case OVIS_ERR_REQUEST:
      return "request";
    case OVIS_ERR_DIMENSION:
      return "dimension";
    case OVIS_ERR_CONTRACT:
      return "contract";
    case OVIS_ERR_DOMAIN:
      return "domain";
    case OVIS_ERR_FORMAT:
      return "format";
    case OVIS_ERR_DATA:
      return "data";
    case OVIS_ERR_IO:
      return "io";
    case OVIS_ERR_INTERNAL:
      return "internal";
  }
  return "unknown";
}

const char* ovis_last_error(void) { return last_error.c_str(); }

void ovis_string_free(char* text) { std::free(text); }

void ovis_buffer_free(void* data) { std::free(data); }

ovis_status ovis_fixtures_generate(const char* spec_json, const char* out_dir, char** ids_json) {
  return guarded([&] {
    need(spec_json, "spec_json");
    need(out_dir, "out_dir");
    const auto spec = ovis::FixtureSpec::from_json(spec_json);
    json ids = json::array();
    for (const auto& bundle : ovis::generate_fixtures(spec)) {
      ovis::save_bundle(bundle, std::filesystem::path(out_dir) / bundle.id);
      ids.push_back(bundle.id);
    }
    if (ids_json != nullptr) *ids_json = copy_string(ids.dump());
  });
}

ovis_status ovis_scene_load(const char* dir, ovis_scene** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    auto scene = std::make_unique<ovis_scene>();
    scene->bundle = ovis::load_bundle(dir);
    scene->lifted = ovis::lifted_features_for(scene->bundle);
    *out = scene.release();
  });
}

void ovis_scene_free(ovis_scene* scene) { delete scene; }

const char* ovis_scene_id(const ovis_scene* scene) { return scene == nullptr ? "" : scene->bundle.id.c_str(); }

size_t ovis_scene_num_points(const ovis_scene* scene) { return scene == nullptr ? 0 : scene->bundle.num_points(); }

ovis_status ovis_scene_points(const ovis_scene* scene, unsigned char** data, size_t* size) {
  return guarded([&] {
    need(scene, "scene");
    need(data, "data");
    need(size, "size");
    const auto& b = scene->bundle;
    std::vector<unsigned char> bytes;
    bytes.reserve(4 + 24 * b.num_points());
    put_u32(bytes, static_cast<std::uint32_t>(b.num_points()));
    for (std::size_t i = 0; i < b.num_points(); ++i) {
      for (std::size_t d = 0; d < 3; ++d) put_f32(bytes, static_cast<float>(b.points(i, d)));
      for (std::size_t d = 0; d < 3; ++d) put_f32(bytes, static_cast<float>(b.colors(i, d)));
    }
    auto* buffer = static_cast<unsigned char*>(std::malloc(bytes.size()));
    if (buffer == nullptr) throw std::bad_alloc();
    std::memcpy(buffer, bytes.data(), bytes.size());
    *data = buffer;
    *size = bytes.size();
  });
}

ovis_status ovis_train(const char* config_json, const char* const* scene_dirs, size_t num_scenes, const char* out_dir,
                       const char* history_csv, char** summary_json) {
  return guarded([&] {
    need(config_json, "config_json");
    need(out_dir, "out_dir");
    if (num_scenes > 0) need(scene_dirs, "scene_dirs");
    const auto config = ovis::TrainConfig::from_json(config_json);
    const auto provider = ovis::make_embedding_provider(config.model.text_encoder, config.model.embed_dim);
    std::vector<ovis::TrainingScene> scenes;
    for (std::size_t i = 0; i < num_scenes; ++i) {
      need(scene_dirs[i], "scene directory");
      scenes.push_back(ovis::prepare_training_scene(ovis::load_bundle(scene_dirs[i]), config.model, provider.get()));
    }
    ovis::SegModel model(config.model);
    const auto history = ovis::train(model, scenes, config);
    ovis::save_model(model, out_dir);
    if (history_csv != nullptr) ovis::write_history_csv(history_csv, history);
    if (summary_json != nullptr) {
      json s{{"steps", history.size()}};
      s["initial_loss"] = history.empty() ? json(nullptr) : json(history.front().total);
      s["final_loss"] = history.empty() ? json(nullptr) : json(history.back().total);
      *summary_json = copy_string(s.dump());
    }
  });
}

ovis_status ovis_model_load(const char* dir, ovis_model** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    auto model = std::make_unique<ovis_model>(ovis::load_model(dir));
    model->provider =
        ovis::make_embedding_provider(model->model.config().text_encoder, model->model.config().embed_dim);
    *out = model.release();
  });
}

void ovis_model_free(ovis_model* model) { delete model; }

ovis_status ovis_model_config(const ovis_model* model, char** config_json) {
  return guarded([&] {
    need(model, "model");
    need(config_json, "config_json");
    *config_json = copy_string(model->model.config().to_json());
  });
}

ovis_status ovis_query(const ovis_model* model, const ovis_scene* scene, const char* request_json,
                       char** response_json) {
  return guarded([&] {
    need(model, "model");
    need(scene, "scene");
    need(request_json, "request_json");
    need(response_json, "response_json");
    const auto req = parse_query(request_json);
    *response_json = copy_string(result_json(run_query(model, scene, req), req).dump());
  });
}

ovis_status ovis_evaluate(const ovis_model* model, const ovis_scene* const* scenes, size_t num_scenes,
                          const char* options_json, char** report_json) {
  return guarded([&] {
    need(model, "model");
    need(report_json, "report_json");
    if (num_scenes > 0) need(scenes, "scenes");
    ovis::InferenceOptions options;
    bool grounding = true;
    std::string curves_path;
    if (options_json != nullptr) {
      const json j = parse_body(options_json, "options");
      reject_unknown(j, {"tau", "mode", "nms_iou", "grounding", "curves_path"});
      if (j.contains("curves_path")) {
        if (!j["curves_path"].is_string()) bad_field("curves_path", "must be a string");
        curves_path = j["curves_path"].get<std::string>();
      }
      read_ensemble(j, options.ensemble);
      if (j.contains("nms_iou")) {
        if (!j["nms_iou"].is_number() || j["nms_iou"].get<double>() < 0.0 || j["nms_iou"].get<double>() > 1.0)
          bad_field("nms_iou", "must be a number in [0, 1]");
        options.nms_iou = j["nms_iou"].get<double>();
      }
      if (j.contains("grounding")) {
        if (!j["grounding"].is_boolean()) bad_field("grounding", "must be a boolean");
        grounding = j["grounding"].get<bool>();
      }
    }
    ovis::require(num_scenes >= 1, "evaluation needs at least one scene");
    const auto& names = scenes[0]->bundle.category_names;
    std::vector<ovis::EvalScene> eval;
    std::vector<ovis::Box> predicted, truth;
    for (std::size_t s = 0; s < num_scenes; ++s) {
      const ovis_scene* scene = scenes[s];
      need(scene, "scene");
      check_widths(model, scene);
      ovis::require<ovis::DataError>(scene->bundle.category_names == names, "scene '", scene->bundle.id,
                                     "' uses a different category list");
      const auto input = ovis::prepare_scene(scene->bundle, scene->lifted, model->model.config());
      const auto bank = ovis::ClassifierBank::from_labels(names, *model->provider);
      eval.push_back(ovis::make_eval_scene(scene->bundle, ovis::predict_instances(model->model, input, bank, options)));
      if (!grounding) continue;
      for (std::size_t j = 0; j < scene->bundle.num_masks(); ++j) {
        const auto& caption = scene->bundle.mask_records.at(j).caption;
        const auto top = ovis::answer_query(model->model, input, caption, *model->provider, 1, options);
        truth.push_back(ovis::extract_box(scene->bundle.points, ovis::mask_indices(scene->bundle.gt_masks[j])));
        predicted.push_back(top.candidates.empty() ? ovis::Box{}
                                                   : ovis::extract_box(scene->bundle.points, top.candidates[0].points));
      }
    }
    auto report = ovis::evaluate(eval, names);
    if (grounding) report.grounding = ovis::grounding_accuracy(predicted, truth);
    if (!curves_path.empty()) {
      std::ofstream out(curves_path);
      ovis::require<ovis::IoError>(static_cast<bool>(out << report.curves_csv()), "cannot write ", curves_path);
    }
    *report_json = copy_string(report.to_json());
  });
}

ovis_status ovis_export_ply(const ovis_model* model, const ovis_scene* scene, const char* request_json,
                            const char* path) {
  return guarded([&] {
    need(model, "model");
    need(scene, "scene");
    need(request_json, "request_json");
    need(path, "path");
    const auto req = parse_query(request_json);
    const auto result = run_query(model, scene, req);
    const auto& b = scene->bundle;
    std::vector<int> rank(b.num_points(), -1);
    for (std::size_t r = 0; r < result.candidates.size(); ++r)
      for (const std::size_t i : result.candidates[r].points)
        if (rank[i] < 0) rank[i] = static_cast<int>(r);
    std::ofstream out(path);
    ovis::require<ovis::IoError>(static_cast<bool>(out), "cannot write ", path);
    out << "ply\nformat ascii 1.0\nelement vertex " << b.num_points()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    constexpr std::size_t palette_size = sizeof kPalette / sizeof kPalette[0];
    for (std::size_t i = 0; i < b.num_points(); ++i) {
      int rgb[3];
      for (std::size_t d = 0; d < 3; ++d) {
        const double base = std::clamp(b.colors(i, d), 0.0, 1.0) * 255.0;
        const double tinted =
            rank[i] < 0 ? base : 0.25 * base + 0.75 * kPalette[static_cast<std::size_t>(rank[i]) % palette_size][d];
        rgb[d] = static_cast<int>(std::lround(tinted));
      }
      out << static_cast<float>(b.points(i, 0)) << ' ' << static_cast<float>(b.points(i, 1)) << ' '
          << static_cast<float>(b.points(i, 2)) << ' ' << rgb[0] << ' ' << rgb[1] << ' ' << rgb[2] << '\n';
    }
    ovis::require<ovis::IoError>(static_cast<bool>(out), "failed writing ", path);
  });
}

}  // extern "C"
