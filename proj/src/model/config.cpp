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

#include <set>

#include "json.hpp"
#include "ovis/error.hpp"
#include "ovis/model.hpp"

namespace ovis {

using nlohmann::json;

std::string feature_source_name(FeatureSource s) {
  switch (s) {
    case FeatureSource::both:
      return "both";
    case FeatureSource::lifted_only:
      return "lifted_only";
    case FeatureSource::backbone_only:
      return "backbone_only";
  }
  return "both";
}

FeatureSource parse_feature_source(const std::string& name) {
  if (name == "both") return FeatureSource::both;
  if (name == "lifted_only") return FeatureSource::lifted_only;
  if (name == "backbone_only") return FeatureSource::backbone_only;
  fail<FormatError>("unknown feature source '", name, "' (expected both, lifted_only, backbone_only)");
}

void SegModelConfig::validate() const {
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(backbone_dim >= 1, "backbone_dim must be >= 1");
  require(num_scales >= 1, "num_scales must be >= 1");
  require(num_queries >= 1, "num_queries must be >= 1");
  require(num_blocks >= 1, "num_blocks must be >= 1");
  require(num_heads >= 1, "num_heads must be >= 1");
  require(hidden_dim >= 1 && hidden_dim % num_heads == 0, "hidden_dim ", hidden_dim,
          " must be a positive multiple of num_heads ", num_heads);
  require(base_voxel > 0.0, "base_voxel must be > 0");
  require(logit_scale > 0.0, "logit_scale must be > 0");
  require(text_encoder == "toy" || (text_encoder.rfind("table:", 0) == 0 && text_encoder.size() > 6),
          "text_encoder must be 'toy' or 'table:<path>', got '", text_encoder, "'");
}

std::size_t SegModelConfig::feature_width() const {
  switch (feature_source) {
    case FeatureSource::lifted_only:
      return embed_dim;
    case FeatureSource::backbone_only:
      return backbone_dim;
    case FeatureSource::both:
      break;
  }
  return embed_dim + backbone_dim;
}

std::string SegModelConfig::to_json() const {
  json j;
  j["embed_dim"] = embed_dim;
  j["backbone_dim"] = backbone_dim;
  j["num_scales"] = num_scales;
  j["num_queries"] = num_queries;
  j["num_blocks"] = num_blocks;
  j["num_heads"] = num_heads;
  j["hidden_dim"] = hidden_dim;
  j["base_voxel"] = base_voxel;
  j["logit_scale"] = logit_scale;
  j["positional_encoding"] = positional_encoding;
  j["feature_source"] = feature_source_name(feature_source);
  j["seed"] = seed;
  j["text_encoder"] = text_encoder;
  return j.dump(2);
}

SegModelConfig SegModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail<FormatError>("model config is not valid JSON: ", e.what());
  }
  require<FormatError>(j.is_object(), "model config must be a JSON object");
  static const std::set<std::string> known{
      "embed_dim",   "backbone_dim", "num_scales",          "num_queries",    "num_blocks",
      "num_heads",   "hidden_dim",   "base_voxel",          "logit_scale",    "positional_encoding",
      "feature_source", "seed",      "text_encoder"};
  for (const auto& [key, _] : j.items())
    require<FormatError>(known.count(key) == 1, "model config: unknown field '", key, "'");
  SegModelConfig c;
  try {
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.backbone_dim = j.value("backbone_dim", c.backbone_dim);
    c.num_scales = j.value("num_scales", c.num_scales);
    c.num_queries = j.value("num_queries", c.num_queries);
    c.num_blocks = j.value("num_blocks", c.num_blocks);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.base_voxel = j.value("base_voxel", c.base_voxel);
    c.logit_scale = j.value("logit_scale", c.logit_scale);
    c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
    c.feature_source = parse_feature_source(j.value("feature_source", std::string("both")));
    c.seed = j.value("seed", c.seed);
    c.text_encoder = j.value("text_encoder", c.text_encoder);
  } catch (const json::exception& e) {
    fail<FormatError>("model config: ", e.what());
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    fail<FormatError>("model config: ", e.what());
  }
  return c;
}

}  // namespace ovis
