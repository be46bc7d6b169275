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

#include "ovis/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "ovis/error.hpp"
#include "ovis/random.hpp"

namespace ovis {

using nlohmann::json;

namespace {

constexpr int kPlacementAttempts = 200;
constexpr int kLayoutAttempts = 50;

struct Box {
  std::array<double, 3> lo;
  std::array<double, 3> hi;
};

bool separated(const Box& a, const Box& b, double gap) {
  for (int k = 0; k < 3; ++k) {
    if (a.hi[k] + gap <= b.lo[k] || b.hi[k] + gap <= a.lo[k]) return true;
  }
  return false;
}

}  // namespace

FixtureSpec FixtureSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail<FormatError>("fixture spec is not valid JSON: ", e.what());
  }
  require<FormatError>(j.is_object(), "fixture spec must be a JSON object");
  static const std::set<std::string> known{
      "categories", "instances_per_category", "points_per_instance", "noise_sigma",
      "embed_dim",  "bounds",                 "distractor_entities", "seed",
      "num_scenes", "blob_extent",            "min_gap"};
  for (const auto& [key, _] : j.items())
    require<FormatError>(known.count(key) == 1, "fixture spec: unknown field '", key, "'");
  FixtureSpec s;
  try {
    s.categories = j.at("categories").get<std::vector<std::string>>();
    s.instances_per_category = j.value("instances_per_category", s.instances_per_category);
    s.points_per_instance = j.value("points_per_instance", s.points_per_instance);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.embed_dim = j.value("embed_dim", s.embed_dim);
    if (j.contains("bounds")) {
      s.bounds_min = j.at("bounds").at("min").get<std::array<double, 3>>();
      s.bounds_max = j.at("bounds").at("max").get<std::array<double, 3>>();
    }
    s.distractor_entities = j.value("distractor_entities", s.distractor_entities);
    s.seed = j.value("seed", s.seed);
    s.num_scenes = j.value("num_scenes", s.num_scenes);
    s.blob_extent = j.value("blob_extent", s.blob_extent);
    s.min_gap = j.value("min_gap", s.min_gap);
  } catch (const json::exception& e) {
    fail<FormatError>("fixture spec: ", e.what());
  }
  return s;
}

std::string FixtureSpec::to_json() const {
  json j;
  j["categories"] = categories;
  j["instances_per_category"] = instances_per_category;
  j["points_per_instance"] = points_per_instance;
  j["noise_sigma"] = noise_sigma;
  j["embed_dim"] = embed_dim;
  j["bounds"] = {{"min", bounds_min}, {"max", bounds_max}};
  j["distractor_entities"] = distractor_entities;
  j["seed"] = seed;
  j["num_scenes"] = num_scenes;
  j["blob_extent"] = blob_extent;
  j["min_gap"] = min_gap;
  return j.dump(2);
}

SceneBundle generate_fixture(const FixtureSpec& spec, std::uint64_t seed) {
  require(!spec.categories.empty(), "fixture needs at least one category");
  require(spec.instances_per_category >= 1 && spec.points_per_instance >= 1,
          "fixture needs at least one instance and one point per instance");
  require(spec.noise_sigma >= 0.0, "noise_sigma must be >= 0");
  require(spec.blob_extent > 0.0 && spec.min_gap >= 0.0, "blob_extent must be > 0, min_gap >= 0");
  for (int k = 0; k < 3; ++k) {
    require<DataError>(spec.bounds_max[k] - spec.bounds_min[k] >= spec.blob_extent,
                       "bounds are smaller than one blob along axis ", k);
  }

  const ToyEmbeddingProvider provider(spec.embed_dim);
  Rng rng(seed);

  const std::size_t k_cat = spec.categories.size();
  const std::size_t n_inst = k_cat * spec.instances_per_category;
  const std::size_t m = n_inst * spec.points_per_instance;
  const std::size_t c = spec.embed_dim;

  // Greedy placement can paint itself into a corner; restart the whole layout
  // when a blob finds no free spot.
  std::vector<Box> boxes;
  bool complete = false;
  for (int layout = 0; layout < kLayoutAttempts && !complete; ++layout) {
    boxes.clear();
    complete = true;
    for (std::size_t inst = 0; inst < n_inst && complete; ++inst) {
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
        Box b;
        for (int k = 0; k < 3; ++k) {
          b.lo[k] = rng.uniform(spec.bounds_min[k], spec.bounds_max[k] - spec.blob_extent);
          b.hi[k] = b.lo[k] + spec.blob_extent;
        }
        placed = std::all_of(boxes.begin(), boxes.end(),
                             [&](const Box& o) { return separated(b, o, spec.min_gap); });
        if (placed) boxes.push_back(b);
      }
      complete = placed;
    }
  }
  require<DataError>(complete, "cannot place ", n_inst, " blobs of extent ", spec.blob_extent,
                     " m with gap ", spec.min_gap, " m disjointly inside the bounds");

  SceneBundle b;
  b.id = "fixture-" + std::to_string(seed);
  b.category_names = spec.categories;
  b.points = Matrix(m, 3);
  b.colors = Matrix(m, 3);
  b.lifted_features = Matrix(m, c);

  std::vector<std::vector<double>> category_embedding;
  for (const auto& name : spec.categories) category_embedding.push_back(provider.embed(name));

  std::size_t row = 0;
  for (std::size_t inst = 0; inst < n_inst; ++inst) {
    const std::size_t cat = inst / spec.instances_per_category;
    std::array<double, 3> base;
    for (auto& v : base) v = rng.uniform(0.1, 0.9);
    BinaryMask mask(m, 0);
    for (std::size_t p = 0; p < spec.points_per_instance; ++p, ++row) {
      mask[row] = 1;
      for (int k = 0; k < 3; ++k) {
        b.points(row, k) = rng.uniform(boxes[inst].lo[k], boxes[inst].hi[k]);
        b.colors(row, k) = std::clamp(base[k] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
      }
      auto feat = b.lifted_features.row(row);
      const auto& e = category_embedding[cat];
      if (spec.noise_sigma == 0.0) {
        std::copy(e.begin(), e.end(), feat.begin());
      } else {
        double ss = 0.0;
        for (std::size_t d = 0; d < c; ++d) {
          feat[d] = e[d] + spec.noise_sigma * rng.gaussian();
          ss += feat[d] * feat[d];
        }
        const double n = std::sqrt(ss);
        for (auto& v : feat) v /= n;
      }
    }
    b.gt_masks.push_back(std::move(mask));

    MaskRecord rec;
    rec.category = static_cast<int>(cat);
    rec.caption = caption_for_category(spec.categories[cat]);
    rec.caption_embedding = provider.embed(rec.caption);
    rec.entities.push_back(spec.categories[cat]);
    for (const auto& d : spec.distractor_entities) rec.entities.push_back(d);
    rec.entity_embeddings = Matrix(rec.entities.size(), c);
    for (std::size_t k = 0; k < rec.entities.size(); ++k) {
      auto e = provider.embed(rec.entities[k]);
      std::copy(e.begin(), e.end(), rec.entity_embeddings.row(k).begin());
    }
    b.mask_records.push_back(std::move(rec));
  }
  b.validate();
  return b;
}

std::vector<SceneBundle> generate_fixtures(const FixtureSpec& spec) {
  require(spec.num_scenes >= 1, "num_scenes must be >= 1");
  std::vector<SceneBundle> out;
  for (std::size_t i = 0; i < spec.num_scenes; ++i) out.push_back(generate_fixture(spec, spec.seed + i));
  return out;
}

}  // namespace ovis
