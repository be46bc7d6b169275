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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ovis/embedding.hpp"
#include "ovis/scene.hpp"

namespace ovis {

// Parameters of a synthetic scene made of disjoint axis-aligned point blobs.
struct FixtureSpec {
  std::vector<std::string> categories;
  std::size_t instances_per_category = 1;
  std::size_t points_per_instance = 100;
  double noise_sigma = 0.0;
  std::size_t embed_dim = 32;
  std::array<double, 3> bounds_min{0.0, 0.0, 0.0};
  std::array<double, 3> bounds_max{8.0, 8.0, 2.0};
  std::vector<std::string> distractor_entities;
  std::uint64_t seed = 0;
  std::size_t num_scenes = 1;
  double blob_extent = 1.0;  // edge length of each blob, meters
  double min_gap = 1.0;      // minimum axis-aligned clearance between blobs

  // Parses the JSON document form; unknown keys are rejected.
  static FixtureSpec from_json(const std::string& text);
  std::string to_json() const;
};

inline std::string caption_for_category(const std::string& category) {
  return "a " + category + " in a scene.";
}

// Pure function of (spec, seed). Throws DataError when the blobs cannot be
// placed disjointly inside the bounds.
SceneBundle generate_fixture(const FixtureSpec& spec, std::uint64_t seed);

// spec.num_scenes scenes with seeds spec.seed, spec.seed + 1, ...
std::vector<SceneBundle> generate_fixtures(const FixtureSpec& spec);

}  // namespace ovis
