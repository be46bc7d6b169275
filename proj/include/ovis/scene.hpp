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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ovis/tensor.hpp"

namespace ovis {

using BinaryMask = std::vector<std::uint8_t>;

// A posed RGB-D view carrying a per-pixel embedding image.
struct CameraFrame {
  Matrix intrinsics = Matrix(3, 3);       // pixels
  Matrix world_to_camera = Matrix(4, 4);  // rigid transform
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> depth;  // height * width, meters, 0 = invalid
  Matrix features;            // (height * width) x C, row-major pixels

  // Throws DataError when the intrinsics are not upper-triangular with
  // positive focal lengths or the rotation block is not orthonormal.
  void validate() const;

  friend bool operator==(const CameraFrame&, const CameraFrame&) = default;
};

// Language supervision attached to one ground-truth mask.
struct MaskRecord {
  std::string caption;
  std::vector<double> caption_embedding;  // empty when it must be computed
  std::vector<std::string> entities;
  Matrix entity_embeddings;  // entities.size() x C, empty when it must be computed
  int category = -1;         // read by evaluation only

  friend bool operator==(const MaskRecord&, const MaskRecord&) = default;
};

struct SceneBundle {
  std::string id;
  Matrix points;  // M x 3, meters
  Matrix colors;  // M x 3, in [0, 1]
  std::vector<BinaryMask> gt_masks;
  Matrix lifted_features;  // M x C; empty when frames must be lifted
  std::vector<CameraFrame> frames;
  std::vector<MaskRecord> mask_records;
  std::vector<std::string> category_names;

  std::size_t num_points() const { return points.rows; }
  std::size_t num_masks() const { return gt_masks.size(); }
  // Width of the shared embedding space, inferred from the first populated
  // embedding array; 0 if the bundle carries none.
  std::size_t embed_dim() const;

  // Checks every bundle invariant; throws DataError on the first violation.
  void validate() const;

  friend bool operator==(const SceneBundle&, const SceneBundle&) = default;
};

inline constexpr double kUnitNormTolerance = 1e-9;

// Directory layout: manifest.json plus one raw little-endian array file per
// array, each described in the manifest by file name, dtype and shape.
void save_bundle(const SceneBundle& bundle, const std::filesystem::path& dir);
SceneBundle load_bundle(const std::filesystem::path& dir);

// Indices of the set entries of a mask.
std::vector<std::size_t> mask_indices(const BinaryMask& mask);

}  // namespace ovis
