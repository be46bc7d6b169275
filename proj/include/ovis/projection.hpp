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

#include <cstddef>
#include <vector>

#include "ovis/scene.hpp"
#include "ovis/tensor.hpp"

namespace ovis {

// Per-point embeddings lifted from posed 2D feature images.
struct LiftedFeatures {
  Matrix features;                     // M x C; zero rows where coverage is 0
  std::vector<std::size_t> coverage;   // frames that contributed to each point
};

struct LiftOptions {
  double depth_tolerance = 0.02;  // meters
};

// Nearest-pixel projection of every point into every frame with a depth
// occlusion test; contributions are averaged and re-normalized. A point whose
// contributions cancel to zero is reported as uncovered.
LiftedFeatures lift(const Matrix& points, const std::vector<CameraFrame>& frames,
                    const LiftOptions& options = {});

// Uses the bundle's precomputed features when present, otherwise lifts its
// frames.
LiftedFeatures lifted_features_for(const SceneBundle& bundle, const LiftOptions& options = {});

struct ScaleLevel {
  double voxel_size = 0.0;
  std::vector<std::size_t> assignment;  // point -> voxel id, ids in first-appearance order
  std::vector<std::size_t> counts;      // members per voxel
  Matrix pooled;                        // voxels x width, mean of member rows

  std::size_t num_voxels() const { return counts.size(); }
};

struct ScalePyramid {
  std::vector<ScaleLevel> scales;

  std::size_t num_scales() const { return scales.size(); }
  std::size_t num_points() const { return scales.empty() ? 0 : scales[0].assignment.size(); }
};

// Voxel ids for one grid: key = floor(coordinate / voxel_size) per axis.
std::vector<std::size_t> voxelize(const Matrix& points, double voxel_size, std::size_t* num_voxels);

// Scale s uses voxel size base_voxel * 2^s. `features` may be empty, in which
// case only the assignments are built.
ScalePyramid build_pyramid(const Matrix& points, const Matrix& features, std::size_t num_scales,
                           double base_voxel);

// Mean of `values` rows per voxel of the given scale.
Matrix pool(const ScalePyramid& pyramid, std::size_t scale, const Matrix& values);

// Broadcasts voxel rows back to the points of that scale.
Matrix unpool(const ScalePyramid& pyramid, std::size_t scale, const Matrix& voxel_values);

}  // namespace ovis
