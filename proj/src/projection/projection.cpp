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

#include "ovis/projection.hpp"

#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "ovis/error.hpp"

namespace ovis {

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ULL;
      h ^= h >> 29;
    }
    return static_cast<std::size_t>(h);
  }
};

void check_points(const Matrix& points) {
  require<DimensionError>(points.cols == 3 || points.rows == 0, "points must be M x 3, got ",
                          points.rows, " x ", points.cols);
}

}  // namespace

LiftedFeatures lift(const Matrix& points, const std::vector<CameraFrame>& frames,
                    const LiftOptions& options) {
  check_points(points);
  require(options.depth_tolerance >= 0.0, "depth_tolerance must be >= 0");
  const std::size_t m = points.rows;
  std::size_t c = 0;
  for (const auto& f : frames) {
    f.validate();
    if (c == 0) c = f.features.cols;
    require<DimensionError>(f.features.cols == c, "frames disagree on feature width: ", c, " vs ",
                            f.features.cols);
  }

  LiftedFeatures out;
  out.features = Matrix(m, c);
  out.coverage.assign(m, 0);

  // Frames are visited in a fixed order per point and summed with Neumaier
  // compensation so the mean does not depend on frame order beyond rounding.
  Matrix comp(m, c);
  for (const auto& f : frames) {
    const Matrix& k = f.intrinsics;
    const Matrix& t = f.world_to_camera;
    for (std::size_t i = 0; i < m; ++i) {
      const double px = points(i, 0), py = points(i, 1), pz = points(i, 2);
      const double x = t(0, 0) * px + t(0, 1) * py + t(0, 2) * pz + t(0, 3);
      const double y = t(1, 0) * px + t(1, 1) * py + t(1, 2) * pz + t(1, 3);
      const double z = t(2, 0) * px + t(2, 1) * py + t(2, 2) * pz + t(2, 3);
      if (z <= 0.0) continue;
      const double u = (k(0, 0) * x + k(0, 1) * y) / z + k(0, 2);
      const double v = k(1, 1) * y / z + k(1, 2);
      const double col = std::floor(u + 0.5);
      const double row = std::floor(v + 0.5);
      if (col < 0.0 || row < 0.0 || col >= static_cast<double>(f.width) ||
          row >= static_cast<double>(f.height))
        continue;
      const std::size_t pix = static_cast<std::size_t>(row) * f.width + static_cast<std::size_t>(col);
      if (std::abs(z - f.depth[pix]) > options.depth_tolerance) continue;
      auto acc = out.features.row(i);
      auto cmp = comp.row(i);
      auto feat = f.features.row(pix);
      for (std::size_t d = 0; d < c; ++d) {
        const double s = acc[d] + feat[d];
        cmp[d] += std::abs(acc[d]) >= std::abs(feat[d]) ? (acc[d] - s) + feat[d] : (feat[d] - s) + acc[d];
        acc[d] = s;
      }
      ++out.coverage[i];
    }
  }

  for (std::size_t i = 0; i < m; ++i) {
    auto acc = out.features.row(i);
    if (out.coverage[i] == 0) continue;
    double ss = 0.0;
    for (std::size_t d = 0; d < c; ++d) {
      acc[d] += comp(i, d);
      ss += acc[d] * acc[d];
    }
    const double n = std::sqrt(ss);
    if (n == 0.0) {
      std::fill(acc.begin(), acc.end(), 0.0);
      out.coverage[i] = 0;
      continue;
    }
    for (double& v : acc) v /= n;
  }
  return out;
}

LiftedFeatures lifted_features_for(const SceneBundle& bundle, const LiftOptions& options) {
  if (bundle.lifted_features.empty()) return lift(bundle.points, bundle.frames, options);
  LiftedFeatures out;
  out.features = bundle.lifted_features;
  out.coverage.assign(bundle.num_points(), 0);
  for (std::size_t i = 0; i < bundle.num_points(); ++i) {
    for (double v : out.features.row(i)) {
      if (v != 0.0) {
        out.coverage[i] = 1;
        break;
      }
    }
  }
  return out;
}

std::vector<std::size_t> voxelize(const Matrix& points, double voxel_size, std::size_t* num_voxels) {
  check_points(points);
  require(voxel_size > 0.0 && std::isfinite(voxel_size), "voxel size must be > 0, got ", voxel_size);
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> ids;
  std::vector<std::size_t> assignment(points.rows);
  for (std::size_t i = 0; i < points.rows; ++i) {
    const VoxelKey key{static_cast<std::int64_t>(std::floor(points(i, 0) / voxel_size)),
                       static_cast<std::int64_t>(std::floor(points(i, 1) / voxel_size)),
                       static_cast<std::int64_t>(std::floor(points(i, 2) / voxel_size))};
    auto [it, inserted] = ids.try_emplace(key, ids.size());
    assignment[i] = it->second;
  }
  if (num_voxels != nullptr) *num_voxels = ids.size();
  return assignment;
}

ScalePyramid build_pyramid(const Matrix& points, const Matrix& features, std::size_t num_scales,
                           double base_voxel) {
  require(num_scales >= 1, "pyramid needs at least one scale");
  require(base_voxel > 0.0, "base voxel size must be > 0, got ", base_voxel);
  require<DimensionError>(features.empty() || features.rows == points.rows, "features have ",
                          features.rows, " rows for ", points.rows, " points");
  ScalePyramid pyr;
  for (std::size_t s = 0; s < num_scales; ++s) {
    ScaleLevel level;
    level.voxel_size = std::ldexp(base_voxel, static_cast<int>(s));
    std::size_t nv = 0;
    level.assignment = voxelize(points, level.voxel_size, &nv);
    level.counts.assign(nv, 0);
    for (std::size_t v : level.assignment) ++level.counts[v];
    pyr.scales.push_back(std::move(level));
    if (!features.empty()) pyr.scales.back().pooled = pool(pyr, s, features);
  }
  return pyr;
}

Matrix pool(const ScalePyramid& pyramid, std::size_t scale, const Matrix& values) {
  require(scale < pyramid.num_scales(), "scale ", scale, " out of range for ", pyramid.num_scales(),
          " scales");
  const auto& level = pyramid.scales[scale];
  require(values.rows == level.assignment.size(), "pool: ", values.rows, " rows for ",
          level.assignment.size(), " points");
  Matrix out(level.num_voxels(), values.cols);
  for (std::size_t i = 0; i < values.rows; ++i) {
    auto dst = out.row(level.assignment[i]);
    auto src = values.row(i);
    for (std::size_t d = 0; d < values.cols; ++d) dst[d] += src[d];
  }
  for (std::size_t v = 0; v < out.rows; ++v) {
    const double inv = 1.0 / static_cast<double>(level.counts[v]);
    for (double& x : out.row(v)) x *= inv;
  }
  return out;
}

Matrix unpool(const ScalePyramid& pyramid, std::size_t scale, const Matrix& voxel_values) {
  require(scale < pyramid.num_scales(), "scale ", scale, " out of range for ", pyramid.num_scales(),
          " scales");
  const auto& level = pyramid.scales[scale];
  require(voxel_values.rows == level.num_voxels(), "unpool: ", voxel_values.rows,
          " voxel rows for ", level.num_voxels(), " voxels at scale ", scale);
  Matrix out(level.assignment.size(), voxel_values.cols);
  for (std::size_t i = 0; i < out.rows; ++i) {
    auto src = voxel_values.row(level.assignment[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace ovis
