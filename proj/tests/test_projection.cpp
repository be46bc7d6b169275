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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "doctest.h"
#include "ovis/error.hpp"
#include "ovis/fixture.hpp"
#include "ovis/projection.hpp"
#include "ovis/random.hpp"

using namespace ovis;

namespace {

Matrix identity4() {
  Matrix t(4, 4);
  for (int i = 0; i < 4; ++i) t(i, i) = 1.0;
  return t;
}

// Camera at `eye` looking along +x (camera z = world x, camera x = world -y,
// camera y = world -z).
Matrix look_along_x(double ex, double ey, double ez) {
  Matrix t(4, 4);
  t(0, 1) = -1.0;
  t(1, 2) = -1.0;
  t(2, 0) = 1.0;
  t(3, 3) = 1.0;
  t(0, 3) = ey;
  t(1, 3) = ez;
  t(2, 3) = -ex;
  return t;
}

CameraFrame blank_frame(std::size_t h, std::size_t w, std::size_t c, double f, Matrix pose) {
  CameraFrame fr;
  fr.height = h;
  fr.width = w;
  fr.intrinsics = Matrix(3, 3, {f, 0, (w - 1) / 2.0, 0, f, (h - 1) / 2.0, 0, 0, 1});
  fr.world_to_camera = std::move(pose);
  fr.depth.assign(h * w, 0.0);
  fr.features = Matrix(h * w, c);
  return fr;
}

// Z-buffer splat of the points into the frame: each pixel keeps the nearest
// point's depth and feature.
void render(CameraFrame& fr, const Matrix& points, const Matrix& features) {
  std::vector<double> best(fr.height * fr.width, INFINITY);
  for (std::size_t i = 0; i < points.rows; ++i) {
    long double p[4] = {points(i, 0), points(i, 1), points(i, 2), 1.0L};
    long double cam[3] = {0, 0, 0};
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 4; ++k) cam[r] += fr.world_to_camera(r, k) * p[k];
    if (cam[2] <= 0) continue;
    long double img[3] = {0, 0, 0};
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) img[r] += fr.intrinsics(r, k) * cam[k];
    const long double u = img[0] / img[2], v = img[1] / img[2];
    const long double col = std::floor(u + 0.5L), row = std::floor(v + 0.5L);
    if (col < 0 || row < 0 || col >= fr.width || row >= fr.height) continue;
    const std::size_t pix = static_cast<std::size_t>(row) * fr.width + static_cast<std::size_t>(col);
    if (cam[2] < best[pix]) {
      best[pix] = static_cast<double>(cam[2]);
      fr.depth[pix] = static_cast<double>(cam[2]);
      std::copy(features.row(i).begin(), features.row(i).end(), fr.features.row(pix).begin());
    }
  }
}

// Independent per-frame re-projection oracle in extended precision.
Matrix lift_oracle(const Matrix& points, const std::vector<CameraFrame>& frames, double tol,
                   std::vector<std::size_t>& coverage) {
  const std::size_t c = frames.empty() ? 0 : frames[0].features.cols;
  std::vector<std::vector<long double>> acc(points.rows, std::vector<long double>(c, 0.0L));
  coverage.assign(points.rows, 0);
  for (std::size_t i = 0; i < points.rows; ++i) {
    for (const auto& fr : frames) {
      long double p[4] = {points(i, 0), points(i, 1), points(i, 2), 1.0L};
      long double cam[3] = {0, 0, 0};
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 4; ++k) cam[r] += fr.world_to_camera(r, k) * p[k];
      if (cam[2] <= 0) continue;
      long double img[3] = {0, 0, 0};
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) img[r] += fr.intrinsics(r, k) * cam[k];
      const long double col = std::floor(img[0] / img[2] + 0.5L);
      const long double row = std::floor(img[1] / img[2] + 0.5L);
      if (col < 0 || row < 0 || col >= fr.width || row >= fr.height) continue;
      const std::size_t pix = static_cast<std::size_t>(row) * fr.width + static_cast<std::size_t>(col);
      if (std::fabs(cam[2] - fr.depth[pix]) > tol) continue;
      for (std::size_t d = 0; d < c; ++d) acc[i][d] += fr.features(pix, d);
      ++coverage[i];
    }
  }
  Matrix out(points.rows, c);
  for (std::size_t i = 0; i < points.rows; ++i) {
    long double ss = 0;
    for (auto v : acc[i]) ss += v * v;
    if (ss == 0) {
      coverage[i] = 0;
      continue;
    }
    for (std::size_t d = 0; d < c; ++d) out(i, d) = static_cast<double>(acc[i][d] / std::sqrt(ss));
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("lift: point on the optical axis takes the principal pixel") {
  auto fr = blank_frame(5, 5, 3, 10.0, identity4());
  std::fill(fr.depth.begin(), fr.depth.end(), 3.0);
  for (std::size_t p = 0; p < 25; ++p) fr.features(p, 0) = 1.0;
  fr.features(12, 0) = 0.0;
  fr.features(12, 2) = 1.0;
  Matrix pts(1, 3, {0.0, 0.0, 3.0});
  auto lifted = lift(pts, {fr});
  CHECK(lifted.coverage[0] == 1);
  CHECK(lifted.features(0, 2) == 1.0);
  CHECK(lifted.features(0, 0) == 0.0);
}

TEST_CASE("lift: points behind every camera are uncovered") {
  auto fr = blank_frame(4, 4, 2, 5.0, identity4());
  std::fill(fr.depth.begin(), fr.depth.end(), 1.0);
  for (std::size_t p = 0; p < 16; ++p) fr.features(p, 1) = 1.0;
  Matrix pts(2, 3, {0.0, 0.0, -1.0, 0.1, 0.2, 0.0});
  auto lifted = lift(pts, {fr, fr});
  CHECK(lifted.coverage == std::vector<std::size_t>{0, 0});
  CHECK(std::all_of(lifted.features.data.begin(), lifted.features.data.end(),
                    [](double v) { return v == 0.0; }));
}

TEST_CASE("lift: two frames average to the normalized mean") {
  auto a = blank_frame(3, 3, 2, 4.0, identity4());
  auto b = blank_frame(3, 3, 2, 4.0, look_along_x(-2.0, 0.0, 2.0));
  Matrix pts(1, 3, {0.0, 0.0, 2.0});
  std::fill(a.depth.begin(), a.depth.end(), 2.0);
  std::fill(b.depth.begin(), b.depth.end(), 2.0);
  for (std::size_t p = 0; p < 9; ++p) {
    a.features(p, 0) = 1.0;
    b.features(p, 0) = 0.6;
    b.features(p, 1) = 0.8;
  }
  std::vector<std::size_t> cov;
  auto oracle = lift_oracle(pts, {a, b}, 0.02, cov);
  auto lifted = lift(pts, {a, b});
  const double n = std::hypot(1.6, 0.8);
  REQUIRE(cov[0] == 2);
  CHECK(lifted.coverage[0] == 2);
  CHECK(lifted.features(0, 0) == doctest::Approx(1.6 / n).epsilon(1e-14));
  CHECK(lifted.features(0, 1) == doctest::Approx(0.8 / n).epsilon(1e-14));
  CHECK(max_abs_diff(lifted.features, oracle) < 1e-12);
}

TEST_CASE("lift: occluded points receive nothing from that frame") {
  auto fr = blank_frame(3, 3, 2, 3.0, identity4());
  std::fill(fr.depth.begin(), fr.depth.end(), 1.0);
  for (std::size_t p = 0; p < 9; ++p) fr.features(p, 0) = 1.0;
  Matrix pts(3, 3, {0.0, 0.0, 1.0, 0.0, 0.0, 1.5, 0.0, 0.0, 1.019});
  auto lifted = lift(pts, {fr});
  CHECK(lifted.coverage == std::vector<std::size_t>{1, 0, 1});
  LiftOptions strict;
  strict.depth_tolerance = 0.01;
  CHECK(lift(pts, {fr}, strict).coverage == std::vector<std::size_t>{1, 0, 0});
}

TEST_CASE("lift: rendered fixture views recover visible features") {
  FixtureSpec spec;
  spec.categories = {"chair", "table", "lamp"};
  spec.points_per_instance = 60;
  spec.embed_dim = 6;
  spec.noise_sigma = 0.2;
  auto scene = generate_fixture(spec, 3);

  std::vector<CameraFrame> frames;
  for (double ey : {2.0, 4.0, 6.0}) {
    frames.push_back(blank_frame(48, 64, spec.embed_dim, 40.0, look_along_x(-6.0, ey, 1.0)));
    render(frames.back(), scene.points, scene.lifted_features);
  }
  std::vector<std::size_t> cov;
  auto oracle = lift_oracle(scene.points, frames, 0.02, cov);
  auto lifted = lift(scene.points, frames);
  CHECK(lifted.coverage == cov);
  CHECK(max_abs_diff(lifted.features, oracle) < 1e-12);
  std::size_t covered = 0;
  for (std::size_t i = 0; i < scene.num_points(); ++i) {
    if (lifted.coverage[i] == 0) {
      CHECK(std::all_of(lifted.features.row(i).begin(), lifted.features.row(i).end(),
                        [](double v) { return v == 0.0; }));
      continue;
    }
    ++covered;
    double ss = 0;
    for (double v : lifted.features.row(i)) ss += v * v;
    CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-9);
  }
  CHECK(covered > 0);

  SUBCASE("frame order does not matter") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
      auto perm = frames;
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
      auto again = lift(scene.points, perm);
      CHECK(again.coverage == lifted.coverage);
      CHECK(max_abs_diff(again.features, lifted.features) <= 1e-12);
    }
  }
}

TEST_CASE("lift: bundle features take precedence over frames") {
  FixtureSpec spec;
  spec.categories = {"chair"};
  spec.points_per_instance = 10;
  spec.embed_dim = 4;
  auto scene = generate_fixture(spec, 1);
  scene.lifted_features(3, 0) = 0;
  std::fill(scene.lifted_features.row(3).begin(), scene.lifted_features.row(3).end(), 0.0);
  auto lifted = lifted_features_for(scene);
  CHECK(lifted.features == scene.lifted_features);
  CHECK(lifted.coverage[3] == 0);
  CHECK(lifted.coverage[0] == 1);
}

TEST_CASE("build_pyramid examples") {
  SUBCASE("one voxel") {
    Matrix pts(3, 3, {0.01, 0.01, 0.01, 0.02, 0.03, 0.0, 0.035, 0.0, 0.039});
    Matrix f(3, 2, {1, 2, 3, 4, 5, 9});
    auto pyr = build_pyramid(pts, f, 1, 0.04);
    REQUIRE(pyr.scales[0].num_voxels() == 1);
    CHECK(pyr.scales[0].pooled(0, 0) == doctest::Approx(3.0));
    CHECK(pyr.scales[0].pooled(0, 1) == doctest::Approx(5.0));
  }
  SUBCASE("distinct voxels") {
    Matrix pts(2, 3, {0.01, 0.0, 0.0, 0.05, 0.0, 0.0});
    Matrix f(2, 2, {1, 2, 3, 4});
    auto pyr = build_pyramid(pts, f, 2, 0.04);
    CHECK(pyr.scales[0].pooled == f);
    CHECK(pyr.scales[1].num_voxels() == 1);
    CHECK(pyr.scales[1].voxel_size == 0.08);
  }
  SUBCASE("negative coordinates floor away from zero") {
    Matrix pts(2, 3, {-0.01, 0.0, 0.0, 0.01, 0.0, 0.0});
    auto pyr = build_pyramid(pts, Matrix(), 3, 0.04);
    CHECK(pyr.scales[2].num_voxels() == 2);
    CHECK(pyr.scales[2].pooled.empty());
  }
  CHECK_THROWS_AS(build_pyramid(Matrix(1, 3), Matrix(), 0, 0.04), ContractError);
  CHECK_THROWS_AS(build_pyramid(Matrix(1, 3), Matrix(), 2, 0.0), ContractError);
}

TEST_CASE("build_pyramid matches a group-by oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto pts = random_matrix(rng, 50, 3, -0.3, 0.3);
    auto f = random_matrix(rng, 50, 4, -1.0, 1.0);
    auto pyr = build_pyramid(pts, f, 3, 0.05);
    REQUIRE(pyr.num_scales() == 3);
    for (std::size_t s = 0; s < 3; ++s) {
      const double vs = 0.05 * std::pow(2.0, static_cast<double>(s));
      CHECK(pyr.scales[s].voxel_size == doctest::Approx(vs).epsilon(1e-15));
      std::map<std::tuple<long, long, long>, std::vector<std::size_t>> groups;
      for (std::size_t i = 0; i < 50; ++i)
        groups[{static_cast<long>(std::floor(pts(i, 0) / vs)),
                static_cast<long>(std::floor(pts(i, 1) / vs)),
                static_cast<long>(std::floor(pts(i, 2) / vs))}]
            .push_back(i);
      const auto& level = pyr.scales[s];
      CHECK(level.num_voxels() == groups.size());
      for (const auto& [key, members] : groups) {
        const std::size_t v = level.assignment[members[0]];
        CHECK(level.counts[v] == members.size());
        for (std::size_t i : members) CHECK(level.assignment[i] == v);
        for (std::size_t d = 0; d < 4; ++d) {
          long double mean = 0;
          for (std::size_t i : members) mean += f(i, d);
          mean /= members.size();
          CHECK(std::abs(level.pooled(v, d) - static_cast<double>(mean)) < 1e-12);
        }
      }
      // Conservation.
      for (std::size_t d = 0; d < 4; ++d) {
        double total = 0, pooled_total = 0;
        for (std::size_t i = 0; i < 50; ++i) total += f(i, d);
        for (std::size_t v = 0; v < level.num_voxels(); ++v)
          pooled_total += level.pooled(v, d) * level.counts[v];
        CHECK(std::abs(total - pooled_total) < 1e-9);
      }
    }
  }
}

TEST_CASE("voxel ids follow first appearance") {
  Matrix pts(4, 3, {1.0, 0, 0, 0.0, 0, 0, 1.01, 0, 0, 2.0, 0, 0});
  std::size_t nv = 0;
  auto ids = voxelize(pts, 0.5, &nv);
  CHECK(nv == 3);
  CHECK(ids == std::vector<std::size_t>{0, 1, 0, 2});
}

TEST_CASE("unpool") {
  Rng rng(3);
  auto pts = random_matrix(rng, 30, 3, 0.0, 1.0);
  auto x = random_matrix(rng, 30, 2, -1.0, 1.0);
  auto pyr = build_pyramid(pts, x, 4, 0.001);
  REQUIRE(pyr.scales[0].num_voxels() == 30);
  CHECK(unpool(pyr, 0, pool(pyr, 0, x)) == x);

  Matrix constant(pyr.scales[3].num_voxels(), 2, 0.25);
  auto out = unpool(pyr, 3, constant);
  CHECK(out.rows == 30);
  CHECK(std::all_of(out.data.begin(), out.data.end(), [](double v) { return v == 0.25; }));

  auto coarse = build_pyramid(pts, x, 3, 0.2);
  for (std::size_t s = 0; s < 3; ++s) {
    auto means = coarse.scales[s].pooled;
    auto again = pool(coarse, s, unpool(coarse, s, means));
    CHECK(max_abs_diff(again, means) < 1e-15);
  }
  CHECK_THROWS_AS(unpool(coarse, 0, Matrix(coarse.scales[0].num_voxels() + 1, 2)), ContractError);
  CHECK_THROWS_AS(unpool(coarse, 3, Matrix(1, 2)), ContractError);
}
