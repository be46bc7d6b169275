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
#include <numeric>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "ovis/error.hpp"
#include "ovis/fixture.hpp"
#include "ovis/inference.hpp"

using namespace ovis;

namespace {

Matrix random_points(Rng& rng, std::size_t n, double extent) {
  Matrix p(n, 3);
  for (double& v : p.data) v = rng.uniform(0.0, extent);
  return p;
}

Prediction hand_prediction(const Matrix& fm, const std::vector<BinaryMask>& masks) {
  Prediction p;
  const std::size_t m = masks.empty() ? 0 : masks.front().size();
  Matrix heat(fm.rows, m);
  for (std::size_t q = 0; q < fm.rows; ++q)
    for (std::size_t i = 0; i < m; ++i) heat(q, i) = masks[q][i] ? 1.0 : -1.0;
  p.heatmaps = Tensor::from_matrix(heat);
  p.mask_features = Tensor::from_matrix(fm);
  p.masks = masks;
  p.query_indices.assign(fm.rows, 0);
  return p;
}

std::vector<double> softmax_ld(const std::vector<long double>& z) {
  long double top = *std::max_element(z.begin(), z.end()), s = 0;
  std::vector<long double> e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - top);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<double>(e[i] / s);
  return out;
}

}  // namespace

TEST_CASE("soft geometric mean") {
  CHECK(soft_geometric_mean(0.8, 0.2, 0.667) == doctest::Approx(0.5043).epsilon(1e-4));
  CHECK(soft_geometric_mean(0.8, 0.2, 0.667) ==
        doctest::Approx(static_cast<double>(oracle::soft_geometric_mean(0.8L, 0.2L, 0.667L))).epsilon(1e-14));

  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const double a = rng.uniform(1e-6, 1.0), b = rng.uniform(1e-6, 1.0), tau = rng.uniform(0.5, 1.0);
    const double v = soft_geometric_mean(a, b, tau);
    CHECK(v == doctest::Approx(static_cast<double>(oracle::soft_geometric_mean(a, b, tau))).epsilon(1e-12));
    CHECK(v == soft_geometric_mean(b, a, tau));
    CHECK(v >= std::min(a, b) * (1 - 1e-12));
    CHECK(v <= std::max(a, b) * (1 + 1e-12));
    CHECK(soft_geometric_mean(a + 0.01 * (1 - a), b, tau) >= v);
    CHECK(soft_geometric_mean(a, b, 0.5) == doctest::Approx(std::sqrt(a * b)).epsilon(1e-13));
    CHECK(soft_geometric_mean(a, b, 1.0) == doctest::Approx(std::max(a, b)).epsilon(1e-15));
    CHECK(soft_geometric_mean(a, a, tau) == doctest::Approx(a).epsilon(1e-14));
  }
}

TEST_CASE("ensemble modes") {
  EnsembleMode mode;
  CHECK(mode.tau == 0.667);
  mode.kind = EnsembleKind::none;
  CHECK(combine_probabilities(0.3, 0.9, mode) == 0.3);
  mode.kind = EnsembleKind::hard_geometric;
  CHECK(combine_probabilities(0.3, 0.9, mode) == doctest::Approx(std::pow(0.3, 0.667) * std::pow(0.9, 0.333)));
  mode.kind = EnsembleKind::soft_geometric;
  CHECK(combine_probabilities(0.3, 0.9, mode) == doctest::Approx(std::pow(0.9, 0.667) * std::pow(0.3, 0.333)));
  for (const auto& name : {"none", "hard", "soft"}) CHECK(ensemble_kind_name(parse_ensemble_kind(name)) == name);
  CHECK_THROWS_AS(parse_ensemble_kind("mean"), ContractError);
  mode.tau = 0.4;
  CHECK_THROWS_AS(mode.validate(), ContractError);
  mode.tau = 1.01;
  CHECK_THROWS_AS(mode.validate(), ContractError);
}

TEST_CASE("classify") {
  const Matrix bank_rows(2, 2, {1.0, 0.0, 0.0, 1.0});
  ClassifierBank bank{bank_rows, {"a", "b"}};
  const double r = std::sqrt(0.5);
  const Matrix fm(2, 2, {1.0, 0.0, r, r});
  const Matrix lifted(3, 2, {0.0, 1.0, 0.0, 2.0, 1.0, 0.0});
  const std::vector<BinaryMask> masks{{1, 1, 0}, {0, 0, 0}};
  const auto pred = hand_prediction(fm, masks);
  const double s = 10.0;

  const auto pm0 = softmax_ld({s * 1.0L, 0.0L});
  const auto pp0 = softmax_ld({0.0L, s * 1.0L});  // pooled rows 0,1 -> (0, 1)
  const auto pm1 = softmax_ld({s * static_cast<long double>(r), s * static_cast<long double>(r)});

  SUBCASE("soft") {
    const Matrix p = classify(pred, lifted, bank, EnsembleMode{}, s);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(p(0, k) == doctest::Approx(static_cast<double>(oracle::soft_geometric_mean(pm0[k], pp0[k], 0.667L))).epsilon(1e-12));
      CHECK(p(1, k) == doctest::Approx(pm1[k]).epsilon(1e-14));
    }
  }
  SUBCASE("none keeps the mask-feature softmax") {
    const Matrix p = classify(pred, lifted, bank, EnsembleMode{EnsembleKind::none, 0.667}, s);
    CHECK(p(0, 0) + p(0, 1) == doctest::Approx(1.0));
    CHECK(p(0, 0) == doctest::Approx(pm0[0]).epsilon(1e-14));
  }
  SUBCASE("tau = 1 is the elementwise max") {
    const Matrix p = classify(pred, lifted, bank, EnsembleMode{EnsembleKind::soft_geometric, 1.0}, s);
    for (std::size_t k = 0; k < 2; ++k) CHECK(p(0, k) == doctest::Approx(std::max(pm0[k], pp0[k])).epsilon(1e-14));
  }
  SUBCASE("width mismatch") {
    ClassifierBank wide{Matrix(1, 3, {1.0, 0.0, 0.0}), {"x"}};
    CHECK_THROWS_AS(classify(pred, lifted, wide, EnsembleMode{}, s), DimensionError);
  }
  SUBCASE("bank validation") {
    ClassifierBank bad{Matrix(1, 2, {1.0, 1.0}), {"x"}};
    CHECK_THROWS_AS(bad.validate(), ContractError);
    ClassifierBank empty;
    CHECK_THROWS_AS(empty.validate(), ContractError);
  }
}

TEST_CASE("pooled feature") {
  const Matrix lifted(3, 2, {3.0, 0.0, 0.0, 4.0, 1.0, 1.0});
  const std::vector<std::size_t> idx{0, 1};
  const auto f = pooled_feature(lifted, idx);
  CHECK(f[0] == doctest::Approx(0.6));
  CHECK(f[1] == doctest::Approx(0.8));
  CHECK(pooled_feature(lifted, std::vector<std::size_t>{}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("refine mask") {
  SUBCASE("small cases") {
    Matrix one(1, 3, {1.0, 2.0, 3.0});
    const std::vector<std::size_t> i0{0};
    CHECK(refine_mask(one, i0) == std::vector<std::vector<std::size_t>>{{0}});
    CHECK(refine_mask(one, std::vector<std::size_t>{}).empty());
    CHECK_THROWS_AS(refine_mask(one, i0, 0.0), ContractError);
    CHECK_THROWS_AS(refine_mask(one, i0, 0.5, 0), ContractError);

    Rng rng(1);
    Matrix tight = random_points(rng, 30, 0.5);
    std::vector<std::size_t> all(30);
    std::iota(all.begin(), all.end(), 0);
    const auto c = refine_mask(tight, all);
    REQUIRE(c.size() == 1);
    CHECK(c[0] == all);
  }
  SUBCASE("two blobs five meters apart") {
    Rng rng(2);
    Matrix pts(20, 3);
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t d = 0; d < 3; ++d) pts(i, d) = rng.uniform(0.0, 0.3) + (i % 2 == 0 && d == 0 ? 5.0 : 0.0);
    std::vector<std::size_t> all(20);
    std::iota(all.begin(), all.end(), 0);
    const auto c = refine_mask(pts, all, 0.95);
    REQUIRE(c.size() == 2);
    CHECK(std::set<std::vector<std::size_t>>(c.begin(), c.end()) == oracle::components(pts, all, 0.95));
  }
  SUBCASE("random sets against connected components") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 5 + rng.index(80);
      const Matrix pts = random_points(rng, n, rng.uniform(1.0, 8.0));
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i)
        if (rng.uniform() < 0.7) idx.push_back(i);
      const double eps = rng.uniform(0.2, 1.5);
      const auto c = refine_mask(pts, idx, eps);
      CHECK(std::set<std::vector<std::size_t>>(c.begin(), c.end()) == oracle::components(pts, idx, eps));

      std::vector<std::size_t> merged;
      for (const auto& piece : c) merged.insert(merged.end(), piece.begin(), piece.end());
      std::sort(merged.begin(), merged.end());
      CHECK(merged == idx);
      for (std::size_t k = 1; k < c.size(); ++k) CHECK(c[k - 1].size() >= c[k].size());
    }
  }
  SUBCASE("min points above one drops noise") {
    Matrix pts(4, 3, {0.0, 0, 0, 0.5, 0, 0, 1.0, 0, 0, 10.0, 0, 0});
    const std::vector<std::size_t> all{0, 1, 2, 3};
    CHECK(refine_mask(pts, all, 0.6, 3) == std::vector<std::vector<std::size_t>>{{0, 1, 2}});
  }
}

TEST_CASE("extract box") {
  Matrix pts(8, 3);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t d = 0; d < 3; ++d) pts(i, d) = static_cast<double>((i >> d) & 1U);
  std::vector<std::size_t> all(8);
  std::iota(all.begin(), all.end(), 0);
  const Box cube = extract_box(pts, all);
  CHECK(cube.min == std::array<double, 3>{0, 0, 0});
  CHECK(cube.max == std::array<double, 3>{1, 1, 1});
  const Box point = extract_box(pts, std::vector<std::size_t>{5});
  CHECK(point.min == point.max);
  CHECK(point.min == std::array<double, 3>{1, 0, 1});
  const Box pair = extract_box(pts, std::vector<std::size_t>{1, 6});
  CHECK(pair.min == std::array<double, 3>{0, 0, 0});
  CHECK(pair.max == std::array<double, 3>{1, 1, 1});
  CHECK_THROWS_AS(extract_box(pts, std::vector<std::size_t>{}), ContractError);
}

TEST_CASE("query answering on an untrained model") {
  FixtureSpec spec;
  spec.categories = {"chair", "table"};
  spec.points_per_instance = 60;
  spec.embed_dim = 16;
  spec.seed = 4;
  const auto bundle = generate_fixtures(spec).front();
  SegModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.backbone_dim = 16;
  cfg.num_queries = 6;
  cfg.num_blocks = 2;
  cfg.num_scales = 3;
  cfg.hidden_dim = 32;
  cfg.seed = 2;
  const SegModel model(cfg);
  const auto scene = prepare_scene(bundle, lifted_features_for(bundle), cfg);
  const ToyEmbeddingProvider toy(16);

  CHECK(answer_query(model, scene, "chair", toy, 0).candidates.empty());
  CHECK_THROWS_AS(answer_query(model, scene, "", toy, 3), ContractError);
  CHECK_THROWS_AS(answer_query(model, scene, "chair", ToyEmbeddingProvider(8), 3), DimensionError);

  const auto a = answer_query(model, scene, "a chair", toy, 4);
  const auto b = answer_query(model, scene, "a chair", toy, 4);
  CHECK(a.mode == "free-form");
  CHECK(a.candidates.size() <= 4);
  REQUIRE(a.candidates.size() == b.candidates.size());
  for (std::size_t k = 0; k < a.candidates.size(); ++k) {
    CHECK(a.candidates[k].points == b.candidates[k].points);
    CHECK(a.candidates[k].score == b.candidates[k].score);
    if (k > 0) CHECK(a.candidates[k - 1].score >= a.candidates[k].score);
    for (const auto i : a.candidates[k].points) CHECK(i < bundle.num_points());
  }

  const auto bank = ClassifierBank::from_labels(bundle.category_names, toy);
  const auto inst = predict_instances(model, scene, bank);
  CHECK(inst.mode == "category");
  std::map<std::size_t, std::set<std::size_t>> seen;
  for (std::size_t k = 0; k < inst.candidates.size(); ++k) {
    const auto& c = inst.candidates[k];
    CHECK(c.label >= 0);
    CHECK(c.label < 2);
    CHECK(c.score >= 0.0);
    CHECK(c.score <= 1.0);
    if (k > 0) CHECK(inst.candidates[k - 1].score >= c.score);
    for (const auto i : c.points) CHECK(seen[c.query].insert(i).second);
  }

  InferenceOptions keep_all;
  keep_all.nms_iou = 1.0;
  const auto raw = predict_instances(model, scene, bank, keep_all);
  CHECK(raw.candidates.size() >= inst.candidates.size());
  auto iou = [&](const Candidate& a, const Candidate& b) {
    std::set<std::size_t> sa(a.points.begin(), a.points.end()), un = sa;
    std::size_t inter = 0;
    for (const auto i : b.points) inter += sa.count(i), un.insert(i);
    return static_cast<double>(inter) / static_cast<double>(un.size());
  };
  for (std::size_t x = 0; x < inst.candidates.size(); ++x)
    for (std::size_t y = x + 1; y < inst.candidates.size(); ++y)
      if (inst.candidates[x].label == inst.candidates[y].label)
        CHECK(iou(inst.candidates[x], inst.candidates[y]) <= 0.5);
  for (const auto& c : raw.candidates) {
    const bool kept = std::any_of(inst.candidates.begin(), inst.candidates.end(), [&](const Candidate& k) {
      return k.query == c.query && k.fragment == c.fragment;
    });
    if (!kept)
      CHECK(std::any_of(inst.candidates.begin(), inst.candidates.end(), [&](const Candidate& k) {
        return k.label == c.label && k.score >= c.score && iou(k, c) > 0.5;
      }));
  }

  InferenceOptions bad;
  bad.nms_iou = 1.5;
  CHECK_THROWS_AS(predict_instances(model, scene, bank, bad), ContractError);
  bad.nms_iou = 0.5;
  bad.ensemble.tau = 0.2;
  CHECK_THROWS_AS(predict_instances(model, scene, bank, bad), ContractError);
}
