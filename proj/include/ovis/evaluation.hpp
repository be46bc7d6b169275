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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovis/inference.hpp"
#include "ovis/scene.hpp"

namespace ovis {

// |a & b| / |a | b|, 0 for an empty union.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

struct ScoredMask {
  BinaryMask mask;
  int label = 0;
  double score = 0.0;
};

struct LabeledMask {
  BinaryMask mask;
  int label = 0;
};

// Ground truth and predictions of one scene.
struct EvalScene {
  std::vector<LabeledMask> ground_truth;
  std::vector<ScoredMask> predictions;
};

EvalScene make_eval_scene(const SceneBundle& bundle, const QueryResult& result);

// Precision and recall after each prediction of one class, in ranked order.
struct PrCurve {
  std::vector<double> precision;
  std::vector<double> recall;
};

struct ClassAp {
  double ap = 0.0;  // interpolated area under the precision-recall curve
  PrCurve curve;
  std::size_t num_gt = 0;
  std::size_t num_predictions = 0;
};

// Predictions are ranked by descending score across all scenes; equal scores
// keep scene order, then prediction order. Each is matched greedily to the
// unmatched ground truth of its class and scene with the highest IoU.
// Classes without ground truth are absent from the result.
std::map<int, ClassAp> average_precision(std::span<const EvalScene> scenes, double iou_threshold);

// 0.50, 0.55, ..., 0.95.
std::vector<double> ap_thresholds();

struct CategoryReport {
  int label = 0;
  std::string name;
  double ap = 0.0, ap50 = 0.0, ap25 = 0.0;
  std::size_t num_gt = 0;
  std::map<double, PrCurve> curves;  // per threshold
};

struct GroundingAccuracy {
  double acc25 = 0.0, acc50 = 0.0;
  std::size_t num_queries = 0;
};

struct EvalReport {
  std::vector<CategoryReport> categories;  // classes with ground truth only
  double mean_ap = 0.0, mean_ap50 = 0.0, mean_ap25 = 0.0;
  std::map<std::string, double> group_ap;  // optional category grouping
  std::optional<GroundingAccuracy> grounding;

  std::string to_json() const;
  std::string curves_csv() const;  // category,threshold,rank,precision,recall
};

// `groups` maps a group name to member labels; groups without ground truth
// are left out.
EvalReport evaluate(std::span<const EvalScene> scenes, const std::vector<std::string>& category_names,
                    const std::map<std::string, std::vector<int>>& groups = {});

double box_iou(const Box& a, const Box& b);

GroundingAccuracy grounding_accuracy(std::span<const Box> predicted, std::span<const Box> ground_truth);

struct KMeansResult {
  std::vector<std::size_t> assignment;
  Matrix centers;
  std::vector<double> objective;  // within-cluster sum of squares per iteration
  std::size_t iterations = 0;
};

inline constexpr std::size_t kKMeansMaxIterations = 100;

// Lloyd's algorithm from a farthest-point initialization whose first center
// is drawn from `seed`. Empty clusters keep their previous center.
KMeansResult kmeans(const Matrix& features, std::size_t k, std::uint64_t seed);

}  // namespace ovis
