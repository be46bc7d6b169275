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
#include <functional>
#include <string>
#include <vector>

#include "ovis/associations.hpp"
#include "ovis/embedding.hpp"
#include "ovis/model.hpp"
#include "ovis/optim.hpp"

namespace ovis {

// Minimum-cost injective assignment of the shorter side of `cost` into the
// longer side. Returns, for every row, the assigned column or -1 when the
// row is left out (more rows than columns). Among optimal assignments the
// lexicographically smallest one, read along the shorter side, is returned.
// ContractError on a non-finite entry.
std::vector<long> hungarian(const Matrix& cost);

struct LossWeights {
  double mma = 20.0;
  double dice = 2.0;
  double bce = 5.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  // When false only the visual association supervises the mask features.
  bool text_supervision = true;
};

inline constexpr double kDiceEpsilon = 1e-6;

// softmax over the GT axis of scale * fm . faᵀ (N_q x N_m). Columns whose
// `include` flag is 0 get probability 0 and take no part in the softmax.
Matrix semantic_probability(const Matrix& mask_features, const Matrix& associations, double scale,
                            const std::vector<std::uint8_t>& include = {});

struct MatchCostBreakdown {
  Matrix p_mva, p_mca, p_mea;  // N_q x N_m
  Matrix dice, bce;            // N_q x N_m
  Matrix total;
};

MatchCostBreakdown match_cost(const Prediction& prediction, const std::vector<BinaryMask>& gt_masks,
                              const AssociationSet& associations, const LossWeights& weights,
                              double logit_scale);

struct MatchResult {
  std::vector<std::size_t> query_for_gt;  // sigma(j); only matched GT masks
  std::vector<std::size_t> matched_gt;    // the GT indices, ascending
  double total_cost = 0.0;
};

MatchResult match(const MatchCostBreakdown& cost);

// 1 - 2 sum(p y) / (sum p + sum y + eps) over all entries.
Tensor dice_loss(const Tensor& probabilities, const Tensor& targets);

// Dice and mean BCE of one predicted mask against a binary target.
Tensor mask_dice_loss(const Tensor& heatmap_sigmoid, const BinaryMask& gt);
Tensor mask_bce_loss(const Tensor& heatmap_sigmoid, const BinaryMask& gt);

struct AssociationLossTerms {
  Tensor total;
  double mva = 0.0, mca = 0.0, mea = 0.0;
};

// Focal plus flattened dice over sigmoid(scale * fm faᵀ), rows restricted to
// the matched queries, against the matching indicator; summed over
// association types. Unmatched queries take no part.
AssociationLossTerms association_loss(const Tensor& mask_features, const AssociationSet& associations,
                                      const MatchResult& matching, const LossWeights& weights,
                                      double logit_scale);

struct LossBreakdown {
  Tensor total;
  double mma = 0.0;   // weighted
  double dice = 0.0;  // weighted
  double bce = 0.0;   // weighted
  double mva = 0.0, mca = 0.0, mea = 0.0;  // unweighted association terms
  MatchResult matching;
};

// lambda_mma * L_mma + (1 / N_m) sum over matched j of
// (lambda_dice * dice_j + lambda_bce * bce_j). ContractError when N_m = 0.
LossBreakdown total_loss(const Prediction& prediction, const std::vector<BinaryMask>& gt_masks,
                         const AssociationSet& associations, const LossWeights& weights,
                         double logit_scale);

struct TrainConfig {
  std::size_t epochs = 600;
  std::size_t max_steps = 0;  // 0 = no cap
  std::uint64_t seed = 0;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  std::string schedule = "cosine";  // "constant" or "cosine"
  std::size_t schedule_period = 0;  // steps per cosine cycle, 0 = whole run
  double schedule_min_ratio = 0.0;
  bool shuffle = true;
  LossWeights weights;
  SegModelConfig model;

  void validate() const;
  std::string to_json() const;
  // {"epochs", "max_steps", "seed", "learning_rate", "weight_decay",
  //  "schedule": {"kind", "period", "min_ratio"}, "shuffle",
  //  "weights": {...}, "model": {...}}
  static TrainConfig from_json(const std::string& text);
};

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string scene;
  double total = 0.0, mma = 0.0, dice = 0.0, bce = 0.0;
  double learning_rate = 0.0;
};

// Scene tensors and supervision prepared once per training run.
struct TrainingScene {
  std::string id;
  SceneInput input;
  std::vector<BinaryMask> gt_masks;
  AssociationSet associations;
};

TrainingScene prepare_training_scene(const SceneBundle& bundle, const SegModelConfig& config,
                                     const EmbeddingProvider* provider);

using StepCallback = std::function<void(const LossRecord&)>;

// One AdamW step per scene visit. Throws DomainError naming the first
// non-finite loss term.
std::vector<LossRecord> train(SegModel& model, const std::vector<TrainingScene>& scenes,
                              const TrainConfig& config, const StepCallback& on_step = {});

void write_history_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace ovis
