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
#include <span>
#include <string>
#include <vector>

#include "ovis/embedding.hpp"
#include "ovis/model.hpp"

namespace ovis {

// Text embeddings of the category names used as an open-vocabulary classifier.
struct ClassifierBank {
  Matrix embeddings;  // K x C, unit rows
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
  void validate() const;

  static ClassifierBank from_labels(const std::vector<std::string>& labels,
                                    const EmbeddingProvider& provider);
};

enum class EnsembleKind { none, hard_geometric, soft_geometric };

std::string ensemble_kind_name(EnsembleKind kind);
EnsembleKind parse_ensemble_kind(const std::string& name);

struct EnsembleMode {
  EnsembleKind kind = EnsembleKind::soft_geometric;
  double tau = 0.667;

  void validate() const;
};

// max(a, b)^tau * min(a, b)^(1 - tau).
double soft_geometric_mean(double a, double b, double tau);

// none: p_m; hard: p_m^tau * p_p^(1 - tau); soft: soft_geometric_mean.
double combine_probabilities(double p_mask, double p_point, const EnsembleMode& mode);

// Normalized mean of the lifted rows inside a mask; zero vector when the mask
// is empty or its mean vanishes.
std::vector<double> pooled_feature(const Matrix& lifted, std::span<const std::size_t> indices);

// Per-query class probabilities (N_q x K). A query with an empty mask uses
// the mask-feature probabilities alone.
Matrix classify(const Prediction& prediction, const Matrix& lifted, const ClassifierBank& bank,
                const EnsembleMode& mode, double logit_scale);

// DBSCAN over the masked points. Clusters are ordered by size (largest
// first), ties by smallest member; members ascend. Noise points, which only
// occur for min_points > 1, are dropped.
std::vector<std::vector<std::size_t>> refine_mask(const Matrix& points, std::span<const std::size_t> indices,
                                                  double eps = 0.95, std::size_t min_points = 1);

struct Box {
  std::array<double, 3> min{};
  std::array<double, 3> max{};
};

Box extract_box(const Matrix& points, std::span<const std::size_t> indices);

struct InferenceOptions {
  EnsembleMode ensemble;
  bool refine = true;
  double dbscan_eps = 0.95;
  std::size_t dbscan_min_points = 1;
  // A candidate is dropped when its IoU with a higher-ranked kept candidate of
  // the same label exceeds this; 1 keeps everything.
  double nms_iou = 0.5;

  void validate() const;
};

// One ranked instance: a query's refined mask fragment.
struct Candidate {
  std::size_t query = 0;
  std::size_t fragment = 0;  // 0 is the largest piece of the query's mask
  std::vector<std::size_t> points;
  int label = -1;  // class index in category mode
  double score = 0.0;
};

struct QueryResult {
  std::string text;
  std::string mode;  // "category" or "free-form"
  std::vector<Candidate> candidates;  // scores non-increasing
};

// Category mode: the bank rows are the decoder's text features, each mask is
// labelled by the arg-max of the combined probabilities and scored by that
// probability times its mean in-mask heatmap sigmoid.
QueryResult predict_instances(const SegModel& model, const SceneInput& scene, const ClassifierBank& bank,
                              const InferenceOptions& options = {});

// Free-form mode: the text embedding is both the decoder's text feature and a
// binary classifier. Returns at most top_k candidates.
QueryResult answer_query(const SegModel& model, const SceneInput& scene, const std::string& text,
                         const EmbeddingProvider& provider, std::size_t top_k,
                         const InferenceOptions& options = {});

}  // namespace ovis
