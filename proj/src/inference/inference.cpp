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

#include "ovis/inference.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include "ovis/error.hpp"

namespace ovis {

namespace {

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax_values(std::vector<double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : logits) v /= total;
  return logits;
}

double row_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> bank_logits(std::span<const double> feature, const ClassifierBank& bank, double logit_scale) {
  std::vector<double> out(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) out[k] = logit_scale * row_dot(feature, bank.embeddings.row(k));
  return out;
}

double mean_sigmoid(const Matrix& heatmaps, std::size_t q, std::span<const std::size_t> indices) {
  double s = 0.0;
  for (const std::size_t i : indices) s += sigmoid_value(heatmaps(q, i));
  return s / static_cast<double>(indices.size());
}

double sorted_iou(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t inter = 0;
  for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
    if (a[i] == b[j]) {
      ++inter, ++i, ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Per-query semantic probability and label supplied by the caller.
struct QueryScore {
  double probability = 0.0;
  int label = -1;
};

std::vector<Candidate> rank_candidates(const SceneInput& scene, const Prediction& prediction,
                                       const std::vector<QueryScore>& semantic, const InferenceOptions& options) {
  const Matrix heat = prediction.heatmaps.to_matrix();
  std::vector<Candidate> out;
  for (std::size_t q = 0; q < prediction.num_queries(); ++q) {
    const auto indices = mask_indices(prediction.masks[q]);
    if (indices.empty()) continue;
    const double score = semantic[q].probability * mean_sigmoid(heat, q, indices);
    std::vector<std::vector<std::size_t>> pieces;
    if (options.refine)
      pieces = refine_mask(scene.points, indices, options.dbscan_eps, options.dbscan_min_points);
    else
      pieces.push_back(indices);
    for (std::size_t f = 0; f < pieces.size(); ++f) {
      Candidate c;
      c.query = q;
      c.fragment = f;
      c.label = semantic[q].label;
      c.score = f == 0 ? score
                       : score * static_cast<double>(pieces[f].size()) / static_cast<double>(indices.size());
      c.points = std::move(pieces[f]);
      out.push_back(std::move(c));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (options.nms_iou >= 1.0) return out;
  std::vector<Candidate> kept;
  for (auto& c : out) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const Candidate& k) {
      return k.label == c.label && sorted_iou(k.points, c.points) > options.nms_iou;
    });
    if (!duplicate) kept.push_back(std::move(c));
  }
  return kept;
}

}  // namespace

void ClassifierBank::validate() const {
  require(!labels.empty(), "a classifier bank needs at least one label");
  require(embeddings.rows == labels.size(), "classifier bank has ", embeddings.rows, " rows for ",
          labels.size(), " labels");
  for (std::size_t k = 0; k < embeddings.rows; ++k) {
    const double n = std::sqrt(row_dot(embeddings.row(k), embeddings.row(k)));
    require(std::abs(n - 1.0) <= kUnitNormTolerance, "classifier row ", k, " ('", labels[k],
            "') is not unit norm");
  }
}

ClassifierBank ClassifierBank::from_labels(const std::vector<std::string>& labels,
                                           const EmbeddingProvider& provider) {
  ClassifierBank bank;
  bank.labels = labels;
  bank.embeddings = Matrix(labels.size(), provider.dim());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto e = provider.embed(labels[k]);
    std::copy(e.begin(), e.end(), bank.embeddings.row(k).begin());
  }
  bank.validate();
  return bank;
}

std::string ensemble_kind_name(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::none:
      return "none";
    case EnsembleKind::hard_geometric:
      return "hard";
    case EnsembleKind::soft_geometric:
      return "soft";
  }
  return "soft";
}

EnsembleKind parse_ensemble_kind(const std::string& name) {
  if (name == "none") return EnsembleKind::none;
  if (name == "hard") return EnsembleKind::hard_geometric;
  if (name == "soft") return EnsembleKind::soft_geometric;
  fail("unknown ensemble mode '", name, "' (expected none, hard or soft)");
}

void EnsembleMode::validate() const {
  require(tau >= 0.5 && tau <= 1.0, "tau must lie in [0.5, 1], got ", tau);
}

double soft_geometric_mean(double a, double b, double tau) {
  const double hi = std::max(a, b), lo = std::min(a, b);
  return std::pow(hi, tau) * std::pow(lo, 1.0 - tau);
}

double combine_probabilities(double p_mask, double p_point, const EnsembleMode& mode) {
  switch (mode.kind) {
    case EnsembleKind::none:
      return p_mask;
    case EnsembleKind::hard_geometric:
      return std::pow(p_mask, mode.tau) * std::pow(p_point, 1.0 - mode.tau);
    case EnsembleKind::soft_geometric:
      return soft_geometric_mean(p_mask, p_point, mode.tau);
  }
  return p_mask;
}

std::vector<double> pooled_feature(const Matrix& lifted, std::span<const std::size_t> indices) {
  std::vector<double> mean(lifted.cols, 0.0);
  for (const std::size_t i : indices) {
    require(i < lifted.rows, "mask index ", i, " is out of range");
    const auto r = lifted.row(i);
    for (std::size_t c = 0; c < lifted.cols; ++c) mean[c] += r[c];
  }
  const double n = std::sqrt(row_dot(mean, mean));
  if (n > 0.0)
    for (double& v : mean) v /= n;
  return mean;
}

Matrix classify(const Prediction& prediction, const Matrix& lifted, const ClassifierBank& bank,
                const EnsembleMode& mode, double logit_scale) {
  bank.validate();
  mode.validate();
  const Matrix fm = prediction.mask_features.to_matrix();
  require<DimensionError>(bank.embeddings.cols == fm.cols, "classifier width ", bank.embeddings.cols,
                          " does not match mask features of width ", fm.cols);
  require<DimensionError>(lifted.cols == fm.cols, "lifted features of width ", lifted.cols,
                          " do not match mask features of width ", fm.cols);
  Matrix out(fm.rows, bank.size());
  for (std::size_t q = 0; q < fm.rows; ++q) {
    const auto p_mask = softmax_values(bank_logits(fm.row(q), bank, logit_scale));
    const auto indices = mask_indices(prediction.masks[q]);
    if (indices.empty()) {
      std::copy(p_mask.begin(), p_mask.end(), out.row(q).begin());
      continue;
    }
    const auto fp = pooled_feature(lifted, indices);
    const auto p_point = softmax_values(bank_logits(fp, bank, logit_scale));
    for (std::size_t k = 0; k < bank.size(); ++k) out(q, k) = combine_probabilities(p_mask[k], p_point[k], mode);
  }
  return out;
}

std::vector<std::vector<std::size_t>> refine_mask(const Matrix& points, std::span<const std::size_t> indices,
                                                  double eps, std::size_t min_points) {
  require(eps > 0.0, "eps must be positive");
  require(min_points >= 1, "min_points must be at least 1");
  require<DimensionError>(points.cols == 3, "points must be M x 3");
  const std::size_t n = indices.size();
  if (n == 0) return {};
  for (const std::size_t i : indices) require(i < points.rows, "mask index ", i, " is out of range");

  using Cell = std::array<long long, 3>;
  auto cell_of = [&](std::size_t i) {
    Cell c;
    for (std::size_t d = 0; d < 3; ++d) c[d] = static_cast<long long>(std::floor(points(indices[i], d) / eps));
    return c;
  };
  std::map<Cell, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < n; ++i) grid[cell_of(i)].push_back(i);

  const double eps2 = eps * eps;
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    const Cell c = cell_of(i);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == grid.end()) continue;
          for (const std::size_t j : it->second) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < 3; ++d) {
              const double t = points(indices[i], d) - points(indices[j], d);
              d2 += t * t;
            }
            if (d2 <= eps2) out.push_back(j);
          }
        }
    return out;
  };

  constexpr long kUnvisited = -2, kNoise = -1;
  std::vector<long> label(n, kUnvisited);
  long clusters = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    auto seeds = neighbours(i);
    if (seeds.size() < min_points) {
      label[i] = kNoise;
      continue;
    }
    const long id = clusters++;
    label[i] = id;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const std::size_t j = queue.front();
      queue.pop_front();
      if (label[j] == kNoise) label[j] = id;
      if (label[j] != kUnvisited) continue;
      label[j] = id;
      const auto more = neighbours(j);
      if (more.size() >= min_points) queue.insert(queue.end(), more.begin(), more.end());
    }
  }

  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(clusters));
  for (std::size_t i = 0; i < n; ++i)
    if (label[i] >= 0) out[static_cast<std::size_t>(label[i])].push_back(indices[i]);
  for (auto& c : out) std::sort(c.begin(), c.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
  });
  return out;
}

Box extract_box(const Matrix& points, std::span<const std::size_t> indices) {
  require(!indices.empty(), "cannot box an empty mask");
  require<DimensionError>(points.cols == 3, "points must be M x 3");
  Box box;
  for (std::size_t d = 0; d < 3; ++d) {
    box.min[d] = std::numeric_limits<double>::infinity();
    box.max[d] = -std::numeric_limits<double>::infinity();
  }
  for (const std::size_t i : indices) {
    require(i < points.rows, "mask index ", i, " is out of range");
    for (std::size_t d = 0; d < 3; ++d) {
      box.min[d] = std::min(box.min[d], points(i, d));
      box.max[d] = std::max(box.max[d], points(i, d));
    }
  }
  return box;
}

void InferenceOptions::validate() const {
  ensemble.validate();
  require(dbscan_eps > 0.0, "dbscan eps must be positive");
  require(dbscan_min_points >= 1, "dbscan min_points must be at least 1");
  require(nms_iou >= 0.0 && nms_iou <= 1.0, "nms_iou must lie in [0, 1]");
}

QueryResult predict_instances(const SegModel& model, const SceneInput& scene, const ClassifierBank& bank,
                              const InferenceOptions& options) {
  options.validate();
  bank.validate();
  NoGradGuard no_grad;
  const Prediction prediction = model.forward(scene, bank.embeddings);
  const Matrix probs = classify(prediction, scene.lifted, bank, options.ensemble, model.config().logit_scale);
  std::vector<QueryScore> semantic(prediction.num_queries());
  for (std::size_t q = 0; q < probs.rows; ++q) {
    const auto row = probs.row(q);
    const auto best = std::max_element(row.begin(), row.end());
    semantic[q] = {*best, static_cast<int>(best - row.begin())};
  }
  QueryResult result;
  result.mode = "category";
  result.candidates = rank_candidates(scene, prediction, semantic, options);
  return result;
}

QueryResult answer_query(const SegModel& model, const SceneInput& scene, const std::string& text,
                         const EmbeddingProvider& provider, std::size_t top_k, const InferenceOptions& options) {
  options.validate();
  require(!text.empty(), "query text must not be empty");
  QueryResult result;
  result.text = text;
  result.mode = "free-form";
  if (top_k == 0) return result;

  const auto embedding = provider.embed(text);
  require<DimensionError>(embedding.size() == model.config().embed_dim, "the provider returns width ",
                          embedding.size(), " but the model expects ", model.config().embed_dim);
  NoGradGuard no_grad;
  const Matrix query(1, embedding.size(), embedding);
  const Prediction prediction = model.forward(scene, query);
  const Matrix fm = prediction.mask_features.to_matrix();
  const double s = model.config().logit_scale;
  std::vector<QueryScore> semantic(prediction.num_queries());
  for (std::size_t q = 0; q < fm.rows; ++q) {
    const double p_mask = sigmoid_value(s * row_dot(fm.row(q), embedding));
    const auto indices = mask_indices(prediction.masks[q]);
    if (indices.empty()) {
      semantic[q].probability = p_mask;
      continue;
    }
    const auto fp = pooled_feature(scene.lifted, indices);
    semantic[q].probability = combine_probabilities(p_mask, sigmoid_value(s * row_dot(fp, embedding)), options.ensemble);
  }
  result.candidates = rank_candidates(scene, prediction, semantic, options);
  if (result.candidates.size() > top_k) result.candidates.resize(top_k);
  return result;
}

}  // namespace ovis
