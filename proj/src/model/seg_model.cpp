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

#include <cmath>

#include "ovis/error.hpp"
#include "ovis/model.hpp"

namespace ovis {

namespace {

std::size_t backbone_input_width(const SegModelConfig& c) { return c.positional_encoding ? 6 : 3; }

bool uses_backbone(const SegModelConfig& c) { return c.feature_source != FeatureSource::lifted_only; }

}  // namespace

SceneInput prepare_scene(const Matrix& points, const Matrix& colors, const Matrix& lifted,
                         const SegModelConfig& config) {
  require(points.rows >= 1 && points.cols == 3, "scene needs M >= 1 points with 3 coordinates");
  require(colors.rows == points.rows && colors.cols == 3, "colors must be M x 3");
  require(lifted.rows == points.rows, "lifted features have ", lifted.rows, " rows for ",
          points.rows, " points");
  require(lifted.cols == config.embed_dim, "lifted feature width ", lifted.cols,
          " does not match the model embed_dim ", config.embed_dim);
  SceneInput s;
  s.points = points;
  s.colors = colors;
  s.lifted = lifted;
  s.pyramid = build_pyramid(points, lifted, config.num_scales, config.base_voxel);
  return s;
}

SceneInput prepare_scene(const SceneBundle& bundle, const LiftedFeatures& lifted,
                         const SegModelConfig& config) {
  return prepare_scene(bundle.points, bundle.colors, lifted.features, config);
}

Linear SegModel::make_linear(Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-a, a);
  Linear l{Tensor({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
  params_.emplace_back(name + ".weight", l.weight);
  params_.emplace_back(name + ".bias", l.bias);
  return l;
}

MultiHeadAttention SegModel::make_attention(Rng& rng, const std::string& name, std::size_t query_in,
                                            std::size_t context_in) {
  const std::size_t h = config_.hidden_dim;
  MultiHeadAttention a;
  a.query = make_linear(rng, name + ".query", query_in, h);
  a.key = make_linear(rng, name + ".key", context_in, h);
  a.value = make_linear(rng, name + ".value", context_in, h);
  a.output = make_linear(rng, name + ".output", h, h);
  a.heads = config_.num_heads;
  return a;
}

SegModel::SegModel(SegModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t c = config_.embed_dim, d = config_.backbone_dim, h = config_.hidden_dim;
  const std::size_t e = config_.feature_width();
  if (uses_backbone(config_)) {
    input_ = make_linear(rng, "backbone.input", backbone_input_width(config_), d);
    for (std::size_t s = 0; s < config_.num_scales; ++s)
      scale_mix_.push_back(make_linear(rng, "backbone.scale" + std::to_string(s), d, d));
    output_ = make_linear(rng, "backbone.output", d, d);
  }
  query_proj_ = make_linear(rng, "queries.proj", e, h);
  if (config_.positional_encoding) {
    pe_in_ = make_linear(rng, "queries.pe_in", 3, h);
    pe_out_ = make_linear(rng, "queries.pe_out", h, h);
  }
  for (std::size_t l = 0; l < config_.num_blocks; ++l) {
    const std::string name = "blocks." + std::to_string(l);
    CmdBlock b;
    b.visual = make_attention(rng, name + ".visual", h, e);
    b.text = make_attention(rng, name + ".text", h, c);
    b.self = make_attention(rng, name + ".self", h, h);
    b.ffn_in = make_linear(rng, name + ".ffn_in", h, 2 * h);
    b.ffn_out = make_linear(rng, name + ".ffn_out", 2 * h, h);
    blocks_.push_back(std::move(b));
  }
  mask_head_ = make_linear(rng, "heads.mask", h, c);
  heat_query_ = make_linear(rng, "heads.heat_query", h, h);
  heat_point_ = make_linear(rng, "heads.heat_point", e, h);
}

std::vector<Tensor> SegModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [_, t] : params_) out.push_back(t);
  return out;
}

std::size_t SegModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

Tensor SegModel::backbone(const SceneInput& scene) const {
  require(uses_backbone(config_), "the backbone is disabled in lifted_only mode");
  require(scene.pyramid.num_scales() == config_.num_scales, "scene pyramid has ",
          scene.pyramid.num_scales(), " scales, model expects ", config_.num_scales);
  const std::size_t m = scene.num_points();
  Matrix x(m, backbone_input_width(config_));
  double centroid[3] = {0, 0, 0};
  for (std::size_t i = 0; i < m; ++i)
    for (int k = 0; k < 3; ++k) centroid[k] += scene.points(i, k) / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (int k = 0; k < 3; ++k) {
      x(i, k) = scene.colors(i, k);
      if (config_.positional_encoding) x(i, 3 + k) = scene.points(i, k) - centroid[k];
    }
  }
  Tensor h = silu(input_(Tensor::from_matrix(x)));
  for (std::size_t s = 0; s < config_.num_scales; ++s) {
    const auto& level = scene.pyramid.scales[s];
    Tensor pooled = segment_mean(h, level.assignment, level.num_voxels());
    h = add(h, gather_rows(silu(scale_mix_[s](pooled)), level.assignment));
  }
  return output_(h);
}

std::vector<Tensor> SegModel::scale_features(const SceneInput& scene, const Tensor& backbone_features) const {
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < config_.num_scales; ++s) {
    const auto& level = scene.pyramid.scales[s];
    Tensor lifted, pooled;
    if (config_.feature_source != FeatureSource::backbone_only)
      lifted = Tensor::from_matrix(level.pooled);
    if (uses_backbone(config_))
      pooled = segment_mean(backbone_features, level.assignment, level.num_voxels());
    out.push_back(ensemble(lifted, pooled, config_.feature_source));
  }
  return out;
}

Tensor SegModel::point_features(const SceneInput& scene, const Tensor& backbone_features) const {
  Tensor lifted;
  if (config_.feature_source != FeatureSource::backbone_only) lifted = Tensor::from_matrix(scene.lifted);
  return ensemble(lifted, backbone_features, config_.feature_source);
}

Prediction SegModel::forward(const SceneInput& scene, const Matrix& text_features,
                             const ForwardOptions& options) const {
  const std::size_t m = scene.num_points();
  require(m >= 1, "scene has no points");
  require(scene.lifted.cols == config_.embed_dim, "scene feature width ", scene.lifted.cols,
          " does not match the model embed_dim ", config_.embed_dim);
  require(text_features.rows >= 1, "forward needs at least one text row");
  require(text_features.cols == config_.embed_dim, "text feature width ", text_features.cols,
          " does not match the model embed_dim ", config_.embed_dim);
  require(scene.pyramid.num_scales() == config_.num_scales, "scene pyramid has ",
          scene.pyramid.num_scales(), " scales, model expects ", config_.num_scales);

  Tensor fb;
  if (uses_backbone(config_)) fb = backbone(scene);
  const auto scales = scale_features(scene, fb);

  Prediction pred;
  pred.point_features = point_features(scene, fb);
  const std::size_t first = options.first_query_point.value_or(first_query_index(config_.seed, m));
  pred.query_indices = farthest_point_sampling(scene.points, config_.num_queries, first);
  const std::size_t nq = pred.query_indices.size();
  pred.query_positions = Matrix(nq, 3);
  for (std::size_t k = 0; k < nq; ++k)
    for (int a = 0; a < 3; ++a) pred.query_positions(k, a) = scene.points(pred.query_indices[k], a);

  Tensor q = query_proj_(gather_rows(pred.point_features, pred.query_indices));
  if (config_.positional_encoding) {
    double centroid[3] = {0, 0, 0};
    for (std::size_t i = 0; i < m; ++i)
      for (int a = 0; a < 3; ++a) centroid[a] += scene.points(i, a) / static_cast<double>(m);
    Matrix rel = pred.query_positions;
    for (std::size_t k = 0; k < nq; ++k)
      for (int a = 0; a < 3; ++a) rel(k, a) -= centroid[a];
    q = add(q, pe_out_(silu(pe_in_(Tensor::from_matrix(rel)))));
  }

  const Tensor text = Tensor::from_matrix(text_features);
  if (options.trace != nullptr) options.trace->assign(config_.num_blocks, {});
  for (std::size_t l = 0; l < config_.num_blocks; ++l) {
    const std::size_t s = config_.num_scales - 1 - (l % config_.num_scales);
    q = blocks_[l](q, scales[s], text, options.trace ? &(*options.trace)[l] : nullptr);
  }

  const Tensor n = layer_norm(q);
  pred.mask_features = l2_normalize(mask_head_(n));
  const double inv = 1.0 / std::sqrt(static_cast<double>(config_.hidden_dim));
  pred.heatmaps = scale(matmul(heat_query_(n), transpose(heat_point_(pred.point_features))), inv);
  const auto heat = pred.heatmaps.data();
  pred.masks.assign(nq, BinaryMask(m, 0));
  for (std::size_t k = 0; k < nq; ++k)
    for (std::size_t i = 0; i < m; ++i) pred.masks[k][i] = heat[k * m + i] > 0.0 ? 1 : 0;
  return pred;
}

}  // namespace ovis
