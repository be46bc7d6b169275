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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ovis/projection.hpp"
#include "ovis/random.hpp"
#include "ovis/tensor.hpp"

namespace ovis {

// Which per-point features feed the decoder and heatmap head.
enum class FeatureSource { both, lifted_only, backbone_only };

std::string feature_source_name(FeatureSource s);
FeatureSource parse_feature_source(const std::string& name);

struct SegModelConfig {
  std::size_t embed_dim = 32;      // C
  std::size_t backbone_dim = 96;   // D
  std::size_t num_scales = 5;      // S
  std::size_t num_queries = 150;   // N_q
  std::size_t num_blocks = 4;      // L
  std::size_t num_heads = 4;
  std::size_t hidden_dim = 128;
  double base_voxel = 0.04;
  double logit_scale = 10.0;       // s_sem
  bool positional_encoding = true;
  FeatureSource feature_source = FeatureSource::both;
  std::uint64_t seed = 0;          // parameter init and query sampling
  std::string text_encoder = "toy";

  void validate() const;
  // Width of the ensembled per-point features.
  std::size_t feature_width() const;

  std::string to_json() const;
  // Missing keys keep their defaults; unknown keys are a FormatError.
  static SegModelConfig from_json(const std::string& text);
};

// Precomputed geometry and lifted features of one scene.
struct SceneInput {
  Matrix points;   // M x 3
  Matrix colors;   // M x 3
  Matrix lifted;   // M x C
  ScalePyramid pyramid;  // pooled member carries the lifted features per scale

  std::size_t num_points() const { return points.rows; }
};

SceneInput prepare_scene(const Matrix& points, const Matrix& colors, const Matrix& lifted,
                         const SegModelConfig& config);
SceneInput prepare_scene(const SceneBundle& bundle, const LiftedFeatures& lifted,
                         const SegModelConfig& config);

// Greedy farthest point sampling from `first`. Ties go to the lowest index.
// When n exceeds the point count the full ordering repeats cyclically.
std::vector<std::size_t> farthest_point_sampling(const Matrix& points, std::size_t n,
                                                 std::size_t first);
std::size_t first_query_index(std::uint64_t seed, std::size_t num_points);

// Column concatenation of lifted and backbone features; either side may be
// dropped by the source mode.
Tensor ensemble(const Tensor& lifted, const Tensor& backbone, FeatureSource source);

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out

  Tensor operator()(const Tensor& x) const;
};

// Per-head attention weights (queries x keys) of the three attention layers
// of one decoder block.
struct BlockTrace {
  std::vector<Matrix> visual;
  std::vector<Matrix> text;
  std::vector<Matrix> self;
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  Tensor operator()(const Tensor& x, const Tensor& context,
                    std::vector<Matrix>* weights = nullptr) const;
};

struct CmdBlock {
  MultiHeadAttention visual, text, self;
  Linear ffn_in, ffn_out;

  // Pre-norm residual block: visual cross-attention, text cross-attention,
  // self-attention, feed-forward. ContractError on an empty text set.
  Tensor operator()(const Tensor& queries, const Tensor& scale_features, const Tensor& text,
                    BlockTrace* trace = nullptr) const;
};

struct Prediction {
  Tensor heatmaps;       // N_q x M logits
  Tensor mask_features;  // N_q x C, unit rows
  std::vector<BinaryMask> masks;  // heatmap > 0
  std::vector<std::size_t> query_indices;
  Matrix query_positions;  // N_q x 3
  Tensor point_features;   // M x feature_width, ensembled

  std::size_t num_queries() const { return query_indices.size(); }
};

struct ForwardOptions {
  std::optional<std::size_t> first_query_point;  // overrides the seeded choice
  std::vector<BlockTrace>* trace = nullptr;
};

class SegModel {
 public:
  explicit SegModel(SegModelConfig config);

  const SegModelConfig& config() const { return config_; }

  // Per-point backbone features f^b (M x D).
  Tensor backbone(const SceneInput& scene) const;

  // Ensembled features per pyramid scale (V_s x feature_width) and per point.
  std::vector<Tensor> scale_features(const SceneInput& scene, const Tensor& backbone_features) const;
  Tensor point_features(const SceneInput& scene, const Tensor& backbone_features) const;

  // Text rows are N_t x C and must be non-empty.
  Prediction forward(const SceneInput& scene, const Matrix& text_features,
                     const ForwardOptions& options = {}) const;

  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  const CmdBlock& block(std::size_t l) const { return blocks_.at(l); }

 private:
  Linear make_linear(Rng& rng, const std::string& name, std::size_t in, std::size_t out);
  MultiHeadAttention make_attention(Rng& rng, const std::string& name, std::size_t query_in,
                                    std::size_t context_in);

  SegModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;

  Linear input_, output_;
  std::vector<Linear> scale_mix_;
  Linear query_proj_, pe_in_, pe_out_;
  std::vector<CmdBlock> blocks_;
  Linear mask_head_, heat_query_, heat_point_;
};

// Directory with manifest.json (config plus parameter descriptors) and one
// raw f64 array per parameter.
void save_model(const SegModel& model, const std::filesystem::path& dir);
SegModel load_model(const std::filesystem::path& dir);

}  // namespace ovis
