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

#include "ovis/associations.hpp"

#include <algorithm>
#include <cmath>

#include "ovis/error.hpp"

namespace ovis {

Matrix build_mva(const LiftedFeatures& lifted, const std::vector<BinaryMask>& masks,
                 std::vector<std::uint8_t>* has_coverage) {
  const std::size_t m = lifted.features.rows;
  const std::size_t c = lifted.features.cols;
  require<DimensionError>(lifted.coverage.size() == m, "coverage has ", lifted.coverage.size(),
                          " entries for ", m, " points");
  Matrix out(masks.size(), c);
  if (has_coverage != nullptr) has_coverage->assign(masks.size(), 0);
  for (std::size_t j = 0; j < masks.size(); ++j) {
    require<DimensionError>(masks[j].size() == m, "mask ", j, " has length ", masks[j].size(),
                            ", expected ", m);
    std::size_t covered = 0;
    bool any = false;
    auto dst = out.row(j);
    for (std::size_t i = 0; i < m; ++i) {
      if (!masks[j][i]) continue;
      any = true;
      if (lifted.coverage[i] == 0) continue;
      ++covered;
      auto src = lifted.features.row(i);
      for (std::size_t d = 0; d < c; ++d) dst[d] += src[d];
    }
    require(any, "mask ", j, " is empty");
    if (covered == 0) continue;
    for (double& v : dst) v /= static_cast<double>(covered);
    if (has_coverage != nullptr) (*has_coverage)[j] = 1;
  }
  return out;
}

Matrix build_mca(const std::vector<MaskRecord>& records, const EmbeddingProvider* provider) {
  Matrix out;
  for (std::size_t j = 0; j < records.size(); ++j) {
    const auto& r = records[j];
    std::vector<double> row;
    if (!r.caption_embedding.empty()) {
      row = r.caption_embedding;
    } else {
      require<DataError>(!r.caption.empty(), "mask record ", j,
                         " has neither a caption nor a caption embedding");
      require<DataError>(provider != nullptr, "mask record ", j,
                         " needs an embedding provider for its caption");
      row = provider->embed(r.caption);
    }
    if (j == 0) out = Matrix(records.size(), row.size());
    require<DimensionError>(row.size() == out.cols, "caption embedding ", j, " has width ",
                            row.size(), ", expected ", out.cols);
    std::copy(row.begin(), row.end(), out.row(j).begin());
  }
  return out;
}

MeaResult build_mea(std::span<const double> f_mva, const Matrix& entity_embeddings) {
  const std::size_t ne = entity_embeddings.rows;
  require(ne >= 1, "mask-entity association needs at least one entity");
  require<DimensionError>(entity_embeddings.cols == f_mva.size(), "entity width ",
                          entity_embeddings.cols, " vs visual width ", f_mva.size());
  MeaResult out;
  out.weights.resize(ne);
  for (std::size_t k = 0; k < ne; ++k) {
    auto e = entity_embeddings.row(k);
    double s = 0.0;
    for (std::size_t d = 0; d < f_mva.size(); ++d) s += f_mva[d] * e[d];
    out.weights[k] = s;
  }
  const double mx = *std::max_element(out.weights.begin(), out.weights.end());
  double z = 0.0;
  for (double& w : out.weights) {
    w = std::exp(w - mx);
    z += w;
  }
  for (double& w : out.weights) w /= z;
  out.feature.assign(f_mva.size(), 0.0);
  for (std::size_t k = 0; k < ne; ++k) {
    auto e = entity_embeddings.row(k);
    for (std::size_t d = 0; d < f_mva.size(); ++d) out.feature[d] += out.weights[k] * e[d];
  }
  return out;
}

Matrix entity_embeddings_for(const MaskRecord& record, const EmbeddingProvider* provider) {
  if (!record.entity_embeddings.empty()) return record.entity_embeddings;
  require(!record.entities.empty(), "mask record has no entities");
  require<DataError>(provider != nullptr, "entity phrases need an embedding provider");
  Matrix out(record.entities.size(), provider->dim());
  for (std::size_t k = 0; k < record.entities.size(); ++k) {
    auto e = provider->embed(record.entities[k]);
    std::copy(e.begin(), e.end(), out.row(k).begin());
  }
  return out;
}

AssociationSet build_associations(const SceneBundle& bundle, const LiftedFeatures& lifted,
                                  const EmbeddingProvider* provider) {
  require<DataError>(bundle.mask_records.size() == bundle.num_masks(), "scene ", bundle.id, " has ",
                     bundle.mask_records.size(), " mask records for ", bundle.num_masks(), " masks");
  AssociationSet out;
  out.mva = build_mva(lifted, bundle.gt_masks, &out.has_coverage);
  out.mca = build_mca(bundle.mask_records, provider);
  require<DimensionError>(bundle.num_masks() == 0 || out.mca.cols == out.mva.cols,
                          "caption embeddings have width ", out.mca.cols, ", lifted features ",
                          out.mva.cols);
  out.mea = Matrix(bundle.num_masks(), out.mva.cols);
  for (std::size_t j = 0; j < bundle.num_masks(); ++j) {
    auto r = build_mea(out.mva.row(j), entity_embeddings_for(bundle.mask_records[j], provider));
    std::copy(r.feature.begin(), r.feature.end(), out.mea.row(j).begin());
    out.entity_weights.push_back(std::move(r.weights));
  }
  return out;
}

}  // namespace ovis
