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
#include <span>
#include <vector>

#include "ovis/embedding.hpp"
#include "ovis/projection.hpp"
#include "ovis/scene.hpp"

namespace ovis {

// Language and visual supervision targets, one row per ground-truth mask.
struct AssociationSet {
  Matrix mva;  // N_m x C, mean lifted feature over covered points
  Matrix mca;  // N_m x C, caption embeddings
  Matrix mea;  // N_m x C, attention-weighted entity embeddings
  std::vector<std::vector<double>> entity_weights;  // ragged, N_e per mask
  std::vector<std::uint8_t> has_coverage;           // 0 when the mask has no covered point
};

// Mean of the lifted rows of the covered points in each mask; rows of masks
// without any covered point are zero and flagged in `has_coverage`.
Matrix build_mva(const LiftedFeatures& lifted, const std::vector<BinaryMask>& masks,
                 std::vector<std::uint8_t>* has_coverage = nullptr);

// Precomputed caption embeddings are used verbatim; otherwise the caption is
// embedded with `provider`. DataError when neither is available.
Matrix build_mca(const std::vector<MaskRecord>& records, const EmbeddingProvider* provider);

struct MeaResult {
  std::vector<double> feature;
  std::vector<double> weights;
};

// weights = softmax_k(f_mva . e_k); feature = sum_k weights_k e_k.
MeaResult build_mea(std::span<const double> f_mva, const Matrix& entity_embeddings);

// Entity embeddings of a record, embedding the phrases with `provider` when
// they are not precomputed.
Matrix entity_embeddings_for(const MaskRecord& record, const EmbeddingProvider* provider);

AssociationSet build_associations(const SceneBundle& bundle, const LiftedFeatures& lifted,
                                  const EmbeddingProvider* provider);

}  // namespace ovis
