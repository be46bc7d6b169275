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
#include <limits>

#include "ovis/error.hpp"
#include "ovis/model.hpp"

namespace ovis {

std::vector<std::size_t> farthest_point_sampling(const Matrix& points, std::size_t n,
                                                 std::size_t first) {
  const std::size_t m = points.rows;
  require(m >= 1, "farthest point sampling needs at least one point");
  require(first < m, "first index ", first, " out of range for ", m, " points");
  const std::size_t distinct = std::min(n, m);
  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::size_t current = first;
  for (std::size_t k = 0; k < distinct; ++k) {
    order.push_back(current);
    nearest[current] = -1.0;
    std::size_t best = m;
    double best_d = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (nearest[i] < 0.0) continue;
      const double dx = points(i, 0) - points(current, 0);
      const double dy = points(i, 1) - points(current, 1);
      const double dz = points(i, 2) - points(current, 2);
      nearest[i] = std::min(nearest[i], dx * dx + dy * dy + dz * dz);
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  for (std::size_t k = distinct; k < n; ++k) order.push_back(order[k % m]);
  return order;
}

std::size_t first_query_index(std::uint64_t seed, std::size_t num_points) {
  require(num_points >= 1, "no points to sample queries from");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return static_cast<std::size_t>(rng.index(num_points));
}

Tensor ensemble(const Tensor& lifted, const Tensor& backbone, FeatureSource source) {
  switch (source) {
    case FeatureSource::lifted_only:
      return lifted;
    case FeatureSource::backbone_only:
      return backbone;
    case FeatureSource::both:
      break;
  }
  require(lifted.dim(0) == backbone.dim(0), "ensemble: ", lifted.dim(0), " lifted rows vs ",
          backbone.dim(0), " backbone rows");
  return concat({lifted, backbone}, 1);
}

Tensor Linear::operator()(const Tensor& x) const { return add_rowvec(matmul(x, weight), bias); }

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& context,
                                      std::vector<Matrix>* weights) const {
  require(context.dim(0) >= 1, "attention needs at least one key");
  const Tensor q = query(x);
  const Tensor k = key(context);
  const Tensor v = value(context);
  const std::size_t width = q.dim(1);
  const std::size_t dh = width / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    Tensor a = softmax(scale(matmul(slice(q, 1, b, e), transpose(slice(k, 1, b, e))), inv), 1);
    if (weights != nullptr) weights->push_back(a.to_matrix());
    outs.push_back(matmul(a, slice(v, 1, b, e)));
  }
  return output(heads == 1 ? outs[0] : concat(outs, 1));
}

Tensor CmdBlock::operator()(const Tensor& queries, const Tensor& scale_features, const Tensor& text_rows,
                            BlockTrace* trace) const {
  require(text_rows.defined() && text_rows.dim(0) >= 1, "decoder block needs at least one text row");
  Tensor q = add(queries, visual(layer_norm(queries), scale_features, trace ? &trace->visual : nullptr));
  q = add(q, text(layer_norm(q), text_rows, trace ? &trace->text : nullptr));
  const Tensor n = layer_norm(q);
  q = add(q, self(n, n, trace ? &trace->self : nullptr));
  return add(q, ffn_out(silu(ffn_in(layer_norm(q)))));
}

}  // namespace ovis
