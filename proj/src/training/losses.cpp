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
#include <limits>

#include "ovis/error.hpp"
#include "ovis/training.hpp"

namespace ovis {

namespace {

double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Tensor mask_target(const BinaryMask& gt) {
  std::vector<double> y(gt.begin(), gt.end());
  return Tensor({gt.size()}, std::move(y));
}

// Rows of `a` whose include flag is set (all rows when `include` is empty).
Matrix select_rows(const Matrix& a, const std::vector<std::uint8_t>& include, std::vector<std::size_t>& kept) {
  kept.clear();
  for (std::size_t j = 0; j < a.rows; ++j)
    if (include.empty() || include[j]) kept.push_back(j);
  Matrix out(kept.size(), a.cols);
  for (std::size_t k = 0; k < kept.size(); ++k)
    std::copy(a.row(kept[k]).begin(), a.row(kept[k]).end(), out.row(k).begin());
  return out;
}

}  // namespace

Matrix semantic_probability(const Matrix& mask_features, const Matrix& associations, double scale,
                            const std::vector<std::uint8_t>& include) {
  require(associations.rows >= 1, "semantic probability needs at least one ground-truth row");
  require(mask_features.cols == associations.cols, "mask feature width ", mask_features.cols,
          " vs association width ", associations.cols);
  require(include.empty() || include.size() == associations.rows, "include flags have ",
          include.size(), " entries for ", associations.rows, " rows");
  const std::size_t nq = mask_features.rows, nm = associations.rows;
  Matrix p(nq, nm);
  for (std::size_t i = 0; i < nq; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nm; ++j) {
      if (!include.empty() && !include[j]) continue;
      double s = 0.0;
      for (std::size_t d = 0; d < associations.cols; ++d) s += mask_features(i, d) * associations(j, d);
      p(i, j) = scale * s;
      mx = std::max(mx, p(i, j));
    }
    if (!std::isfinite(mx)) continue;  // every column excluded
    double z = 0.0;
    for (std::size_t j = 0; j < nm; ++j) {
      if (!include.empty() && !include[j]) continue;
      p(i, j) = std::exp(p(i, j) - mx);
      z += p(i, j);
    }
    for (std::size_t j = 0; j < nm; ++j) p(i, j) /= z;
  }
  return p;
}

MatchCostBreakdown match_cost(const Prediction& prediction, const std::vector<BinaryMask>& gt_masks,
                              const AssociationSet& associations, const LossWeights& weights,
                              double logit_scale) {
  const std::size_t nm = gt_masks.size();
  require(nm >= 1, "matching needs at least one ground-truth mask");
  require(associations.mva.rows == nm && associations.mca.rows == nm && associations.mea.rows == nm,
          "association rows do not match the ", nm, " ground-truth masks");
  const Matrix fm = prediction.mask_features.to_matrix();
  const Matrix heat = prediction.heatmaps.to_matrix();
  const std::size_t nq = heat.rows, m = heat.cols;

  MatchCostBreakdown c;
  c.p_mva = semantic_probability(fm, associations.mva, logit_scale, associations.has_coverage);
  if (weights.text_supervision) {
    c.p_mca = semantic_probability(fm, associations.mca, logit_scale);
    c.p_mea = semantic_probability(fm, associations.mea, logit_scale, associations.has_coverage);
  } else {
    c.p_mca = Matrix(nq, nm);
    c.p_mea = Matrix(nq, nm);
  }

  c.dice = Matrix(nq, nm);
  c.bce = Matrix(nq, nm);
  std::vector<double> gt_count(nm, 0.0);
  for (std::size_t j = 0; j < nm; ++j) {
    require(gt_masks[j].size() == m, "mask ", j, " has length ", gt_masks[j].size(), ", expected ", m);
    for (auto b : gt_masks[j]) gt_count[j] += b;
  }
  std::vector<double> prob(m);
  for (std::size_t i = 0; i < nq; ++i) {
    double psum = 0.0, bce_neg = 0.0;
    std::vector<double> pos_minus_neg(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double x = heat(i, k);
      prob[k] = 1.0 / (1.0 + std::exp(-x));
      psum += prob[k];
      const double neg = softplus_value(x);  // -log(1 - sigmoid(x))
      const double pos = softplus_value(-x);  // -log(sigmoid(x))
      bce_neg += neg;
      pos_minus_neg[k] = pos - neg;
    }
    for (std::size_t j = 0; j < nm; ++j) {
      double inter = 0.0, bce = bce_neg;
      for (std::size_t k = 0; k < m; ++k) {
        if (!gt_masks[j][k]) continue;
        inter += prob[k];
        bce += pos_minus_neg[k];
      }
      c.dice(i, j) = 1.0 - 2.0 * inter / (psum + gt_count[j] + kDiceEpsilon);
      c.bce(i, j) = bce / static_cast<double>(m);
    }
  }
  for (const auto& [name, part] : {std::pair<const char*, const Matrix*>{"mva", &c.p_mva},
                                   {"mca", &c.p_mca},
                                   {"mea", &c.p_mea},
                                   {"dice", &c.dice},
                                   {"bce", &c.bce}}) {
    for (double v : part->data)
      require<DomainError>(std::isfinite(v), "loss term '", name, "' is not finite in the matching cost");
  }
  c.total = Matrix(nq, nm);
  for (std::size_t k = 0; k < c.total.data.size(); ++k) {
    c.total.data[k] = -weights.mma * (c.p_mva.data[k] + c.p_mca.data[k] + c.p_mea.data[k]) +
                      weights.dice * c.dice.data[k] + weights.bce * c.bce.data[k];
  }
  return c;
}

MatchResult match(const MatchCostBreakdown& cost) {
  const Matrix& total = cost.total;
  Matrix gt_by_query(total.cols, total.rows);
  for (std::size_t i = 0; i < total.rows; ++i)
    for (std::size_t j = 0; j < total.cols; ++j) gt_by_query(j, i) = total(i, j);
  const auto assignment = hungarian(gt_by_query);
  MatchResult r;
  for (std::size_t j = 0; j < assignment.size(); ++j) {
    if (assignment[j] < 0) continue;
    const auto q = static_cast<std::size_t>(assignment[j]);
    r.matched_gt.push_back(j);
    r.query_for_gt.push_back(q);
    r.total_cost += total(q, j);
  }
  return r;
}

Tensor dice_loss(const Tensor& probabilities, const Tensor& targets) {
  require(probabilities.shape() == targets.shape(), "dice: shapes ", shape_to_string(probabilities.shape()),
          " and ", shape_to_string(targets.shape()));
  const Tensor inter = sum(mul(probabilities, targets));
  const Tensor denom = add_scalar(add(sum(probabilities), sum(targets)), kDiceEpsilon);
  return add_scalar(neg(scale(mul(inter, exp(neg(log(denom)))), 2.0)), 1.0);
}

Tensor mask_dice_loss(const Tensor& heatmap_sigmoid, const BinaryMask& gt) {
  require(heatmap_sigmoid.numel() == gt.size(), "mask dice: ", heatmap_sigmoid.numel(), " vs ", gt.size());
  return dice_loss(reshape(heatmap_sigmoid, {gt.size()}), mask_target(gt));
}

Tensor mask_bce_loss(const Tensor& heatmap_sigmoid, const BinaryMask& gt) {
  require(heatmap_sigmoid.numel() == gt.size(), "mask bce: ", heatmap_sigmoid.numel(), " vs ", gt.size());
  return mean(binary_cross_entropy(reshape(heatmap_sigmoid, {gt.size()}), mask_target(gt)));
}

AssociationLossTerms association_loss(const Tensor& mask_features, const AssociationSet& associations,
                                      const MatchResult& matching, const LossWeights& weights,
                                      double logit_scale) {
  const std::size_t nq = mask_features.dim(0);
  struct Term {
    const Matrix* rows;
    const std::vector<std::uint8_t>* include;
    double* out;
  };
  AssociationLossTerms result;
  static const std::vector<std::uint8_t> all;
  std::vector<Term> terms{{&associations.mva, &associations.has_coverage, &result.mva}};
  if (weights.text_supervision) {
    terms.push_back({&associations.mca, &all, &result.mca});
    terms.push_back({&associations.mea, &associations.has_coverage, &result.mea});
  }
  for (const std::size_t q : matching.query_for_gt)
    require(q < nq, "matched query ", q, " is out of range");

  Tensor total = Tensor::scalar(0.0);
  for (const auto& t : terms) {
    std::vector<std::size_t> kept;
    const Matrix rows = select_rows(*t.rows, *t.include, kept);
    std::vector<std::size_t> queries;
    std::vector<double> y;
    for (std::size_t k = 0; k < matching.matched_gt.size(); ++k) {
      const auto it = std::find(kept.begin(), kept.end(), matching.matched_gt[k]);
      if (it == kept.end()) continue;
      queries.push_back(matching.query_for_gt[k]);
      std::vector<double> row(kept.size(), 0.0);
      row[static_cast<std::size_t>(it - kept.begin())] = 1.0;
      y.insert(y.end(), row.begin(), row.end());
    }
    if (queries.empty()) continue;
    const Tensor target({queries.size(), kept.size()}, std::move(y));
    const Tensor p = sigmoid(scale(matmul(gather_rows(mask_features, queries),
                                          transpose(Tensor::from_matrix(rows))),
                                   logit_scale));
    const Tensor term = add(mean(focal_loss(p, target, weights.focal_gamma, weights.focal_alpha)),
                            dice_loss(p, target));
    *t.out = term.item();
    total = add(total, term);
  }
  result.total = total;
  return result;
}

LossBreakdown total_loss(const Prediction& prediction, const std::vector<BinaryMask>& gt_masks,
                         const AssociationSet& associations, const LossWeights& weights,
                         double logit_scale) {
  require(!gt_masks.empty(), "the loss needs at least one ground-truth mask");
  require(weights.mma >= 0.0 && weights.dice >= 0.0 && weights.bce >= 0.0 && weights.focal_gamma >= 0.0 &&
              weights.focal_alpha >= 0.0 && weights.focal_alpha <= 1.0,
          "loss weights must be non-negative and alpha in [0, 1]");
  LossBreakdown out;
  out.matching = match(match_cost(prediction, gt_masks, associations, weights, logit_scale));

  const auto assoc = association_loss(prediction.mask_features, associations, out.matching, weights, logit_scale);
  out.mva = assoc.mva;
  out.mca = assoc.mca;
  out.mea = assoc.mea;
  const Tensor mma = scale(assoc.total, weights.mma);

  const std::size_t m = prediction.heatmaps.dim(1);
  const double inv_nm = 1.0 / static_cast<double>(gt_masks.size());
  Tensor dice = Tensor::scalar(0.0), bce = Tensor::scalar(0.0);
  for (std::size_t k = 0; k < out.matching.matched_gt.size(); ++k) {
    const std::size_t q = out.matching.query_for_gt[k];
    const auto& gt = gt_masks[out.matching.matched_gt[k]];
    const Tensor logits = reshape(slice(prediction.heatmaps, 0, q, q + 1), {m});
    dice = add(dice, mask_dice_loss(sigmoid(logits), gt));
    bce = add(bce, mean(bce_with_logits(logits, mask_target(gt))));
  }
  dice = scale(dice, weights.dice * inv_nm);
  bce = scale(bce, weights.bce * inv_nm);
  out.mma = mma.item();
  out.dice = dice.item();
  out.bce = bce.item();
  out.total = add(add(mma, dice), bce);
  return out;
}

}  // namespace ovis
