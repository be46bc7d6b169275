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

#include "ovis/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "ovis/error.hpp"
#include "ovis/random.hpp"

namespace ovis {

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require(a.size() == b.size(), "masks of length ", a.size(), " and ", b.size(), " cannot be compared");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

EvalScene make_eval_scene(const SceneBundle& bundle, const QueryResult& result) {
  EvalScene scene;
  for (std::size_t j = 0; j < bundle.num_masks(); ++j) {
    require<DataError>(j < bundle.mask_records.size() && bundle.mask_records[j].category >= 0,
                       "scene '", bundle.id, "' mask ", j, " has no category label");
    scene.ground_truth.push_back({bundle.gt_masks[j], bundle.mask_records[j].category});
  }
  for (const auto& c : result.candidates) {
    ScoredMask p;
    p.mask.assign(bundle.num_points(), 0);
    for (const std::size_t i : c.points) {
      require(i < bundle.num_points(), "candidate point ", i, " is out of range");
      p.mask[i] = 1;
    }
    p.label = c.label;
    p.score = c.score;
    scene.predictions.push_back(std::move(p));
  }
  return scene;
}

std::map<int, ClassAp> average_precision(std::span<const EvalScene> scenes, double iou_threshold) {
  struct Ref {
    std::size_t scene, index;
    double score;
  };
  std::map<int, ClassAp> out;
  std::map<int, std::vector<Ref>> ranked;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (const auto& g : scenes[s].ground_truth) ++out[g.label].num_gt;
    for (std::size_t p = 0; p < scenes[s].predictions.size(); ++p)
      ranked[scenes[s].predictions[p].label].push_back({s, p, scenes[s].predictions[p].score});
  }
  for (auto& [label, cls] : out) {
    auto& refs = ranked[label];
    std::stable_sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });
    cls.num_predictions = refs.size();
    std::vector<std::vector<std::uint8_t>> used(scenes.size());
    for (std::size_t s = 0; s < scenes.size(); ++s) used[s].assign(scenes[s].ground_truth.size(), 0);
    std::size_t tp = 0;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      const auto& scene = scenes[refs[r].scene];
      const auto& pred = scene.predictions[refs[r].index];
      double best = -1.0;
      std::size_t best_g = 0;
      for (std::size_t g = 0; g < scene.ground_truth.size(); ++g) {
        if (used[refs[r].scene][g] || scene.ground_truth[g].label != label) continue;
        const double iou = mask_iou(pred.mask, scene.ground_truth[g].mask);
        if (iou > best) {
          best = iou;
          best_g = g;
        }
      }
      if (best >= iou_threshold) {
        used[refs[r].scene][best_g] = 1;
        ++tp;
      }
      cls.curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
      cls.curve.recall.push_back(static_cast<double>(tp) / static_cast<double>(cls.num_gt));
    }
    const auto& prec = cls.curve.precision;
    const auto& rec = cls.curve.recall;
    double envelope = 0.0, area = 0.0;
    std::vector<double> env(prec.size());
    for (std::size_t r = prec.size(); r-- > 0;) env[r] = envelope = std::max(envelope, prec[r]);
    double last_recall = 0.0;
    for (std::size_t r = 0; r < rec.size(); ++r) {
      area += (rec[r] - last_recall) * env[r];
      last_recall = rec[r];
    }
    cls.ap = area;
  }
  return out;
}

std::vector<double> ap_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

EvalReport evaluate(std::span<const EvalScene> scenes, const std::vector<std::string>& category_names,
                    const std::map<std::string, std::vector<int>>& groups) {
  EvalReport report;
  std::map<int, CategoryReport> by_label;
  auto accumulate_threshold = [&](double t, bool in_mean) {
    for (auto& [label, cls] : average_precision(scenes, t)) {
      auto& c = by_label[label];
      c.label = label;
      c.num_gt = cls.num_gt;
      c.curves[t] = cls.curve;
      if (in_mean) c.ap += cls.ap / 10.0;
      if (std::abs(t - 0.5) < 1e-12) c.ap50 = cls.ap;
      if (std::abs(t - 0.25) < 1e-12) c.ap25 = cls.ap;
    }
  };
  for (const double t : ap_thresholds()) accumulate_threshold(t, true);
  accumulate_threshold(0.25, false);

  std::vector<double> ap, ap50, ap25;
  for (auto& [label, c] : by_label) {
    c.name = label >= 0 && static_cast<std::size_t>(label) < category_names.size()
                 ? category_names[static_cast<std::size_t>(label)]
                 : std::to_string(label);
    ap.push_back(c.ap);
    ap50.push_back(c.ap50);
    ap25.push_back(c.ap25);
    report.categories.push_back(c);
  }
  report.mean_ap = mean_of(ap);
  report.mean_ap50 = mean_of(ap50);
  report.mean_ap25 = mean_of(ap25);
  for (const auto& [group, labels] : groups) {
    std::vector<double> members;
    for (const int l : labels)
      if (const auto it = by_label.find(l); it != by_label.end()) members.push_back(it->second.ap);
    if (!members.empty()) report.group_ap[group] = mean_of(members);
  }
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["mean"] = {{"ap", mean_ap}, {"ap50", mean_ap50}, {"ap25", mean_ap25}};
  j["categories"] = nlohmann::json::array();
  for (const auto& c : categories)
    j["categories"].push_back(
        {{"label", c.label}, {"name", c.name}, {"ap", c.ap}, {"ap50", c.ap50}, {"ap25", c.ap25}, {"num_gt", c.num_gt}});
  if (!group_ap.empty()) j["groups"] = group_ap;
  if (grounding)
    j["grounding"] = {{"acc25", grounding->acc25}, {"acc50", grounding->acc50}, {"num_queries", grounding->num_queries}};
  return j.dump(2);
}

std::string EvalReport::curves_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "category,threshold,rank,precision,recall\n";
  for (const auto& c : categories)
    for (const auto& [t, curve] : c.curves)
      for (std::size_t r = 0; r < curve.precision.size(); ++r)
        os << c.name << ',' << t << ',' << r + 1 << ',' << curve.precision[r] << ',' << curve.recall[r] << '\n';
  return os.str();
}

double box_iou(const Box& a, const Box& b) {
  double inter = 1.0, va = 1.0, vb = 1.0;
  for (std::size_t d = 0; d < 3; ++d) {
    inter *= std::max(0.0, std::min(a.max[d], b.max[d]) - std::max(a.min[d], b.min[d]));
    va *= std::max(0.0, a.max[d] - a.min[d]);
    vb *= std::max(0.0, b.max[d] - b.min[d]);
  }
  const double uni = va + vb - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

GroundingAccuracy grounding_accuracy(std::span<const Box> predicted, std::span<const Box> ground_truth) {
  require(predicted.size() == ground_truth.size(), "need one predicted box per query: ", predicted.size(),
          " predicted, ", ground_truth.size(), " ground truth");
  GroundingAccuracy acc;
  acc.num_queries = predicted.size();
  if (predicted.empty()) return acc;
  std::size_t hit25 = 0, hit50 = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double iou = box_iou(predicted[i], ground_truth[i]);
    hit25 += iou >= 0.25 ? 1 : 0;
    hit50 += iou >= 0.5 ? 1 : 0;
  }
  acc.acc25 = static_cast<double>(hit25) / static_cast<double>(predicted.size());
  acc.acc50 = static_cast<double>(hit50) / static_cast<double>(predicted.size());
  return acc;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

}  // namespace

KMeansResult kmeans(const Matrix& features, std::size_t k, std::uint64_t seed) {
  const std::size_t m = features.rows;
  require(k >= 1, "k must be at least 1");
  require(k <= m, "k = ", k, " exceeds the ", m, " points");
  Rng rng(seed);

  KMeansResult result;
  result.centers = Matrix(k, features.cols);
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(m);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(features.row(pick).begin(), features.row(pick).end(), result.centers.row(c).begin());
    for (std::size_t i = 0; i < m; ++i) nearest[i] = std::min(nearest[i], squared_distance(features.row(i), result.centers.row(c)));
    pick = static_cast<std::size_t>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
  }

  result.assignment.assign(m, k);
  for (std::size_t it = 0; it < kKMeansMaxIterations; ++it) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(features.row(i), result.centers.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed = changed || result.assignment[i] != best;
      result.assignment[i] = best;
      objective += best_d;
    }
    result.objective.push_back(objective);
    result.iterations = it + 1;
    if (!changed) break;

    Matrix sums(k, features.cols);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
      ++counts[result.assignment[i]];
      for (std::size_t d = 0; d < features.cols; ++d) sums(result.assignment[i], d) += features(i, d);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t d = 0; d < features.cols; ++d) result.centers(c, d) = sums(c, d) / static_cast<double>(counts[c]);
  }
  return result;
}

}  // namespace ovis
