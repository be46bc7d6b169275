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
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "ovis/error.hpp"
#include "ovis/training.hpp"

namespace ovis {

using nlohmann::json;

void TrainConfig::validate() const {
  require(learning_rate >= 0.0, "learning_rate must be >= 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(schedule == "constant" || schedule == "cosine", "schedule must be constant or cosine, got '",
          schedule, "'");
  require(schedule_min_ratio >= 0.0 && schedule_min_ratio <= 1.0, "schedule min_ratio must be in [0, 1]");
  require(weights.mma >= 0.0 && weights.dice >= 0.0 && weights.bce >= 0.0, "loss weights must be >= 0");
  require(weights.focal_gamma >= 0.0 && weights.focal_alpha >= 0.0 && weights.focal_alpha <= 1.0,
          "focal gamma must be >= 0 and alpha in [0, 1]");
  model.validate();
}

std::string TrainConfig::to_json() const {
  json j;
  j["epochs"] = epochs;
  j["max_steps"] = max_steps;
  j["seed"] = seed;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["schedule"] = {{"kind", schedule}, {"period", schedule_period}, {"min_ratio", schedule_min_ratio}};
  j["shuffle"] = shuffle;
  j["weights"] = {{"mma", weights.mma},
                  {"dice", weights.dice},
                  {"bce", weights.bce},
                  {"focal_gamma", weights.focal_gamma},
                  {"focal_alpha", weights.focal_alpha},
                  {"text_supervision", weights.text_supervision}};
  j["model"] = json::parse(model.to_json());
  return j.dump(2);
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  require<FormatError>(j.is_object(), where, " must be a JSON object");
  for (const auto& [key, _] : j.items())
    require<FormatError>(known.count(key) == 1, where, ": unknown field '", key, "'");
}

}  // namespace

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail<FormatError>("training config is not valid JSON: ", e.what());
  }
  reject_unknown(j, {"epochs", "max_steps", "seed", "learning_rate", "weight_decay", "schedule", "shuffle",
                     "weights", "model"},
                 "training config");
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.shuffle = j.value("shuffle", c.shuffle);
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      reject_unknown(s, {"kind", "period", "min_ratio"}, "schedule");
      c.schedule = s.value("kind", c.schedule);
      c.schedule_period = s.value("period", c.schedule_period);
      c.schedule_min_ratio = s.value("min_ratio", c.schedule_min_ratio);
    }
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      reject_unknown(w, {"mma", "dice", "bce", "focal_gamma", "focal_alpha", "text_supervision"}, "weights");
      c.weights.mma = w.value("mma", c.weights.mma);
      c.weights.dice = w.value("dice", c.weights.dice);
      c.weights.bce = w.value("bce", c.weights.bce);
      c.weights.focal_gamma = w.value("focal_gamma", c.weights.focal_gamma);
      c.weights.focal_alpha = w.value("focal_alpha", c.weights.focal_alpha);
      c.weights.text_supervision = w.value("text_supervision", c.weights.text_supervision);
    }
    json model = j.value("model", json::object());
    require<FormatError>(model.is_object(), "model must be a JSON object");
    if (!model.contains("seed")) model["seed"] = c.seed;
    c.model = SegModelConfig::from_json(model.dump());
  } catch (const json::exception& e) {
    fail<FormatError>("training config: ", e.what());
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    fail<FormatError>("training config: ", e.what());
  }
  return c;
}

TrainingScene prepare_training_scene(const SceneBundle& bundle, const SegModelConfig& config,
                                     const EmbeddingProvider* provider) {
  require(bundle.num_masks() >= 1, "scene ", bundle.id, " has no instances to train on");
  TrainingScene s;
  s.id = bundle.id;
  const auto lifted = lifted_features_for(bundle);
  s.input = prepare_scene(bundle, lifted, config);
  s.gt_masks = bundle.gt_masks;
  s.associations = build_associations(bundle, lifted, provider);
  require(s.associations.mca.cols == config.embed_dim, "scene ", bundle.id, " caption width ",
          s.associations.mca.cols, " does not match the model embed_dim ", config.embed_dim);
  return s;
}

std::vector<LossRecord> train(SegModel& model, const std::vector<TrainingScene>& scenes,
                              const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  require(!scenes.empty(), "training needs at least one scene");
  AdamWOptions opts;
  opts.learning_rate = config.learning_rate;
  opts.weight_decay = config.weight_decay;
  AdamW optimizer(model.parameters(), opts);

  std::size_t total_steps = config.epochs * scenes.size();
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);
  if (total_steps == 0) return {};
  CosineRestartSchedule cosine{config.learning_rate,
                               config.schedule_period > 0 ? config.schedule_period : total_steps,
                               config.schedule_min_ratio};

  Rng rng(config.seed);
  std::vector<std::size_t> order(scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<LossRecord> history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs && step < total_steps; ++epoch) {
    if (config.shuffle)
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t k = 0; k < order.size() && step < total_steps; ++k, ++step) {
      const auto& scene = scenes[order[k]];
      const double lr = config.schedule == "cosine" ? cosine.rate_at(step) : config.learning_rate;
      optimizer.set_learning_rate(lr);
      optimizer.zero_grad();
      const auto pred = model.forward(scene.input, scene.associations.mca);
      const auto loss = total_loss(pred, scene.gt_masks, scene.associations, config.weights,
                                   model.config().logit_scale);
      for (const auto& [name, value] : {std::pair<const char*, double>{"mma", loss.mma},
                                        {"dice", loss.dice},
                                        {"bce", loss.bce}}) {
        require<DomainError>(std::isfinite(value), "loss term '", name, "' is not finite (", value,
                             ") at step ", step, " on scene ", scene.id);
      }
      loss.total.backward();
      optimizer.step();
      LossRecord rec{step, epoch, scene.id, loss.total.item(), loss.mma, loss.dice, loss.bce, lr};
      history.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  return history;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path);
  require<IoError>(static_cast<bool>(out), "cannot write loss history ", path.string());
  out << "step,epoch,scene,total,mma,dice,bce,learning_rate\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.epoch,
                  r.scene.c_str(), r.total, r.mma, r.dice, r.bce, r.learning_rate);
    out << buf;
  }
  require<IoError>(static_cast<bool>(out), "failed writing ", path.string());
}

}  // namespace ovis
