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

#include "ovis/optim.hpp"

#include <cmath>
#include <numbers>

#include "ovis/error.hpp"

namespace ovis {

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    require(p.defined() && p.is_leaf(), "AdamW parameters must be defined leaf tensors");
  }
  require(options_.beta1 >= 0.0 && options_.beta1 < 1.0 && options_.beta2 >= 0.0 &&
              options_.beta2 < 1.0,
          "AdamW betas must lie in [0, 1)");
  first_moment_.resize(params_.size());
  second_moment_.resize(params_.size());
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    require(params_[i].has_grad(), "AdamW step: parameter ", i, " of shape ",
            shape_to_string(params_[i].shape()), " has no gradient");
  }
  ++step_;
  const double lr = options_.learning_rate;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto theta = params_[i].mutable_data();
    auto g = params_[i].grad();
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    for (std::size_t k = 0; k < theta.size(); ++k) {
      theta[k] -= lr * options_.weight_decay * theta[k];
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g[k];
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      theta[k] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

double CosineRestartSchedule::rate_at(std::size_t step) const {
  require(period >= 1, "schedule period must be >= 1");
  const double phase = static_cast<double>(step % period) / static_cast<double>(period);
  const double lo = base_rate * min_ratio;
  return lo + 0.5 * (base_rate - lo) * (1.0 + std::cos(std::numbers::pi * phase));
}

}  // namespace ovis
