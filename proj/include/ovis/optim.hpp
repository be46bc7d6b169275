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

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ovis/tensor.hpp"

namespace ovis {

struct AdamWOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// Decoupled weight decay Adam. Moments are allocated lazily to match each
// parameter's shape on the first step.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions options);

  // Throws ContractError if any parameter has no gradient buffer.
  void step();
  void zero_grad();

  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  double learning_rate() const { return options_.learning_rate; }
  std::uint64_t step_count() const { return step_; }
  const AdamWOptions& options() const { return options_; }

 private:
  std::vector<Tensor> params_;
  AdamWOptions options_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::uint64_t step_ = 0;
};

// Cosine annealing with warm restarts: the rate falls from base to
// base * min_ratio over `period` steps, then jumps back.
struct CosineRestartSchedule {
  double base_rate = 1e-4;
  std::size_t period = 1;
  double min_ratio = 0.0;

  double rate_at(std::size_t step) const;
};

}  // namespace ovis
