// Copyright 2026 The GPViT-cpp Authors. All Rights Reserved.
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
#include <string>
#include <vector>

#include "gpvit/config.hpp"
#include "gpvit/harness/dataset.hpp"
#include "gpvit/model.hpp"

namespace gpvit {

// Adam (beta1 0.9, beta2 0.999, eps 1e-8, no weight decay) on mean
// cross-entropy over shuffled minibatches. Epoch 0 is the evaluation before
// any update.
struct TrainOptions {
  std::uint64_t seed = 0;
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Stop once train accuracy reaches this value (disabled when > 1).
  double stop_at_accuracy = 2.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;            // mean training loss, eval mode
  double train_accuracy = 0.0;  // eval mode
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  bool diverged = false;
  std::size_t last_good_epoch = 0;

  double final_accuracy() const { return history.empty() ? 0.0 : history.back().train_accuracy; }
  double best_accuracy() const;
};

template <typename T>
EpochMetrics evaluate(const Model<T>& model, const Dataset<T>& data, std::size_t epoch);

// Trains `model` in place. On a non-finite loss the parameters are restored
// to the last good epoch and training stops.
template <typename T>
TrainResult train_smoke(Model<T>& model, const Dataset<T>& data, const TrainOptions& opts);

std::string metrics_csv(const TrainResult& result);

}  // namespace gpvit
