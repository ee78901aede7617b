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

#include "gpvit/harness/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "gpvit/autograd.hpp"
#include "gpvit/error.hpp"
#include "gpvit/harness/dataset.hpp"
#include "gpvit/model.hpp"

namespace gpvit {

GradcheckReport run_gradcheck(const ModelConfig& cfg, const GradcheckOptions& opts) {
  Model<double> model(cfg, opts.seed);
  const ParameterList<double> params = model.parameters();
  const std::size_t total = count_parameters(params);
  if (total > opts.max_params) {
    throw UsageError("gradcheck: " + cfg.name + " has " + std::to_string(total) + " parameters, above the cap of " +
                     std::to_string(opts.max_params) + "; use a smaller configuration such as tiny-gradcheck");
  }
  if (opts.zero_head) {
    for (Tensor<double> t : {model.head.weight, model.head.bias}) {
      auto d = t.mutable_data();
      std::fill(d.begin(), d.end(), 0.0);
    }
  }

  DatasetSpec spec;
  spec.classes = cfg.num_classes;
  spec.samples_per_class = 1;
  spec.image_size = cfg.input_size;
  spec.seed = opts.seed + 1;
  const Dataset<double> data = make_synthetic_dataset<double>(spec);
  const Tensor<double>& image = data.images.back();
  const std::size_t label = data.labels.back();

  auto loss_of = [&] { return ops::cross_entropy(model.forward_classify(image), label); };

  GradcheckReport r;
  r.model = cfg.name;
  r.seed = opts.seed;
  r.tolerance = opts.tolerance;
  Tensor<double> loss = loss_of();
  r.loss = loss.item();
  const GradientMap<double> grads = backward(loss);

  NoGradGuard no_grad;
  for (const auto& p : params) {
    GradcheckBlock b;
    b.name = p.name;
    const std::vector<double> analytic = grads[p.tensor].to_vector();
    Tensor<double> t = p.tensor;
    auto data_span = t.mutable_data();
    b.entries = data_span.size();
    for (std::size_t i = 0; i < data_span.size(); ++i) {
      const double orig = data_span[i];
      data_span[i] = orig + opts.step;
      const double up = loss_of().item();
      data_span[i] = orig - opts.step;
      const double down = loss_of().item();
      data_span[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[i];
      const double err = std::fabs(a - numeric);
      const double denom = std::max({std::fabs(a), std::fabs(numeric), opts.abs_floor});
      b.max_abs_error = std::max(b.max_abs_error, err);
      b.max_rel_error = std::max(b.max_rel_error, err / denom);
      b.max_abs_grad = std::max(b.max_abs_grad, std::fabs(a));
    }
    r.max_rel_error = std::max(r.max_rel_error, b.max_rel_error);
    r.blocks.push_back(b);
  }
  r.passed = r.max_rel_error < opts.tolerance;
  return r;
}

std::string gradcheck_json(const GradcheckReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["seed"] = r.seed;
  j["loss"] = r.loss;
  j["tolerance"] = r.tolerance;
  j["max_rel_error"] = r.max_rel_error;
  j["passed"] = r.passed;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : r.blocks) {
    j["blocks"].push_back({{"name", b.name},
                           {"entries", b.entries},
                           {"max_rel_error", b.max_rel_error},
                           {"max_abs_error", b.max_abs_error},
                           {"max_abs_grad", b.max_abs_grad}});
  }
  return j.dump(2) + "\n";
}

}  // namespace gpvit
