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

#include "gpvit/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gpvit/autograd.hpp"
#include "gpvit/error.hpp"

namespace gpvit {

double TrainResult::best_accuracy() const {
  double best = 0.0;
  for (const auto& m : history) best = std::max(best, m.train_accuracy);
  return best;
}

template <typename T>
EpochMetrics evaluate(const Model<T>& model, const Dataset<T>& data, std::size_t epoch) {
  NoGradGuard no_grad;
  EpochMetrics m;
  m.epoch = epoch;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor<T> logits = model.forward_classify(data.images[i]);
    m.loss += static_cast<double>(ops::cross_entropy(logits, data.labels[i]).item());
    const auto v = logits.data();
    const auto pred = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    if (pred == data.labels[i]) ++correct;
  }
  m.loss /= static_cast<double>(data.size());
  m.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

template <typename T>
TrainResult train_smoke(Model<T>& model, const Dataset<T>& data, const TrainOptions& opts) {
  if (data.size() == 0) throw UsageError("train: empty dataset");
  if (opts.batch_size == 0) throw UsageError("train: batch size must be positive");
  const ParameterList<T> params = model.parameters();
  std::vector<std::vector<double>> m1(params.size()), m2(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    m1[p].assign(params[p].tensor.numel(), 0.0);
    m2[p].assign(params[p].tensor.numel(), 0.0);
  }
  auto snapshot = [&] {
    std::vector<std::vector<T>> s;
    for (const auto& p : params) s.push_back(p.tensor.to_vector());
    return s;
  };

  Rng rng(opts.seed);
  ForwardContext ctx{true, &rng};
  TrainResult result;
  result.history.push_back(evaluate(model, data, 0));
  std::vector<std::vector<T>> good = snapshot();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    if (result.history.back().train_accuracy >= opts.stop_at_accuracy) break;
    std::shuffle(order.begin(), order.end(), rng.engine());
    bool finite = true;
    for (std::size_t start = 0; start < order.size() && finite; start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      Tensor<T> loss;
      for (std::size_t b = start; b < end; ++b) {
        Tensor<T> l = ops::cross_entropy(model.forward_classify(data.images[order[b]], ctx), data.labels[order[b]]);
        loss = loss.defined() ? ops::add(loss, l) : l;
      }
      loss = ops::scale(loss, static_cast<T>(1.0 / static_cast<double>(end - start)));
      if (!std::isfinite(static_cast<double>(loss.item()))) {
        finite = false;
        break;
      }
      const GradientMap<T> grads = backward(loss);
      ++step;
      const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor<T> g = grads[params[p].tensor];
        const auto gd = g.data();
        Tensor<T> t = params[p].tensor;
        auto w = t.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = static_cast<double>(gd[i]);
          m1[p][i] = opts.beta1 * m1[p][i] + (1.0 - opts.beta1) * gi;
          m2[p][i] = opts.beta2 * m2[p][i] + (1.0 - opts.beta2) * gi * gi;
          const double update = opts.lr * (m1[p][i] / c1) / (std::sqrt(m2[p][i] / c2) + opts.eps);
          w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
        }
      }
    }
    EpochMetrics m = finite ? evaluate(model, data, epoch) : EpochMetrics{};
    if (!finite || !std::isfinite(m.loss)) {
      result.diverged = true;
      for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor<T> t = params[p].tensor;
        std::copy(good[p].begin(), good[p].end(), t.mutable_data().begin());
      }
      break;
    }
    result.history.push_back(m);
    result.last_good_epoch = epoch;
    good = snapshot();
  }
  return result;
}

std::string metrics_csv(const TrainResult& result) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,loss,train_accuracy\n";
  for (const auto& m : result.history) out << m.epoch << ',' << m.loss << ',' << m.train_accuracy << '\n';
  return out.str();
}

template EpochMetrics evaluate(const Model<float>&, const Dataset<float>&, std::size_t);
template EpochMetrics evaluate(const Model<double>&, const Dataset<double>&, std::size_t);
template TrainResult train_smoke(Model<float>&, const Dataset<float>&, const TrainOptions&);
template TrainResult train_smoke(Model<double>&, const Dataset<double>&, const TrainOptions&);

}  // namespace gpvit
