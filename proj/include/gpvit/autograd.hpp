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

#include <unordered_map>
#include <vector>

#include "gpvit/tensor.hpp"

namespace gpvit {

// Operations reachable from a root, in topological order (every node after
// all nodes producing its inputs). Only nodes that require grad are recorded.
template <typename T>
class GradTape {
 public:
  explicit GradTape(const Tensor<T>& root);

  const std::vector<Node<T>*>& order() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<Node<T>*> order_;
};

// Gradients of a scalar with respect to the graph leaves.
template <typename T>
class GradientMap {
 public:
  // Gradient for `leaf`; all zeros if the leaf did not contribute to the root.
  Tensor<T> operator[](const Tensor<T>& leaf) const;
  bool contains(const Tensor<T>& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  template <typename U>
  friend GradientMap<U> backward(const Tensor<U>& root);
  std::unordered_map<const Node<T>*, std::vector<T>> grads_;
};

// Reverse-mode sweep from a scalar root. Throws UsageError for non-scalar roots.
template <typename T>
GradientMap<T> backward(const Tensor<T>& root);

}  // namespace gpvit
