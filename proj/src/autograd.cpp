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

#include "gpvit/autograd.hpp"

#include <unordered_set>

#include "gpvit/error.hpp"

namespace gpvit {

template <typename T>
GradTape<T>::GradTape(const Tensor<T>& root) {
  if (!root.requires_grad()) return;
  // Iterative post-order DFS; deep graphs would overflow a recursive walk.
  std::unordered_set<const Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order_.push_back(node);
    stack.pop_back();
  }
}

template <typename T>
Tensor<T> GradientMap<T>::operator[](const Tensor<T>& leaf) const {
  auto it = grads_.find(leaf.node());
  if (it == grads_.end()) return Tensor<T>::zeros(leaf.shape());
  return Tensor<T>::from_data(leaf.shape(), it->second);
}

template <typename T>
bool GradientMap<T>::contains(const Tensor<T>& leaf) const {
  return grads_.count(leaf.node()) != 0;
}

template <typename T>
GradientMap<T> backward(const Tensor<T>& root) {
  if (!root.defined() || root.numel() != 1) {
    throw UsageError("backward: root must be a scalar, got " +
                     (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  }
  GradientMap<T> result;
  GradTape<T> tape(root);
  if (tape.size() == 0) return result;

  const auto& order = tape.order();
  for (Node<T>* n : order) n->grad.clear();
  root.node()->grad_buffer()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    n->grad_buffer();
    if (!n->is_leaf() && n->backward) n->backward(*n);
  }
  for (Node<T>* n : order) {
    if (n->is_leaf()) {
      n->grad_buffer();
      result.grads_.emplace(n, std::move(n->grad));
    }
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
  return result;
}

template class GradTape<float>;
template class GradTape<double>;
template class GradientMap<float>;
template class GradientMap<double>;
template GradientMap<float> backward(const Tensor<float>&);
template GradientMap<double> backward(const Tensor<double>&);

}  // namespace gpvit
