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

#include <Eigen/Core>

namespace gpvit::detail {

// C[m x n] (+)= op(A)[m x k] * op(B)[k x n] on row-major buffers.
// With trans_a, A is stored as [k x m]; with trans_b, B is stored as [n x k].
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ki = static_cast<Eigen::Index>(k);
  Eigen::Map<Mat> cm(c, mi, ni);
  if (!accumulate) cm.setZero();
  if (m == 0 || n == 0 || k == 0) return;
  if (!trans_a && !trans_b) {
    cm.noalias() += Eigen::Map<const Mat>(a, mi, ki) * Eigen::Map<const Mat>(b, ki, ni);
  } else if (!trans_a && trans_b) {
    cm.noalias() += Eigen::Map<const Mat>(a, mi, ki) * Eigen::Map<const Mat>(b, ni, ki).transpose();
  } else if (trans_a && !trans_b) {
    cm.noalias() += Eigen::Map<const Mat>(a, ki, mi).transpose() * Eigen::Map<const Mat>(b, ki, ni);
  } else {
    cm.noalias() +=
        Eigen::Map<const Mat>(a, ki, mi).transpose() * Eigen::Map<const Mat>(b, ni, ki).transpose();
  }
}

}  // namespace gpvit::detail
