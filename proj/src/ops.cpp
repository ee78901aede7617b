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

#include "gpvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gemm.hpp"
#include "gpvit/error.hpp"

namespace gpvit::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::vector<NodePtr<T>> inputs, std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool track = GradMode::enabled() &&
                     std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr<T>& n) { return n->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

constexpr double kGeluSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ for " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  detail::gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  MacCounter::add(static_cast<std::uint64_t>(m) * k * n);
  return make_result<T>({m, n}, std::move(out), "matmul", {a.node_ptr(), b.node_ptr()},
                        [m, k, n](Node<T>& self) {
                          Node<T>& A = *self.inputs[0];
                          Node<T>& B = *self.inputs[1];
                          if (A.requires_grad) {
                            detail::gemm(false, true, m, k, n, self.grad.data(), B.data.data(),
                                         A.grad_buffer().data(), true);
                          }
                          if (B.requires_grad) {
                            detail::gemm(true, false, k, n, m, A.data.data(), self.grad.data(),
                                         B.grad_buffer().data(), true);
                          }
                        });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    throw ShapeError("bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                     (transpose_b ? "^T" : ""));
  }
  std::vector<T> out(batch * m * n);
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(false, transpose_b, m, n, k, ad + i * m * k, bd + i * k * n, out.data() + i * m * n,
                 false);
  }
  MacCounter::add(static_cast<std::uint64_t>(batch) * m * k * n);
  return make_result<T>(
      {batch, m, n}, std::move(out), "bmm", {a.node_ptr(), b.node_ptr()},
      [batch, m, k, n, transpose_b](Node<T>& self) {
        Node<T>& A = *self.inputs[0];
        Node<T>& B = *self.inputs[1];
        const T* dc = self.grad.data();
        if (A.requires_grad) {
          T* da = A.grad_buffer().data();
          for (std::size_t i = 0; i < batch; ++i) {
            // C = A B   -> dA = dC B^T ;  C = A B^T -> dA = dC B
            detail::gemm(false, !transpose_b, m, k, n, dc + i * m * n, B.data.data() + i * k * n,
                         da + i * m * k, true);
          }
        }
        if (B.requires_grad) {
          T* db = B.grad_buffer().data();
          for (std::size_t i = 0; i < batch; ++i) {
            if (transpose_b) {
              // dB[n x k] = dC^T A
              detail::gemm(true, false, n, k, m, dc + i * m * n, A.data.data() + i * m * k,
                           db + i * k * n, true);
            } else {
              // dB[k x n] = A^T dC
              detail::gemm(true, false, k, n, m, A.data.data() + i * m * k, dc + i * m * n,
                           db + i * k * n, true);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const Shape& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (axes.size() != rank) {
    throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for shape " +
                     shape_str(in_shape));
  }
  std::vector<bool> seen(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("permute: axes are not a permutation");
    seen[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];

  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  // stride in the input for each output axis
  std::vector<std::size_t> gather_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) gather_strides[i] = in_strides[axes[i]];

  const std::size_t total = shape_numel(in_shape);
  std::vector<std::size_t> src_index(total);
  {
    std::vector<std::size_t> counter(rank, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
      src_index[flat] = offset;
      for (std::size_t ax = rank; ax-- > 0;) {
        ++counter[ax];
        offset += gather_strides[ax];
        if (counter[ax] < out_shape[ax]) break;
        offset -= gather_strides[ax] * out_shape[ax];
        counter[ax] = 0;
      }
    }
  }
  auto xd = x.data();
  std::vector<T> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xd[src_index[i]];
  return make_result<T>(std::move(out_shape), std::move(out), "permute", {x.node_ptr()},
                        [src_index = std::move(src_index)](Node<T>& self) {
                          Node<T>& X = *self.inputs[0];
                          auto dx = X.grad_buffer();
                          for (std::size_t i = 0; i < src_index.size(); ++i) {
                            dx[src_index[i]] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x, 2, "transpose");
  return permute(x, {1, 0});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return make_result<T>(std::move(shape), x.to_vector(), "reshape", {x.node_ptr()},
                        [](Node<T>& self) {
                          Node<T>& X = *self.inputs[0];
                          auto dx = X.grad_buffer();
                          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
    lengths.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisSplit split = split_at(out_shape, axis);
  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<NodePtr<T>> inputs;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pd = parts[p].data();
    const std::size_t chunk = lengths[p] * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(pd.data() + o * chunk, chunk,
                  out.data() + o * split.length * split.inner + offset * split.inner);
    }
    offset += lengths[p];
    inputs.push_back(parts[p].node_ptr());
  }
  return make_result<T>(std::move(out_shape), std::move(out), "concat", std::move(inputs),
                        [split, lengths](Node<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                            Node<T>& in = *self.inputs[p];
                            const std::size_t chunk = lengths[p] * split.inner;
                            if (in.requires_grad) {
                              auto d = in.grad_buffer();
                              for (std::size_t o = 0; o < split.outer; ++o) {
                                const T* src = self.grad.data() + o * split.length * split.inner +
                                               off * split.inner;
                                for (std::size_t i = 0; i < chunk; ++i) d[o * chunk + i] += src[i];
                              }
                            }
                            off += lengths[p];
                          }
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  const AxisSplit split = split_at(s, axis);
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * split.inner;
  std::vector<T> out(split.outer * chunk);
  auto xd = x.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xd.data() + o * split.length * split.inner + begin * split.inner, chunk,
                out.data() + o * chunk);
  }
  return make_result<T>(std::move(out_shape), std::move(out), "slice", {x.node_ptr()},
                        [split, begin, chunk](Node<T>& self) {
                          auto dx = self.inputs[0]->grad_buffer();
                          for (std::size_t o = 0; o < split.outer; ++o) {
                            T* dst = dx.data() + o * split.length * split.inner + begin * split.inner;
                            const T* src = self.grad.data() + o * chunk;
                            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::int64_t> index) {
  require_rank(x, 2, "gather_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  std::vector<std::int64_t> idx(index.begin(), index.end());
  for (std::int64_t r : idx) {
    if (r < -1 || r >= static_cast<std::int64_t>(rows)) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       shape_str(x.shape()));
    }
  }
  std::vector<T> out(idx.size() * cols, T(0));
  auto xd = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= 0) std::copy_n(xd.data() + idx[i] * cols, cols, out.data() + i * cols);
  }
  Shape shape{idx.size(), cols};
  return make_result<T>(std::move(shape), std::move(out), "gather_rows", {x.node_ptr()},
                        [idx = std::move(idx), cols](Node<T>& self) {
                          auto dx = self.inputs[0]->grad_buffer();
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            if (idx[i] < 0) continue;
                            T* dst = dx.data() + idx[i] * cols;
                            const T* src = self.grad.data() + i * cols;
                            for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                          }
                        });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result<T>(a.shape(), std::move(out), "add", {a.node_ptr(), b.node_ptr()},
                        [](Node<T>& self) {
                          for (auto& in : self.inputs) {
                            if (!in->requires_grad) continue;
                            auto d = in->grad_buffer();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_result<T>(a.shape(), std::move(out), "sub", {a.node_ptr(), b.node_ptr()},
                        [](Node<T>& self) {
                          Node<T>& A = *self.inputs[0];
                          Node<T>& B = *self.inputs[1];
                          if (A.requires_grad) {
                            auto d = A.grad_buffer();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
                          }
                          if (B.requires_grad) {
                            auto d = B.grad_buffer();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result<T>(a.shape(), std::move(out), "mul", {a.node_ptr(), b.node_ptr()},
                        [](Node<T>& self) {
                          Node<T>& A = *self.inputs[0];
                          Node<T>& B = *self.inputs[1];
                          if (A.requires_grad) {
                            auto d = A.grad_buffer();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * B.data[i];
                          }
                          if (B.requires_grad) {
                            auto d = B.grad_buffer();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * A.data[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  return make_result<T>(x.shape(), std::move(out), "scale", {x.node_ptr()},
                        [factor](Node<T>& self) {
                          auto d = self.inputs[0]->grad_buffer();
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * factor;
                        });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.dim(0);
  if (x.rank() == 0 || x.shape().back() != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                     shape_str(x.shape()));
  }
  auto xd = x.data();
  auto bd = bias.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + bd[i % n];
  return make_result<T>(x.shape(), std::move(out), "add_bias", {x.node_ptr(), bias.node_ptr()},
                        [n](Node<T>& self) {
                          Node<T>& X = *self.inputs[0];
                          Node<T>& B = *self.inputs[1];
                          if (X.requires_grad) {
                            auto d = X.grad_buffer();
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
                          }
                          if (B.requires_grad) {
                            auto d = B.grad_buffer();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) d[i % n] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xd[i];
    const double t = std::tanh(kGeluSqrt2OverPi * (v + kGeluCubic * v * v * v));
    out[i] = static_cast<T>(0.5 * v * (1.0 + t));
  }
  return make_result<T>(x.shape(), std::move(out), "gelu", {x.node_ptr()}, [](Node<T>& self) {
    Node<T>& X = *self.inputs[0];
    auto d = X.grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = X.data[i];
      const double inner = kGeluSqrt2OverPi * (v + kGeluCubic * v * v * v);
      const double t = std::tanh(inner);
      const double dinner = kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
      const double g = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner;
      d[i] += static_cast<T>(self.grad[i] * g);
    }
  });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto xd = x.data();
  T total = std::accumulate(xd.begin(), xd.end(), T(0));
  return make_result<T>({}, {total}, "sum", {x.node_ptr()}, [](Node<T>& self) {
    auto d = self.inputs[0]->grad_buffer();
    for (auto& v : d) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  auto xd = x.data();
  std::vector<T> out(cols, T(0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += xd[r * cols + c];
  const T inv = T(1) / static_cast<T>(rows);
  for (auto& v : out) v *= inv;
  return make_result<T>({cols}, std::move(out), "mean_rows", {x.node_ptr()},
                        [rows, cols, inv](Node<T>& self) {
                          auto d = self.inputs[0]->grad_buffer();
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] += self.grad[c] * inv;
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.length * s.inner + in;
      T mx = xd[base];
      for (std::size_t j = 1; j < s.length; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      T z = 0;
      for (std::size_t j = 0; j < s.length; ++j) {
        const T e = std::exp(xd[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      const T inv = T(1) / z;
      for (std::size_t j = 0; j < s.length; ++j) out[base + j * s.inner] *= inv;
    }
  }
  return make_result<T>(x.shape(), std::move(out), "softmax", {x.node_ptr()}, [s](Node<T>& self) {
    auto d = self.inputs[0]->grad_buffer();
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.length * s.inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < s.length; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
        for (std::size_t j = 0; j < s.length; ++j) {
          const std::size_t i = base + j * s.inner;
          d[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t c = gain.dim(0);
  if (x.rank() == 0 || x.shape().back() != c || bias.dim(0) != c) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + " incompatible with " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / c;
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  std::vector<T> out(xd.size());
  std::vector<T> xhat(xd.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * c;
    T mu = 0;
    for (std::size_t i = 0; i < c; ++i) mu += row[i];
    mu /= static_cast<T>(c);
    T var = 0;
    for (std::size_t i = 0; i < c; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(c);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t i = 0; i < c; ++i) {
      const T h = (row[i] - mu) * rs;
      xhat[r * c + i] = h;
      out[r * c + i] = h * gd[i] + bd[i];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), "layer_norm", {x.node_ptr(), gain.node_ptr(), bias.node_ptr()},
      [c, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        Node<T>& X = *self.inputs[0];
        Node<T>& G = *self.inputs[1];
        Node<T>& B = *self.inputs[2];
        const auto& g = self.grad;
        if (G.requires_grad) {
          auto dg = G.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < c; ++i) dg[i] += g[r * c + i] * xhat[r * c + i];
        }
        if (B.requires_grad) {
          auto db = B.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < c; ++i) db[i] += g[r * c + i];
        }
        if (X.requires_grad) {
          auto dx = X.grad_buffer();
          std::vector<T> dxhat(c);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t i = 0; i < c; ++i) {
              dxhat[i] = g[r * c + i] * G.data[i];
              mean_d += dxhat[i];
              mean_dx += dxhat[i] * xhat[r * c + i];
            }
            mean_d /= static_cast<T>(c);
            mean_dx /= static_cast<T>(c);
            for (std::size_t i = 0; i < c; ++i) {
              dx[r * c + i] += rstd[r] * (dxhat[i] - mean_d - xhat[r * c + i] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label) {
  require_rank(logits, 1, "cross_entropy");
  const std::size_t k = logits.dim(0);
  if (label >= k) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " with " + std::to_string(k) +
                     " classes");
  }
  auto z = logits.data();
  const T mx = *std::max_element(z.begin(), z.end());
  T total = 0;
  for (T v : z) total += std::exp(v - mx);
  const T lse = mx + std::log(total);
  std::vector<T> probs(k);
  for (std::size_t i = 0; i < k; ++i) probs[i] = std::exp(z[i] - lse);
  return make_result<T>({}, {lse - z[label]}, "cross_entropy", {logits.node_ptr()},
                        [label, probs = std::move(probs)](Node<T>& self) {
                          auto d = self.inputs[0]->grad_buffer();
                          for (std::size_t i = 0; i < probs.size(); ++i) {
                            d[i] += self.grad[0] * (probs[i] - (i == label ? T(1) : T(0)));
                          }
                        });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  require_rank(kernel, 3, "depthwise_conv2d");
  require_rank(bias, 1, "depthwise_conv2d");
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("depthwise_conv2d: expected [H,W,C] or [B,H,W,C], got " + shape_str(x.shape()));
  }
  const std::size_t kh = kernel.dim(0);
  if (kernel.dim(1) != kh) throw ConfigError("depthwise_conv2d: kernel must be square");
  if (kh % 2 == 0) throw ConfigError("depthwise_conv2d: kernel size must be odd, got " + std::to_string(kh));
  const std::size_t off = x.rank() == 4 ? 1 : 0;
  const std::size_t batch = off ? x.dim(0) : 1;
  const std::size_t h = x.dim(off), w = x.dim(off + 1), c = x.dim(off + 2);
  if (kernel.dim(2) != c || bias.dim(0) != c) {
    throw ShapeError("depthwise_conv2d: kernel " + shape_str(kernel.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match input " + shape_str(x.shape()));
  }
  const auto pad = static_cast<std::ptrdiff_t>(kh / 2);
  auto xd = x.data();
  auto kd = kernel.data();
  auto bd = bias.data();
  std::vector<T> out(xd.size());
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  const auto K = static_cast<std::ptrdiff_t>(kh);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = xd.data() + b * h * w * c;
    T* ob = out.data() + b * h * w * c;
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      for (std::ptrdiff_t j = 0; j < W; ++j) {
        T* o = ob + (i * W + j) * c;
        for (std::size_t ch = 0; ch < c; ++ch) o[ch] = bd[ch];
        for (std::ptrdiff_t u = 0; u < K; ++u) {
          const std::ptrdiff_t r = i + u - pad;
          if (r < 0 || r >= H) continue;
          for (std::ptrdiff_t v = 0; v < K; ++v) {
            const std::ptrdiff_t q = j + v - pad;
            if (q < 0 || q >= W) continue;
            const T* xi = xb + (r * W + q) * c;
            const T* kk = kd.data() + (u * K + v) * c;
            for (std::size_t ch = 0; ch < c; ++ch) o[ch] += xi[ch] * kk[ch];
          }
        }
      }
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(batch) * h * w * kh * kh * c);
  return make_result<T>(
      x.shape(), std::move(out), "depthwise_conv2d",
      {x.node_ptr(), kernel.node_ptr(), bias.node_ptr()},
      [batch, H, W, K, c, pad](Node<T>& self) {
        Node<T>& X = *self.inputs[0];
        Node<T>& Kn = *self.inputs[1];
        Node<T>& B = *self.inputs[2];
        const auto& g = self.grad;
        const std::size_t plane = static_cast<std::size_t>(H * W) * c;
        if (B.requires_grad) {
          auto db = B.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) db[i % c] += g[i];
        }
        T* dx = X.requires_grad ? X.grad_buffer().data() : nullptr;
        T* dk = Kn.requires_grad ? Kn.grad_buffer().data() : nullptr;
        if (!dx && !dk) return;
        for (std::size_t b = 0; b < batch; ++b) {
          const T* xb = X.data.data() + b * plane;
          const T* gb = g.data() + b * plane;
          for (std::ptrdiff_t i = 0; i < H; ++i) {
            for (std::ptrdiff_t j = 0; j < W; ++j) {
              const T* go = gb + (i * W + j) * c;
              for (std::ptrdiff_t u = 0; u < K; ++u) {
                const std::ptrdiff_t r = i + u - pad;
                if (r < 0 || r >= H) continue;
                for (std::ptrdiff_t v = 0; v < K; ++v) {
                  const std::ptrdiff_t q = j + v - pad;
                  if (q < 0 || q >= W) continue;
                  const std::size_t xoff = b * plane + static_cast<std::size_t>(r * W + q) * c;
                  const std::size_t koff = static_cast<std::size_t>(u * K + v) * c;
                  for (std::size_t ch = 0; ch < c; ++ch) {
                    if (dx) dx[xoff + ch] += go[ch] * Kn.data[koff + ch];
                    if (dk) dk[koff + ch] += go[ch] * xb[(r * W + q) * c + ch];
                  }
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------

#define GPVIT_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                           \
  template Tensor<T> transpose(const Tensor<T>&);                                             \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                      \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);          \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::int64_t>);            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> gelu(const Tensor<T>&);                                                  \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> mean_rows(const Tensor<T>&);                                             \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);     \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

GPVIT_INSTANTIATE_OPS(float)
GPVIT_INSTANTIATE_OPS(double)

#undef GPVIT_INSTANTIATE_OPS

}  // namespace gpvit::ops
