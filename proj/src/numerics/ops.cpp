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

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "ovis/error.hpp"
#include "ovis/tensor.hpp"

namespace ovis {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

// Wraps a freshly computed value; records the graph edge only when some
// input needs gradients and recording is enabled.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

// Grad buffer of parent i, or null when that parent does not need one.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  require<DimensionError>(axis < shape.size(), "axis ", axis, " out of range for ",
                          shape_to_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require<DimensionError>(a.shape() == b.shape(), op, ": shape mismatch ",
                          shape_to_string(a.shape()), " vs ", shape_to_string(b.shape()));
}

void require_rank2(const Tensor& a, const char* op) {
  require<DimensionError>(a.rank() == 2, op, " needs a rank-2 tensor, got ",
                          shape_to_string(a.shape()));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_result(a.shape(), std::move(out), {a}, [deriv](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& xin = self.parents[0]->data;
    for (std::size_t i = 0; i < xin.size(); ++i) {
      (*g)[i] += self.grad[i] * deriv(xin[i], self.data[i]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require<DimensionError>(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                          "matmul: cannot multiply ", shape_to_string(a.shape()), " by ",
                          shape_to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& Ad = self.parents[0]->data;
    const auto& Bd = self.parents[1]->data;
    const auto& G = self.grad;
    if (auto* ga = parent_grad(self, 0)) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = G.data() + i * n;
          const double* brow = Bd.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = parent_grad(self, 1)) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = Ad[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto x = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require<DimensionError>(shape_numel(shape) == a.numel(), "reshape: cannot view ",
                          shape_to_string(a.shape()), " as ", shape_to_string(shape));
  auto x = a.data();
  return make_result(std::move(shape), {x.begin(), x.end()}, {a}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& xa = self.parents[0]->data;
    const auto& xb = self.parents[1]->data;
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * xb[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * xa[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

namespace {

std::size_t rowvec_length(const Tensor& v) {
  require<DimensionError>(v.rank() == 1 || (v.rank() == 2 && v.dim(0) == 1),
                          "row vector expected, got ", shape_to_string(v.shape()));
  return v.rank() == 1 ? v.dim(0) : v.dim(1);
}

}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require_rank2(x, "add_rowvec");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require<DimensionError>(rowvec_length(v) == n, "add_rowvec: ", shape_to_string(x.shape()),
                          " with ", shape_to_string(v.shape()));
  auto xd = x.data();
  auto vd = v.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] + vd[j];
  return make_result({m, n}, std::move(out), {x, v}, [m, n](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
  });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  require_rank2(x, "mul_rowvec");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require<DimensionError>(rowvec_length(v) == n, "mul_rowvec: ", shape_to_string(x.shape()),
                          " with ", shape_to_string(v.shape()));
  auto xd = x.data();
  auto vd = v.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] * vd[j];
  return make_result({m, n}, std::move(out), {x, v}, [m, n](Node& self) {
    const auto& xin = self.parents[0]->data;
    const auto& vin = self.parents[1]->data;
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[i * n + j] * vin[j];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j] * xin[i * n + j];
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    require<DomainError>(v > 0.0, "log of non-positive value ", v);
  }
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, [](double x) { return x * stable_sigmoid(x); },
      [](double x, double) {
        const double s = stable_sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor softplus(const Tensor& a) {
  return unary(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result({}, {acc}, {a}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (auto& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto n = a.numel();
  require(n > 0, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  auto x = a.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += x[(o * s.n + k) * s.inner + i];
  return make_result(std::move(out_shape), std::move(out), {a}, [s](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t i = 0; i < s.inner; ++i)
          (*g)[(o * s.n + k) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis);
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto idx = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, x[idx(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) {
        out[idx(k)] = std::exp(x[idx(k)] - mx);
        z += out[idx(k)];
      }
      for (std::size_t k = 0; k < s.n; ++k) out[idx(k)] /= z;
    }
  }
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.data;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto idx = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
        double dot = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) dot += self.grad[idx(k)] * y[idx(k)];
        for (std::size_t k = 0; k < s.n; ++k)
          (*g)[idx(k)] += y[idx(k)] * (self.grad[idx(k)] - dot);
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat of zero tensors");
  const Shape& base = parts.front().shape();
  require<DimensionError>(axis < base.size(), "concat axis ", axis, " out of range");
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& sh = p.shape();
    bool ok = sh.size() == base.size();
    for (std::size_t d = 0; ok && d < sh.size(); ++d) ok = d == axis || sh[d] == base[d];
    require<DimensionError>(ok, "concat: incompatible shapes ", shape_to_string(base), " and ",
                            shape_to_string(sh), " on axis ", axis);
    widths.push_back(sh[axis]);
    total += sh[axis];
  }
  Shape out_shape = base;
  out_shape[axis] = total;
  const auto s = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto x = parts[p].data();
    const std::size_t w = widths[p];
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < w; ++k)
        std::copy_n(x.data() + (o * w + k) * s.inner, s.inner,
                    out.data() + (o * s.n + offset + k) * s.inner);
    offset += w;
  }
  return make_result(std::move(out_shape), std::move(out), parts, [s, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      const std::size_t w = widths[p];
      if (auto* g = parent_grad(self, p)) {
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t k = 0; k < w; ++k)
            for (std::size_t i = 0; i < s.inner; ++i)
              (*g)[(o * w + k) * s.inner + i] +=
                  self.grad[(o * s.n + offset + k) * s.inner + i];
      }
      offset += w;
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto s = split_axis(a.shape(), axis);
  require<DimensionError>(begin <= end && end <= s.n, "slice [", begin, ", ", end,
                          ") out of range for axis of size ", s.n);
  const std::size_t w = end - begin;
  Shape out_shape = a.shape();
  out_shape[axis] = w;
  auto x = a.data();
  std::vector<double> out(s.outer * w * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < w; ++k)
      std::copy_n(x.data() + (o * s.n + begin + k) * s.inner, s.inner,
                  out.data() + (o * w + k) * s.inner);
  return make_result(std::move(out_shape), std::move(out), {a}, [s, w, begin](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < w; ++k)
        for (std::size_t i = 0; i < s.inner; ++i)
          (*g)[(o * s.n + begin + k) * s.inner + i] += self.grad[(o * w + k) * s.inner + i];
  });
}

Tensor layer_norm(const Tensor& a, double epsilon) {
  require<DimensionError>(a.rank() >= 1, "layer_norm of a scalar");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / std::max<std::size_t>(n, 1);
  auto x = a.data();
  std::vector<double> out(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (xr[j] - mu) * inv_std[r];
  }
  return make_result(a.shape(), std::move(out), {a}, [n, rows, inv_std](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.data;
    const double dn = static_cast<double>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        gsum += self.grad[r * n + j];
        gy += self.grad[r * n + j] * y[r * n + j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        (*g)[r * n + j] +=
            inv_std[r] * (self.grad[r * n + j] - gsum / dn - y[r * n + j] * gy / dn);
      }
    }
  });
}

Tensor l2_normalize(const Tensor& a) {
  require<DimensionError>(a.rank() >= 1, "l2_normalize of a scalar");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / std::max<std::size_t>(n, 1);
  auto x = a.data();
  std::vector<double> out(x.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += x[r * n + j] * x[r * n + j];
    norms[r] = std::sqrt(ss);
    require<DomainError>(norms[r] > 0.0, "l2_normalize of a zero row");
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] / norms[r];
  }
  return make_result(a.shape(), std::move(out), {a}, [n, rows, norms](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.data;
    for (std::size_t r = 0; r < rows; ++r) {
      double gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) gy += self.grad[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        (*g)[r * n + j] += (self.grad[r * n + j] - y[r * n + j] * gy) / norms[r];
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  require_rank2(a, "gather_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  auto x = a.data();
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require<ContractError>(idx[r] < m, "gather_rows: index ", idx[r], " out of range ", m);
    std::copy_n(x.data() + idx[r] * n, n, out.data() + r * n);
  }
  Shape out_shape{idx.size(), n};
  return make_result(std::move(out_shape), std::move(out), {a},
                     [n, idx = std::move(idx)](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t j = 0; j < n; ++j)
                           (*g)[idx[r] * n + j] += self.grad[r * n + j];
                     });
}

Tensor segment_mean(const Tensor& a, std::span<const std::size_t> segment_ids,
                    std::size_t num_segments) {
  require_rank2(a, "segment_mean");
  const std::size_t m = a.dim(0), n = a.dim(1);
  require<ContractError>(segment_ids.size() == m, "segment_mean: ", segment_ids.size(),
                         " ids for ", m, " rows");
  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
  std::vector<double> counts(num_segments, 0.0);
  for (auto s : ids) {
    require<ContractError>(s < num_segments, "segment id ", s, " out of range ", num_segments);
    counts[s] += 1.0;
  }
  for (std::size_t s = 0; s < num_segments; ++s)
    require<ContractError>(counts[s] > 0.0, "segment ", s, " is empty");
  auto x = a.data();
  std::vector<double> out(num_segments * n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) out[ids[r] * n + j] += x[r * n + j];
  for (std::size_t s = 0; s < num_segments; ++s)
    for (std::size_t j = 0; j < n; ++j) out[s * n + j] /= counts[s];
  return make_result({num_segments, n}, std::move(out), {a},
                     [n, ids = std::move(ids), counts = std::move(counts)](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < ids.size(); ++r)
                         for (std::size_t j = 0; j < n; ++j)
                           (*g)[r * n + j] += self.grad[ids[r] * n + j] / counts[ids[r]];
                     });
}

Tensor focal_loss(const Tensor& probabilities, const Tensor& targets, double gamma,
                  double alpha) {
  require_same_shape(probabilities, targets, "focal_loss");
  require(gamma >= 0.0 && alpha >= 0.0 && alpha <= 1.0, "focal_loss: bad gamma/alpha");
  auto p = probabilities.data();
  auto y = targets.data();
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double pt = y[i] * pc + (1.0 - y[i]) * (1.0 - pc);
    const double at = y[i] * alpha + (1.0 - y[i]) * (1.0 - alpha);
    out[i] = -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return make_result(
      probabilities.shape(), std::move(out), {probabilities, targets},
      [gamma, alpha](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        const auto& p = self.parents[0]->data;
        const auto& y = self.parents[1]->data;
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (p[i] < kProbabilityClamp || p[i] > 1.0 - kProbabilityClamp) continue;
          const double pt = y[i] * p[i] + (1.0 - y[i]) * (1.0 - p[i]);
          const double at = y[i] * alpha + (1.0 - y[i]) * (1.0 - alpha);
          const double q = 1.0 - pt;
          const double dq = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
          const double dfl_dpt = -at * (-dq * std::log(pt) + std::pow(q, gamma) / pt);
          (*g)[i] += self.grad[i] * dfl_dpt * (2.0 * y[i] - 1.0);
        }
      });
}

Tensor binary_cross_entropy(const Tensor& probabilities, const Tensor& targets) {
  require_same_shape(probabilities, targets, "binary_cross_entropy");
  constexpr double kTiny = 1e-12;
  auto p = probabilities.data();
  auto y = targets.data();
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double v = 0.0;
    if (y[i] != 0.0) v -= y[i] * std::log(std::max(p[i], kTiny));
    if (y[i] != 1.0) v -= (1.0 - y[i]) * std::log(std::max(1.0 - p[i], kTiny));
    out[i] = v;
  }
  return make_result(probabilities.shape(), std::move(out), {probabilities, targets},
                     [](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       const auto& p = self.parents[0]->data;
                       const auto& y = self.parents[1]->data;
                       for (std::size_t i = 0; i < p.size(); ++i) {
                         double d = 0.0;
                         if (y[i] != 0.0 && p[i] > kTiny) d -= y[i] / p[i];
                         if (y[i] != 1.0 && 1.0 - p[i] > kTiny) d += (1.0 - y[i]) / (1.0 - p[i]);
                         (*g)[i] += self.grad[i] * d;
                       }
                     });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  auto x = logits.data();
  auto y = targets.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_softplus(x[i]) - y[i] * x[i];
  return make_result(logits.shape(), std::move(out), {logits, targets}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& x = self.parents[0]->data;
    const auto& y = self.parents[1]->data;
    for (std::size_t i = 0; i < x.size(); ++i)
      (*g)[i] += self.grad[i] * (stable_sigmoid(x[i]) - y[i]);
  });
}

}  // namespace ovis
