#include <pgvton/nn/ops.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace pgvton::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

Tensor op_node(Shape shape, std::vector<Tensor> parents) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto t = std::make_shared<Node>(std::move(shape), rg);
  t->parents = std::move(parents);
  return t;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a->shape != b->shape)
    throw ValidationError(std::string(op) + ": shape mismatch");
}

std::int64_t outer_extent(const Shape& s, int axis) {
  std::int64_t n = 1;
  for (int i = 0; i < axis; ++i) n *= s[i];
  return n;
}

std::int64_t inner_extent(const Shape& s, int axis) {
  std::int64_t n = 1;
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) n *= s[i];
  return n;
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto out = op_node(a->shape, {a, b});
  for (std::size_t i = 0; i < out->size(); ++i)
    out->value[i] = a->value[i] + b->value[i];
  if (out->requires_grad)
    out->backward_fn = [a, b](Node& n) {
      if (a->requires_grad) {
        double* g = a->grad_data();
        for (std::size_t i = 0; i < n.size(); ++i) g[i] += n.grad[i];
      }
      if (b->requires_grad) {
        double* g = b->grad_data();
        for (std::size_t i = 0; i < n.size(); ++i) g[i] += n.grad[i];
      }
    };
  return out;
}

Tensor add_broadcast(const Tensor& a, const Tensor& b) {
  const std::int64_t per = numel(b->shape);
  if (a->shape.size() != b->shape.size() + 1 || numel(a->shape) % per != 0)
    throw ValidationError("add_broadcast: shape mismatch");
  const std::int64_t n = numel(a->shape) / per;
  auto out = op_node(a->shape, {a, b});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < per; ++j)
      out->value[i * per + j] = a->value[i * per + j] + b->value[j];
  if (out->requires_grad)
    out->backward_fn = [a, b, n, per](Node& nd) {
      if (a->requires_grad) {
        double* g = a->grad_data();
        for (std::size_t i = 0; i < nd.size(); ++i) g[i] += nd.grad[i];
      }
      if (b->requires_grad) {
        double* g = b->grad_data();
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = 0; j < per; ++j) g[j] += nd.grad[i * per + j];
      }
    };
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto out = op_node(a->shape, {a, b});
  for (std::size_t i = 0; i < out->size(); ++i)
    out->value[i] = a->value[i] - b->value[i];
  if (out->requires_grad)
    out->backward_fn = [a, b](Node& n) {
      if (a->requires_grad) {
        double* g = a->grad_data();
        for (std::size_t i = 0; i < n.size(); ++i) g[i] += n.grad[i];
      }
      if (b->requires_grad) {
        double* g = b->grad_data();
        for (std::size_t i = 0; i < n.size(); ++i) g[i] -= n.grad[i];
      }
    };
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto out = op_node(a->shape, {a, b});
  for (std::size_t i = 0; i < out->size(); ++i)
    out->value[i] = a->value[i] * b->value[i];
  if (out->requires_grad)
    out->backward_fn = [a, b](Node& n) {
      if (a->requires_grad) {
        double* g = a->grad_data();
        for (std::size_t i = 0; i < n.size(); ++i) g[i] += n.grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        double* g = b->grad_data();
        for (std::size_t i = 0; i < n.size(); ++i) g[i] += n.grad[i] * a->value[i];
      }
    };
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  auto out = op_node(a->shape, {a});
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] + s;
  if (out->requires_grad)
    out->backward_fn = [a](Node& n) {
      double* g = a->grad_data();
      for (std::size_t i = 0; i < n.size(); ++i) g[i] += n.grad[i];
    };
  return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
  auto out = op_node(a->shape, {a});
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] * s;
  if (out->requires_grad)
    out->backward_fn = [a, s](Node& n) {
      double* g = a->grad_data();
      for (std::size_t i = 0; i < n.size(); ++i) g[i] += n.grad[i] * s;
    };
  return out;
}

namespace {

template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
  auto out = op_node(a->shape, {a});
  for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = f(a->value[i]);
  if (out->requires_grad) {
    out->backward_fn = [a, df](Node& n) {
      double* g = a->grad_data();
      for (std::size_t i = 0; i < n.size(); ++i)
        g[i] += n.grad[i] * df(a->value[i], n.value[i]);
    };
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor abs_op(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor pow_scalar(const Tensor& a, double p) {
  return unary_op(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Tensor detach(const Tensor& a) {
  auto out = std::make_shared<Node>(a->shape, false);
  out->value = a->value;
  return out;
}

// ---- shape ------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != numel(a->shape))
    throw ValidationError("reshape: element count mismatch");
  auto out = op_node(std::move(shape), {a});
  out->value = a->value;
  if (out->requires_grad)
    out->backward_fn = [a](Node& n) {
      double* g = a->grad_data();
      for (std::size_t i = 0; i < n.size(); ++i) g[i] += n.grad[i];
    };
  return out;
}

namespace {

std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int nd = static_cast<int>(a->shape.size());
  if (static_cast<int>(perm.size()) != nd)
    throw ValidationError("permute: rank mismatch");
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = a->shape[perm[i]];
  auto out = op_node(out_shape, {a});

  const auto in_strides = strides_of(a->shape);
  std::vector<std::int64_t> gather_stride(nd);
  for (int i = 0; i < nd; ++i) gather_stride[i] = in_strides[perm[i]];
  const auto out_strides = strides_of(out_shape);

  const std::int64_t total = numel(out_shape);
  auto in_index = [out_strides, gather_stride, nd](std::int64_t oi) {
    std::int64_t rem = oi, src = 0;
    for (int i = 0; i < nd; ++i) {
      const std::int64_t q = rem / out_strides[i];
      rem -= q * out_strides[i];
      src += q * gather_stride[i];
    }
    return src;
  };
  for (std::int64_t oi = 0; oi < total; ++oi)
    out->value[oi] = a->value[in_index(oi)];
  if (out->requires_grad)
    out->backward_fn = [a, in_index, total](Node& n) {
      double* g = a->grad_data();
      for (std::int64_t oi = 0; oi < total; ++oi) g[in_index(oi)] += n.grad[oi];
    };
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  Shape out_shape = parts[0]->shape;
  int total_axis = 0;
  for (const auto& p : parts) {
    if (static_cast<int>(p->shape.size()) != static_cast<int>(out_shape.size()))
      throw ValidationError("concat: rank mismatch");
    for (int i = 0; i < static_cast<int>(out_shape.size()); ++i)
      if (i != axis && p->shape[i] != out_shape[i])
        throw ValidationError("concat: shape mismatch off-axis");
    total_axis += p->shape[axis];
  }
  out_shape[axis] = total_axis;
  auto out = op_node(out_shape, parts);

  const std::int64_t outer = outer_extent(out_shape, axis);
  const std::int64_t inner = inner_extent(out_shape, axis);
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const std::int64_t pa = p->shape[axis];
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = p->value.data() + o * pa * inner;
      double* dst = out->value.data() + (o * total_axis + off) * inner;
      std::copy(src, src + pa * inner, dst);
    }
    off += pa;
  }
  if (out->requires_grad)
    out->backward_fn = [parts, axis, outer, inner, total_axis](Node& n) {
      std::int64_t off2 = 0;
      for (const auto& p : parts) {
        const std::int64_t pa = p->shape[axis];
        if (p->requires_grad) {
          double* g = p->grad_data();
          for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = n.grad.data() + (o * total_axis + off2) * inner;
            double* dst = g + o * pa * inner;
            for (std::int64_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
          }
        }
        off2 += pa;
      }
    };
  return out;
}

Tensor slice(const Tensor& a, int axis, int from, int to) {
  if (from < 0 || to > a->shape[axis] || from >= to)
    throw ValidationError("slice: bad range");
  Shape out_shape = a->shape;
  out_shape[axis] = to - from;
  auto out = op_node(out_shape, {a});

  const std::int64_t outer = outer_extent(a->shape, axis);
  const std::int64_t inner = inner_extent(a->shape, axis);
  const std::int64_t in_axis = a->shape[axis];
  const std::int64_t out_axis = to - from;
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = a->value.data() + (o * in_axis + from) * inner;
    double* dst = out->value.data() + o * out_axis * inner;
    std::copy(src, src + out_axis * inner, dst);
  }
  if (out->requires_grad)
    out->backward_fn = [a, outer, inner, in_axis, out_axis, from](Node& n) {
      double* g = a->grad_data();
      for (std::int64_t o = 0; o < outer; ++o) {
        const double* src = n.grad.data() + o * out_axis * inner;
        double* dst = g + (o * in_axis + from) * inner;
        for (std::int64_t i = 0; i < out_axis * inner; ++i) dst[i] += src[i];
      }
    };
  return out;
}

// ---- reductions ---------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  auto out = op_node({1}, {a});
  double s = 0.0;
  for (double v : a->value) s += v;
  out->value[0] = s;
  if (out->requires_grad)
    out->backward_fn = [a](Node& n) {
      double* g = a->grad_data();
      const double gv = n.grad[0];
      for (std::size_t i = 0; i < a->size(); ++i) g[i] += gv;
    };
  return out;
}

Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a->size()));
}

Tensor global_avg_pool(const Tensor& a) {
  const int n = a->dim(0), c = a->dim(1), h = a->dim(2), w = a->dim(3);
  auto out = op_node({n, c}, {a});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n * c; ++i) {
    const double* p = a->value.data() + i * hw;
    double s = 0.0;
    for (std::int64_t k = 0; k < hw; ++k) s += p[k];
    out->value[i] = s / static_cast<double>(hw);
  }
  if (out->requires_grad)
    out->backward_fn = [a, n, c, hw](Node& nd) {
      double* g = a->grad_data();
      for (int i = 0; i < n * c; ++i) {
        const double gv = nd.grad[i] / static_cast<double>(hw);
        double* p = g + i * hw;
        for (std::int64_t k = 0; k < hw; ++k) p[k] += gv;
      }
    };
  return out;
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->dim(1) != b->dim(0))
    throw ValidationError("matmul: incompatible shapes");
  const int m = a->dim(0), k = a->dim(1), n = b->dim(1);
  auto out = op_node({m, n}, {a, b});
  CMapRM A(a->value.data(), m, k), B(b->value.data(), k, n);
  MapRM O(out->value.data(), m, n);
  O.noalias() = A * B;
  if (out->requires_grad)
    out->backward_fn = [a, b, m, k, n](Node& nd) {
      CMapRM G(nd.grad.data(), m, n);
      if (a->requires_grad) {
        CMapRM B2(b->value.data(), k, n);
        MapRM GA(a->grad_data(), m, k);
        GA.noalias() += G * B2.transpose();
      }
      if (b->requires_grad) {
        CMapRM A2(a->value.data(), m, k);
        MapRM GB(b->grad_data(), k, n);
        GB.noalias() += A2.transpose() * G;
      }
    };
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a->shape.size() != 3 || b->shape.size() != 3 || a->dim(0) != b->dim(0) ||
      a->dim(2) != b->dim(1))
    throw ValidationError("bmm: incompatible shapes");
  const int bs = a->dim(0), m = a->dim(1), k = a->dim(2), n = b->dim(2);
  auto out = op_node({bs, m, n}, {a, b});
  for (int i = 0; i < bs; ++i) {
    CMapRM A(a->value.data() + static_cast<std::int64_t>(i) * m * k, m, k);
    CMapRM B(b->value.data() + static_cast<std::int64_t>(i) * k * n, k, n);
    MapRM O(out->value.data() + static_cast<std::int64_t>(i) * m * n, m, n);
    O.noalias() = A * B;
  }
  if (out->requires_grad)
    out->backward_fn = [a, b, bs, m, k, n](Node& nd) {
      for (int i = 0; i < bs; ++i) {
        CMapRM G(nd.grad.data() + static_cast<std::int64_t>(i) * m * n, m, n);
        if (a->requires_grad) {
          CMapRM B2(b->value.data() + static_cast<std::int64_t>(i) * k * n, k, n);
          MapRM GA(a->grad_data() + static_cast<std::int64_t>(i) * m * k, m, k);
          GA.noalias() += G * B2.transpose();
        }
        if (b->requires_grad) {
          CMapRM A2(a->value.data() + static_cast<std::int64_t>(i) * m * k, m, k);
          MapRM GB(b->grad_data() + static_cast<std::int64_t>(i) * k * n, k, n);
          GB.noalias() += A2.transpose() * G;
        }
      }
    };
  return out;
}

Tensor transpose_last2(const Tensor& a) {
  const int nd = static_cast<int>(a->shape.size());
  std::vector<int> perm(nd);
  for (int i = 0; i < nd; ++i) perm[i] = i;
  std::swap(perm[nd - 1], perm[nd - 2]);
  return permute(a, perm);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int k = w->dim(0), n = w->dim(1);
  const std::int64_t t = numel(x->shape) / k;
  if (numel(x->shape) % k != 0)
    throw ValidationError("linear: input not divisible by in-dim");
  Shape out_shape = x->shape;
  out_shape.back() = n;
  std::vector<Tensor> parents{x, w};
  if (b) parents.push_back(b);
  auto out = op_node(out_shape, parents);
  CMapRM X(x->value.data(), t, k), W(w->value.data(), k, n);
  MapRM O(out->value.data(), t, n);
  O.noalias() = X * W;
  if (b) {
    CMapVec B(b->value.data(), n);
    O.rowwise() += B.transpose();
  }
  if (out->requires_grad)
    out->backward_fn = [x, w, b, t, k, n](Node& nd) {
      CMapRM G(nd.grad.data(), t, n);
      if (x->requires_grad) {
        CMapRM W2(w->value.data(), k, n);
        MapRM GX(x->grad_data(), t, k);
        GX.noalias() += G * W2.transpose();
      }
      if (w->requires_grad) {
        CMapRM X2(x->value.data(), t, k);
        MapRM GW(w->grad_data(), k, n);
        GW.noalias() += X2.transpose() * G;
      }
      if (b && b->requires_grad) {
        MapVec GB(b->grad_data(), n);
        GB += G.colwise().sum().transpose();
      }
    };
  return out;
}

// ---- conv2d -----------------------------------------------------------------

namespace {

void im2col(const double* x, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, double* col) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* row = col + ((static_cast<std::int64_t>(ch) * kh + ky) * kw + kx) *
                                (static_cast<std::int64_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(row + static_cast<std::int64_t>(oy) * ow,
                      row + static_cast<std::int64_t>(oy + 1) * ow, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::int64_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[static_cast<std::int64_t>(oy) * ow + ox] =
                (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int c, int h, int w, int kh, int kw,
                int stride, int pad, int oh, int ow, double* gx) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* row =
            col + ((static_cast<std::int64_t>(ch) * kh + ky) * kw + kx) *
                      (static_cast<std::int64_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          double* dst = gx + (static_cast<std::int64_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w)
              dst[ix] += row[static_cast<std::int64_t>(oy) * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), ww = x->dim(3);
  const int f = w->dim(0), kc = w->dim(1), kh = w->dim(2), kw = w->dim(3);
  if (kc != c) throw ValidationError("conv2d: channel mismatch");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (ww + 2 * pad - kw) / stride + 1;
  std::vector<Tensor> parents{x, w};
  if (b) parents.push_back(b);
  auto out = op_node({n, f, oh, ow}, parents);

  const std::int64_t col_rows = static_cast<std::int64_t>(c) * kh * kw;
  const std::int64_t col_cols = static_cast<std::int64_t>(oh) * ow;
  std::vector<double> col(col_rows * col_cols);
  CMapRM W(w->value.data(), f, col_rows);
  for (int i = 0; i < n; ++i) {
    im2col(x->value.data() + static_cast<std::int64_t>(i) * c * h * ww, c, h, ww,
           kh, kw, stride, pad, oh, ow, col.data());
    CMapRM C(col.data(), col_rows, col_cols);
    MapRM O(out->value.data() + static_cast<std::int64_t>(i) * f * col_cols, f,
            col_cols);
    O.noalias() = W * C;
    if (b) {
      CMapVec B(b->value.data(), f);
      O.colwise() += B;
    }
  }

  if (out->requires_grad)
    out->backward_fn = [x, w, b, n, c, h, ww, f, kh, kw, stride, pad, oh, ow,
                        col_rows, col_cols](Node& nd) {
      std::vector<double> col2(col_rows * col_cols);
      std::vector<double> dcol(col_rows * col_cols);
      CMapRM W2(w->value.data(), f, col_rows);
      for (int i = 0; i < n; ++i) {
        CMapRM G(nd.grad.data() + static_cast<std::int64_t>(i) * f * col_cols, f,
                 col_cols);
        if (w->requires_grad || b) {
          if (w->requires_grad) {
            im2col(x->value.data() + static_cast<std::int64_t>(i) * c * h * ww, c,
                   h, ww, kh, kw, stride, pad, oh, ow, col2.data());
            CMapRM C(col2.data(), col_rows, col_cols);
            MapRM GW(w->grad_data(), f, col_rows);
            GW.noalias() += G * C.transpose();
          }
          if (b && b->requires_grad) {
            MapVec GB(b->grad_data(), f);
            GB += G.rowwise().sum();
          }
        }
        if (x->requires_grad) {
          MapRM DC(dcol.data(), col_rows, col_cols);
          DC.noalias() = W2.transpose() * G;
          col2im_add(dcol.data(), c, h, ww, kh, kw, stride, pad, oh, ow,
                     x->grad_data() + static_cast<std::int64_t>(i) * c * h * ww);
        }
      }
    };
  return out;
}

Tensor upsample2_nearest(const Tensor& x) {
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  auto out = op_node({n, c, 2 * h, 2 * w}, {x});
  for (int i = 0; i < n * c; ++i) {
    const double* src = x->value.data() + static_cast<std::int64_t>(i) * h * w;
    double* dst = out->value.data() + static_cast<std::int64_t>(i) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        dst[static_cast<std::int64_t>(y) * 2 * w + xx] =
            src[static_cast<std::int64_t>(y / 2) * w + xx / 2];
  }
  if (out->requires_grad)
    out->backward_fn = [x, n, c, h, w](Node& nd) {
      double* g = x->grad_data();
      for (int i = 0; i < n * c; ++i) {
        double* dst = g + static_cast<std::int64_t>(i) * h * w;
        const double* src = nd.grad.data() + static_cast<std::int64_t>(i) * 4 * h * w;
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            dst[static_cast<std::int64_t>(y / 2) * w + xx / 2] +=
                src[static_cast<std::int64_t>(y) * 2 * w + xx];
      }
    };
  return out;
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  auto out = op_node({n, c, out_h, out_w}, {x});

  // Half-pixel-center mapping with edge clamping.
  struct Tap {
    int i0, i1;
    double w1;  // weight of i1; i0 gets (1 - w1)
  };
  auto make_taps = [](int src, int dst) {
    std::vector<Tap> taps(dst);
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
      double s = (i + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      const int i0 = static_cast<int>(std::floor(s));
      taps[i] = {i0, std::min(i0 + 1, src - 1), s - i0};
    }
    return taps;
  };
  auto ty = make_taps(h, out_h);
  auto tx = make_taps(w, out_w);

  for (int i = 0; i < n * c; ++i) {
    const double* src = x->value.data() + static_cast<std::int64_t>(i) * h * w;
    double* dst =
        out->value.data() + static_cast<std::int64_t>(i) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (int xx = 0; xx < out_w; ++xx) {
        const Tap& bx = tx[xx];
        const double v00 = src[static_cast<std::int64_t>(a.i0) * w + bx.i0];
        const double v01 = src[static_cast<std::int64_t>(a.i0) * w + bx.i1];
        const double v10 = src[static_cast<std::int64_t>(a.i1) * w + bx.i0];
        const double v11 = src[static_cast<std::int64_t>(a.i1) * w + bx.i1];
        dst[static_cast<std::int64_t>(y) * out_w + xx] =
            (1 - a.w1) * ((1 - bx.w1) * v00 + bx.w1 * v01) +
            a.w1 * ((1 - bx.w1) * v10 + bx.w1 * v11);
      }
    }
  }
  if (out->requires_grad)
    out->backward_fn = [x, n, c, h, w, out_h, out_w, ty, tx](Node& nd) {
      double* g = x->grad_data();
      for (int i = 0; i < n * c; ++i) {
        double* dst = g + static_cast<std::int64_t>(i) * h * w;
        const double* src =
            nd.grad.data() + static_cast<std::int64_t>(i) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
          const Tap& a = ty[y];
          for (int xx = 0; xx < out_w; ++xx) {
            const Tap& bx = tx[xx];
            const double gv = src[static_cast<std::int64_t>(y) * out_w + xx];
            dst[static_cast<std::int64_t>(a.i0) * w + bx.i0] +=
                gv * (1 - a.w1) * (1 - bx.w1);
            dst[static_cast<std::int64_t>(a.i0) * w + bx.i1] +=
                gv * (1 - a.w1) * bx.w1;
            dst[static_cast<std::int64_t>(a.i1) * w + bx.i0] +=
                gv * a.w1 * (1 - bx.w1);
            dst[static_cast<std::int64_t>(a.i1) * w + bx.i1] +=
                gv * a.w1 * bx.w1;
          }
        }
      }
    };
  return out;
}

Tensor grid_sample(const Tensor& image, const Tensor& field) {
  const int n = image->dim(0), c = image->dim(1), h = image->dim(2),
            w = image->dim(3);
  if (field->shape.size() != 4 || field->dim(0) != n || field->dim(3) != 2)
    throw ValidationError("grid_sample: field must be (N,H,W,2)");
  const int fh = field->dim(1), fw = field->dim(2);
  auto out = op_node({n, c, fh, fw}, {image, field});

  auto sample_at = [h, w](const double* img, int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return img[static_cast<std::int64_t>(yy) * w + xx];
  };

  for (int i = 0; i < n; ++i) {
    const double* fld =
        field->value.data() + static_cast<std::int64_t>(i) * fh * fw * 2;
    for (int p = 0; p < fh * fw; ++p) {
      const double px = (fld[2 * p] + 1.0) * w * 0.5 - 0.5;
      const double py = (fld[2 * p + 1] + 1.0) * h * 0.5 - 0.5;
      const int x0 = static_cast<int>(std::floor(px));
      const int y0 = static_cast<int>(std::floor(py));
      const double wx = px - x0, wy = py - y0;
      for (int ch = 0; ch < c; ++ch) {
        const double* img =
            image->value.data() + (static_cast<std::int64_t>(i) * c + ch) * h * w;
        const double v =
            (1 - wy) * ((1 - wx) * sample_at(img, y0, x0) +
                        wx * sample_at(img, y0, x0 + 1)) +
            wy * ((1 - wx) * sample_at(img, y0 + 1, x0) +
                  wx * sample_at(img, y0 + 1, x0 + 1));
        out->value[(static_cast<std::int64_t>(i) * c + ch) * fh * fw + p] = v;
      }
    }
  }

  if (out->requires_grad)
    out->backward_fn = [image, field, n, c, h, w, fh, fw, sample_at](Node& nd) {
      double* gimg = image->requires_grad ? image->grad_data() : nullptr;
      double* gfld = field->requires_grad ? field->grad_data() : nullptr;
      for (int i = 0; i < n; ++i) {
        const double* fld =
            field->value.data() + static_cast<std::int64_t>(i) * fh * fw * 2;
        for (int p = 0; p < fh * fw; ++p) {
          const double px = (fld[2 * p] + 1.0) * w * 0.5 - 0.5;
          const double py = (fld[2 * p + 1] + 1.0) * h * 0.5 - 0.5;
          const int x0 = static_cast<int>(std::floor(px));
          const int y0 = static_cast<int>(std::floor(py));
          const double wx = px - x0, wy = py - y0;
          double dpx = 0.0, dpy = 0.0;
          for (int ch = 0; ch < c; ++ch) {
            const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * h * w;
            const double* img = image->value.data() + base;
            const double gv =
                nd.grad[(static_cast<std::int64_t>(i) * c + ch) * fh * fw + p];
            const double v00 = sample_at(img, y0, x0);
            const double v01 = sample_at(img, y0, x0 + 1);
            const double v10 = sample_at(img, y0 + 1, x0);
            const double v11 = sample_at(img, y0 + 1, x0 + 1);
            if (gfld) {
              dpx += gv * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
              dpy += gv * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
            }
            if (gimg) {
              auto scatter = [&](int yy, int xx, double wgt) {
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
                gimg[base + static_cast<std::int64_t>(yy) * w + xx] += gv * wgt;
              };
              scatter(y0, x0, (1 - wy) * (1 - wx));
              scatter(y0, x0 + 1, (1 - wy) * wx);
              scatter(y0 + 1, x0, wy * (1 - wx));
              scatter(y0 + 1, x0 + 1, wy * wx);
            }
          }
          if (gfld) {
            gfld[static_cast<std::int64_t>(i) * fh * fw * 2 + 2 * p] +=
                dpx * w * 0.5;
            gfld[static_cast<std::int64_t>(i) * fh * fw * 2 + 2 * p + 1] +=
                dpy * h * 0.5;
          }
        }
      }
    };
  return out;
}

// ---- normalizations ---------------------------------------------------------

Tensor softmax_channels(const Tensor& x) {
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  auto out = op_node(x->shape, {x});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    const double* src = x->value.data() + static_cast<std::int64_t>(i) * c * hw;
    double* dst = out->value.data() + static_cast<std::int64_t>(i) * c * hw;
    for (std::int64_t p = 0; p < hw; ++p) {
      double mx = src[p];
      for (int ch = 1; ch < c; ++ch) mx = std::max(mx, src[ch * hw + p]);
      double s = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double e = std::exp(src[ch * hw + p] - mx);
        dst[ch * hw + p] = e;
        s += e;
      }
      const double inv = 1.0 / s;
      for (int ch = 0; ch < c; ++ch) dst[ch * hw + p] *= inv;
    }
  }
  if (out->requires_grad)
    out->backward_fn = [x, n, c, hw](Node& nd) {
      double* g = x->grad_data();
      for (int i = 0; i < n; ++i) {
        const double* y = nd.value.data() + static_cast<std::int64_t>(i) * c * hw;
        const double* gy = nd.grad.data() + static_cast<std::int64_t>(i) * c * hw;
        double* gx = g + static_cast<std::int64_t>(i) * c * hw;
        for (std::int64_t p = 0; p < hw; ++p) {
          double dot = 0.0;
          for (int ch = 0; ch < c; ++ch) dot += gy[ch * hw + p] * y[ch * hw + p];
          for (int ch = 0; ch < c; ++ch)
            gx[ch * hw + p] += y[ch * hw + p] * (gy[ch * hw + p] - dot);
        }
      }
    };
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  const int d = x->shape.back();
  const std::int64_t rows = numel(x->shape) / d;
  auto out = op_node(x->shape, {x});
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = x->value.data() + r * d;
    double* dst = out->value.data() + r * d;
    double mx = src[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, src[i]);
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      dst[i] = std::exp(src[i] - mx);
      s += dst[i];
    }
    const double inv = 1.0 / s;
    for (int i = 0; i < d; ++i) dst[i] *= inv;
  }
  if (out->requires_grad)
    out->backward_fn = [x, rows, d](Node& nd) {
      double* g = x->grad_data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* y = nd.value.data() + r * d;
        const double* gy = nd.grad.data() + r * d;
        double* gx = g + r * d;
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += gy[i] * y[i];
        for (int i = 0; i < d; ++i) gx[i] += y[i] * (gy[i] - dot);
      }
    };
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const int d = x->shape.back();
  const std::int64_t rows = numel(x->shape) / d;
  auto out = op_node(x->shape, {x, gain, bias});
  std::vector<double> inv_sigma(rows), xhat(numel(x->shape));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = x->value.data() + r * d;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += src[i];
    mu /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    double* xh = xhat.data() + r * d;
    double* dst = out->value.data() + r * d;
    for (int i = 0; i < d; ++i) {
      xh[i] = (src[i] - mu) * is;
      dst[i] = xh[i] * gain->value[i] + bias->value[i];
    }
  }
  if (out->requires_grad)
    out->backward_fn = [x, gain, bias, rows, d, inv_sigma = std::move(inv_sigma),
                        xhat = std::move(xhat)](Node& nd) {
      double* gg = gain->requires_grad ? gain->grad_data() : nullptr;
      double* gb = bias->requires_grad ? bias->grad_data() : nullptr;
      double* gx = x->requires_grad ? x->grad_data() : nullptr;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* gy = nd.grad.data() + r * d;
        const double* xh = xhat.data() + r * d;
        if (gg || gb)
          for (int i = 0; i < d; ++i) {
            if (gg) gg[i] += gy[i] * xh[i];
            if (gb) gb[i] += gy[i];
          }
        if (gx) {
          double m1 = 0.0, m2 = 0.0;
          for (int i = 0; i < d; ++i) {
            const double dxh = gy[i] * gain->value[i];
            m1 += dxh;
            m2 += dxh * xh[i];
          }
          m1 /= d;
          m2 /= d;
          double* dst = gx + r * d;
          for (int i = 0; i < d; ++i) {
            const double dxh = gy[i] * gain->value[i];
            dst[i] += inv_sigma[r] * (dxh - m1 - xh[i] * m2);
          }
        }
      }
    };
  return out;
}

Tensor instance_norm(const Tensor& x, double eps) {
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  auto out = op_node(x->shape, {x});
  std::vector<double> inv_sigma(static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n * c; ++i) {
    const double* src = x->value.data() + i * hw;
    double mu = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) mu += src[p];
    mu /= static_cast<double>(hw);
    double var = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) var += (src[p] - mu) * (src[p] - mu);
    var /= static_cast<double>(hw);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    double* dst = out->value.data() + i * hw;
    for (std::int64_t p = 0; p < hw; ++p) dst[p] = (src[p] - mu) * is;
  }
  if (out->requires_grad)
    out->backward_fn = [x, n, c, hw, inv_sigma = std::move(inv_sigma)](Node& nd) {
      double* gx = x->grad_data();
      for (int i = 0; i < n * c; ++i) {
        const double* gy = nd.grad.data() + i * hw;
        const double* y = nd.value.data() + i * hw;  // normalized output
        double m1 = 0.0, m2 = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) {
          m1 += gy[p];
          m2 += gy[p] * y[p];
        }
        m1 /= static_cast<double>(hw);
        m2 /= static_cast<double>(hw);
        double* dst = gx + i * hw;
        for (std::int64_t p = 0; p < hw; ++p)
          dst[p] += inv_sigma[i] * (gy[p] - m1 - y[p] * m2);
      }
    };
  return out;
}

Tensor channel_affine(const Tensor& x, const Tensor& s, const Tensor& b) {
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  if (s->shape != Shape{n, c} || b->shape != Shape{n, c})
    throw ValidationError("channel_affine: scale/shift must be (N,C)");
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  auto out = op_node(x->shape, {x, s, b});
  for (int i = 0; i < n * c; ++i) {
    const double sv = s->value[i], bv = b->value[i];
    const double* src = x->value.data() + i * hw;
    double* dst = out->value.data() + i * hw;
    for (std::int64_t p = 0; p < hw; ++p) dst[p] = src[p] * sv + bv;
  }
  if (out->requires_grad)
    out->backward_fn = [x, s, b, n, c, hw](Node& nd) {
      for (int i = 0; i < n * c; ++i) {
        const double* gy = nd.grad.data() + i * hw;
        if (x->requires_grad) {
          double* gx = x->grad_data() + i * hw;
          const double sv = s->value[i];
          for (std::int64_t p = 0; p < hw; ++p) gx[p] += gy[p] * sv;
        }
        if (s->requires_grad) {
          const double* src = x->value.data() + i * hw;
          double acc = 0.0;
          for (std::int64_t p = 0; p < hw; ++p) acc += gy[p] * src[p];
          s->grad_data()[i] += acc;
        }
        if (b->requires_grad) {
          double acc = 0.0;
          for (std::int64_t p = 0; p < hw; ++p) acc += gy[p];
          b->grad_data()[i] += acc;
        }
      }
    };
  return out;
}

Tensor mul_map(const Tensor& x, const Tensor& m) {
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  if (m->shape != Shape{n, 1, h, w})
    throw ValidationError("mul_map: mask must be (N,1,H,W)");
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  auto out = op_node(x->shape, {x, m});
  for (int i = 0; i < n; ++i) {
    const double* mp = m->value.data() + static_cast<std::int64_t>(i) * hw;
    for (int ch = 0; ch < c; ++ch) {
      const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * hw;
      for (std::int64_t p = 0; p < hw; ++p)
        out->value[base + p] = x->value[base + p] * mp[p];
    }
  }
  if (out->requires_grad)
    out->backward_fn = [x, m, n, c, hw](Node& nd) {
      for (int i = 0; i < n; ++i) {
        const double* mp = m->value.data() + static_cast<std::int64_t>(i) * hw;
        double* gm = m->requires_grad
                         ? m->grad_data() + static_cast<std::int64_t>(i) * hw
                         : nullptr;
        for (int ch = 0; ch < c; ++ch) {
          const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * hw;
          const double* gy = nd.grad.data() + base;
          if (x->requires_grad) {
            double* gx = x->grad_data() + base;
            for (std::int64_t p = 0; p < hw; ++p) gx[p] += gy[p] * mp[p];
          }
          if (gm)
            for (std::int64_t p = 0; p < hw; ++p)
              gm[p] += gy[p] * x->value[base + p];
        }
      }
    };
  return out;
}

Tensor scale_channels(const Tensor& x, const std::vector<double>& s) {
  const int n = x->dim(0), c = x->dim(1);
  if (static_cast<int>(s.size()) != c)
    throw ValidationError("scale_channels: factor count mismatch");
  const std::int64_t hw = numel(x->shape) / (static_cast<std::int64_t>(n) * c);
  auto out = op_node(x->shape, {x});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * hw;
      for (std::int64_t p = 0; p < hw; ++p)
        out->value[base + p] = x->value[base + p] * s[ch];
    }
  if (out->requires_grad)
    out->backward_fn = [x, s, n, c, hw](Node& nd) {
      double* g = x->grad_data();
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
          const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * hw;
          for (std::int64_t p = 0; p < hw; ++p)
            g[base + p] += nd.grad[base + p] * s[ch];
        }
    };
  return out;
}

// ---- TPS --------------------------------------------------------------------

Tensor apply_tps_basis(const Tensor& offsets, const Tensor& basis,
                       const Tensor& static_pts, int h, int w) {
  const int n = offsets->dim(0), k = offsets->dim(1);
  const std::int64_t p = static_cast<std::int64_t>(h) * w;
  if (basis->shape != Shape{static_cast<int>(p), k})
    throw ValidationError("apply_tps_basis: basis shape mismatch");
  auto out = op_node({n, h, w, 2}, {offsets, basis, static_pts});
  CMapRM B(basis->value.data(), p, k);
  Eigen::VectorXd y(k);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < 2; ++d) {
      for (int j = 0; j < k; ++j)
        y[j] = static_pts->value[2 * j + d] + offsets->value[(i * k + j) * 2 + d];
      Eigen::VectorXd f = B * y;
      double* dst = out->value.data() + static_cast<std::int64_t>(i) * p * 2;
      for (std::int64_t q = 0; q < p; ++q) dst[2 * q + d] = f[q];
    }
  }
  if (out->requires_grad)
    out->backward_fn = [offsets, basis, n, k, p](Node& nd) {
      if (!offsets->requires_grad) return;
      CMapRM B(basis->value.data(), p, k);
      Eigen::VectorXd gf(p);
      for (int i = 0; i < n; ++i) {
        for (int d = 0; d < 2; ++d) {
          const double* src = nd.grad.data() + static_cast<std::int64_t>(i) * p * 2;
          for (std::int64_t q = 0; q < p; ++q) gf[q] = src[2 * q + d];
          Eigen::VectorXd gy = B.transpose() * gf;
          double* goff = offsets->grad_data();
          for (int j = 0; j < k; ++j) goff[(i * k + j) * 2 + d] += gy[j];
        }
      }
    };
  return out;
}

// ---- losses -------------------------------------------------------------------

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  return mean_all(abs_op(sub(a, b)));
}

Tensor l2_loss(const Tensor& a, const Tensor& b) {
  return mean_all(square(sub(a, b)));
}

}  // namespace pgvton::nn
