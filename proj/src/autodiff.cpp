#include "cascade/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace cascade {

namespace {

std::atomic<std::int64_t> g_next_id{1};

VarPtr make_node(Tensor value, std::vector<VarPtr> parents) {
  auto node = std::make_shared<Var>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  for (const auto& p : node->parents) {
    if (p->requires_grad) node->requires_grad = true;
  }
  return node;
}

void accumulate(Var& target, const double* g, std::int64_t n) {
  target.ensure_grad();
  double* dst = target.grad.data();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

void check_same_shape(const VarPtr& a, const VarPtr& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  }
}

struct Conv2dDims {
  int n, fin, h, w, fout, kh, kw, sh, sw, ph, pw, oh, ow;
};

Conv2dDims conv2d_dims(const Tensor& x, const Tensor& wt, std::pair<int, int> stride, std::pair<int, int> padding,
                       bool batched) {
  Conv2dDims d{};
  int off = batched ? 1 : 0;
  d.n = batched ? x.dim(0) : 1;
  d.fin = x.dim(off);
  d.h = x.dim(off + 1);
  d.w = x.dim(off + 2);
  d.fout = wt.dim(0);
  d.kh = wt.dim(2);
  d.kw = wt.dim(3);
  d.sh = stride.first;
  d.sw = stride.second;
  d.ph = padding.first;
  d.pw = padding.second;
  if (wt.dim(1) != d.fin) {
    throw DimensionError("conv2d: weight expects " + std::to_string(wt.dim(1)) + " input channels, got " +
                         std::to_string(d.fin));
  }
  if (d.sh < 1 || d.sw < 1 || d.ph < 0 || d.pw < 0) throw DimensionError("conv2d: invalid stride/padding");
  if (d.h + 2 * d.ph < d.kh || d.w + 2 * d.pw < d.kw) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  d.oh = (d.h + 2 * d.ph - d.kh) / d.sh + 1;
  d.ow = (d.w + 2 * d.pw - d.kw) / d.sw + 1;
  if (d.oh <= 0 || d.ow <= 0) throw DimensionError("conv2d: non-positive output size");
  return d;
}

// Copies one batch element into a zero-padded [fin, h+2ph, w+2pw] scratch.
void pad_into(const double* x, const Conv2dDims& d, std::vector<double>& xp) {
  const int hp = d.h + 2 * d.ph;
  const int wp = d.w + 2 * d.pw;
  xp.assign(static_cast<std::size_t>(d.fin) * hp * wp, 0.0);
  for (int fi = 0; fi < d.fin; ++fi) {
    for (int ih = 0; ih < d.h; ++ih) {
      const double* src = x + (static_cast<std::int64_t>(fi) * d.h + ih) * d.w;
      double* dst = xp.data() + (static_cast<std::int64_t>(fi) * hp + (ih + d.ph)) * wp + d.pw;
      std::copy(src, src + d.w, dst);
    }
  }
}

}  // namespace

void Var::ensure_grad() {
  if (!has_grad()) grad = Tensor(value.shape());
}

void Var::zero_grad() {
  if (has_grad()) grad.fill(0.0);
}

VarPtr make_leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Var>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

void backward(const VarPtr& loss) {
  if (loss->value.size() != 1) throw DimensionError("backward: loss must be scalar, got " + loss->value.shape_str());
  // Reverse topological order. Node ids increase with creation order and every
  // node is created after its parents, so descending id is a valid order.
  std::vector<Var*> order;
  std::unordered_set<Var*> seen;
  std::vector<Var*> stack{loss.get()};
  seen.insert(loss.get());
  while (!stack.empty()) {
    Var* v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (const auto& p : v->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Var* a, const Var* b) { return a->id > b->id; });

  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (Var* v : order) {
    if (v->requires_grad && v->backprop && v->has_grad()) v->backprop(*v);
  }
}

VarPtr add(const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    node->backprop = [a, b, n](Var& self) {
      if (a->requires_grad) accumulate(*a, self.grad.data(), n);
      if (b->requires_grad) accumulate(*b, self.grad.data(), n);
    };
  }
  return node;
}

VarPtr sub(const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    node->backprop = [a, b, n](Var& self) {
      if (a->requires_grad) accumulate(*a, self.grad.data(), n);
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) b->grad[i] -= self.grad[i];
      }
    };
  }
  return node;
}

VarPtr mul(const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    node->backprop = [a, b, n](Var& self) {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) b->grad[i] += self.grad[i] * a->value[i];
      }
    };
  }
  return node;
}

VarPtr scale(const VarPtr& a, double c) {
  Tensor out(a->value.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = c * a->value[i];
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    node->backprop = [a, c, n](Var& self) {
      a->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) a->grad[i] += c * self.grad[i];
    };
  }
  return node;
}

VarPtr add_const(const VarPtr& a, const Tensor& c) {
  if (!a->value.same_shape(c)) {
    throw DimensionError("add_const: shape mismatch " + a->value.shape_str() + " vs " + c.shape_str());
  }
  Tensor out(a->value.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->value[i] + c[i];
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    node->backprop = [a, n](Var& self) { accumulate(*a, self.grad.data(), n); };
  }
  return node;
}

VarPtr matmul(const VarPtr& a, const VarPtr& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + a->value.shape_str() + " x " + b->value.shape_str());
  }
  const int n = a->value.dim(0), k = a->value.dim(1), m = b->value.dim(1);
  Tensor out({n, m});
  const double* A = a->value.data();
  const double* B = b->value.data();
  double* C = out.data();
  for (int i = 0; i < n; ++i) {
    double* crow = C + static_cast<std::int64_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = A[static_cast<std::int64_t>(i) * k + p];
      const double* brow = B + static_cast<std::int64_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    node->backprop = [a, b, n, k, m](Var& self) {
      const double* G = self.grad.data();
      if (a->requires_grad) {
        a->ensure_grad();
        double* dA = a->grad.data();
        const double* B = b->value.data();
        for (int i = 0; i < n; ++i) {
          const double* grow = G + static_cast<std::int64_t>(i) * m;
          double* darow = dA + static_cast<std::int64_t>(i) * k;
          for (int p = 0; p < k; ++p) {
            const double* brow = B + static_cast<std::int64_t>(p) * m;
            double acc = 0.0;
            for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
            darow[p] += acc;
          }
        }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        double* dB = b->grad.data();
        const double* A = a->value.data();
        for (int i = 0; i < n; ++i) {
          const double* grow = G + static_cast<std::int64_t>(i) * m;
          const double* arow = A + static_cast<std::int64_t>(i) * k;
          for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            double* dbrow = dB + static_cast<std::int64_t>(p) * m;
            for (int j = 0; j < m; ++j) dbrow[j] += av * grow[j];
          }
        }
      }
    };
  }
  return node;
}

VarPtr transpose(const VarPtr& a) {
  if (a->value.rank() != 2) throw DimensionError("transpose: expects rank-2, got " + a->value.shape_str());
  const int n = a->value.dim(0), m = a->value.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<std::int64_t>(j) * n + i] = a->value[static_cast<std::int64_t>(i) * m + j];
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    node->backprop = [a, n, m](Var& self) {
      a->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          a->grad[static_cast<std::int64_t>(i) * m + j] += self.grad[static_cast<std::int64_t>(j) * n + i];
    };
  }
  return node;
}

VarPtr linear(const VarPtr& x, const VarPtr& w, const VarPtr& b) {
  if (x->value.rank() < 1 || w->value.rank() != 2) {
    throw DimensionError("linear: bad ranks " + x->value.shape_str() + ", " + w->value.shape_str());
  }
  const int din = x->value.dim(x->value.rank() - 1);
  const int dout = w->value.dim(1);
  if (w->value.dim(0) != din) {
    throw DimensionError("linear: input axis " + std::to_string(din) + " vs weight rows " + std::to_string(w->value.dim(0)));
  }
  if (b->value.rank() != 1 || b->value.dim(0) != dout) {
    throw DimensionError("linear: bias shape " + b->value.shape_str() + " vs D_out " + std::to_string(dout));
  }
  const std::int64_t rows = x->value.size() / din;
  std::vector<int> out_shape = x->value.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  const double* X = x->value.data();
  const double* W = w->value.data();
  const double* B = b->value.data();
  double* Y = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    double* yrow = Y + r * dout;
    std::copy(B, B + dout, yrow);
    const double* xrow = X + r * din;
    for (int p = 0; p < din; ++p) {
      const double xv = xrow[p];
      const double* wrow = W + static_cast<std::int64_t>(p) * dout;
      for (int j = 0; j < dout; ++j) yrow[j] += xv * wrow[j];
    }
  }
  auto node = make_node(std::move(out), {x, w, b});
  if (node->requires_grad) {
    node->backprop = [x, w, b, rows, din, dout](Var& self) {
      const double* G = self.grad.data();
      if (x->requires_grad) {
        x->ensure_grad();
        double* dX = x->grad.data();
        const double* W = w->value.data();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* grow = G + r * dout;
          double* dxrow = dX + r * din;
          for (int p = 0; p < din; ++p) {
            const double* wrow = W + static_cast<std::int64_t>(p) * dout;
            double acc = 0.0;
            for (int j = 0; j < dout; ++j) acc += grow[j] * wrow[j];
            dxrow[p] += acc;
          }
        }
      }
      if (w->requires_grad) {
        w->ensure_grad();
        double* dW = w->grad.data();
        const double* X = x->value.data();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* grow = G + r * dout;
          const double* xrow = X + r * din;
          for (int p = 0; p < din; ++p) {
            const double xv = xrow[p];
            double* dwrow = dW + static_cast<std::int64_t>(p) * dout;
            for (int j = 0; j < dout; ++j) dwrow[j] += xv * grow[j];
          }
        }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* grow = G + r * dout;
          for (int j = 0; j < dout; ++j) b->grad[j] += grow[j];
        }
      }
    };
  }
  return node;
}

VarPtr leaky_relu(const VarPtr& x, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) throw DimensionError("leaky_relu: slope must be in [0,1)");
  Tensor out(x->value.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = x->value[i];
    out[i] = v > 0.0 ? v : slope * v;
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    node->backprop = [x, slope, n](Var& self) {
      x->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) x->grad[i] += self.grad[i] * (x->value[i] > 0.0 ? 1.0 : slope);
    };
  }
  return node;
}

VarPtr relu(const VarPtr& x) { return leaky_relu(x, 0.0); }

VarPtr conv1d_depthwise(const VarPtr& x, const VarPtr& w, const VarPtr& b, int stride, int padding) {
  const bool batched = x->value.rank() == 3;
  if (!batched && x->value.rank() != 2) {
    throw DimensionError("conv1d_depthwise: expects [C,T] or [N,C,T], got " + x->value.shape_str());
  }
  const int n = batched ? x->value.dim(0) : 1;
  const int c = x->value.dim(batched ? 1 : 0);
  const int t = x->value.dim(batched ? 2 : 1);
  if (w->value.rank() != 2 || w->value.dim(0) != c) {
    throw DimensionError("conv1d_depthwise: weights " + w->value.shape_str() + " do not match " + std::to_string(c) +
                         " channels");
  }
  const int k = w->value.dim(1);
  if (b->value.rank() != 1 || b->value.dim(0) != c) {
    throw DimensionError("conv1d_depthwise: bias " + b->value.shape_str() + " does not match channels");
  }
  if (k % 2 == 0) throw DimensionError("conv1d_depthwise: kernel length must be odd");
  if (stride < 1 || padding < 0 || t + 2 * padding < k) {
    throw DimensionError("conv1d_depthwise: invalid stride/padding for T=" + std::to_string(t));
  }
  const int to = (t + 2 * padding - k) / stride + 1;
  std::vector<int> out_shape = batched ? std::vector<int>{n, c, to} : std::vector<int>{c, to};
  Tensor out(out_shape);
  const int tp = t + 2 * padding;
  std::vector<double> xp(static_cast<std::size_t>(tp));
  for (int bi = 0; bi < n; ++bi) {
    for (int ci = 0; ci < c; ++ci) {
      const double* src = x->value.data() + (static_cast<std::int64_t>(bi) * c + ci) * t;
      std::fill(xp.begin(), xp.end(), 0.0);
      std::copy(src, src + t, xp.begin() + padding);
      double* dst = out.data() + (static_cast<std::int64_t>(bi) * c + ci) * to;
      const double* wk = w->value.data() + static_cast<std::int64_t>(ci) * k;
      const double bias = b->value[ci];
      for (int o = 0; o < to; ++o) dst[o] = bias;
      for (int kk = 0; kk < k; ++kk) {
        const double wv = wk[kk];
        const double* s = xp.data() + kk;
        if (stride == 1) {
          for (int o = 0; o < to; ++o) dst[o] += wv * s[o];
        } else {
          for (int o = 0; o < to; ++o) dst[o] += wv * s[static_cast<std::int64_t>(o) * stride];
        }
      }
    }
  }
  auto node = make_node(std::move(out), {x, w, b});
  if (node->requires_grad) {
    node->backprop = [x, w, b, n, c, t, k, to, stride, padding](Var& self) {
      const int tp = t + 2 * padding;
      std::vector<double> xp(static_cast<std::size_t>(tp));
      std::vector<double> dxp(static_cast<std::size_t>(tp));
      if (x->requires_grad) x->ensure_grad();
      if (w->requires_grad) w->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (int bi = 0; bi < n; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
          const double* g = self.grad.data() + (static_cast<std::int64_t>(bi) * c + ci) * to;
          if (b->requires_grad) {
            double acc = 0.0;
            for (int o = 0; o < to; ++o) acc += g[o];
            b->grad[ci] += acc;
          }
          const double* src = x->value.data() + (static_cast<std::int64_t>(bi) * c + ci) * t;
          std::fill(xp.begin(), xp.end(), 0.0);
          std::copy(src, src + t, xp.begin() + padding);
          if (w->requires_grad) {
            double* dwk = w->grad.data() + static_cast<std::int64_t>(ci) * k;
            for (int kk = 0; kk < k; ++kk) {
              const double* s = xp.data() + kk;
              double acc = 0.0;
              if (stride == 1) {
                for (int o = 0; o < to; ++o) acc += g[o] * s[o];
              } else {
                for (int o = 0; o < to; ++o) acc += g[o] * s[static_cast<std::int64_t>(o) * stride];
              }
              dwk[kk] += acc;
            }
          }
          if (x->requires_grad) {
            std::fill(dxp.begin(), dxp.end(), 0.0);
            const double* wk = w->value.data() + static_cast<std::int64_t>(ci) * k;
            for (int kk = 0; kk < k; ++kk) {
              const double wv = wk[kk];
              double* s = dxp.data() + kk;
              if (stride == 1) {
                for (int o = 0; o < to; ++o) s[o] += wv * g[o];
              } else {
                for (int o = 0; o < to; ++o) s[static_cast<std::int64_t>(o) * stride] += wv * g[o];
              }
            }
            double* dx = x->grad.data() + (static_cast<std::int64_t>(bi) * c + ci) * t;
            for (int i = 0; i < t; ++i) dx[i] += dxp[static_cast<std::size_t>(i + padding)];
          }
        }
      }
    };
  }
  return node;
}

VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, std::pair<int, int> stride,
              std::pair<int, int> padding) {
  const bool batched = x->value.rank() == 4;
  if (!batched && x->value.rank() != 3) {
    throw DimensionError("conv2d: expects [F,H,W] or [N,F,H,W], got " + x->value.shape_str());
  }
  if (w->value.rank() != 4) throw DimensionError("conv2d: weight must be rank-4, got " + w->value.shape_str());
  const Conv2dDims d = conv2d_dims(x->value, w->value, stride, padding, batched);
  if (b->value.rank() != 1 || b->value.dim(0) != d.fout) {
    throw DimensionError("conv2d: bias " + b->value.shape_str() + " does not match F_out");
  }
  std::vector<int> out_shape =
      batched ? std::vector<int>{d.n, d.fout, d.oh, d.ow} : std::vector<int>{d.fout, d.oh, d.ow};
  Tensor out(out_shape);
  const int hp = d.h + 2 * d.ph, wp = d.w + 2 * d.pw;
  const std::int64_t in_plane = static_cast<std::int64_t>(d.fin) * d.h * d.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(d.fout) * d.oh * d.ow;
  std::vector<double> xp;
  for (int n = 0; n < d.n; ++n) {
    pad_into(x->value.data() + n * in_plane, d, xp);
    double* outn = out.data() + n * out_plane;
    for (int fo = 0; fo < d.fout; ++fo) {
      double* plane = outn + static_cast<std::int64_t>(fo) * d.oh * d.ow;
      const double bias = b->value[fo];
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.oh) * d.ow; ++i) plane[i] = bias;
      for (int fi = 0; fi < d.fin; ++fi) {
        const double* wker = w->value.data() + ((static_cast<std::int64_t>(fo) * d.fin + fi) * d.kh) * d.kw;
        const double* xpl = xp.data() + static_cast<std::int64_t>(fi) * hp * wp;
        for (int kh = 0; kh < d.kh; ++kh) {
          for (int kw = 0; kw < d.kw; ++kw) {
            const double wv = wker[static_cast<std::int64_t>(kh) * d.kw + kw];
            for (int oh = 0; oh < d.oh; ++oh) {
              const double* __restrict srow = xpl + static_cast<std::int64_t>(oh * d.sh + kh) * wp + kw;
              double* __restrict drow = plane + static_cast<std::int64_t>(oh) * d.ow;
              if (d.sw == 1) {
                for (int ow = 0; ow < d.ow; ++ow) drow[ow] += wv * srow[ow];
              } else {
                for (int ow = 0; ow < d.ow; ++ow) drow[ow] += wv * srow[static_cast<std::int64_t>(ow) * d.sw];
              }
            }
          }
        }
      }
    }
  }
  auto node = make_node(std::move(out), {x, w, b});
  if (node->requires_grad) {
    node->backprop = [x, w, b, d, in_plane, out_plane](Var& self) {
      const int hp = d.h + 2 * d.ph, wp = d.w + 2 * d.pw;
      std::vector<double> xp, dxp;
      if (x->requires_grad) x->ensure_grad();
      if (w->requires_grad) w->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (int n = 0; n < d.n; ++n) {
        const double* gn = self.grad.data() + n * out_plane;
        if (w->requires_grad || x->requires_grad) pad_into(x->value.data() + n * in_plane, d, xp);
        if (x->requires_grad) dxp.assign(static_cast<std::size_t>(d.fin) * hp * wp, 0.0);
        for (int fo = 0; fo < d.fout; ++fo) {
          const double* gplane = gn + static_cast<std::int64_t>(fo) * d.oh * d.ow;
          if (b->requires_grad) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.oh) * d.ow; ++i) acc += gplane[i];
            b->grad[fo] += acc;
          }
          for (int fi = 0; fi < d.fin; ++fi) {
            const double* xpl = xp.data() + static_cast<std::int64_t>(fi) * hp * wp;
            double* dxpl = x->requires_grad ? dxp.data() + static_cast<std::int64_t>(fi) * hp * wp : nullptr;
            const std::int64_t wbase = (static_cast<std::int64_t>(fo) * d.fin + fi) * d.kh * d.kw;
            for (int kh = 0; kh < d.kh; ++kh) {
              for (int kw = 0; kw < d.kw; ++kw) {
                const std::int64_t widx = wbase + static_cast<std::int64_t>(kh) * d.kw + kw;
                const double wv = w->value[widx];
                double wacc = 0.0;
                for (int oh = 0; oh < d.oh; ++oh) {
                  const double* __restrict grow = gplane + static_cast<std::int64_t>(oh) * d.ow;
                  const std::int64_t srow = static_cast<std::int64_t>(oh * d.sh + kh) * wp + kw;
                  if (w->requires_grad) {
                    const double* __restrict s = xpl + srow;
                    if (d.sw == 1) {
                      // four-lane partial sums in a fixed order so the loop pipelines
                      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                      int ow = 0;
                      for (; ow + 4 <= d.ow; ow += 4) {
                        a0 += grow[ow] * s[ow];
                        a1 += grow[ow + 1] * s[ow + 1];
                        a2 += grow[ow + 2] * s[ow + 2];
                        a3 += grow[ow + 3] * s[ow + 3];
                      }
                      for (; ow < d.ow; ++ow) a0 += grow[ow] * s[ow];
                      wacc += (a0 + a1) + (a2 + a3);
                    } else {
                      for (int ow = 0; ow < d.ow; ++ow) wacc += grow[ow] * s[static_cast<std::int64_t>(ow) * d.sw];
                    }
                  }
                  if (x->requires_grad) {
                    double* __restrict ds = dxpl + srow;
                    if (d.sw == 1) {
                      for (int ow = 0; ow < d.ow; ++ow) ds[ow] += wv * grow[ow];
                    } else {
                      for (int ow = 0; ow < d.ow; ++ow) ds[static_cast<std::int64_t>(ow) * d.sw] += wv * grow[ow];
                    }
                  }
                }
                if (w->requires_grad) w->grad[widx] += wacc;
              }
            }
          }
        }
        if (x->requires_grad) {
          double* dx = x->grad.data() + n * in_plane;
          for (int fi = 0; fi < d.fin; ++fi) {
            for (int ih = 0; ih < d.h; ++ih) {
              const double* src = dxp.data() + (static_cast<std::int64_t>(fi) * hp + (ih + d.ph)) * wp + d.pw;
              double* dst = dx + (static_cast<std::int64_t>(fi) * d.h + ih) * d.w;
              for (int iw = 0; iw < d.w; ++iw) dst[iw] += src[iw];
            }
          }
        }
      }
    };
  }
  return node;
}

VarPtr avg_pool2d(const VarPtr& x, std::pair<int, int> kernel, std::pair<int, int> stride) {
  const bool batched = x->value.rank() == 4;
  if (!batched && x->value.rank() != 3) {
    throw DimensionError("avg_pool2d: expects [F,H,W] or [N,F,H,W], got " + x->value.shape_str());
  }
  const int n = batched ? x->value.dim(0) : 1;
  const int f = x->value.dim(batched ? 1 : 0);
  const int h = x->value.dim(batched ? 2 : 1);
  const int w = x->value.dim(batched ? 3 : 2);
  const int kh = kernel.first, kw = kernel.second, sh = stride.first, sw = stride.second;
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1) throw DimensionError("avg_pool2d: invalid kernel/stride");
  if (h < kh || w < kw) throw DimensionError("avg_pool2d: kernel larger than input");
  const int oh = (h - kh) / sh + 1;
  const int ow = (w - kw) / sw + 1;
  std::vector<int> out_shape = batched ? std::vector<int>{n, f, oh, ow} : std::vector<int>{f, oh, ow};
  Tensor out(out_shape);
  const double inv = 1.0 / (static_cast<double>(kh) * kw);
  for (int bi = 0; bi < n; ++bi) {
    for (int fi = 0; fi < f; ++fi) {
      const double* plane = x->value.data() + (static_cast<std::int64_t>(bi) * f + fi) * h * w;
      double* dst = out.data() + (static_cast<std::int64_t>(bi) * f + fi) * oh * ow;
      for (int o = 0; o < oh; ++o) {
        for (int q = 0; q < ow; ++q) {
          double acc = 0.0;
          for (int a = 0; a < kh; ++a) {
            const double* row = plane + static_cast<std::int64_t>(o * sh + a) * w + q * sw;
            for (int c = 0; c < kw; ++c) acc += row[c];
          }
          dst[static_cast<std::int64_t>(o) * ow + q] = acc * inv;
        }
      }
    }
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    node->backprop = [x, n, f, h, w, kh, kw, sh, sw, oh, ow, inv](Var& self) {
      x->ensure_grad();
      for (int bi = 0; bi < n; ++bi) {
        for (int fi = 0; fi < f; ++fi) {
          double* dplane = x->grad.data() + (static_cast<std::int64_t>(bi) * f + fi) * h * w;
          const double* g = self.grad.data() + (static_cast<std::int64_t>(bi) * f + fi) * oh * ow;
          for (int o = 0; o < oh; ++o) {
            for (int q = 0; q < ow; ++q) {
              const double gv = g[static_cast<std::int64_t>(o) * ow + q] * inv;
              for (int a = 0; a < kh; ++a) {
                double* row = dplane + static_cast<std::int64_t>(o * sh + a) * w + q * sw;
                for (int c = 0; c < kw; ++c) row[c] += gv;
              }
            }
          }
        }
      }
    };
  }
  return node;
}

VarPtr batch_norm_train(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta, Tensor& running_mean,
                        Tensor& running_var, double momentum, double eps) {
  if (x->value.rank() != 2) throw DimensionError("batch_norm: expects [N,D], got " + x->value.shape_str());
  const int n = x->value.dim(0), d = x->value.dim(1);
  if (n < 2) throw DegenerateBatchError("batch_norm: train mode needs N >= 2, got N=" + std::to_string(n));
  if (gamma->value.dim(0) != d || beta->value.dim(0) != d || running_mean.dim(0) != d || running_var.dim(0) != d) {
    throw DimensionError("batch_norm: parameter width mismatch");
  }
  auto mean = std::make_shared<std::vector<double>>(d, 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(d, 0.0);
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) (*mean)[j] += x->value[static_cast<std::int64_t>(i) * d + j];
  for (int j = 0; j < d; ++j) (*mean)[j] /= n;
  std::vector<double> var(d, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const double c = x->value[static_cast<std::int64_t>(i) * d + j] - (*mean)[j];
      var[j] += c * c;
    }
  }
  for (int j = 0; j < d; ++j) {
    var[j] /= n;  // biased, consistently used for normalization and running stats
    (*inv_std)[j] = 1.0 / std::sqrt(var[j] + eps);
    running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * (*mean)[j];
    running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j];
  }
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const std::int64_t idx = static_cast<std::int64_t>(i) * d + j;
      (*xhat)[static_cast<std::size_t>(idx)] = (x->value[idx] - (*mean)[j]) * (*inv_std)[j];
      out[idx] = gamma->value[j] * (*xhat)[static_cast<std::size_t>(idx)] + beta->value[j];
    }
  }
  auto node = make_node(std::move(out), {x, gamma, beta});
  if (node->requires_grad) {
    node->backprop = [x, gamma, beta, n, d, inv_std, xhat](Var& self) {
      std::vector<double> gsum(d, 0.0), gxsum(d, 0.0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
          const std::int64_t idx = static_cast<std::int64_t>(i) * d + j;
          gsum[j] += self.grad[idx];
          gxsum[j] += self.grad[idx] * (*xhat)[static_cast<std::size_t>(idx)];
        }
      }
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        for (int j = 0; j < d; ++j) gamma->grad[j] += gxsum[j];
      }
      if (beta->requires_grad) {
        beta->ensure_grad();
        for (int j = 0; j < d; ++j) beta->grad[j] += gsum[j];
      }
      if (x->requires_grad) {
        x->ensure_grad();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) {
            const std::int64_t idx = static_cast<std::int64_t>(i) * d + j;
            const double xh = (*xhat)[static_cast<std::size_t>(idx)];
            x->grad[idx] += gamma->value[j] * (*inv_std)[j] * (self.grad[idx] - gsum[j] / n - xh * gxsum[j] / n);
          }
        }
      }
    };
  }
  return node;
}

VarPtr batch_norm_eval(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta, const Tensor& running_mean,
                       const Tensor& running_var, double eps) {
  if (x->value.rank() != 2) throw DimensionError("batch_norm: expects [N,D], got " + x->value.shape_str());
  const int n = x->value.dim(0), d = x->value.dim(1);
  if (gamma->value.dim(0) != d || beta->value.dim(0) != d || running_mean.dim(0) != d || running_var.dim(0) != d) {
    throw DimensionError("batch_norm: parameter width mismatch");
  }
  auto inv_std = std::make_shared<std::vector<double>>(d, 0.0);
  auto mean = std::make_shared<std::vector<double>>(d, 0.0);
  for (int j = 0; j < d; ++j) {
    (*inv_std)[j] = 1.0 / std::sqrt(running_var[j] + eps);
    (*mean)[j] = running_mean[j];
  }
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const std::int64_t idx = static_cast<std::int64_t>(i) * d + j;
      out[idx] = gamma->value[j] * (x->value[idx] - (*mean)[j]) * (*inv_std)[j] + beta->value[j];
    }
  }
  auto node = make_node(std::move(out), {x, gamma, beta});
  if (node->requires_grad) {
    node->backprop = [x, gamma, beta, n, d, inv_std, mean](Var& self) {
      if (gamma->requires_grad) gamma->ensure_grad();
      if (beta->requires_grad) beta->ensure_grad();
      if (x->requires_grad) x->ensure_grad();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
          const std::int64_t idx = static_cast<std::int64_t>(i) * d + j;
          const double g = self.grad[idx];
          if (gamma->requires_grad) gamma->grad[j] += g * (x->value[idx] - (*mean)[j]) * (*inv_std)[j];
          if (beta->requires_grad) beta->grad[j] += g;
          if (x->requires_grad) x->grad[idx] += g * gamma->value[j] * (*inv_std)[j];
        }
      }
    };
  }
  return node;
}

VarPtr concat(const std::vector<VarPtr>& xs, int axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const int rank = xs[0]->value.rank();
  if (axis < 0 || axis >= rank) throw DimensionError("concat: bad axis");
  std::vector<int> out_shape = xs[0]->value.shape();
  int cat = 0;
  for (const auto& x : xs) {
    if (x->value.rank() != rank) throw DimensionError("concat: rank mismatch");
    for (int a = 0; a < rank; ++a) {
      if (a != axis && x->value.dim(a) != out_shape[static_cast<std::size_t>(a)]) {
        throw DimensionError("concat: non-concat axis mismatch at axis " + std::to_string(a));
      }
    }
    cat += x->value.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = cat;

  std::int64_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= out_shape[static_cast<std::size_t>(a)];
  for (int a = axis + 1; a < rank; ++a) inner *= out_shape[static_cast<std::size_t>(a)];

  Tensor out(out_shape);
  std::int64_t offset = 0;
  for (const auto& x : xs) {
    const std::int64_t block = static_cast<std::int64_t>(x->value.dim(axis)) * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = x->value.data() + o * block;
      double* dst = out.data() + o * (static_cast<std::int64_t>(cat) * inner) + offset;
      std::copy(src, src + block, dst);
    }
    offset += block;
  }
  auto node = make_node(std::move(out), xs);
  if (node->requires_grad) {
    const std::int64_t cat_inner = static_cast<std::int64_t>(cat) * inner;
    node->backprop = [xs, outer, inner, cat_inner](Var& self) {
      std::int64_t offset = 0;
      for (const auto& x : xs) {
        const std::int64_t block = static_cast<std::int64_t>(x->value.size()) / (outer == 0 ? 1 : outer);
        if (x->requires_grad) {
          x->ensure_grad();
          for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = self.grad.data() + o * cat_inner + offset;
            double* dst = x->grad.data() + o * block;
            for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += block;
      }
    };
  }
  return node;
}

VarPtr reshape(const VarPtr& x, std::vector<int> shape) {
  if (shape_size(shape) != x->value.size()) {
    throw DimensionError("reshape: size mismatch " + x->value.shape_str() + " -> " + cascade::shape_str(shape));
  }
  Tensor out(std::move(shape), x->value.values());
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    node->backprop = [x](Var& self) { accumulate(*x, self.grad.data(), self.grad.size()); };
  }
  return node;
}

VarPtr flatten_rows(const VarPtr& x) {
  if (x->value.rank() < 2) throw DimensionError("flatten_rows: expects rank >= 2");
  const int n = x->value.dim(0);
  const int d = static_cast<int>(x->value.size() / n);
  return reshape(x, {n, d});
}

VarPtr l2_normalize_rows(const VarPtr& x, bool* zero_row_flag) {
  if (x->value.rank() != 2) throw DimensionError("l2_normalize_rows: expects [N,D], got " + x->value.shape_str());
  const int n = x->value.dim(0), d = x->value.dim(1);
  auto inv_norm = std::make_shared<std::vector<double>>(n, 0.0);
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    const double* row = x->value.data() + static_cast<std::int64_t>(i) * d;
    double sq = 0.0;
    for (int j = 0; j < d; ++j) sq += row[j] * row[j];
    double* dst = out.data() + static_cast<std::int64_t>(i) * d;
    if (sq == 0.0) {
      if (zero_row_flag) *zero_row_flag = true;
      (*inv_norm)[i] = 0.0;  // marks the pass-through row; its gradient is dropped
      std::copy(row, row + d, dst);
    } else {
      (*inv_norm)[i] = 1.0 / std::sqrt(sq);
      for (int j = 0; j < d; ++j) dst[j] = row[j] * (*inv_norm)[i];
    }
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    node->backprop = [x, n, d, inv_norm](Var& self) {
      x->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double inv = (*inv_norm)[i];
        if (inv == 0.0) continue;
        const double* g = self.grad.data() + static_cast<std::int64_t>(i) * d;
        const double* y = self.value.data() + static_cast<std::int64_t>(i) * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += g[j] * y[j];
        double* dx = x->grad.data() + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) dx[j] += (g[j] - y[j] * dot) * inv;
      }
    };
  }
  return node;
}

VarPtr interleave_rows(const VarPtr& a, const VarPtr& b) {
  check_same_shape(a, b, "interleave_rows");
  if (a->value.rank() != 2) throw DimensionError("interleave_rows: expects [N,D]");
  const int n = a->value.dim(0), d = a->value.dim(1);
  Tensor out({2 * n, d});
  for (int i = 0; i < n; ++i) {
    std::copy(a->value.data() + static_cast<std::int64_t>(i) * d, a->value.data() + static_cast<std::int64_t>(i + 1) * d,
              out.data() + static_cast<std::int64_t>(2 * i) * d);
    std::copy(b->value.data() + static_cast<std::int64_t>(i) * d, b->value.data() + static_cast<std::int64_t>(i + 1) * d,
              out.data() + static_cast<std::int64_t>(2 * i + 1) * d);
  }
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    node->backprop = [a, b, n, d](Var& self) {
      if (a->requires_grad) {
        a->ensure_grad();
        for (int i = 0; i < n; ++i) {
          const double* g = self.grad.data() + static_cast<std::int64_t>(2 * i) * d;
          double* dst = a->grad.data() + static_cast<std::int64_t>(i) * d;
          for (int j = 0; j < d; ++j) dst[j] += g[j];
        }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int i = 0; i < n; ++i) {
          const double* g = self.grad.data() + static_cast<std::int64_t>(2 * i + 1) * d;
          double* dst = b->grad.data() + static_cast<std::int64_t>(i) * d;
          for (int j = 0; j < d; ++j) dst[j] += g[j];
        }
      }
    };
  }
  return node;
}

VarPtr row_logsumexp(const VarPtr& x) {
  if (x->value.rank() != 2) throw DimensionError("row_logsumexp: expects [N,M]");
  const int n = x->value.dim(0), m = x->value.dim(1);
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * m, 0.0);
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    const double* row = x->value.data() + static_cast<std::int64_t>(i) * m;
    double mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += std::exp(row[j] - mx);
    out[i] = mx + std::log(sum);
    for (int j = 0; j < m; ++j) {
      (*probs)[static_cast<std::size_t>(i) * m + j] = std::exp(row[j] - mx) / sum;
    }
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    node->backprop = [x, n, m, probs](Var& self) {
      x->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double g = self.grad[i];
        double* dx = x->grad.data() + static_cast<std::int64_t>(i) * m;
        const double* p = probs->data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) dx[j] += g * p[j];
      }
    };
  }
  return node;
}

VarPtr sum_all(const VarPtr& x) {
  double acc = 0.0;
  const std::int64_t n = x->value.size();
  for (std::int64_t i = 0; i < n; ++i) acc += x->value[i];
  auto node = make_node(Tensor::scalar(acc), {x});
  if (node->requires_grad) {
    node->backprop = [x, n](Var& self) {
      x->ensure_grad();
      const double g = self.grad[0];
      for (std::int64_t i = 0; i < n; ++i) x->grad[i] += g;
    };
  }
  return node;
}

VarPtr cross_entropy_with_labels(const VarPtr& logits, const std::vector<int>& labels) {
  if (logits->value.rank() != 2) throw DimensionError("cross_entropy: expects [N,K] logits");
  const int n = logits->value.dim(0), k = logits->value.dim(1);
  if (n == 0) throw DimensionError("cross_entropy: empty batch");
  if (static_cast<int>(labels.size()) != n) throw DimensionError("cross_entropy: label count mismatch");
  for (int lab : labels) {
    if (lab < 0 || lab >= k) throw DataError("cross_entropy: label " + std::to_string(lab) + " out of range");
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * k, 0.0);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits->value.data() + static_cast<std::int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    loss += lse - row[labels[static_cast<std::size_t>(i)]];
    for (int j = 0; j < k; ++j) (*probs)[static_cast<std::size_t>(i) * k + j] = std::exp(row[j] - lse);
  }
  loss /= n;
  auto node = make_node(Tensor::scalar(loss), {logits});
  if (node->requires_grad) {
    auto labs = std::make_shared<std::vector<int>>(labels);
    node->backprop = [logits, n, k, probs, labs](Var& self) {
      logits->ensure_grad();
      const double g = self.grad[0] / n;
      for (int i = 0; i < n; ++i) {
        double* dl = logits->grad.data() + static_cast<std::int64_t>(i) * k;
        const double* p = probs->data() + static_cast<std::size_t>(i) * k;
        const int lab = (*labs)[static_cast<std::size_t>(i)];
        for (int j = 0; j < k; ++j) dl[j] += g * (p[j] - (j == lab ? 1.0 : 0.0));
      }
    };
  }
  return node;
}

}  // namespace cascade
