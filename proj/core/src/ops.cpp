#include "lano/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lano/error.hpp"

namespace lano {
namespace {

template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> xs) {
  if (GradientTape<T>::active() == nullptr) return false;
  for (const auto* x : xs) {
    if (x->defined() && x->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, bool track) {
  Tensor<T> out(std::move(shape), std::move(values));
  out.node()->requires_grad = track;
  return out;
}

template <typename T, typename F>
void record(std::string_view op, F&& backward) {
  GradientTape<T>::active()->record(op, std::forward<F>(backward));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b,
                             const std::string& detail = {}) {
  std::string msg = std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                    shape_string(b);
  if (!detail.empty()) msg += " (" + detail + ")";
  throw ShapeError(msg);
}

void require_defined(const char* op, bool defined) {
  if (!defined) throw ValueError(std::string(op) + ": undefined operand");
}

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  std::size_t numel = 0;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast make_broadcast(const char* op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Broadcast bc;
  bc.out.assign(r, 1);
  bc.stride_a.assign(r, 0);
  bc.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t d = 0; d < r; ++d) {
    const std::size_t oa = r - a.size();
    const std::size_t ob = r - b.size();
    const std::size_t ea = d >= oa ? a[d - oa] : 1;
    const std::size_t eb = d >= ob ? b[d - ob] : 1;
    if (ea != eb && ea != 1 && eb != 1) shape_fail(op, a, b, "not broadcastable");
    bc.out[d] = std::max(ea, eb);
    if (ea == 0 || eb == 0) bc.out[d] = 0;
    bc.stride_a[d] = (d >= oa && ea != 1) ? sa[d - oa] : 0;
    bc.stride_b[d] = (d >= ob && eb != 1) ? sb[d - ob] : 0;
  }
  bc.numel = shape_numel(bc.out);
  return bc;
}

// Calls f(i, ia, ib) for every flat output index with matching input offsets.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  if (bc.numel == 0) return;
  const std::size_t r = bc.out.size();
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = bc.out[r - 1];
  const std::size_t ia_step = bc.stride_a[r - 1];
  const std::size_t ib_step = bc.stride_b[r - 1];
  const std::size_t outer = bc.numel / inner;
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  std::size_t i = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) f(i++, oa + j * ia_step, ob + j * ib_step);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      oa += bc.stride_a[d];
      ob += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      oa -= bc.stride_a[d] * bc.out[d];
      ob -= bc.stride_b[d] * bc.out[d];
      idx[d] = 0;
    }
  }
}

// Generic broadcasting binary op. fwd(x, y) -> z; da(x, y, g) and db(x, y, g)
// give the per-element contributions to each operand's gradient.
template <typename T, typename Fwd, typename Da, typename Db>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Da da,
                    Db db) {
  require_defined(name, a.defined() && b.defined());
  const bool track = tracking<T>({&a, &b});
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;

  if (a.shape() == b.shape()) {
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    auto result = make_result<T>(a.shape(), std::move(out), track);
    if (track) {
      record<T>(name, [an = a.node(), bn = b.node(), on = result.node(), da, db] {
        on->ensure_grad();
        const auto& g = on->grad;
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += da(an->value[i], bn->value[i], g[i]);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += db(an->value[i], bn->value[i], g[i]);
        }
      });
    }
    return result;
  }

  Broadcast bc = make_broadcast(name, a.shape(), b.shape());
  std::vector<T> out(bc.numel);
  for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(av[ia], bv[ib]);
  });
  auto result = make_result<T>(bc.out, std::move(out), track);
  if (track) {
    record<T>(name, [an = a.node(), bn = b.node(), on = result.node(), bc, da, db] {
      on->ensure_grad();
      const auto& g = on->grad;
      const auto& x = an->value;
      const auto& y = bn->value;
      if (an->requires_grad) {
        an->ensure_grad();
        auto& gx = an->grad;
        for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          gx[ia] += da(x[ia], y[ib], g[i]);
        });
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        auto& gy = bn->grad;
        for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          gy[ib] += db(x[ia], y[ib], g[i]);
        });
      }
    });
  }
  return result;
}

template <typename T, typename Fwd, typename Dx>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, Fwd fwd, Dx dx) {
  require_defined(name, x.defined());
  const bool track = tracking<T>({&x});
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  auto result = make_result<T>(x.shape(), std::move(out), track);
  if (track) {
    record<T>(name, [xn = x.node(), on = result.node(), dx] {
      on->ensure_grad();
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        xn->grad[i] += dx(xn->value[i], on->value[i], on->grad[i]);
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// GEMM: C[M,N] += op(A) * op(B). A is stored [M,K] (or [K,M] if ta), B is
// stored [K,N] (or [N,K] if tb).
// ---------------------------------------------------------------------------

template <typename T>
void gemm_acc(bool ta, bool tb, std::size_t M, std::size_t N, std::size_t K, const T* A,
              const T* B, T* C) {
  std::vector<T> bt;
  const T* bp = B;
  if (tb) {
    bt.resize(K * N);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) bt[k * N + n] = B[n * K + k];
    }
    bp = bt.data();
  }
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T aik = ta ? A[k * M + i] : A[i * K + k];
      const T* b = bp + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

std::size_t axis_outer(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < axis; ++i) n *= s[i];
  return n;
}

std::size_t axis_inner(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; },
      [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; },
      [](T, T, T g) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
      [](T x, T, T g) { return g * x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T g) { return g / y; },
      [](T x, T y, T g) { return -g * x / (y * y); });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return unary_op<T>(
      "add_scalar", x, [s](T v) { return v + s; }, [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return unary_op<T>(
      "scale", x, [s](T v) { return v * s; }, [s](T, T, T g) { return g * s; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary_op<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T, T g) { return v > T(0) ? g : (v < T(0) ? -g : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary_op<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T, T g) { return T(2) * v * g; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary_op<T>(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T, T g) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        return g * (cdf + v * pdf);
      });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
  require_defined("matmul", a.defined() && b.defined());
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || as.size() > 3 || bs.size() < 2 || bs.size() > 3) {
    shape_fail("matmul", as, bs, "operands must be 2-D or 3-D");
  }
  const bool a_batched = as.size() == 3;
  const bool b_batched = bs.size() == 3;
  const std::size_t batch_a = a_batched ? as[0] : 1;
  const std::size_t batch_b = b_batched ? bs[0] : 1;
  if (a_batched && b_batched && batch_a != batch_b) shape_fail("matmul", as, bs, "batch extents differ");
  const std::size_t batch = std::max(batch_a, batch_b);
  const std::size_t ar = as[as.size() - 2], ac = as[as.size() - 1];
  const std::size_t br = bs[bs.size() - 2], bc = bs[bs.size() - 1];
  const std::size_t M = trans_a ? ac : ar;
  const std::size_t K = trans_a ? ar : ac;
  const std::size_t Kb = trans_b ? bc : br;
  const std::size_t N = trans_b ? br : bc;
  if (K != Kb) shape_fail("matmul", as, bs, "inner extents differ");

  const bool track = tracking<T>({&a, &b});
  const bool out_batched = a_batched || b_batched;
  Shape out_shape = out_batched ? Shape{batch, M, N} : Shape{M, N};
  std::vector<T> out(batch * M * N, T(0));
  const T* ap = a.node()->value.data();
  const T* bp = b.node()->value.data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_acc(trans_a, trans_b, M, N, K, ap + (a_batched ? i * M * K : 0),
             bp + (b_batched ? i * K * N : 0), out.data() + i * M * N);
  }
  auto result = make_result<T>(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>("matmul", [an = a.node(), bn = b.node(), on = result.node(), trans_a, trans_b,
                         a_batched, b_batched, batch, M, N, K] {
      on->ensure_grad();
      const T* g = on->grad.data();
      const T* av = an->value.data();
      const T* bv = bn->value.data();
      if (an->requires_grad) {
        an->ensure_grad();
        T* ga = an->grad.data();
        for (std::size_t i = 0; i < batch; ++i) {
          const T* gi = g + i * M * N;
          const T* bi = bv + (b_batched ? i * K * N : 0);
          T* gai = ga + (a_batched ? i * M * K : 0);
          if (!trans_a) {
            gemm_acc(false, !trans_b, M, K, N, gi, bi, gai);  // dC * op(B)^T
          } else {
            gemm_acc(trans_b, true, K, M, N, bi, gi, gai);  // op(B) * dC^T
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        for (std::size_t i = 0; i < batch; ++i) {
          const T* gi = g + i * M * N;
          const T* ai = av + (a_batched ? i * M * K : 0);
          T* gbi = gb + (b_batched ? i * K * N : 0);
          if (!trans_b) {
            gemm_acc(!trans_a, false, K, N, M, ai, gi, gbi);  // op(A)^T * dC
          } else {
            gemm_acc(true, trans_a, N, K, M, gi, ai, gbi);  // dC^T * op(A)
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  require_defined("linear", x.defined() && w.defined());
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.empty() || ws.size() != 2 || xs.back() != ws[0]) shape_fail("linear", xs, ws);
  const std::size_t in = ws[0];
  const std::size_t outd = ws[1];
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outd)) {
    shape_fail("linear", ws, bias.shape(), "bias extent");
  }
  const std::size_t rows = x.numel() / in;
  const bool track = tracking<T>({&x, &w, &bias});
  std::vector<T> out(rows * outd, T(0));
  if (bias.defined()) {
    const auto& bv = bias.node()->value;
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * outd);
  }
  gemm_acc(false, false, rows, outd, in, x.node()->value.data(), w.node()->value.data(), out.data());
  Shape out_shape = xs;
  out_shape.back() = outd;
  auto result = make_result<T>(std::move(out_shape), std::move(out), track);
  if (track) {
    std::shared_ptr<TensorNode<T>> bnode = bias.defined() ? bias.node() : nullptr;
    record<T>("linear", [xn = x.node(), wn = w.node(), bnode, on = result.node(), rows, in, outd] {
      on->ensure_grad();
      const T* g = on->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        gemm_acc(false, true, rows, in, outd, g, wn->value.data(), xn->grad.data());
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        gemm_acc(true, false, in, outd, rows, xn->value.data(), g, wn->grad.data());
      }
      if (bnode && bnode->requires_grad) {
        bnode->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < outd; ++j) bnode->grad[j] += g[r * outd + j];
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Normalizations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require_defined("softmax", x.defined());
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(s));
  }
  const std::size_t outer = axis_outer(s, axis);
  const std::size_t len = s[axis];
  const std::size_t inner = axis_inner(s, axis);
  const auto& xv = x.node()->value;
  std::vector<T> y(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      T total = T(0);
      for (std::size_t k = 0; k < len; ++k) {
        const T e = std::exp(xv[base + k * inner] - mx);
        y[base + k * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t k = 0; k < len; ++k) y[base + k * inner] *= inv;
    }
  }
  const bool track = tracking<T>({&x});
  auto result = make_result<T>(s, std::move(y), track);
  if (track) {
    record<T>("softmax", [xn = x.node(), on = result.node(), outer, len, inner] {
      on->ensure_grad();
      xn->ensure_grad();
      const auto& yv = on->value;
      const auto& g = on->grad;
      auto& gx = xn->grad;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = T(0);
          for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * yv[base + k * inner];
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t idx = base + k * inner;
            gx[idx] += yv[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_defined("layer_norm", x.defined() && gamma.defined() && beta.defined());
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("layer_norm: scalar input");
  const std::size_t C = s.back();
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    shape_fail("layer_norm", s, gamma.shape(), "affine extent");
  }
  const std::size_t rows = x.numel() / C;
  const auto& xv = x.node()->value;
  const auto& gv = gamma.node()->value;
  const auto& bv = beta.node()->value;
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(rows);
  std::vector<T> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * C;
    T mu = T(0);
    for (std::size_t c = 0; c < C; ++c) mu += xr[c];
    mu /= T(C);
    T var = T(0);
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= T(C);
    const T inv = T(1) / std::sqrt(var + eps);
    rstd[r] = inv;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (xr[c] - mu) * inv;
      xhat[r * C + c] = h;
      y[r * C + c] = h * gv[c] + bv[c];
    }
  }
  const bool track = tracking<T>({&x, &gamma, &beta});
  auto result = make_result<T>(s, std::move(y), track);
  if (track) {
    record<T>("layer_norm", [xn = x.node(), gn = gamma.node(), bn = beta.node(),
                             on = result.node(), xhat = std::move(xhat), rstd = std::move(rstd),
                             rows, C] {
      on->ensure_grad();
      const auto& g = on->grad;
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < C; ++c) gn->grad[c] += g[r * C + c] * xhat[r * C + c];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < C; ++c) bn->grad[c] += g[r * C + c];
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        const auto& gam = gn->value;
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_d = T(0);
          T mean_dx = T(0);
          for (std::size_t c = 0; c < C; ++c) {
            const T d = g[r * C + c] * gam[c];
            mean_d += d;
            mean_dx += d * xhat[r * C + c];
          }
          mean_d /= T(C);
          mean_dx /= T(C);
          for (std::size_t c = 0; c < C; ++c) {
            const T d = g[r * C + c] * gam[c];
            xn->grad[r * C + c] += rstd[r] * (d - mean_d - xhat[r * C + c] * mean_dx);
          }
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  require_defined("sum", x.defined());
  T total = T(0);
  for (T v : x.node()->value) total += v;
  const bool track = tracking<T>({&x});
  auto result = make_result<T>(Shape{}, std::vector<T>{total}, track);
  if (track) {
    record<T>("sum", [xn = x.node(), on = result.node()] {
      on->ensure_grad();
      xn->ensure_grad();
      const T g = on->grad[0];
      for (auto& v : xn->grad) v += g;
    });
  }
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis, bool keepdim) {
  require_defined("sum", x.defined());
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("sum: axis " + std::to_string(axis) + " invalid for " + shape_string(s));
  }
  const std::size_t outer = axis_outer(s, axis);
  const std::size_t len = s[axis];
  const std::size_t inner = axis_inner(s, axis);
  const auto& xv = x.node()->value;
  std::vector<T> out(outer * inner, T(0));
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      const T* row = xv.data() + (o * len + k) * inner;
      T* dst = out.data() + o * inner;
      for (std::size_t in = 0; in < inner; ++in) dst[in] += row[in];
    }
  }
  Shape out_shape = s;
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  const bool track = tracking<T>({&x});
  auto result = make_result<T>(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>("sum_axis", [xn = x.node(), on = result.node(), outer, len, inner] {
      on->ensure_grad();
      xn->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const T* g = on->grad.data() + o * inner;
        for (std::size_t k = 0; k < len; ++k) {
          T* dst = xn->grad.data() + (o * len + k) * inner;
          for (std::size_t in = 0; in < inner; ++in) dst[in] += g[in];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis, bool keepdim) {
  const T n = T(x.dim(axis));
  return scale(sum(x, axis, keepdim), T(1) / n);
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require_defined("reshape", x.defined());
  if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape, "element count");
  const bool track = tracking<T>({&x});
  auto result = make_result<T>(std::move(shape), x.node()->value, track);
  if (track) {
    record<T>("reshape", [xn = x.node(), on = result.node()] {
      on->ensure_grad();
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  require_defined("permute", x.defined());
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) shape_fail("permute", s, Shape(axes.begin(), axes.end()), "axis count");
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) shape_fail("permute", s, Shape(axes.begin(), axes.end()), "not a permutation");
    seen[a] = true;
  }
  const auto in_strides = contiguous_strides(s);
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = s[axes[d]];
    src_stride[d] = in_strides[axes[d]];
  }
  // Map each output position to its source offset.
  Broadcast walk;
  walk.out = out_shape;
  walk.stride_a = src_stride;
  walk.stride_b.assign(r, 0);
  walk.numel = shape_numel(out_shape);
  const auto& xv = x.node()->value;
  std::vector<T> out(walk.numel);
  for_each_broadcast(walk, [&](std::size_t i, std::size_t src, std::size_t) { out[i] = xv[src]; });
  const bool track = tracking<T>({&x});
  auto result = make_result<T>(std::move(out_shape), std::move(out), track);
  if (track) {
    record<T>("permute", [xn = x.node(), on = result.node(), walk] {
      on->ensure_grad();
      xn->ensure_grad();
      const auto& g = on->grad;
      auto& gx = xn->grad;
      for_each_broadcast(walk, [&](std::size_t i, std::size_t src, std::size_t) { gx[src] += g[i]; });
    });
  }
  return result;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t i, std::size_t j) {
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t d = 0; d < axes.size(); ++d) axes[d] = d;
  if (i >= axes.size() || j >= axes.size()) {
    throw ShapeError("transpose: axes out of range for " + shape_string(x.shape()));
  }
  std::swap(axes[i], axes[j]);
  return permute(x, axes);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ValueError("concat: no operands");
  for (const auto& x : xs) require_defined("concat", x.defined());
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " invalid for " + shape_string(s0));
  }
  std::size_t total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != s0.size()) shape_fail("concat", s0, s, "rank");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) shape_fail("concat", s0, s);
    }
    total += s[axis];
  }
  const std::size_t outer = axis_outer(s0, axis);
  const std::size_t inner = axis_inner(s0, axis);
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const std::size_t chunk = x.dim(axis) * inner;
    const auto& xv = x.node()->value;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(xv.data() + o * chunk, chunk, out.data() + o * total * inner + off * inner);
    }
    off += x.dim(axis);
  }
  bool track = false;
  if (GradientTape<T>::active()) {
    for (const auto& x : xs) track = track || x.requires_grad();
  }
  auto result = make_result<T>(std::move(out_shape), std::move(out), track);
  if (track) {
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    std::vector<std::size_t> extents;
    for (const auto& x : xs) {
      nodes.push_back(x.node());
      extents.push_back(x.dim(axis));
    }
    record<T>("concat", [nodes, extents, offsets, on = result.node(), outer, inner, total] {
      on->ensure_grad();
      for (std::size_t n = 0; n < nodes.size(); ++n) {
        auto& xn = *nodes[n];
        if (!xn.requires_grad) continue;
        xn.ensure_grad();
        const std::size_t chunk = extents[n] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const T* g = on->grad.data() + o * total * inner + offsets[n] * inner;
          T* dst = xn.grad.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const Tensor<T>& mask, T value) {
  require_defined("masked_fill", x.defined() && mask.defined());
  Broadcast bc = make_broadcast("masked_fill", x.shape(), mask.shape());
  if (bc.out != x.shape()) shape_fail("masked_fill", x.shape(), mask.shape(), "mask must broadcast to input");
  const auto& xv = x.node()->value;
  const auto& mv = mask.node()->value;
  std::vector<T> out(xv.size());
  for_each_broadcast(bc, [&](std::size_t i, std::size_t ix, std::size_t im) {
    out[i] = mv[im] != T(0) ? value : xv[ix];
  });
  const bool track = tracking<T>({&x});
  auto result = make_result<T>(x.shape(), std::move(out), track);
  if (track) {
    record<T>("masked_fill", [xn = x.node(), mn = mask.node(), on = result.node(), bc] {
      on->ensure_grad();
      xn->ensure_grad();
      for_each_broadcast(bc, [&](std::size_t i, std::size_t ix, std::size_t im) {
        if (mn->value[im] == T(0)) xn->grad[ix] += on->grad[i];
      });
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t groups,
                 std::size_t padding) {
  require_defined("conv2d", x.defined() && w.defined());
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4) shape_fail("conv2d", xs, ws, "expected [C,H,W] and [O,I,kh,kw]");
  const std::size_t cin = xs[0], H = xs[1], W = xs[2];
  const std::size_t cout = ws[0], cin_g = ws[1], kh = ws[2], kw = ws[3];
  if (groups == 0 || cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g) {
    shape_fail("conv2d", xs, ws, "group structure");
  }
  if (H + 2 * padding < kh || W + 2 * padding < kw) shape_fail("conv2d", xs, ws, "kernel larger than padded input");
  if (bias.defined() && bias.shape() != Shape{cout}) shape_fail("conv2d", ws, bias.shape(), "bias extent");
  const std::size_t Ho = H + 2 * padding - kh + 1;
  const std::size_t Wo = W + 2 * padding - kw + 1;
  const std::size_t cout_g = cout / groups;
  const auto pad = static_cast<std::ptrdiff_t>(padding);

  // Visits every (output, input, weight) index triple of the convolution,
  // calling f(out_offset, in_offset, weight_index, run_length) for each
  // contiguous run of valid output columns.
  auto sweep = [=](auto&& f) {
    for (std::size_t co = 0; co < cout; ++co) {
      const std::size_t grp = co / cout_g;
      for (std::size_t cl = 0; cl < cin_g; ++cl) {
        const std::size_t ci = grp * cin_g + cl;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t widx = ((co * cin_g + cl) * kh + ky) * kw + kx;
            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
            const std::size_t ox0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
            const std::size_t ox1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(Wo),
                                                             static_cast<std::ptrdiff_t>(W) - dx);
            if (ox0 >= ox1) continue;
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              f((co * Ho + oy) * Wo + ox0, (ci * H + static_cast<std::size_t>(iy)) * W +
                    static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ox0) + dx),
                widx, ox1 - ox0);
            }
          }
        }
      }
    }
  };

  const auto& xv = x.node()->value;
  const auto& wv = w.node()->value;
  std::vector<T> out(cout * Ho * Wo, T(0));
  if (bias.defined()) {
    for (std::size_t co = 0; co < cout; ++co) {
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(co * Ho * Wo), Ho * Wo, bias[co]);
    }
  }
  sweep([&](std::size_t ooff, std::size_t ioff, std::size_t widx, std::size_t run) {
    const T wk = wv[widx];
    T* o = out.data() + ooff;
    const T* in = xv.data() + ioff;
    for (std::size_t t = 0; t < run; ++t) o[t] += wk * in[t];
  });

  const bool track = tracking<T>({&x, &w, &bias});
  auto result = make_result<T>(Shape{cout, Ho, Wo}, std::move(out), track);
  if (track) {
    std::shared_ptr<TensorNode<T>> bnode = bias.defined() ? bias.node() : nullptr;
    record<T>("conv2d", [xn = x.node(), wn = w.node(), bnode, on = result.node(), sweep, cout, Ho, Wo] {
      on->ensure_grad();
      const auto& g = on->grad;
      if (xn->requires_grad) xn->ensure_grad();
      if (wn->requires_grad) wn->ensure_grad();
      const bool want_x = xn->requires_grad;
      const bool want_w = wn->requires_grad;
      sweep([&](std::size_t ooff, std::size_t ioff, std::size_t widx, std::size_t run) {
        const T* go = g.data() + ooff;
        if (want_x) {
          const T wk = wn->value[widx];
          T* gi = xn->grad.data() + ioff;
          for (std::size_t t = 0; t < run; ++t) gi[t] += wk * go[t];
        }
        if (want_w) {
          const T* in = xn->value.data() + ioff;
          T acc = T(0);
          for (std::size_t t = 0; t < run; ++t) acc += go[t] * in[t];
          wn->grad[widx] += acc;
        }
      });
      if (bnode && bnode->requires_grad) {
        bnode->ensure_grad();
        for (std::size_t co = 0; co < cout; ++co) {
          T acc = T(0);
          for (std::size_t i = 0; i < Ho * Wo; ++i) acc += g[co * Ho * Wo + i];
          bnode->grad[co] += acc;
        }
      }
    });
  }
  return result;
}

#define LANO_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> abs(const Tensor<T>&);                                                \
  template Tensor<T> square(const Tensor<T>&);                                             \
  template Tensor<T> gelu(const Tensor<T>&);                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                               \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> sum(const Tensor<T>&, std::size_t, bool);                             \
  template Tensor<T> mean(const Tensor<T>&);                                               \
  template Tensor<T> mean(const Tensor<T>&, std::size_t, bool);                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                     \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);           \
  template Tensor<T> transpose(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                   \
  template Tensor<T> masked_fill(const Tensor<T>&, const Tensor<T>&, T);                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                            std::size_t);

LANO_INSTANTIATE_OPS(float)
LANO_INSTANTIATE_OPS(double)

#undef LANO_INSTANTIATE_OPS

}  // namespace lano
