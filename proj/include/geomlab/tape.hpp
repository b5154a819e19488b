#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "geomlab/common.hpp"
#include "geomlab/params.hpp"
#include "geomlab/tensor.hpp"

namespace geomlab {

// Reverse-mode autodiff tape. Ops append nodes in topological order; backward
// walks the tape in reverse, then accumulates (sums) leaf gradients into the
// ParamSet tensors they were bound from. Gradients persist in the ParamSet
// until explicitly zeroed, so repeated backward passes accumulate.
//
// Shape rules are strict: no broadcasting beyond explicit scalar ops. Every
// forward result is checked for NaN/Inf.
template <typename T>
class Tape {
 public:
  using Id = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----

  Id input(Tensor<T> v, bool needs_grad = false) {
    Node n;
    n.owned = std::move(v);
    n.needs_grad = needs_grad;
    n.op = "input";
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  // Bind a parameter by reference; grads flow back into ps when trainable.
  Id param(ParamSet<T>& ps, const std::string& name) {
    auto& e = ps.entry(name);
    const bool trainable = e.trainable;
    Node n;
    n.view = &e.value;
    n.needs_grad = trainable;
    n.op = "param";
    n.bound = trainable ? &e.value : nullptr;
    nodes_.push_back(std::move(n));
    Id id = static_cast<Id>(nodes_.size() - 1);
    if (trainable) bound_.push_back(id);
    return id;
  }

  const Tensor<T>& val(Id id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.view ? *n.view : n.owned;
  }

  std::vector<T>& grad_of(Id id) { return nodes_[static_cast<size_t>(id)].grad; }

  bool needs(Id id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  size_t size() const { return nodes_.size(); }

  // ---- elementwise ----

  Id add(Id a, Id b) {
    require_same("add", a, b);
    Tensor<T> out = val(a);
    const auto& bv = val(b).data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv[i];
    return push("add", std::move(out), {a, b}, [a, b](Tape& t, Id self) {
      const auto& g = t.grad_of(self);
      if (t.needs(a)) axpy(t.grad_of(a), g, T(1));
      if (t.needs(b)) axpy(t.grad_of(b), g, T(1));
    });
  }

  Id sub(Id a, Id b) {
    require_same("sub", a, b);
    Tensor<T> out = val(a);
    const auto& bv = val(b).data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv[i];
    return push("sub", std::move(out), {a, b}, [a, b](Tape& t, Id self) {
      const auto& g = t.grad_of(self);
      if (t.needs(a)) axpy(t.grad_of(a), g, T(1));
      if (t.needs(b)) axpy(t.grad_of(b), g, T(-1));
    });
  }

  Id mul(Id a, Id b) {
    require_same("mul", a, b);
    Tensor<T> out = val(a);
    const auto& bv = val(b).data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv[i];
    return push("mul", std::move(out), {a, b}, [a, b](Tape& t, Id self) {
      const auto& g = t.grad_of(self);
      const auto& av = t.val(a).data;
      const auto& bv2 = t.val(b).data;
      if (t.needs(a)) {
        auto& ga = t.grad_of(a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (t.needs(b)) {
        auto& gb = t.grad_of(b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }

  Id scale(Id a, double s) {
    Tensor<T> out = val(a);
    const T sv = static_cast<T>(s);
    for (auto& v : out.data) v *= sv;
    return push("scale", std::move(out), {a}, [a, sv](Tape& t, Id self) {
      if (t.needs(a)) axpy(t.grad_of(a), t.grad_of(self), sv);
    });
  }

  Id add_scalar(Id a, double s) {
    Tensor<T> out = val(a);
    const T sv = static_cast<T>(s);
    for (auto& v : out.data) v += sv;
    return push("add_scalar", std::move(out), {a}, [a](Tape& t, Id self) {
      if (t.needs(a)) axpy(t.grad_of(a), t.grad_of(self), T(1));
    });
  }

  Id silu(Id a) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) {
      double x = static_cast<double>(v);
      v = static_cast<T>(x / (1.0 + std::exp(-x)));
    }
    return push("silu", std::move(out), {a}, [a](Tape& t, Id self) {
      if (!t.needs(a)) return;
      const auto& g = t.grad_of(self);
      const auto& x = t.val(a).data;
      auto& ga = t.grad_of(a);
      for (size_t i = 0; i < g.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x[i])));
        ga[i] += g[i] * static_cast<T>(s * (1.0 + static_cast<double>(x[i]) * (1.0 - s)));
      }
    });
  }

  Id relu(Id a) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    return push("relu", std::move(out), {a}, [a](Tape& t, Id self) {
      if (!t.needs(a)) return;
      const auto& g = t.grad_of(self);
      const auto& x = t.val(a).data;
      auto& ga = t.grad_of(a);
      for (size_t i = 0; i < g.size(); ++i)
        if (x[i] > T(0)) ga[i] += g[i];
    });
  }

  // ---- shape ----

  Id reshape(Id a, std::vector<int> shape) {
    if (Tensor<T>::numel_of(shape) != val(a).numel())
      throw ShapeError(strformat("reshape: %s -> %s changes element count",
                                 shape_str(val(a).shape).c_str(), shape_str(shape).c_str()));
    Tensor<T> out(shape, val(a).data);
    return push("reshape", std::move(out), {a}, [a](Tape& t, Id self) {
      if (t.needs(a)) axpy(t.grad_of(a), t.grad_of(self), T(1));
    });
  }

  // 2-d transpose.
  Id transpose(Id a) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + shape_str(x.shape));
    const int r = x.dim(0), c = x.dim(1);
    Tensor<T> out({c, r});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(j) * r + i] = x.data[static_cast<size_t>(i) * c + j];
    return push("transpose", std::move(out), {a}, [a, r, c](Tape& t, Id self) {
      if (!t.needs(a)) return;
      const auto& g = t.grad_of(self);
      auto& ga = t.grad_of(a);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) ga[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j) * r + i];
    });
  }

  // ---- linear algebra ----

  Id matmul(Id a, Id b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
      throw ShapeError(strformat("matmul: incompatible shapes %s x %s",
                                 shape_str(A.shape).c_str(), shape_str(B.shape).c_str()));
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> out({m, n});
    for (int i = 0; i < m; ++i) {
      const T* arow = &A.data[static_cast<size_t>(i) * k];
      T* orow = &out.data[static_cast<size_t>(i) * n];
      for (int l = 0; l < k; ++l) {
        const T av = arow[l];
        if (av == T(0)) continue;
        const T* brow = &B.data[static_cast<size_t>(l) * n];
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
    return push("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, Id self) {
      const auto& g = t.grad_of(self);
      if (t.needs(a)) {
        const auto& B2 = t.val(b).data;
        auto& ga = t.grad_of(a);
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l) {
            const T* brow = &B2[static_cast<size_t>(l) * n];
            const T* grow = &g[static_cast<size_t>(i) * n];
            T acc = T(0);
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[static_cast<size_t>(i) * k + l] += acc;
          }
      }
      if (t.needs(b)) {
        const auto& A2 = t.val(a).data;
        auto& gb = t.grad_of(b);
        for (int i = 0; i < m; ++i) {
          const T* grow = &g[static_cast<size_t>(i) * n];
          for (int l = 0; l < k; ++l) {
            const T av = A2[static_cast<size_t>(i) * k + l];
            if (av == T(0)) continue;
            T* gbrow = &gb[static_cast<size_t>(l) * n];
            for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    });
  }

  // Softmax over the last axis of a rank-2 tensor.
  Id softmax_rows(Id a) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2) throw ShapeError("softmax: expected rank-2, got " + shape_str(x.shape));
    const int r = x.dim(0), c = x.dim(1);
    Tensor<T> out({r, c});
    for (int i = 0; i < r; ++i) {
      const T* xi = &x.data[static_cast<size_t>(i) * c];
      T* oi = &out.data[static_cast<size_t>(i) * c];
      T mx = xi[0];
      for (int j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
      double sum = 0.0;
      for (int j = 0; j < c; ++j) {
        double e = std::exp(static_cast<double>(xi[j] - mx));
        oi[j] = static_cast<T>(e);
        sum += e;
      }
      const T inv = static_cast<T>(1.0 / sum);
      for (int j = 0; j < c; ++j) oi[j] *= inv;
    }
    return push("softmax", std::move(out), {a}, [a, r, c](Tape& t, Id self) {
      if (!t.needs(a)) return;
      const auto& g = t.grad_of(self);
      const auto& y = t.val(self).data;
      auto& ga = t.grad_of(a);
      for (int i = 0; i < r; ++i) {
        const T* gi = &g[static_cast<size_t>(i) * c];
        const T* yi = &y[static_cast<size_t>(i) * c];
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += static_cast<double>(gi[j]) * yi[j];
        T* gai = &ga[static_cast<size_t>(i) * c];
        for (int j = 0; j < c; ++j)
          gai[j] += yi[j] * (gi[j] - static_cast<T>(dot));
      }
    });
  }

  // ---- embeddings ----

  Id embedding(Id table, std::vector<int> ids) {
    const Tensor<T>& tb = val(table);
    if (tb.rank() != 2) throw ShapeError("embedding: table must be rank-2");
    const int V = tb.dim(0), E = tb.dim(1);
    const int L = static_cast<int>(ids.size());
    for (int id : ids)
      if (id < 0 || id >= V)
        throw ShapeError(strformat("embedding: token id %d outside table of %d rows", id, V));
    Tensor<T> out({L, E});
    for (int l = 0; l < L; ++l)
      std::memcpy(&out.data[static_cast<size_t>(l) * E], &tb.data[static_cast<size_t>(ids[static_cast<size_t>(l)]) * E],
                  sizeof(T) * static_cast<size_t>(E));
    return push("embedding", std::move(out), {table},
                [table, ids = std::move(ids), E](Tape& t, Id self) {
                  if (!t.needs(table)) return;
                  const auto& g = t.grad_of(self);
                  auto& gt = t.grad_of(table);
                  for (size_t l = 0; l < ids.size(); ++l) {
                    T* dst = &gt[static_cast<size_t>(ids[l]) * E];
                    const T* src = &g[l * static_cast<size_t>(E)];
                    for (int e = 0; e < E; ++e) dst[e] += src[e];
                  }
                });
  }

  // Lookup over two stacked tables: ids < split hit `base`, the rest hit `ext`
  // at row (id - split). Used for vocabulary extension without touching the
  // original embedding tensor.
  Id embedding2(Id base, Id ext, std::vector<int> ids, int split) {
    const Tensor<T>& tb = val(base);
    const Tensor<T>& te = val(ext);
    if (tb.rank() != 2 || te.rank() != 2 || tb.dim(1) != te.dim(1))
      throw ShapeError("embedding2: tables must be rank-2 with equal width");
    if (split != tb.dim(0)) throw ShapeError("embedding2: split must equal base row count");
    const int E = tb.dim(1);
    const int V = tb.dim(0) + te.dim(0);
    const int L = static_cast<int>(ids.size());
    for (int id : ids)
      if (id < 0 || id >= V)
        throw ShapeError(strformat("embedding2: token id %d outside table of %d rows", id, V));
    Tensor<T> out({L, E});
    for (int l = 0; l < L; ++l) {
      int id = ids[static_cast<size_t>(l)];
      const T* src = id < split ? &tb.data[static_cast<size_t>(id) * E]
                                : &te.data[static_cast<size_t>(id - split) * E];
      std::memcpy(&out.data[static_cast<size_t>(l) * E], src, sizeof(T) * static_cast<size_t>(E));
    }
    return push("embedding2", std::move(out), {base, ext},
                [base, ext, ids = std::move(ids), split, E](Tape& t, Id self) {
                  const auto& g = t.grad_of(self);
                  const bool nb = t.needs(base), ne = t.needs(ext);
                  if (!nb && !ne) return;
                  for (size_t l = 0; l < ids.size(); ++l) {
                    const int id = ids[l];
                    const T* src = &g[l * static_cast<size_t>(E)];
                    if (id < split) {
                      if (!nb) continue;
                      T* dst = &t.grad_of(base)[static_cast<size_t>(id) * E];
                      for (int e = 0; e < E; ++e) dst[e] += src[e];
                    } else {
                      if (!ne) continue;
                      T* dst = &t.grad_of(ext)[static_cast<size_t>(id - split) * E];
                      for (int e = 0; e < E; ++e) dst[e] += src[e];
                    }
                  }
                });
  }

  // ---- convolutions (3x3 kernels, pad 1) ----

  // x: [Ci,H,W], w: [Co,Ci,3,3], b: [Co]; stride 1 or 2.
  Id conv2d(Id x, Id w, Id b, int stride) {
    const Tensor<T>& X = val(x);
    const Tensor<T>& W = val(w);
    const Tensor<T>& B = val(b);
    if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
    if (X.rank() != 3 || W.rank() != 4 || W.dim(2) != 3 || W.dim(3) != 3 || B.rank() != 1)
      throw ShapeError(strformat("conv2d: bad shapes x=%s w=%s b=%s", shape_str(X.shape).c_str(),
                                 shape_str(W.shape).c_str(), shape_str(B.shape).c_str()));
    if (W.dim(1) != X.dim(0) || B.dim(0) != W.dim(0))
      throw ShapeError(strformat("conv2d: channel mismatch x=%s w=%s", shape_str(X.shape).c_str(),
                                 shape_str(W.shape).c_str()));
    const int Ci = X.dim(0), H = X.dim(1), Wd = X.dim(2), Co = W.dim(0);
    const int Ho = (H - 1) / stride + 1, Wo = (Wd - 1) / stride + 1;
    Tensor<T> out({Co, Ho, Wo});
    for (int co = 0; co < Co; ++co) {
      T* oc = &out.data[static_cast<size_t>(co) * Ho * Wo];
      std::fill(oc, oc + static_cast<size_t>(Ho) * Wo, B.data[static_cast<size_t>(co)]);
      for (int ci = 0; ci < Ci; ++ci) {
        const T* xc = &X.data[static_cast<size_t>(ci) * H * Wd];
        const T* wk = &W.data[(static_cast<size_t>(co) * Ci + ci) * 9];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = wk[ky * 3 + kx];
            if (wv == T(0)) continue;
            int oy0, oy1, ox0, ox1;
            conv_bounds(ky, stride, H, Ho, oy0, oy1);
            conv_bounds(kx, stride, Wd, Wo, ox0, ox1);
            for (int oy = oy0; oy <= oy1; ++oy) {
              const T* xrow = xc + static_cast<size_t>(oy * stride + ky - 1) * Wd + (kx - 1);
              T* orow = oc + static_cast<size_t>(oy) * Wo;
              if (stride == 1) {
                for (int ox = ox0; ox <= ox1; ++ox) orow[ox] += wv * xrow[ox];
              } else {
                for (int ox = ox0; ox <= ox1; ++ox) orow[ox] += wv * xrow[2 * ox];
              }
            }
          }
        }
      }
    }
    return push("conv2d", std::move(out), {x, w, b},
                [x, w, b, Ci, H, Wd, Co, Ho, Wo, stride](Tape& t, Id self) {
                  const auto& g = t.grad_of(self);
                  const auto& X2 = t.val(x).data;
                  const auto& W2 = t.val(w).data;
                  const bool nx = t.needs(x), nw = t.needs(w), nb = t.needs(b);
                  if (nb) {
                    auto& gb = t.grad_of(b);
                    for (int co = 0; co < Co; ++co) {
                      const T* gc = &g[static_cast<size_t>(co) * Ho * Wo];
                      T acc = T(0);
                      for (int i = 0; i < Ho * Wo; ++i) acc += gc[i];
                      gb[static_cast<size_t>(co)] += acc;
                    }
                  }
                  if (!nx && !nw) return;
                  for (int co = 0; co < Co; ++co) {
                    const T* gc = &g[static_cast<size_t>(co) * Ho * Wo];
                    for (int ci = 0; ci < Ci; ++ci) {
                      const T* xc = &X2[static_cast<size_t>(ci) * H * Wd];
                      const T* wk = &W2[(static_cast<size_t>(co) * Ci + ci) * 9];
                      T* gxc = nx ? &t.grad_of(x)[static_cast<size_t>(ci) * H * Wd] : nullptr;
                      T* gwk = nw ? &t.grad_of(w)[(static_cast<size_t>(co) * Ci + ci) * 9] : nullptr;
                      for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                          int oy0, oy1, ox0, ox1;
                          conv_bounds(ky, stride, H, Ho, oy0, oy1);
                          conv_bounds(kx, stride, Wd, Wo, ox0, ox1);
                          const T wv = wk[ky * 3 + kx];
                          T wacc = T(0);
                          for (int oy = oy0; oy <= oy1; ++oy) {
                            const size_t xoff = static_cast<size_t>(oy * stride + ky - 1) * Wd + (kx - 1);
                            const T* grow = gc + static_cast<size_t>(oy) * Wo;
                            if (nx) {
                              T* gxrow = gxc + xoff;
                              if (stride == 1) {
                                for (int ox = ox0; ox <= ox1; ++ox) gxrow[ox] += wv * grow[ox];
                              } else {
                                for (int ox = ox0; ox <= ox1; ++ox) gxrow[2 * ox] += wv * grow[ox];
                              }
                            }
                            if (nw) {
                              const T* xrow = xc + xoff;
                              if (stride == 1) {
                                for (int ox = ox0; ox <= ox1; ++ox) wacc += xrow[ox] * grow[ox];
                              } else {
                                for (int ox = ox0; ox <= ox1; ++ox) wacc += xrow[2 * ox] * grow[ox];
                              }
                            }
                          }
                          if (nw) gwk[ky * 3 + kx] += wacc;
                        }
                      }
                    }
                  }
                });
  }

  // Transposed conv, 3x3 kernel, stride 2, pad 1, output pad 1: exact 2x
  // upsampling. x: [Ci,H,W], w: [Co,Ci,3,3], b: [Co] -> [Co,2H,2W].
  Id conv_transpose2d(Id x, Id w, Id b) {
    const Tensor<T>& X = val(x);
    const Tensor<T>& W = val(w);
    const Tensor<T>& B = val(b);
    if (X.rank() != 3 || W.rank() != 4 || W.dim(2) != 3 || W.dim(3) != 3 || B.rank() != 1)
      throw ShapeError(strformat("conv_transpose2d: bad shapes x=%s w=%s b=%s",
                                 shape_str(X.shape).c_str(), shape_str(W.shape).c_str(),
                                 shape_str(B.shape).c_str()));
    if (W.dim(1) != X.dim(0) || B.dim(0) != W.dim(0))
      throw ShapeError("conv_transpose2d: channel mismatch");
    const int Ci = X.dim(0), H = X.dim(1), Wd = X.dim(2), Co = W.dim(0);
    const int Ho = 2 * H, Wo = 2 * Wd;
    Tensor<T> out({Co, Ho, Wo});
    for (int co = 0; co < Co; ++co) {
      T* oc = &out.data[static_cast<size_t>(co) * Ho * Wo];
      std::fill(oc, oc + static_cast<size_t>(Ho) * Wo, B.data[static_cast<size_t>(co)]);
      for (int ci = 0; ci < Ci; ++ci) {
        const T* xc = &X.data[static_cast<size_t>(ci) * H * Wd];
        const T* wk = &W.data[(static_cast<size_t>(co) * Ci + ci) * 9];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = wk[ky * 3 + kx];
            if (wv == T(0)) continue;
            const int y0 = ky == 0 ? 1 : 0;  // oy = 2y+ky-1 must be >= 0
            const int x0 = kx == 0 ? 1 : 0;
            for (int y = y0; y < H; ++y) {
              const T* xrow = xc + static_cast<size_t>(y) * Wd;
              T* orow = oc + static_cast<size_t>(2 * y + ky - 1) * Wo + (kx - 1);
              for (int xx = x0; xx < Wd; ++xx) orow[2 * xx] += wv * xrow[xx];
            }
          }
        }
      }
    }
    return push("conv_transpose2d", std::move(out), {x, w, b},
                [x, w, b, Ci, H, Wd, Co, Ho, Wo](Tape& t, Id self) {
                  const auto& g = t.grad_of(self);
                  const auto& X2 = t.val(x).data;
                  const auto& W2 = t.val(w).data;
                  const bool nx = t.needs(x), nw = t.needs(w), nb = t.needs(b);
                  if (nb) {
                    auto& gb = t.grad_of(b);
                    for (int co = 0; co < Co; ++co) {
                      const T* gc = &g[static_cast<size_t>(co) * Ho * Wo];
                      T acc = T(0);
                      for (int i = 0; i < Ho * Wo; ++i) acc += gc[i];
                      gb[static_cast<size_t>(co)] += acc;
                    }
                  }
                  if (!nx && !nw) return;
                  for (int co = 0; co < Co; ++co) {
                    const T* gc = &g[static_cast<size_t>(co) * Ho * Wo];
                    for (int ci = 0; ci < Ci; ++ci) {
                      const T* xc = &X2[static_cast<size_t>(ci) * H * Wd];
                      const T* wk = &W2[(static_cast<size_t>(co) * Ci + ci) * 9];
                      T* gxc = nx ? &t.grad_of(x)[static_cast<size_t>(ci) * H * Wd] : nullptr;
                      T* gwk = nw ? &t.grad_of(w)[(static_cast<size_t>(co) * Ci + ci) * 9] : nullptr;
                      for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                          const T wv = wk[ky * 3 + kx];
                          const int y0 = ky == 0 ? 1 : 0;
                          const int x0 = kx == 0 ? 1 : 0;
                          T wacc = T(0);
                          for (int y = y0; y < H; ++y) {
                            const T* grow = gc + static_cast<size_t>(2 * y + ky - 1) * Wo + (kx - 1);
                            const size_t xoff = static_cast<size_t>(y) * Wd;
                            if (nx) {
                              T* gxrow = gxc + xoff;
                              for (int xx = x0; xx < Wd; ++xx) gxrow[xx] += wv * grow[2 * xx];
                            }
                            if (nw) {
                              const T* xrow = xc + xoff;
                              for (int xx = x0; xx < Wd; ++xx) wacc += xrow[xx] * grow[2 * xx];
                            }
                          }
                          if (nw) gwk[ky * 3 + kx] += wacc;
                        }
                      }
                    }
                  }
                });
  }

  // x: [C,H,W] + v: [C], broadcast over the spatial axes.
  Id bias_add_channel(Id x, Id v) {
    const Tensor<T>& X = val(x);
    const Tensor<T>& V = val(v);
    if (X.rank() != 3 || V.rank() != 1 || V.dim(0) != X.dim(0))
      throw ShapeError(strformat("bias_add_channel: x=%s v=%s", shape_str(X.shape).c_str(),
                                 shape_str(V.shape).c_str()));
    const int C = X.dim(0), HW = X.dim(1) * X.dim(2);
    Tensor<T> out = X;
    for (int c = 0; c < C; ++c) {
      T* oc = &out.data[static_cast<size_t>(c) * HW];
      const T bv = V.data[static_cast<size_t>(c)];
      for (int i = 0; i < HW; ++i) oc[i] += bv;
    }
    return push("bias_add_channel", std::move(out), {x, v}, [x, v, C, HW](Tape& t, Id self) {
      const auto& g = t.grad_of(self);
      if (t.needs(x)) axpy(t.grad_of(x), g, T(1));
      if (t.needs(v)) {
        auto& gv = t.grad_of(v);
        for (int c = 0; c < C; ++c) {
          const T* gc = &g[static_cast<size_t>(c) * HW];
          T acc = T(0);
          for (int i = 0; i < HW; ++i) acc += gc[i];
          gv[static_cast<size_t>(c)] += acc;
        }
      }
    });
  }

  // ---- reductions ----

  // mean((pred - target)^2), scalar output.
  Id mean_sq(Id pred, Id target) {
    require_same("mean_sq", pred, target);
    const auto& p = val(pred).data;
    const auto& q = val(target).data;
    const double inv = 1.0 / static_cast<double>(p.size());
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
      acc += d * d;
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc * inv));
    return push("mean_sq", std::move(out), {pred, target}, [pred, target, inv](Tape& t, Id self) {
      const T g = t.grad_of(self)[0];
      const auto& p2 = t.val(pred).data;
      const auto& q2 = t.val(target).data;
      const T c = static_cast<T>(2.0 * inv) * g;
      if (t.needs(pred)) {
        auto& gp = t.grad_of(pred);
        for (size_t i = 0; i < p2.size(); ++i) gp[i] += c * (p2[i] - q2[i]);
      }
      if (t.needs(target)) {
        auto& gq = t.grad_of(target);
        for (size_t i = 0; i < p2.size(); ++i) gq[i] -= c * (p2[i] - q2[i]);
      }
    });
  }

  // mean(w * (pred - target)^2) with an elementwise weight.
  Id mean_sq_weighted(Id pred, Id target, Id weight) {
    require_same("mean_sq_weighted", pred, target);
    require_same("mean_sq_weighted", pred, weight);
    const auto& p = val(pred).data;
    const auto& q = val(target).data;
    const auto& w = val(weight).data;
    const double inv = 1.0 / static_cast<double>(p.size());
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
      acc += static_cast<double>(w[i]) * d * d;
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc * inv));
    return push("mean_sq_weighted", std::move(out), {pred, target, weight},
                [pred, target, weight, inv](Tape& t, Id self) {
                  const T g = t.grad_of(self)[0];
                  const auto& p2 = t.val(pred).data;
                  const auto& q2 = t.val(target).data;
                  const auto& w2 = t.val(weight).data;
                  const T c = static_cast<T>(2.0 * inv) * g;
                  if (t.needs(pred)) {
                    auto& gp = t.grad_of(pred);
                    for (size_t i = 0; i < p2.size(); ++i) gp[i] += c * w2[i] * (p2[i] - q2[i]);
                  }
                  if (t.needs(target)) {
                    auto& gq = t.grad_of(target);
                    for (size_t i = 0; i < p2.size(); ++i) gq[i] -= c * w2[i] * (p2[i] - q2[i]);
                  }
                  if (t.needs(weight)) {
                    auto& gw = t.grad_of(weight);
                    const T ci = static_cast<T>(inv) * g;
                    for (size_t i = 0; i < p2.size(); ++i) {
                      const T d = p2[i] - q2[i];
                      gw[i] += ci * d * d;
                    }
                  }
                });
  }

  // ---- attention ----

  struct Attention {
    Id out;   // [Sq, Dv]
    Id attn;  // softmax weights [Sq, Sk]
  };

  // Scaled dot-product attention: softmax(q k^T / sqrt(d)) v.
  Attention sdpa(Id q, Id k, Id v) {
    const Tensor<T>& Q = val(q);
    const Tensor<T>& K = val(k);
    const Tensor<T>& V = val(v);
    if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2 || Q.dim(1) != K.dim(1) ||
        K.dim(0) != V.dim(0))
      throw ShapeError(strformat("sdpa: incompatible q=%s k=%s v=%s", shape_str(Q.shape).c_str(),
                                 shape_str(K.shape).c_str(), shape_str(V.shape).c_str()));
    Id scores = matmul(q, transpose(k));
    Id scaled = scale(scores, 1.0 / std::sqrt(static_cast<double>(Q.dim(1))));
    Id attn = softmax_rows(scaled);
    Id out = matmul(attn, v);
    return {out, attn};
  }

  // ---- backward ----

  // loss must be scalar. Computes node gradients in reverse topological order
  // and, unless deferred, accumulates leaf gradients into every bound
  // trainable parameter. Deferral lets parallel workers run backward on
  // private tapes while the owning thread applies accumulate_param_grads() in
  // a fixed order afterwards.
  void backward(Id loss, bool into_params = true) {
    Node& ln = nodes_[static_cast<size_t>(loss)];
    if ((ln.view ? ln.view->numel() : ln.owned.numel()) != 1)
      throw Error("backward: loss must be a scalar tensor, got " +
                  shape_str(ln.view ? ln.view->shape : ln.owned.shape));
    for (Id i = 0; i <= loss; ++i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.grad.empty())
        n.grad.assign(static_cast<size_t>(n.view ? n.view->numel() : n.owned.numel()), T(0));
    }
    if (!ln.needs_grad) return;  // loss independent of every trainable leaf
    ln.grad[0] = T(1);
    for (Id i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.back) n.back(*this, i);
    }
    if (into_params) accumulate_param_grads();
  }

  void accumulate_param_grads() {
    for (Id id : bound_) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.grad.empty()) continue;
      n.bound->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* view = nullptr;
    std::vector<T> grad;
    std::function<void(Tape&, Id)> back;
    bool needs_grad = false;
    const char* op = "";
    Tensor<T>* bound = nullptr;
  };

  static void axpy(std::vector<T>& y, const std::vector<T>& x, T a) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
  }

  static void conv_bounds(int k, int stride, int in, int out, int& lo, int& hi) {
    // valid output range for input index o*stride + k - 1 in [0, in)
    lo = (k == 0) ? 1 : 0;
    hi = std::min(out - 1, (in - k) / stride);
  }

  void require_same(const char* op, Id a, Id b) const {
    if (!val(a).same_shape(val(b)))
      throw ShapeError(strformat("%s: shape mismatch %s vs %s", op,
                                 shape_str(val(a).shape).c_str(),
                                 shape_str(val(b).shape).c_str()));
  }

  Id push(const char* op, Tensor<T> out, std::initializer_list<Id> parents,
          std::function<void(Tape&, Id)> back) {
    if (!out.all_finite())
      throw NumericError(strformat("%s: non-finite value in forward result", op));
    Node n;
    n.owned = std::move(out);
    n.op = op;
    for (Id p : parents)
      if (nodes_[static_cast<size_t>(p)].needs_grad) n.needs_grad = true;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<Id> bound_;
};

}  // namespace geomlab
