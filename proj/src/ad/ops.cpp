#include "mmbeam/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmbeam/kernels/conv.hpp"
#include "mmbeam/kernels/gemm.hpp"

namespace mmbeam::ad {

namespace {

template <typename T>
Tape<T>& tape_of(Var<T> v) {
  if (!v.valid()) throw ArgumentError("op received an invalid variable");
  return *v.tape;
}

template <typename T>
void same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw ArgumentError("variables live on different tapes");
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ArgumentError("axis out of range");
  return axis;
}

long prod(const Shape& s, int from, int to) {
  long p = 1;
  for (int i = from; i < to; ++i) p *= s[i];
  return p;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tp = tape_of(a);
  same_tape(a, b);
  const auto& x = a.value();
  const auto& y = b.value();
  if (x.shape() != y.shape()) throw ArgumentError("add: shape mismatch " + to_string(x.shape()) + " vs " +
                                                  to_string(y.shape()));
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const int ia = a.id, ib = b.id;
  return tp.record(std::move(out), {ia, ib}, [&tp, ia, ib](const Tensor<T>& g) {
    for (int id : {ia, ib}) {
      if (!tp.requires_grad(id)) continue;
      auto& d = tp.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tp = tape_of(a);
  same_tape(a, b);
  const auto& x = a.value();
  const auto& y = b.value();
  if (x.shape() != y.shape()) throw ArgumentError("mul: shape mismatch");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const int ia = a.id, ib = b.id;
  return tp.record(std::move(out), {ia, ib}, [&tp, ia, ib](const Tensor<T>& g) {
    const auto& x = tp.value(ia);
    const auto& y = tp.value(ib);
    if (tp.requires_grad(ia)) {
      auto& d = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
    }
    if (tp.requires_grad(ib)) {
      auto& d = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * x[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tape<T>& tp = tape_of(a);
  const auto& x = a.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  const int ia = a.id;
  return tp.record(std::move(out), {ia}, [&tp, ia, factor](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> add_channelwise(Var<T> map, Var<T> v) {
  Tape<T>& tp = tape_of(map);
  same_tape(map, v);
  const auto& x = map.value();
  const auto& b = v.value();
  if (x.rank() != 4 || b.rank() != 2 || b.dim(0) != x.dim(0) || b.dim(1) != x.dim(1))
    throw ArgumentError("add_channelwise: expected [N,C,H,W] + [N,C], got " + to_string(x.shape()) + " + " +
                        to_string(b.shape()));
  const long nc = static_cast<long>(x.dim(0)) * x.dim(1);
  const long hw = static_cast<long>(x.dim(2)) * x.dim(3);
  Tensor<T> out(x.shape());
  for (long i = 0; i < nc; ++i)
    for (long p = 0; p < hw; ++p) out[i * hw + p] = x[i * hw + p] + b[i];
  const int ia = map.id, ib = v.id;
  return tp.record(std::move(out), {ia, ib}, [&tp, ia, ib, nc, hw](const Tensor<T>& g) {
    if (tp.requires_grad(ia)) {
      auto& d = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      auto& d = tp.grad_buffer(ib);
      for (long i = 0; i < nc; ++i) {
        T acc = 0;
        for (long p = 0; p < hw; ++p) acc += g[i * hw + p];
        d[i] += acc;
      }
    }
  });
}

template <typename T>
Var<T> add_leading(Var<T> x, Var<T> p) {
  Tape<T>& tp = tape_of(x);
  same_tape(x, p);
  const auto& xv = x.value();
  const auto& pv = p.value();
  if (xv.rank() != pv.rank() + 1 || !std::equal(pv.shape().begin(), pv.shape().end(), xv.shape().begin() + 1))
    throw ArgumentError("add_leading: " + to_string(pv.shape()) + " does not match trailing axes of " +
                        to_string(xv.shape()));
  const long inner = static_cast<long>(pv.size());
  const long outer = xv.dim(0);
  Tensor<T> out(xv.shape());
  for (long o = 0; o < outer; ++o)
    for (long i = 0; i < inner; ++i) out[o * inner + i] = xv[o * inner + i] + pv[i];
  const int ix = x.id, ip = p.id;
  return tp.record(std::move(out), {ix, ip}, [&tp, ix, ip, outer, inner](const Tensor<T>& g) {
    if (tp.requires_grad(ix)) {
      auto& d = tp.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (tp.requires_grad(ip)) {
      auto& d = tp.grad_buffer(ip);
      for (long o = 0; o < outer; ++o)
        for (long i = 0; i < inner; ++i) d[i] += g[o * inner + i];
    }
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tape<T>& tp = tape_of(a);
  const auto& x = a.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  const int ia = a.id;
  return tp.record(std::move(out), {ia}, [&tp, ia](const Tensor<T>& g) {
    const auto& x = tp.value(ia);
    auto& d = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > T(0)) d[i] += g[i];
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tape<T>& tp = tape_of(x);
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const int ix = x.id;
  return tp.record(std::move(out), {ix}, [&tp, ix](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

template <typename T>
Var<T> permute(Var<T> x, const std::vector<int>& perm) {
  Tape<T>& tp = tape_of(x);
  const auto& in = x.value();
  const int r = in.rank();
  if (static_cast<int>(perm.size()) != r) throw ArgumentError("permute: rank mismatch");
  std::vector<int> seen(r, 0);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[p]++) throw ArgumentError("permute: invalid permutation");
  }
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = in.shape()[perm[i]];
  // in_stride_of_out[i]: stride in the input for a unit step along output axis i
  std::vector<long> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in.shape()[i + 1];
  std::vector<long> step(r);
  for (int i = 0; i < r; ++i) step[i] = in_strides[perm[i]];

  // Output position -> input position map, shared by forward and backward.
  std::vector<long> src(in.size());
  {
    std::vector<int> idx(r, 0);
    long off = 0;
    for (std::size_t o = 0; o < src.size(); ++o) {
      src[o] = off;
      for (int ax = r - 1; ax >= 0; --ax) {
        if (++idx[ax] < out_shape[ax]) {
          off += step[ax];
          break;
        }
        off -= step[ax] * (out_shape[ax] - 1);
        idx[ax] = 0;
      }
    }
  }
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < src.size(); ++o) out[o] = in[src[o]];
  const int ix = x.id;
  return tp.record(std::move(out), {ix}, [&tp, ix, src = std::move(src)](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    for (std::size_t o = 0; o < src.size(); ++o) d[src[o]] += g[o];
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, int axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  Tape<T>& tp = tape_of(parts[0]);
  const Shape& s0 = parts[0].shape();
  const int r = static_cast<int>(s0.size());
  axis = normalize_axis(axis, r);
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<int> ids;
  std::vector<long> widths;
  const long inner = prod(s0, axis + 1, r);
  const long outer = prod(s0, 0, axis);
  for (const auto& p : parts) {
    same_tape(parts[0], p);
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != r) throw ArgumentError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && s[i] != s0[i]) throw ArgumentError("concat: shape mismatch off the concat axis");
    out_shape[axis] += s[axis];
    ids.push_back(p.id);
    widths.push_back(static_cast<long>(s[axis]) * inner);
  }
  const long row = static_cast<long>(out_shape[axis]) * inner;
  Tensor<T> out(out_shape);
  long col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (long o = 0; o < outer; ++o)
      std::copy_n(v.data() + o * widths[k], widths[k], out.data() + o * row + col);
    col += widths[k];
  }
  return tp.record(std::move(out), ids, [&tp, ids, widths, outer, row](const Tensor<T>& g) {
    long col = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        auto& d = tp.grad_buffer(ids[k]);
        for (long o = 0; o < outer; ++o)
          for (long i = 0; i < widths[k]; ++i) d[o * widths[k] + i] += g[o * row + col + i];
      }
      col += widths[k];
    }
  });
}

template <typename T>
Var<T> slice(Var<T> x, int axis, int start, int length) {
  Tape<T>& tp = tape_of(x);
  const auto& in = x.value();
  const int r = in.rank();
  axis = normalize_axis(axis, r);
  if (start < 0 || length < 0 || start + length > in.shape()[axis]) throw ArgumentError("slice: out of range");
  Shape out_shape = in.shape();
  out_shape[axis] = length;
  const long inner = prod(in.shape(), axis + 1, r);
  const long outer = prod(in.shape(), 0, axis);
  const long in_row = static_cast<long>(in.shape()[axis]) * inner;
  const long out_row = static_cast<long>(length) * inner;
  const long off = static_cast<long>(start) * inner;
  Tensor<T> out(out_shape);
  for (long o = 0; o < outer; ++o) std::copy_n(in.data() + o * in_row + off, out_row, out.data() + o * out_row);
  const int ix = x.id;
  return tp.record(std::move(out), {ix}, [&tp, ix, outer, in_row, out_row, off](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    for (long o = 0; o < outer; ++o)
      for (long i = 0; i < out_row; ++i) d[o * in_row + off + i] += g[o * out_row + i];
  });
}

template <typename T>
Var<T> sum_axis(Var<T> x, int axis) {
  Tape<T>& tp = tape_of(x);
  const auto& in = x.value();
  const int r = in.rank();
  axis = normalize_axis(axis, r);
  const long inner = prod(in.shape(), axis + 1, r);
  const long outer = prod(in.shape(), 0, axis);
  const long n = in.shape()[axis];
  if (n == 0) throw ArgumentError("sum_axis: zero-size reduction");
  Shape out_shape = in.shape();
  out_shape.erase(out_shape.begin() + axis);
  Tensor<T> out(out_shape);
  for (long o = 0; o < outer; ++o)
    for (long k = 0; k < n; ++k)
      for (long i = 0; i < inner; ++i) out[o * inner + i] += in[(o * n + k) * inner + i];
  const int ix = x.id;
  return tp.record(std::move(out), {ix}, [&tp, ix, outer, n, inner](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    for (long o = 0; o < outer; ++o)
      for (long k = 0; k < n; ++k)
        for (long i = 0; i < inner; ++i) d[(o * n + k) * inner + i] += g[o * inner + i];
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& tp = tape_of(x);
  const auto& in = x.value();
  T acc = 0;
  for (T v : in.vec()) acc += v;
  const int ix = x.id;
  return tp.record(Tensor<T>({1}, {acc}), {ix}, [&tp, ix](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0];
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const auto n = x.value().size();
  if (n == 0) throw ArgumentError("mean: zero-size reduction");
  return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool transpose_b) {
  Tape<T>& tp = tape_of(a);
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() < 2 || bv.rank() != av.rank()) throw ArgumentError("matmul: rank mismatch");
  const int r = av.rank();
  for (int i = 0; i < r - 2; ++i)
    if (av.shape()[i] != bv.shape()[i]) throw ArgumentError("matmul: batch axes differ");
  const int M = av.shape()[r - 2], K = av.shape()[r - 1];
  const int N = transpose_b ? bv.shape()[r - 2] : bv.shape()[r - 1];
  const int Kb = transpose_b ? bv.shape()[r - 1] : bv.shape()[r - 2];
  if (K != Kb) throw ArgumentError("matmul: inner dimensions differ " + to_string(av.shape()) + " x " +
                                   to_string(bv.shape()));
  const long batch = prod(av.shape(), 0, r - 2);
  Shape out_shape(av.shape().begin(), av.shape().end() - 2);
  out_shape.push_back(M);
  out_shape.push_back(N);
  Tensor<T> out(out_shape);
  const long sa = static_cast<long>(M) * K, sb = static_cast<long>(K) * N, sc = static_cast<long>(M) * N;
  for (long bt = 0; bt < batch; ++bt) {
    if (transpose_b)
      kernels::gemm_nt(M, N, K, av.data() + bt * sa, bv.data() + bt * sb, out.data() + bt * sc, false);
    else
      kernels::gemm_nn(M, N, K, av.data() + bt * sa, bv.data() + bt * sb, out.data() + bt * sc, false);
  }
  tp.add_macs(static_cast<std::uint64_t>(batch) * M * N * K);
  const int ia = a.id, ib = b.id;
  return tp.record(std::move(out), {ia, ib},
                   [&tp, ia, ib, batch, M, N, K, sa, sb, sc, transpose_b](const Tensor<T>& g) {
                     const auto& av = tp.value(ia);
                     const auto& bv = tp.value(ib);
                     for (long bt = 0; bt < batch; ++bt) {
                       const T* gp = g.data() + bt * sc;
                       if (tp.requires_grad(ia)) {
                         T* d = tp.grad_buffer(ia).data() + bt * sa;
                         if (transpose_b)
                           kernels::gemm_nn(M, K, N, gp, bv.data() + bt * sb, d, true);
                         else
                           kernels::gemm_nt(M, K, N, gp, bv.data() + bt * sb, d, true);
                       }
                       if (tp.requires_grad(ib)) {
                         T* d = tp.grad_buffer(ib).data() + bt * sb;
                         if (transpose_b)
                           kernels::gemm_tn(N, K, M, gp, av.data() + bt * sa, d, true);
                         else
                           kernels::gemm_tn(K, N, M, av.data() + bt * sa, gp, d, true);
                       }
                     }
                   });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  Tape<T>& tp = tape_of(x);
  same_tape(x, w);
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
    throw ArgumentError("linear: expected x[M,K] and w[N,K], got " + to_string(xv.shape()) + " and " +
                        to_string(wv.shape()));
  const int M = xv.dim(0), K = xv.dim(1), N = wv.dim(0);
  const bool has_bias = bias.valid();
  if (has_bias) {
    same_tape(x, bias);
    if (bias.value().rank() != 1 || bias.value().dim(0) != N) throw ArgumentError("linear: bias shape");
  }
  Tensor<T> out({M, N});
  kernels::gemm_nt(M, N, K, xv.data(), wv.data(), out.data(), false);
  if (has_bias) {
    const auto& bv = bias.value();
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < N; ++j) out[static_cast<long>(i) * N + j] += bv[j];
  }
  tp.add_macs(static_cast<std::uint64_t>(M) * N * K);
  const int ix = x.id, iw = w.id, ib = has_bias ? bias.id : -1;
  std::vector<int> parents{ix, iw};
  if (has_bias) parents.push_back(ib);
  return tp.record(std::move(out), parents, [&tp, ix, iw, ib, M, N, K](const Tensor<T>& g) {
    if (tp.requires_grad(ix))
      kernels::gemm_nn(M, K, N, g.data(), tp.value(iw).data(), tp.grad_buffer(ix).data(), true);
    if (tp.requires_grad(iw))
      kernels::gemm_tn(N, K, M, g.data(), tp.value(ix).data(), tp.grad_buffer(iw).data(), true);
    if (ib >= 0 && tp.requires_grad(ib)) {
      auto& d = tp.grad_buffer(ib);
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) d[j] += g[static_cast<long>(i) * N + j];
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> x, int axis) {
  Tape<T>& tp = tape_of(x);
  const auto& in = x.value();
  const int r = in.rank();
  axis = normalize_axis(axis, r);
  const long inner = prod(in.shape(), axis + 1, r);
  const long outer = prod(in.shape(), 0, axis);
  const long n = in.shape()[axis];
  if (n == 0) throw ArgumentError("softmax: zero-size axis");
  Tensor<T> out(in.shape());
  for (long o = 0; o < outer; ++o)
    for (long i = 0; i < inner; ++i) {
      const long base = o * n * inner + i;
      T mx = in[base];
      for (long k = 1; k < n; ++k) mx = std::max(mx, in[base + k * inner]);
      T z = 0;
      for (long k = 0; k < n; ++k) {
        const T e = std::exp(in[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (long k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  const int ix = x.id;
  Tensor<T> y = out;
  return tp.record(std::move(out), {ix}, [&tp, ix, y = std::move(y), outer, inner, n](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    for (long o = 0; o < outer; ++o)
      for (long i = 0; i < inner; ++i) {
        const long base = o * n * inner + i;
        T dot = 0;
        for (long k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (long k = 0; k < n; ++k) d[base + k * inner] += y[base + k * inner] * (g[base + k * inner] - dot);
      }
  });
}

template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  Tape<T>& tp = tape_of(x);
  same_tape(x, gamma);
  same_tape(x, beta);
  const auto& in = x.value();
  const int D = in.dim(-1);
  if (D == 0) throw ArgumentError("layernorm: zero-size axis");
  if (gamma.value().size() != static_cast<std::size_t>(D) || beta.value().size() != static_cast<std::size_t>(D))
    throw ArgumentError("layernorm: affine shape mismatch");
  const long rows = static_cast<long>(in.size()) / D;
  Tensor<T> xhat(in.shape());
  std::vector<T> rstd(rows);
  Tensor<T> out(in.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (long r = 0; r < rows; ++r) {
    const T* xr = in.data() + r * D;
    T mu = 0;
    for (int i = 0; i < D; ++i) mu += xr[i];
    mu /= D;
    T var = 0;
    for (int i = 0; i < D; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= D;
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (int i = 0; i < D; ++i) {
      const T h = (xr[i] - mu) * rs;
      xhat[r * D + i] = h;
      out[r * D + i] = h * gv[i] + bv[i];
    }
  }
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return tp.record(std::move(out), {ix, ig, ib},
                   [&tp, ix, ig, ib, rows, D, xhat = std::move(xhat), rstd = std::move(rstd)](const Tensor<T>& g) {
                     const auto& gv = tp.value(ig);
                     if (tp.requires_grad(ig)) {
                       auto& d = tp.grad_buffer(ig);
                       for (long r = 0; r < rows; ++r)
                         for (int i = 0; i < D; ++i) d[i] += g[r * D + i] * xhat[r * D + i];
                     }
                     if (tp.requires_grad(ib)) {
                       auto& d = tp.grad_buffer(ib);
                       for (long r = 0; r < rows; ++r)
                         for (int i = 0; i < D; ++i) d[i] += g[r * D + i];
                     }
                     if (tp.requires_grad(ix)) {
                       auto& d = tp.grad_buffer(ix);
                       for (long r = 0; r < rows; ++r) {
                         T m1 = 0, m2 = 0;
                         for (int i = 0; i < D; ++i) {
                           const T gh = g[r * D + i] * gv[i];
                           m1 += gh;
                           m2 += gh * xhat[r * D + i];
                         }
                         m1 /= D;
                         m2 /= D;
                         for (int i = 0; i < D; ++i) {
                           const T gh = g[r * D + i] * gv[i];
                           d[r * D + i] += rstd[r] * (gh - m1 - xhat[r * D + i] * m2);
                         }
                       }
                     }
                   });
}

template <typename T>
Var<T> dropout(Var<T> x, T rate, bool training, Rng& rng) {
  if (rate < T(0) || rate >= T(1)) throw ArgumentError("dropout: rate must be in [0,1)");
  if (!training || rate == T(0)) return x;
  Tape<T>& tp = tape_of(x);
  const auto& in = x.value();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = T(1) / (T(1) - rate);
  Tensor<T> mask(in.shape());
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask[i] = u(rng) >= static_cast<double>(rate) ? keep_scale : T(0);
    out[i] = in[i] * mask[i];
  }
  const int ix = x.id;
  return tp.record(std::move(out), {ix}, [&tp, ix, mask = std::move(mask)](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * mask[i];
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int stride, int pad) {
  Tape<T>& tp = tape_of(x);
  same_tape(x, w);
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4) throw ArgumentError("conv2d: expected NCHW input and OIHW weight");
  if (wv.dim(1) != xv.dim(1)) throw ArgumentError("conv2d: channel mismatch " + to_string(xv.shape()) + " vs " +
                                                  to_string(wv.shape()));
  if (wv.dim(2) != wv.dim(3)) throw ArgumentError("conv2d: only square kernels are supported");
  if (stride < 1 || pad < 0) throw ArgumentError("conv2d: invalid stride/padding");
  kernels::ConvGeometry geo;
  geo.batch = xv.dim(0);
  geo.in_channels = xv.dim(1);
  geo.height = xv.dim(2);
  geo.width = xv.dim(3);
  geo.out_channels = wv.dim(0);
  geo.kernel = wv.dim(2);
  geo.stride = stride;
  geo.pad = pad;
  if (geo.height + 2 * pad < geo.kernel || geo.width + 2 * pad < geo.kernel)
    throw ArgumentError("conv2d: kernel larger than padded input");
  const bool has_bias = bias.valid();
  if (has_bias && (bias.value().rank() != 1 || bias.value().dim(0) != geo.out_channels))
    throw ArgumentError("conv2d: bias shape");
  Tensor<T> out({geo.batch, geo.out_channels, geo.out_height(), geo.out_width()});
  kernels::conv2d_forward(geo, xv.data(), wv.data(), has_bias ? bias.value().data() : nullptr, out.data());
  tp.add_macs(static_cast<std::uint64_t>(geo.macs()));
  const int ix = x.id, iw = w.id, ib = has_bias ? bias.id : -1;
  std::vector<int> parents{ix, iw};
  if (has_bias) parents.push_back(ib);
  return tp.record(std::move(out), parents, [&tp, ix, iw, ib, geo](const Tensor<T>& g) {
    if (tp.requires_grad(ix))
      kernels::conv2d_backward_input(geo, tp.value(iw).data(), g.data(), tp.grad_buffer(ix).data());
    const bool want_w = tp.requires_grad(iw);
    const bool want_b = ib >= 0 && tp.requires_grad(ib);
    if (want_w) {
      kernels::conv2d_backward_weight(geo, tp.value(ix).data(), g.data(), tp.grad_buffer(iw).data(),
                                      want_b ? tp.grad_buffer(ib).data() : nullptr);
    } else if (want_b) {
      auto& d = tp.grad_buffer(ib);
      const long hw = static_cast<long>(geo.out_height()) * geo.out_width();
      for (int n = 0; n < geo.batch; ++n)
        for (int c = 0; c < geo.out_channels; ++c)
          for (long p = 0; p < hw; ++p) d[c] += g[(static_cast<long>(n) * geo.out_channels + c) * hw + p];
    }
  });
}

template <typename T>
Var<T> batchnorm2d(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean, Tensor<T>& running_var,
                   bool training, T momentum, T eps) {
  Tape<T>& tp = tape_of(x);
  same_tape(x, gamma);
  same_tape(x, beta);
  const auto& in = x.value();
  if (in.rank() != 4) throw ArgumentError("batchnorm2d: expected NCHW");
  const int N = in.dim(0), C = in.dim(1);
  const long hw = static_cast<long>(in.dim(2)) * in.dim(3);
  const long count = N * hw;
  if (count == 0) throw ArgumentError("batchnorm2d: zero-size reduction");
  if (gamma.value().size() != static_cast<std::size_t>(C) || beta.value().size() != static_cast<std::size_t>(C) ||
      running_mean.size() != static_cast<std::size_t>(C) || running_var.size() != static_cast<std::size_t>(C))
    throw ArgumentError("batchnorm2d: parameter shape mismatch");
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  std::vector<T> mu(C), rstd(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = in.data() + (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / count;
      double v = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = in.data() + (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double var = v / count;
      mu[c] = static_cast<T>(m);
      rstd[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double unbiased = count > 1 ? v / (count - 1) : var;
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * static_cast<T>(m);
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * static_cast<T>(unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mu[c] = running_mean[c];
      rstd[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }
  Tensor<T> xhat(in.shape());
  Tensor<T> out(in.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const long base = (static_cast<long>(n) * C + c) * hw;
      for (long i = 0; i < hw; ++i) {
        const T h = (in[base + i] - mu[c]) * rstd[c];
        xhat[base + i] = h;
        out[base + i] = h * gv[c] + bv[c];
      }
    }
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return tp.record(std::move(out), {ix, ig, ib},
                   [&tp, ix, ig, ib, N, C, hw, count, training, xhat = std::move(xhat),
                    rstd = std::move(rstd)](const Tensor<T>& g) {
                     const auto& gv = tp.value(ig);
                     std::vector<T> sum_g(C, 0), sum_gh(C, 0);
                     for (int n = 0; n < N; ++n)
                       for (int c = 0; c < C; ++c) {
                         const long base = (static_cast<long>(n) * C + c) * hw;
                         for (long i = 0; i < hw; ++i) {
                           sum_g[c] += g[base + i];
                           sum_gh[c] += g[base + i] * xhat[base + i];
                         }
                       }
                     if (tp.requires_grad(ig)) {
                       auto& d = tp.grad_buffer(ig);
                       for (int c = 0; c < C; ++c) d[c] += sum_gh[c];
                     }
                     if (tp.requires_grad(ib)) {
                       auto& d = tp.grad_buffer(ib);
                       for (int c = 0; c < C; ++c) d[c] += sum_g[c];
                     }
                     if (tp.requires_grad(ix)) {
                       auto& d = tp.grad_buffer(ix);
                       for (int n = 0; n < N; ++n)
                         for (int c = 0; c < C; ++c) {
                           const long base = (static_cast<long>(n) * C + c) * hw;
                           const T k = gv[c] * rstd[c];
                           if (training) {
                             const T m1 = sum_g[c] / count, m2 = sum_gh[c] / count;
                             for (long i = 0; i < hw; ++i) d[base + i] += k * (g[base + i] - m1 - xhat[base + i] * m2);
                           } else {
                             for (long i = 0; i < hw; ++i) d[base + i] += k * g[base + i];
                           }
                         }
                     }
                   });
}

template <typename T>
Var<T> maxpool2d(Var<T> x, int kernel, int stride, int pad) {
  Tape<T>& tp = tape_of(x);
  const auto& in = x.value();
  if (in.rank() != 4) throw ArgumentError("maxpool2d: expected NCHW");
  if (kernel < 1 || stride < 1 || pad < 0 || pad * 2 > kernel) throw ArgumentError("maxpool2d: invalid geometry");
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int ho = (H + 2 * pad - kernel) / stride + 1;
  const int wo = (W + 2 * pad - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ArgumentError("maxpool2d: kernel larger than input");
  Tensor<T> out({N, C, ho, wo});
  std::vector<long> arg(out.size());
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    const T* src = in.data() + nc * H * W;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        long where = -1;
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) {
            const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            const T v = src[static_cast<long>(iy) * W + ix];
            if (where < 0 || v > best) {
              best = v;
              where = nc * H * W + static_cast<long>(iy) * W + ix;
            }
          }
        const long o = (nc * ho + oy) * wo + ox;
        out[o] = best;
        arg[o] = where;
      }
  }
  const int ix = x.id;
  return tp.record(std::move(out), {ix}, [&tp, ix, arg = std::move(arg)](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    for (std::size_t o = 0; o < arg.size(); ++o) d[arg[o]] += g[o];
  });
}

template <typename T>
Var<T> global_avgpool(Var<T> x) {
  Tape<T>& tp = tape_of(x);
  const auto& in = x.value();
  if (in.rank() != 4) throw ArgumentError("global_avgpool: expected NCHW");
  const int N = in.dim(0), C = in.dim(1);
  const long hw = static_cast<long>(in.dim(2)) * in.dim(3);
  if (hw == 0) throw ArgumentError("global_avgpool: zero-size reduction");
  Tensor<T> out({N, C});
  for (long i = 0; i < static_cast<long>(N) * C; ++i) {
    T acc = 0;
    for (long p = 0; p < hw; ++p) acc += in[i * hw + p];
    out[i] = acc / static_cast<T>(hw);
  }
  const int ix = x.id;
  return tp.record(std::move(out), {ix}, [&tp, ix, hw](const Tensor<T>& g) {
    auto& d = tp.grad_buffer(ix);
    const T inv = T(1) / static_cast<T>(hw);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (long p = 0; p < hw; ++p) d[i * hw + p] += g[i] * inv;
  });
}

template <typename T>
Var<T> focal_loss(Var<T> logits, const Tensor<T>& targets, T gamma) {
  Tape<T>& tp = tape_of(logits);
  const auto& z = logits.value();
  if (z.rank() != 2 || targets.shape() != z.shape())
    throw ArgumentError("focal_loss: logits and targets must both be [B,K], got " + to_string(z.shape()) + " and " +
                        to_string(targets.shape()));
  if (gamma < T(0)) throw ArgumentError("focal_loss: gamma must be >= 0");
  const int B = z.dim(0), K = z.dim(1);
  const T log_floor = static_cast<T>(std::log(kLogFloor));
  Tensor<T> p(z.shape());
  Tensor<T> logp(z.shape());
  T total = 0;
  for (int b = 0; b < B; ++b) {
    const T* zr = z.data() + static_cast<long>(b) * K;
    T mx = zr[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, zr[k]);
    T s = 0;
    for (int k = 0; k < K; ++k) s += std::exp(zr[k] - mx);
    const T lse = std::log(s);
    T row = 0;
    for (int k = 0; k < K; ++k) {
      const long i = static_cast<long>(b) * K + k;
      const T lp = zr[k] - mx - lse;
      p[i] = std::exp(lp);
      logp[i] = std::max(lp, log_floor);
      const T t = targets[i];
      if (t == T(0)) continue;
      const T mod = gamma == T(0) ? T(1) : std::pow(T(1) - p[i], gamma);
      row -= t * mod * logp[i];
    }
    total += row;
  }
  const int iz = logits.id;
  return tp.record(
      Tensor<T>({1}, {total / static_cast<T>(B)}), {iz},
      [&tp, iz, B, K, gamma, log_floor, targets, p = std::move(p), logp = std::move(logp)](const Tensor<T>& g) {
        auto& d = tp.grad_buffer(iz);
        const T scale_out = g[0] / static_cast<T>(B);
        std::vector<T> bterm(K);
        for (int b = 0; b < B; ++b) {
          T bsum = 0;
          for (int k = 0; k < K; ++k) {
            const long i = static_cast<long>(b) * K + k;
            const T t = targets[i];
            const T pi = p[i];
            T v = 0;
            if (t != T(0)) {
              // b_i = p_i * dL/dp_i, written so that tiny p_i stays finite.
              const T q = T(1) - pi;
              const T mod = gamma == T(0) ? T(1) : std::pow(q, gamma);
              const T dlogp_term = logp[i] > log_floor ? mod : T(0);
              T dmod_term = 0;
              if (gamma != T(0) && q > T(0)) dmod_term = gamma * std::pow(q, gamma - T(1)) * pi * logp[i];
              v = -t * (dlogp_term - dmod_term);
            }
            bterm[k] = v;
            bsum += v;
          }
          for (int k = 0; k < K; ++k) {
            const long i = static_cast<long>(b) * K + k;
            d[i] += scale_out * (bterm[k] - p[i] * bsum);
          }
        }
      });
}

#define MMBEAM_INSTANTIATE_OPS(T)                                                                           \
  template Var<T> add<T>(Var<T>, Var<T>);                                                                   \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                                   \
  template Var<T> scale<T>(Var<T>, T);                                                                      \
  template Var<T> add_channelwise<T>(Var<T>, Var<T>);                                                       \
  template Var<T> add_leading<T>(Var<T>, Var<T>);                                                           \
  template Var<T> relu<T>(Var<T>);                                                                          \
  template Var<T> reshape<T>(Var<T>, Shape);                                                                \
  template Var<T> permute<T>(Var<T>, const std::vector<int>&);                                              \
  template Var<T> concat<T>(std::span<const Var<T>>, int);                                                  \
  template Var<T> slice<T>(Var<T>, int, int, int);                                                          \
  template Var<T> sum_axis<T>(Var<T>, int);                                                                 \
  template Var<T> sum<T>(Var<T>);                                                                           \
  template Var<T> mean<T>(Var<T>);                                                                          \
  template Var<T> matmul<T>(Var<T>, Var<T>, bool);                                                          \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                                                        \
  template Var<T> softmax<T>(Var<T>, int);                                                                  \
  template Var<T> layernorm<T>(Var<T>, Var<T>, Var<T>, T);                                                  \
  template Var<T> dropout<T>(Var<T>, T, bool, Rng&);                                                        \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, int, int);                                              \
  template Var<T> batchnorm2d<T>(Var<T>, Var<T>, Var<T>, Tensor<T>&, Tensor<T>&, bool, T, T);               \
  template Var<T> maxpool2d<T>(Var<T>, int, int, int);                                                      \
  template Var<T> global_avgpool<T>(Var<T>);                                                                \
  template Var<T> focal_loss<T>(Var<T>, const Tensor<T>&, T);

MMBEAM_INSTANTIATE_OPS(float)
MMBEAM_INSTANTIATE_OPS(double)

}  // namespace mmbeam::ad
