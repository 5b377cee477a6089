#include "mmbeam/kernels/conv.hpp"

#include <algorithm>
#include <vector>

#include "mmbeam/kernels/gemm.hpp"

namespace mmbeam::kernels {

namespace {

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

// Images per GEMM panel: enough to give the panel at least kPanelCols columns.
// Depends on geometry only, so results do not depend on the thread count.
constexpr int kPanelCols = 256;

int chunk_images(const ConvGeometry& g) {
  const int hw = g.out_height() * g.out_width();
  return std::clamp((kPanelCols + hw - 1) / hw, 1, g.batch);
}

// Writes the patches of one image into columns [off, off + ho*wo) of a
// panel with `ld` columns per row.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col, long ld, long off) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int c = 0; c < g.in_channels; ++c) {
    const T* xc = x + static_cast<long>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<long>(c) * k * k + ky * k + kx) * ld + off;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<long>(oy) * wo;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = xc + static_cast<long>(iy) * g.width;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, long ld, long off, T* x) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int c = 0; c < g.in_channels; ++c) {
    T* xc = x + static_cast<long>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<long>(c) * k * k + ky * k + kx) * ld + off;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const T* src = row + static_cast<long>(oy) * wo;
          T* dst = xc + static_cast<long>(iy) * g.width;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
  }
}

// Copies rows of `channels` x hw blocks between per-image NCHW storage and a
// channel-major panel [channels, nb*hw].
template <typename T>
void gather_panel(const T* src, long img_stride, int nb, int channels, int hw, T* panel) {
  const long ld = static_cast<long>(nb) * hw;
  for (int i = 0; i < nb; ++i)
    for (int c = 0; c < channels; ++c)
      std::copy_n(src + i * img_stride + static_cast<long>(c) * hw, hw, panel + c * ld + static_cast<long>(i) * hw);
}

template <typename T>
void scatter_panel(const T* panel, int nb, int channels, int hw, T* dst, long img_stride) {
  const long ld = static_cast<long>(nb) * hw;
  for (int i = 0; i < nb; ++i)
    for (int c = 0; c < channels; ++c)
      std::copy_n(panel + c * ld + static_cast<long>(i) * hw, hw, dst + i * img_stride + static_cast<long>(c) * hw);
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const int hw = g.out_height() * g.out_width();
  const long in_stride = static_cast<long>(g.in_channels) * g.height * g.width;
  const long out_stride = static_cast<long>(g.out_channels) * hw;
  const int ckk = g.in_channels * g.kernel * g.kernel;
  const bool pointwise = is_pointwise(g);
  const int per = chunk_images(g);
  const int chunks = (g.batch + per - 1) / per;
#pragma omp parallel if (chunks > 1 && g.macs() > (1L << 16))
  {
    std::vector<T> col(static_cast<size_t>(ckk) * per * hw);
    std::vector<T> out(static_cast<size_t>(g.out_channels) * per * hw);
#pragma omp for schedule(static)
    for (int ch = 0; ch < chunks; ++ch) {
      const int n0 = ch * per, nb = std::min(per, g.batch - n0);
      const long ld = static_cast<long>(nb) * hw;
      for (int i = 0; i < nb; ++i) {
        const T* x = input + (n0 + i) * in_stride;
        if (pointwise)
          for (int c = 0; c < ckk; ++c) std::copy_n(x + static_cast<long>(c) * hw, hw, col.data() + c * ld + i * hw);
        else
          im2col(g, x, col.data(), ld, static_cast<long>(i) * hw);
      }
      gemm_nn(g.out_channels, static_cast<int>(ld), ckk, weight, col.data(), out.data(), false);
      if (bias)
        for (int c = 0; c < g.out_channels; ++c) {
          T* oc = out.data() + c * ld;
          for (long p = 0; p < ld; ++p) oc[p] += bias[c];
        }
      scatter_panel(out.data(), nb, g.out_channels, hw, output + n0 * out_stride, out_stride);
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* weight, const T* grad_output, T* grad_input) {
  const int hw = g.out_height() * g.out_width();
  const long in_stride = static_cast<long>(g.in_channels) * g.height * g.width;
  const long out_stride = static_cast<long>(g.out_channels) * hw;
  const int ckk = g.in_channels * g.kernel * g.kernel;
  std::vector<T> wt(static_cast<size_t>(ckk) * g.out_channels);
  transpose(g.out_channels, ckk, weight, wt.data());
  const bool pointwise = is_pointwise(g);
  const int per = chunk_images(g);
  const int chunks = (g.batch + per - 1) / per;
#pragma omp parallel if (chunks > 1 && g.macs() > (1L << 16))
  {
    std::vector<T> dy(static_cast<size_t>(g.out_channels) * per * hw);
    std::vector<T> col(static_cast<size_t>(ckk) * per * hw);
#pragma omp for schedule(static)
    for (int ch = 0; ch < chunks; ++ch) {
      const int n0 = ch * per, nb = std::min(per, g.batch - n0);
      const long ld = static_cast<long>(nb) * hw;
      gather_panel(grad_output + n0 * out_stride, out_stride, nb, g.out_channels, hw, dy.data());
      gemm_nn(ckk, static_cast<int>(ld), g.out_channels, wt.data(), dy.data(), col.data(), false);
      for (int i = 0; i < nb; ++i) {
        T* dx = grad_input + (n0 + i) * in_stride;
        if (pointwise) {
          for (int c = 0; c < ckk; ++c) {
            const T* src = col.data() + c * ld + static_cast<long>(i) * hw;
            T* d = dx + static_cast<long>(c) * hw;
            for (int p = 0; p < hw; ++p) d[p] += src[p];
          }
        } else {
          col2im_add(g, col.data(), ld, static_cast<long>(i) * hw, dx);
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_output, T* grad_weight,
                            T* grad_bias) {
  const int hw = g.out_height() * g.out_width();
  const long in_stride = static_cast<long>(g.in_channels) * g.height * g.width;
  const long out_stride = static_cast<long>(g.out_channels) * hw;
  const int ckk = g.in_channels * g.kernel * g.kernel;
  const bool pointwise = is_pointwise(g);
  const int per = chunk_images(g);
  std::vector<T> col(static_cast<size_t>(ckk) * per * hw);
  std::vector<T> colt(col.size());
  std::vector<T> dy(static_cast<size_t>(g.out_channels) * per * hw);
  // Chunks fold in ascending order; only the GEMM inside runs in parallel.
  for (int n0 = 0; n0 < g.batch; n0 += per) {
    const int nb = std::min(per, g.batch - n0);
    const long ld = static_cast<long>(nb) * hw;
    for (int i = 0; i < nb; ++i) {
      const T* x = input + (n0 + i) * in_stride;
      if (pointwise)
        for (int c = 0; c < ckk; ++c) std::copy_n(x + static_cast<long>(c) * hw, hw, col.data() + c * ld + i * hw);
      else
        im2col(g, x, col.data(), ld, static_cast<long>(i) * hw);
    }
    gather_panel(grad_output + n0 * out_stride, out_stride, nb, g.out_channels, hw, dy.data());
    transpose(ckk, static_cast<int>(ld), col.data(), colt.data());
    gemm_nn(g.out_channels, ckk, static_cast<int>(ld), dy.data(), colt.data(), grad_weight, true);
    if (grad_bias) {
      for (int c = 0; c < g.out_channels; ++c) {
        const T* d = dy.data() + c * ld;
        T acc = 0;
        for (long p = 0; p < ld; ++p) acc += d[p];
        grad_bias[c] += acc;
      }
    }
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T acc = 0;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                acc += input[((static_cast<long>(n) * g.in_channels + ci) * g.height + iy) * g.width + ix] *
                       weight[((static_cast<long>(co) * g.in_channels + ci) * k + ky) * k + kx];
              }
          if (bias) acc += bias[co];
          output[((static_cast<long>(n) * g.out_channels + co) * ho + oy) * wo + ox] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* weight, const T* grad_output, T* grad_input) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const T d = grad_output[((static_cast<long>(n) * g.out_channels + co) * ho + oy) * wo + ox];
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                grad_input[((static_cast<long>(n) * g.in_channels + ci) * g.height + iy) * g.width + ix] +=
                    d * weight[((static_cast<long>(co) * g.in_channels + ci) * k + ky) * k + kx];
              }
        }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_output, T* grad_weight,
                            T* grad_bias) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const T d = grad_output[((static_cast<long>(n) * g.out_channels + co) * ho + oy) * wo + ox];
          if (grad_bias) grad_bias[co] += d;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                grad_weight[((static_cast<long>(co) * g.in_channels + ci) * k + ky) * k + kx] +=
                    d * input[((static_cast<long>(n) * g.in_channels + ci) * g.height + iy) * g.width + ix];
              }
        }
}

}  // namespace reference

#define MMBEAM_INSTANTIATE_CONV(T)                                                                      \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);               \
  template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);                  \
  template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);             \
  template void reference::conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);    \
  template void reference::conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);       \
  template void reference::conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);

MMBEAM_INSTANTIATE_CONV(float)
MMBEAM_INSTANTIATE_CONV(double)

}  // namespace mmbeam::kernels
