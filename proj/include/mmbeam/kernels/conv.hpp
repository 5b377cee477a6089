#pragma once

namespace mmbeam::kernels {

// Square-kernel 2-D cross-correlation over NCHW tensors.
struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  long macs() const {
    return static_cast<long>(batch) * out_channels * in_channels * kernel * kernel * out_height() * out_width();
  }
};

// im2col + GEMM over panels of several images, parallel across panels.
// `bias` may be null.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);

// Accumulates into grad_input.
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* weight, const T* grad_output, T* grad_input);

// Accumulates into grad_weight and (when non-null) grad_bias. Batch items are
// folded in ascending panel order so the result is independent of thread count.
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_output, T* grad_weight,
                            T* grad_bias);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* weight, const T* grad_output, T* grad_input);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_output, T* grad_weight,
                            T* grad_bias);

}  // namespace reference

}  // namespace mmbeam::kernels
