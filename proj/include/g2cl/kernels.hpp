#pragma once

// Data-parallel compute kernels. Each kernel has an OpenMP path used by the
// library and a plain serial reference in namespace `reference` that the
// tests and the benchmark compare against.

#include <span>
#include <vector>

namespace g2cl::kernels {

struct ConvShape {
  int batch = 1;
  int in_channels = 1;
  int in_height = 1;
  int in_width = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (in_height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (in_width + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const {
    return static_cast<std::size_t>(batch) * in_channels * in_height * in_width;
  }
  std::size_t output_size() const {
    return static_cast<std::size_t>(batch) * out_channels * out_height() * out_width();
  }
  std::size_t weight_size() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

// NCHW convolution; weight is [out_c][in_c][k][k]. im2col + GEMM per sample,
// samples in parallel.
template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

// Gradients of conv2d_forward. grad_weight and grad_bias are overwritten;
// grad_input is overwritten when non-empty. The weight reduction over the
// batch runs in sample order so results do not depend on thread count.
template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias);

// out[i*m + j] = ||a_i - b_j||^2 for row-major a (n x d) and b (m x d).
template <typename T>
void pairwise_sq_distances(std::span<const T> a, std::span<const T> b, int n, int m, int d,
                           std::span<T> out);

namespace reference {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
void pairwise_sq_distances(std::span<const T> a, std::span<const T> b, int n, int m, int d,
                           std::span<T> out);

}  // namespace reference

}  // namespace g2cl::kernels
