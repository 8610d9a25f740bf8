#include "g2cl/kernels.hpp"

#include <algorithm>

#include <Eigen/Core>

namespace g2cl::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// cols is [in_c * k * k][out_h * out_w].
template <typename T>
void im2col(const ConvShape& s, const T* img, T* cols) {
  const int oh = s.out_height(), ow = s.out_width();
  const int plane = oh * ow;
  for (int c = 0; c < s.in_channels; ++c) {
    const T* chan = img + static_cast<std::size_t>(c) * s.in_height * s.in_width;
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * s.kernel + ky) * s.kernel + kx) * plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s.stride - s.pad + ky;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * s.stride - s.pad + kx;
            row[y * ow + x] = (iy >= 0 && iy < s.in_height && ix >= 0 && ix < s.in_width)
                                  ? chan[iy * s.in_width + ix]
                                  : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvShape& s, const T* cols, T* img) {
  const int oh = s.out_height(), ow = s.out_width();
  const int plane = oh * ow;
  std::fill(img, img + static_cast<std::size_t>(s.in_channels) * s.in_height * s.in_width, T(0));
  for (int c = 0; c < s.in_channels; ++c) {
    T* chan = img + static_cast<std::size_t>(c) * s.in_height * s.in_width;
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * s.kernel + ky) * s.kernel + kx) * plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_height) continue;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * s.stride - s.pad + kx;
            if (ix >= 0 && ix < s.in_width) chan[iy * s.in_width + ix] += row[y * ow + x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const int kdim = s.in_channels * s.kernel * s.kernel;
  const int plane = s.out_height() * s.out_width();
  const std::size_t in_stride = static_cast<std::size_t>(s.in_channels) * s.in_height * s.in_width;
  const std::size_t out_stride = static_cast<std::size_t>(s.out_channels) * plane;
  Eigen::Map<const RowMat<T>> w(weight.data(), s.out_channels, kdim);
  Eigen::Map<const Eigen::Vector<T, Eigen::Dynamic>> b(bias.data(), s.out_channels);

#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(kdim) * plane);
#pragma omp for schedule(static)
    for (int n = 0; n < s.batch; ++n) {
      im2col(s, input.data() + n * in_stride, cols.data());
      Eigen::Map<const RowMat<T>> c(cols.data(), kdim, plane);
      Eigen::Map<RowMat<T>> out(output.data() + n * out_stride, s.out_channels, plane);
      out.noalias() = w * c;
      out.colwise() += b;
    }
  }
}

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias) {
  const int kdim = s.in_channels * s.kernel * s.kernel;
  const int plane = s.out_height() * s.out_width();
  const std::size_t in_stride = static_cast<std::size_t>(s.in_channels) * s.in_height * s.in_width;
  const std::size_t out_stride = static_cast<std::size_t>(s.out_channels) * plane;
  const std::size_t wsize = s.weight_size();
  Eigen::Map<const RowMat<T>> w(weight.data(), s.out_channels, kdim);
  std::vector<T> per_sample(wsize * static_cast<std::size_t>(s.batch));
  const bool want_input = !grad_input.empty();

#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(kdim) * plane);
#pragma omp for schedule(static)
    for (int n = 0; n < s.batch; ++n) {
      Eigen::Map<const RowMat<T>> g(grad_output.data() + n * out_stride, s.out_channels, plane);
      im2col(s, input.data() + n * in_stride, cols.data());
      Eigen::Map<RowMat<T>> c(cols.data(), kdim, plane);
      Eigen::Map<RowMat<T>> gw(per_sample.data() + n * wsize, s.out_channels, kdim);
      gw.noalias() = g * c.transpose();
      if (want_input) {
        c.noalias() = w.transpose() * g;
        col2im(s, cols.data(), grad_input.data() + n * in_stride);
      }
    }
  }

  std::fill(grad_weight.begin(), grad_weight.end(), T(0));
  std::fill(grad_bias.begin(), grad_bias.end(), T(0));
  for (int n = 0; n < s.batch; ++n) {
    const T* src = per_sample.data() + n * wsize;
    for (std::size_t i = 0; i < wsize; ++i) grad_weight[i] += src[i];
    const T* g = grad_output.data() + n * out_stride;
    for (int oc = 0; oc < s.out_channels; ++oc) {
      T acc = 0;
      for (int p = 0; p < plane; ++p) acc += g[oc * plane + p];
      grad_bias[oc] += acc;
    }
  }
}

template <typename T>
void pairwise_sq_distances(std::span<const T> a, std::span<const T> b, int n, int m, int d,
                           std::span<T> out) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* ai = a.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < m; ++j) {
      const T* bj = b.data() + static_cast<std::size_t>(j) * d;
      T acc = 0;
      for (int k = 0; k < d; ++k) {
        const T diff = ai[k] - bj[k];
        acc += diff * diff;
      }
      out[static_cast<std::size_t>(i) * m + j] = acc;
    }
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const int oh = s.out_height(), ow = s.out_width();
  for (int n = 0; n < s.batch; ++n)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          T acc = bias[oc];
          for (int ic = 0; ic < s.in_channels; ++ic)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int iy = y * s.stride - s.pad + ky;
                const int ix = x * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.in_height || ix < 0 || ix >= s.in_width) continue;
                acc += weight[((oc * s.in_channels + ic) * s.kernel + ky) * s.kernel + kx] *
                       input[((static_cast<std::size_t>(n) * s.in_channels + ic) * s.in_height +
                              iy) * s.in_width + ix];
              }
          output[((static_cast<std::size_t>(n) * s.out_channels + oc) * oh + y) * ow + x] = acc;
        }
}

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias) {
  const int oh = s.out_height(), ow = s.out_width();
  std::fill(grad_weight.begin(), grad_weight.end(), T(0));
  std::fill(grad_bias.begin(), grad_bias.end(), T(0));
  if (!grad_input.empty()) std::fill(grad_input.begin(), grad_input.end(), T(0));
  for (int n = 0; n < s.batch; ++n)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const T g =
              grad_output[((static_cast<std::size_t>(n) * s.out_channels + oc) * oh + y) * ow + x];
          grad_bias[oc] += g;
          for (int ic = 0; ic < s.in_channels; ++ic)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int iy = y * s.stride - s.pad + ky;
                const int ix = x * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.in_height || ix < 0 || ix >= s.in_width) continue;
                const std::size_t widx =
                    static_cast<std::size_t>(((oc * s.in_channels + ic) * s.kernel + ky) * s.kernel + kx);
                const std::size_t iidx =
                    ((static_cast<std::size_t>(n) * s.in_channels + ic) * s.in_height + iy) *
                        s.in_width + ix;
                grad_weight[widx] += g * input[iidx];
                if (!grad_input.empty()) grad_input[iidx] += g * weight[widx];
              }
        }
}

template <typename T>
void pairwise_sq_distances(std::span<const T> a, std::span<const T> b, int n, int m, int d,
                           std::span<T> out) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      T acc = 0;
      for (int k = 0; k < d; ++k) {
        const T diff = a[static_cast<std::size_t>(i) * d + k] - b[static_cast<std::size_t>(j) * d + k];
        acc += diff * diff;
      }
      out[static_cast<std::size_t>(i) * m + j] = acc;
    }
}

}  // namespace reference

#define G2CL_INSTANTIATE(T)                                                                      \
  template void conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,      \
                                  std::span<const T>, std::span<T>);                             \
  template void conv2d_backward<T>(const ConvShape&, std::span<const T>, std::span<const T>,     \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>); \
  template void pairwise_sq_distances<T>(std::span<const T>, std::span<const T>, int, int, int,  \
                                         std::span<T>);                                          \
  template void reference::conv2d_forward<T>(const ConvShape&, std::span<const T>,               \
                                             std::span<const T>, std::span<const T>,             \
                                             std::span<T>);                                      \
  template void reference::conv2d_backward<T>(const ConvShape&, std::span<const T>,              \
                                              std::span<const T>, std::span<const T>,            \
                                              std::span<T>, std::span<T>, std::span<T>);         \
  template void reference::pairwise_sq_distances<T>(std::span<const T>, std::span<const T>, int, \
                                                    int, int, std::span<T>);

G2CL_INSTANTIATE(float)
G2CL_INSTANTIATE(double)

#undef G2CL_INSTANTIATE

}  // namespace g2cl::kernels
