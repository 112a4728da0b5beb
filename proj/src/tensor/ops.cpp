#include "imn/tensor/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

namespace imn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

void require_rank(const Shape& shape, std::size_t rank, const char* op, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(shape));
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

template <typename T>
void add_into(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct ConvGeometry {
  std::size_t in_channels, height, width;
  std::size_t kernel_h, kernel_w;
  std::size_t pad_h, pad_w;
  std::size_t out_h, out_w;

  std::size_t rows() const { return in_channels * kernel_h * kernel_w; }
  std::size_t cols() const { return out_h * out_w; }
};

// Unfolds one zero-padded sample [Cin,H,W] into a (Cin*kh*kw) x (H'*W') matrix.
template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = input + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
        T* out_row = cols + row * g.cols();
        // valid output columns satisfy 0 <= ow + kj - pad_w < W
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.pad_w);
        const std::size_t ow_lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(g.width) - shift;
        const std::size_t ow_hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(hi, 0, g.out_w));
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          T* dst = out_row + oh * g.out_w;
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + ki) - static_cast<std::ptrdiff_t>(g.pad_h);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height) || ow_lo >= ow_hi) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.width;
          std::fill(dst, dst + ow_lo, T{0});
          std::memcpy(dst + ow_lo, src + (static_cast<std::ptrdiff_t>(ow_lo) + shift), (ow_hi - ow_lo) * sizeof(T));
          std::fill(dst + ow_hi, dst + g.out_w, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input sample.
template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* input_grad) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = input_grad + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
        const T* in_row = cols + row * g.cols();
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.pad_w);
        const std::size_t ow_lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(g.width) - shift;
        const std::size_t ow_hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(hi, 0, g.out_w));
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + ki) - static_cast<std::ptrdiff_t>(g.pad_h);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const T* src = in_row + oh * g.out_w + ow_lo;
          T* dst = plane + static_cast<std::size_t>(ih) * g.width + (static_cast<std::ptrdiff_t>(ow_lo) + shift);
          for (std::size_t i = 0; i + ow_lo < ow_hi; ++i) dst[i] += src[i];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(Tape<T>& tape, Var<T> input, Var<T> kernel, std::optional<Var<T>> bias, Padding2d padding) {
  const auto& x = input.value();
  const auto& k = kernel.value();
  require_rank(x.shape(), 4, "conv2d", "input");
  require_rank(k.shape(), 4, "conv2d", "kernel");
  const std::size_t batch = x.extent(0);
  const std::size_t out_channels = k.extent(0);
  if (k.extent(1) != x.extent(1)) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(k.extent(1)) + " input channels, input " +
                     to_string(x.shape()) + " has " + std::to_string(x.extent(1)));
  }
  const std::size_t padded_h = x.extent(2) + 2 * padding.height;
  const std::size_t padded_w = x.extent(3) + 2 * padding.width;
  if (k.extent(2) > padded_h || k.extent(3) > padded_w) {
    throw ShapeError("conv2d: kernel " + to_string(k.shape()) + " larger than padded input " +
                     std::to_string(padded_h) + "x" + std::to_string(padded_w));
  }
  if (bias && bias->value().shape() != Shape{out_channels}) {
    throw ShapeError("conv2d: bias shape " + to_string(bias->value().shape()) + " does not match " +
                     std::to_string(out_channels) + " output channels");
  }

  const ConvGeometry g{x.extent(1), x.extent(2), x.extent(3), k.extent(2), k.extent(3), padding.height,
                       padding.width, padded_h - k.extent(2) + 1, padded_w - k.extent(3) + 1};

  Tensor<T> out(Shape{batch, out_channels, g.out_h, g.out_w});
  std::vector<T> cols(g.rows() * g.cols());
  ConstMatrixMap<T> kmat(k.data().data(), out_channels, g.rows());
  const std::size_t in_stride = g.in_channels * g.height * g.width;
  const std::size_t out_stride = out_channels * g.cols();
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(x.data().data() + n * in_stride, g, cols.data());
    ConstMatrixMap<T> cmat(cols.data(), g.rows(), g.cols());
    MatrixMap<T> omat(out.data().data() + n * out_stride, out_channels, g.cols());
    omat.noalias() = kmat * cmat;
    if (bias) {
      const auto& b = bias->value();
      for (std::size_t co = 0; co < out_channels; ++co) omat.row(co).array() += b[co];
    }
  }

  auto rule = [input, kernel, bias, g, batch, out_channels](Tape<T>& t, std::span<const T> grad_out) {
    const auto& xv = t.value(input);
    const auto& kv = t.value(kernel);
    auto dx = t.grad(input);
    auto dk = t.grad(kernel);
    std::span<T> db = bias ? t.grad(*bias) : std::span<T>{};
    const std::size_t in_stride = g.in_channels * g.height * g.width;
    const std::size_t out_stride = out_channels * g.cols();
    std::vector<T> cols(g.rows() * g.cols());
    ConstMatrixMap<T> kmat(kv.data().data(), out_channels, g.rows());
    for (std::size_t n = 0; n < batch; ++n) {
      ConstMatrixMap<T> dy(grad_out.data() + n * out_stride, out_channels, g.cols());
      if (!db.empty()) {
        const T* row = grad_out.data() + n * out_stride;
        for (std::size_t co = 0; co < out_channels; ++co, row += g.cols()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.cols(); ++i) acc += static_cast<double>(row[i]);
          db[co] += static_cast<T>(acc);
        }
      }
      if (!dk.empty()) {
        im2col(xv.data().data() + n * in_stride, g, cols.data());
        ConstMatrixMap<T> cmat(cols.data(), g.rows(), g.cols());
        MatrixMap<T> dkmat(dk.data(), out_channels, g.rows());
        dkmat.noalias() += dy * cmat.transpose();
      }
      if (!dx.empty()) {
        MatrixMap<T> dcols(cols.data(), g.rows(), g.cols());
        dcols.noalias() = kmat.transpose() * dy;
        col2im_add(cols.data(), g, dx.data() + n * in_stride);
      }
    }
  };
  if (bias) return tape.record(std::move(out), {input, kernel, *bias}, std::move(rule));
  return tape.record(std::move(out), {input, kernel}, std::move(rule));
}

template <typename T>
Var<T> batchnorm2d(Tape<T>& tape, Var<T> input, Var<T> gamma, Var<T> beta, BatchNormState<T>& state,
                   BnMode mode, double momentum, double eps) {
  if (mode == BnMode::eval) return batchnorm2d_eval(tape, input, gamma, beta, state, eps);

  const auto& x = input.value();
  require_rank(x.shape(), 4, "batchnorm2d", "input");
  const std::size_t batch = x.extent(0), channels = x.extent(1), plane = x.extent(2) * x.extent(3);
  if (gamma.value().shape() != Shape{channels} || beta.value().shape() != Shape{channels} ||
      state.running_mean.shape() != Shape{channels}) {
    throw ShapeError("batchnorm2d: affine/running parameters must have shape (" + std::to_string(channels) + ")");
  }
  const std::size_t count = batch * plane;
  if (count < 2) {
    throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel, got " + std::to_string(count));
  }

  auto normalized = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(channels);
  Tensor<T> out(x.shape());
  const auto& g = gamma.value();
  const auto& b = beta.value();
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* p = x.data().data() + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* p = x.data().data() + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(count);
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[c] = static_cast<T>(istd);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = static_cast<T>((x[base + i] - mean) * istd);
        (*normalized)[base + i] = xh;
        out[base + i] = g[c] * xh + b[c];
      }
    }
    const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
    state.running_mean[c] = static_cast<T>((1.0 - momentum) * state.running_mean[c] + momentum * mean);
    state.running_var[c] = static_cast<T>((1.0 - momentum) * state.running_var[c] + momentum * unbiased);
  }
  ++state.batches_tracked;

  return tape.record(
      std::move(out), {input, gamma, beta},
      [input, gamma, beta, normalized, inv_std, batch, channels, plane](Tape<T>& t, std::span<const T> dy) {
        const auto& gv = t.value(gamma);
        auto dx = t.grad(input);
        auto dg = t.grad(gamma);
        auto dbeta = t.grad(beta);
        const double m = static_cast<double>(batch * plane);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += dy[base + i];
              sum_dy_xh += static_cast<double>(dy[base + i]) * (*normalized)[base + i];
            }
          }
          if (!dg.empty()) dg[c] += static_cast<T>(sum_dy_xh);
          if (!dbeta.empty()) dbeta[c] += static_cast<T>(sum_dy);
          if (dx.empty()) continue;
          const double coeff = static_cast<double>(gv[c]) * (*inv_std)[c] / m;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              dx[base + i] += static_cast<T>(coeff * (m * dy[base + i] - sum_dy - (*normalized)[base + i] * sum_dy_xh));
            }
          }
        }
      });
}

template <typename T>
Var<T> batchnorm2d_eval(Tape<T>& tape, Var<T> input, Var<T> gamma, Var<T> beta, const BatchNormState<T>& state,
                        double eps) {
  const auto& x = input.value();
  require_rank(x.shape(), 4, "batchnorm2d", "input");
  const std::size_t batch = x.extent(0), channels = x.extent(1), plane = x.extent(2) * x.extent(3);
  if (gamma.value().shape() != Shape{channels} || beta.value().shape() != Shape{channels} ||
      state.running_mean.shape() != Shape{channels}) {
    throw ShapeError("batchnorm2d: affine/running parameters must have shape (" + std::to_string(channels) + ")");
  }
  if (state.batches_tracked == 0) {
    throw std::logic_error("batchnorm2d: eval mode requested before any running statistics were recorded");
  }
  auto inv_std = std::make_shared<std::vector<T>>(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    (*inv_std)[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + eps));
  }
  const auto& g = gamma.value();
  const auto& b = beta.value();
  Tensor<T> out(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * plane;
      const T mean = state.running_mean[c];
      for (std::size_t i = 0; i < plane; ++i) out[base + i] = g[c] * ((x[base + i] - mean) * (*inv_std)[c]) + b[c];
    }
  }
  auto mean = std::make_shared<std::vector<T>>(state.running_mean.storage());
  return tape.record(std::move(out), {input, gamma, beta},
                     [input, gamma, beta, inv_std, mean, batch, channels, plane](Tape<T>& t, std::span<const T> dy) {
                       const auto& xv = t.value(input);
                       const auto& gv = t.value(gamma);
                       auto dx = t.grad(input);
                       auto dg = t.grad(gamma);
                       auto dbeta = t.grad(beta);
                       for (std::size_t n = 0; n < batch; ++n) {
                         for (std::size_t c = 0; c < channels; ++c) {
                           const std::size_t base = (n * channels + c) * plane;
                           const T istd = (*inv_std)[c];
                           for (std::size_t i = 0; i < plane; ++i) {
                             if (!dx.empty()) dx[base + i] += dy[base + i] * gv[c] * istd;
                             if (!dg.empty()) dg[c] += dy[base + i] * ((xv[base + i] - (*mean)[c]) * istd);
                             if (!dbeta.empty()) dbeta[c] += dy[base + i];
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> gelu(Tape<T>& tape, Var<T> input) {
  const auto& x = input.value();
  Tensor<T> out(x.shape());
  auto cdf = std::make_shared<std::vector<T>>(x.size());
  constexpr T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T phi = T{0.5} * (T{1} + std::erf(x[i] * inv_sqrt2));
    (*cdf)[i] = phi;
    out[i] = x[i] * phi;
  }
  return tape.record(std::move(out), {input}, [input, cdf](Tape<T>& t, std::span<const T> dy) {
    const auto& xv = t.value(input);
    auto dx = t.grad(input);
    constexpr T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * v * v);
      dx[i] += dy[i] * ((*cdf)[i] + v * pdf);
    }
  });
}

template <typename T>
Var<T> maxpool2d(Tape<T>& tape, Var<T> input, std::size_t pool_width) {
  const auto& x = input.value();
  require_rank(x.shape(), 4, "maxpool2d", "input");
  if (pool_width == 0 || x.extent(3) % pool_width != 0) {
    throw ShapeError("maxpool2d: width " + std::to_string(x.extent(3)) + " is not divisible by pool width " +
                     std::to_string(pool_width));
  }
  const std::size_t out_w = x.extent(3) / pool_width;
  const std::size_t rows = x.extent(0) * x.extent(1) * x.extent(2);
  Tensor<T> out(Shape{x.extent(0), x.extent(1), x.extent(2), out_w});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t w = 0; w < out_w; ++w) {
      const std::size_t start = r * x.extent(3) + w * pool_width;
      std::size_t best = start;
      for (std::size_t j = 1; j < pool_width; ++j) {
        if (x[start + j] > x[best]) best = start + j;
      }
      out[r * out_w + w] = x[best];
      (*argmax)[r * out_w + w] = best;
    }
  }
  return tape.record(std::move(out), {input}, [input, argmax](Tape<T>& t, std::span<const T> dy) {
    auto dx = t.grad(input);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[(*argmax)[i]] += dy[i];
  });
}

template <typename T>
Var<T> upsample_nearest(Tape<T>& tape, Var<T> input, std::size_t factor) {
  const auto& x = input.value();
  require_rank(x.shape(), 4, "upsample_nearest", "input");
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::size_t in_w = x.extent(3);
  const std::size_t rows = x.size() / in_w;
  Tensor<T> out(Shape{x.extent(0), x.extent(1), x.extent(2), in_w * factor});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t w = 0; w < in_w; ++w) {
      std::fill_n(out.data().data() + (r * in_w + w) * factor, factor, x[r * in_w + w]);
    }
  }
  return tape.record(std::move(out), {input}, [input, factor](Tape<T>& t, std::span<const T> dy) {
    auto dx = t.grad(input);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      T acc{0};
      for (std::size_t j = 0; j < factor; ++j) acc += dy[i * factor + j];
      dx[i] += acc;
    }
  });
}

template <typename T>
Var<T> linear(Tape<T>& tape, Var<T> input, Var<T> weight, Var<T> bias) {
  const auto& x = input.value();
  const auto& w = weight.value();
  require_rank(x.shape(), 2, "linear", "input");
  require_rank(w.shape(), 2, "linear", "weight");
  const std::size_t rows = x.extent(0), inner = x.extent(1), outs = w.extent(1);
  if (w.extent(0) != inner) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " + to_string(w.shape()));
  }
  if (bias.value().shape() != Shape{outs}) {
    throw ShapeError("linear: bias " + to_string(bias.value().shape()) + " must have shape (" +
                     std::to_string(outs) + ")");
  }
  // Plain loops keep each row's result independent of the batch size.
  Tensor<T> out(Shape{rows, outs});
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t k = 0; k < outs; ++k) {
      double acc = 0.0;
      for (std::size_t d = 0; d < inner; ++d) acc += static_cast<double>(x[n * inner + d]) * w[d * outs + k];
      out[n * outs + k] = static_cast<T>(acc + bias.value()[k]);
    }
  }
  return tape.record(std::move(out), {input, weight, bias},
                     [input, weight, bias, rows, inner, outs](Tape<T>& t, std::span<const T> dy) {
                       const auto& xv = t.value(input);
                       const auto& wv = t.value(weight);
                       auto dx = t.grad(input);
                       auto dw = t.grad(weight);
                       auto db = t.grad(bias);
                       for (std::size_t n = 0; n < rows; ++n) {
                         for (std::size_t k = 0; k < outs; ++k) {
                           const T g = dy[n * outs + k];
                           if (!db.empty()) db[k] += g;
                           for (std::size_t d = 0; d < inner; ++d) {
                             if (!dx.empty()) dx[n * inner + d] += g * wv[d * outs + k];
                             if (!dw.empty()) dw[d * outs + k] += g * xv[n * inner + d];
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> global_avg_pool(Tape<T>& tape, Var<T> input) {
  const auto& x = input.value();
  require_rank(x.shape(), 4, "global_avg_pool", "input");
  const std::size_t rows = x.extent(0) * x.extent(1);
  const std::size_t plane = x.extent(2) * x.extent(3);
  Tensor<T> out(Shape{x.extent(0), x.extent(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x[r * plane + i];
    out[r] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return tape.record(std::move(out), {input}, [input, plane](Tape<T>& t, std::span<const T> dy) {
    auto dx = t.grad(input);
    const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i / plane] * inv;
  });
}

template <typename T>
Var<T> softmax(Tape<T>& tape, Var<T> logits) {
  const auto& z = logits.value();
  require_rank(z.shape(), 2, "softmax", "logits");
  const std::size_t rows = z.extent(0), k = z.extent(1);
  Tensor<T> out(z.shape());
  for (std::size_t n = 0; n < rows; ++n) {
    const T* row = z.data().data() + n * k;
    const double top = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(row[j] - top);
    for (std::size_t j = 0; j < k; ++j) out[n * k + j] = static_cast<T>(std::exp(row[j] - top) / total);
  }
  auto probs = std::make_shared<std::vector<T>>(out.storage());
  return tape.record(std::move(out), {logits}, [logits, probs, rows, k](Tape<T>& t, std::span<const T> dy) {
    auto dz = t.grad(logits);
    for (std::size_t n = 0; n < rows; ++n) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += static_cast<double>(dy[n * k + j]) * (*probs)[n * k + j];
      for (std::size_t j = 0; j < k; ++j) {
        dz[n * k + j] += static_cast<T>((*probs)[n * k + j] * (dy[n * k + j] - dot));
      }
    }
  });
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, Var<T> input) {
  const auto& x = input.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_sigmoid(x[i]);
  auto values = std::make_shared<std::vector<T>>(out.storage());
  return tape.record(std::move(out), {input}, [input, values](Tape<T>& t, std::span<const T> dy) {
    auto dx = t.grad(input);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T s = (*values)[i];
      dx[i] += dy[i] * s * (T{1} - s);
    }
  });
}

template <typename T>
Var<T> reshape(Tape<T>& tape, Var<T> input, Shape shape) {
  auto out = input.value().reshaped(std::move(shape));
  return tape.record(std::move(out), {input}, [input](Tape<T>& t, std::span<const T> dy) {
    add_into(t.grad(input), dy);
  });
}

template <typename T>
Var<T> readout(Tape<T>& tape, Var<T> weights, Var<T> signal, Var<T> bias) {
  const auto& w = weights.value();
  const auto& x = signal.value();
  const auto& b = bias.value();
  require_rank(w.shape(), 4, "readout", "weights");
  require_rank(x.shape(), 3, "readout", "signal");
  const std::size_t batch = w.extent(0), outs = w.extent(1);
  const std::size_t plane = w.extent(2) * w.extent(3);
  if (x.extent(0) != batch || x.extent(1) != w.extent(2) || x.extent(2) != w.extent(3)) {
    throw ShapeError("readout: weights " + to_string(w.shape()) + " do not match signal " + to_string(x.shape()));
  }
  if (b.shape() != Shape{batch, outs}) {
    throw ShapeError("readout: bias " + to_string(b.shape()) + " must be (" + std::to_string(batch) + ", " +
                     std::to_string(outs) + ")");
  }
  Tensor<T> out(Shape{batch, outs});
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xs = x.data().data() + n * plane;
    for (std::size_t k = 0; k < outs; ++k) {
      const T* ws = w.data().data() + (n * outs + k) * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(ws[i]) * xs[i];
      out[n * outs + k] = static_cast<T>(acc + b[n * outs + k]);
    }
  }
  return tape.record(std::move(out), {weights, signal, bias},
                     [weights, signal, bias, batch, outs, plane](Tape<T>& t, std::span<const T> dz) {
                       const auto& wv = t.value(weights);
                       const auto& xv = t.value(signal);
                       auto dw = t.grad(weights);
                       auto dx = t.grad(signal);
                       auto db = t.grad(bias);
                       for (std::size_t n = 0; n < batch; ++n) {
                         for (std::size_t k = 0; k < outs; ++k) {
                           const T g = dz[n * outs + k];
                           if (!db.empty()) db[n * outs + k] += g;
                           const std::size_t wbase = (n * outs + k) * plane;
                           for (std::size_t i = 0; i < plane; ++i) {
                             if (!dw.empty()) dw[wbase + i] += g * xv[n * plane + i];
                             if (!dx.empty()) dx[n * plane + i] += g * wv[wbase + i];
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> sum(Tape<T>& tape, Var<T> input) {
  const auto& x = input.value();
  double acc = 0.0;
  for (auto v : x.data()) acc += v;
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(acc)), {input}, [input](Tape<T>& t, std::span<const T> dy) {
    for (auto& g : t.grad(input)) g += dy[0];
  });
}

template <typename T>
Var<T> mul(Tape<T>& tape, Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av.shape(), bv.shape(), "mul");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::span<const T> dy) {
    const auto& x = t.value(a);
    const auto& y = t.value(b);
    auto da = t.grad(a);
    auto db = t.grad(b);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (!da.empty()) da[i] += dy[i] * y[i];
      if (!db.empty()) db[i] += dy[i] * x[i];
    }
  });
}

template <typename T>
Var<T> add(Tape<T>& tape, Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av.shape(), bv.shape(), "add");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::span<const T> dy) {
    auto da = t.grad(a);
    auto db = t.grad(b);
    if (!da.empty()) add_into(da, dy);
    if (!db.empty()) add_into(db, dy);
  });
}

template <typename T>
Var<T> scale(Tape<T>& tape, Var<T> input, T factor) {
  const auto& x = input.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return tape.record(std::move(out), {input}, [input, factor](Tape<T>& t, std::span<const T> dy) {
    auto dx = t.grad(input);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
  });
}

template <typename T>
Var<T> mean_abs(Tape<T>& tape, Var<T> input) {
  const auto& x = input.value();
  double acc = 0.0;
  for (auto v : x.data()) acc += std::abs(static_cast<double>(v));
  const double count = static_cast<double>(x.size());
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(acc / count)), {input},
                     [input, count](Tape<T>& t, std::span<const T> dy) {
                       const auto& xv = t.value(input);
                       auto dx = t.grad(input);
                       const T g = static_cast<T>(dy[0] / count);
                       for (std::size_t i = 0; i < dx.size(); ++i) {
                         if (xv[i] > T{0}) dx[i] += g;
                         else if (xv[i] < T{0}) dx[i] -= g;
                       }
                     });
}

template <typename T>
Var<T> cross_entropy(Tape<T>& tape, Var<T> logits, std::span<const int> targets) {
  const auto& z = logits.value();
  require_rank(z.shape(), 2, "cross_entropy", "logits");
  const std::size_t rows = z.extent(0), k = z.extent(1);
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                     " rows");
  }
  auto probs = std::make_shared<std::vector<double>>(z.size());
  double total = 0.0;
  for (std::size_t n = 0; n < rows; ++n) {
    if (targets[n] < 0 || static_cast<std::size_t>(targets[n]) >= k) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[n]) + " outside [0, " +
                                  std::to_string(k) + ")");
    }
    const T* row = z.data().data() + n * k;
    const double top = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - top);
    for (std::size_t j = 0; j < k; ++j) (*probs)[n * k + j] = std::exp(row[j] - top) / denom;
    total += top + std::log(denom) - row[targets[n]];
  }
  std::vector<int> labels(targets.begin(), targets.end());
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(total / static_cast<double>(rows))), {logits},
                     [logits, probs, labels = std::move(labels), rows, k](Tape<T>& t, std::span<const T> dy) {
                       auto dz = t.grad(logits);
                       const double g = dy[0] / static_cast<double>(rows);
                       for (std::size_t n = 0; n < rows; ++n) {
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = static_cast<int>(j) == labels[n] ? 1.0 : 0.0;
                           dz[n * k + j] += static_cast<T>(g * ((*probs)[n * k + j] - onehot));
                         }
                       }
                     });
}

template <typename T>
Var<T> bce_with_logits(Tape<T>& tape, Var<T> logits, std::span<const int> targets) {
  const auto& z = logits.value();
  if (z.size() != targets.size() || (z.rank() == 2 && z.extent(1) != 1) || z.rank() > 2) {
    throw ShapeError("bce_with_logits: logits " + to_string(z.shape()) + " incompatible with " +
                     std::to_string(targets.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < z.size(); ++n) {
    if (targets[n] != 0 && targets[n] != 1) {
      throw std::invalid_argument("bce_with_logits: target " + std::to_string(targets[n]) + " is not 0 or 1");
    }
    const double v = z[n];
    total += std::max(v, 0.0) - v * targets[n] + std::log1p(std::exp(-std::abs(v)));
  }
  std::vector<int> labels(targets.begin(), targets.end());
  const double count = static_cast<double>(z.size());
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(total / count)), {logits},
                     [logits, labels = std::move(labels), count](Tape<T>& t, std::span<const T> dy) {
                       const auto& zv = t.value(logits);
                       auto dz = t.grad(logits);
                       const double g = dy[0] / count;
                       for (std::size_t n = 0; n < dz.size(); ++n) {
                         dz[n] += static_cast<T>(g * (stable_sigmoid(static_cast<double>(zv[n])) - labels[n]));
                       }
                     });
}

#define IMN_INSTANTIATE_OPS(T)                                                                                    \
  template Var<T> conv2d(Tape<T>&, Var<T>, Var<T>, std::optional<Var<T>>, Padding2d);                              \
  template Var<T> batchnorm2d(Tape<T>&, Var<T>, Var<T>, Var<T>, BatchNormState<T>&, BnMode, double, double);       \
  template Var<T> batchnorm2d_eval(Tape<T>&, Var<T>, Var<T>, Var<T>, const BatchNormState<T>&, double);            \
  template Var<T> gelu(Tape<T>&, Var<T>);                                                                          \
  template Var<T> maxpool2d(Tape<T>&, Var<T>, std::size_t);                                                        \
  template Var<T> upsample_nearest(Tape<T>&, Var<T>, std::size_t);                                                 \
  template Var<T> linear(Tape<T>&, Var<T>, Var<T>, Var<T>);                                                        \
  template Var<T> global_avg_pool(Tape<T>&, Var<T>);                                                               \
  template Var<T> softmax(Tape<T>&, Var<T>);                                                                       \
  template Var<T> sigmoid(Tape<T>&, Var<T>);                                                                       \
  template Var<T> reshape(Tape<T>&, Var<T>, Shape);                                                                \
  template Var<T> readout(Tape<T>&, Var<T>, Var<T>, Var<T>);                                                       \
  template Var<T> sum(Tape<T>&, Var<T>);                                                                           \
  template Var<T> mul(Tape<T>&, Var<T>, Var<T>);                                                                   \
  template Var<T> add(Tape<T>&, Var<T>, Var<T>);                                                                   \
  template Var<T> scale(Tape<T>&, Var<T>, T);                                                                      \
  template Var<T> mean_abs(Tape<T>&, Var<T>);                                                                      \
  template Var<T> cross_entropy(Tape<T>&, Var<T>, std::span<const int>);                                           \
  template Var<T> bce_with_logits(Tape<T>&, Var<T>, std::span<const int>);

IMN_INSTANTIATE_OPS(float)
IMN_INSTANTIATE_OPS(double)

#undef IMN_INSTANTIATE_OPS

}  // namespace imn
