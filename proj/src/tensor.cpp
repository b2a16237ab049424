#include "cxr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "cxr/error.hpp"

namespace cxr {

namespace {

void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  require(t.rank() == rank, ErrorCode::kShapeMismatch,
          std::string(what) + " must have rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
}

void validate_shape(const Shape& shape) {
  require(shape.size() <= 4, ErrorCode::kInvalidArgument, "tensors support at most 4 axes, got " + shape_string(shape));
  for (std::size_t i = 0; i < shape.size(); ++i) {
    require(shape[i] >= 1, ErrorCode::kInvalidArgument,
            "axis " + std::to_string(i) + " has zero extent in " + shape_string(shape));
  }
}

// Unrolls [Cin,H,W] into a [Cin*kh*kw, Ho*Wo] matrix; out-of-bounds taps are 0.
std::vector<float> im2col(const Tensor& input, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t padding,
                          std::size_t out_h, std::size_t out_w) {
  const std::size_t channels = input.dim(0);
  const std::size_t height = input.dim(1);
  const std::size_t width = input.dim(2);
  const std::size_t cols = out_h * out_w;
  std::vector<float> col(channels * kh * kw * cols, 0.0f);
  const float* src = input.data().data();

  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j, ++row) {
        float* dst = col.data() + row * cols;
        for (std::size_t y = 0; y < out_h; ++y) {
          const std::ptrdiff_t in_y = static_cast<std::ptrdiff_t>(y * stride + i) - static_cast<std::ptrdiff_t>(padding);
          if (in_y < 0 || in_y >= static_cast<std::ptrdiff_t>(height)) continue;
          const float* src_row = src + (c * height + static_cast<std::size_t>(in_y)) * width;
          float* dst_row = dst + y * out_w;
          for (std::size_t x = 0; x < out_w; ++x) {
            const std::ptrdiff_t in_x =
                static_cast<std::ptrdiff_t>(x * stride + j) - static_cast<std::ptrdiff_t>(padding);
            if (in_x >= 0 && in_x < static_cast<std::ptrdiff_t>(width)) dst_row[x] = src_row[in_x];
          }
        }
      }
    }
  }
  return col;
}

// out[m, n] = bias[m] + sum_k a[m, k] * b[k, n], k summed in ascending order.
void gemm_bias(std::span<const float> a, std::span<const float> b, std::span<const float> bias, std::span<float> out,
               std::size_t m, std::size_t k, std::size_t n) {
  constexpr std::size_t kRowBlock = 4;
  constexpr std::size_t kColBlock = 128;
  float acc[kRowBlock][kColBlock];

  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t nj = std::min(kColBlock, n - j0);
    for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
      const std::size_t ni = std::min(kRowBlock, m - i0);
      for (std::size_t r = 0; r < ni; ++r) std::fill_n(acc[r], nj, bias[i0 + r]);
      for (std::size_t p = 0; p < k; ++p) {
        const float* b_row = b.data() + p * n + j0;
        for (std::size_t r = 0; r < ni; ++r) {
          const float w = a[(i0 + r) * k + p];
          if (w == 0.0f) continue;
          float* acc_row = acc[r];
          for (std::size_t j = 0; j < nj; ++j) acc_row[j] += w * b_row[j];
        }
      }
      for (std::size_t r = 0; r < ni; ++r) std::copy_n(acc[r], nj, out.data() + (i0 + r) * n + j0);
    }
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  require(data_.size() == shape_size(shape_), ErrorCode::kShapeMismatch,
          "data length " + std::to_string(data_.size()) + " does not match shape " + shape_string(shape_));
}

Tensor Tensor::vector(std::vector<float> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

float& Tensor::at(std::size_t c, std::size_t y, std::size_t x) {
  return data_[(c * shape_[1] + y) * shape_[2] + x];
}

float Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  return data_[(c * shape_[1] + y) * shape_[2] + x];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  require(shape_size(shape) == data_.size(), ErrorCode::kShapeMismatch,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), std::move(data_));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t padding) {
  require(stride > 0, ErrorCode::kInvalidArgument, "conv2d stride must be positive");
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  require_rank(bias, 1, "conv2d bias");
  const std::size_t out_channels = kernel.dim(0);
  const std::size_t in_channels = kernel.dim(1);
  const std::size_t kh = kernel.dim(2);
  const std::size_t kw = kernel.dim(3);
  require(input.dim(0) == in_channels, ErrorCode::kShapeMismatch,
          "conv2d channel axis: input has " + std::to_string(input.dim(0)) + " channels, kernel expects " +
              std::to_string(in_channels));
  require(bias.dim(0) == out_channels, ErrorCode::kShapeMismatch,
          "conv2d bias axis: expected " + std::to_string(out_channels) + ", got " + std::to_string(bias.dim(0)));
  require(input.dim(1) + 2 * padding >= kh, ErrorCode::kShapeMismatch, "conv2d height axis: padded input smaller than kernel");
  require(input.dim(2) + 2 * padding >= kw, ErrorCode::kShapeMismatch, "conv2d width axis: padded input smaller than kernel");

  const std::size_t out_h = (input.dim(1) + 2 * padding - kh) / stride + 1;
  const std::size_t out_w = (input.dim(2) + 2 * padding - kw) / stride + 1;
  const std::vector<float> col = im2col(input, kh, kw, stride, padding, out_h, out_w);

  Tensor out({out_channels, out_h, out_w});
  gemm_bias(kernel.data(), col, bias.data(), out.data(), out_channels, in_channels * kh * kw, out_h * out_w);
  return out;
}

std::pair<Tensor, PoolIndices> maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  require(window > 0 && stride > 0, ErrorCode::kInvalidArgument, "maxpool2d window and stride must be positive");
  require_rank(input, 3, "maxpool2d input");
  const std::size_t channels = input.dim(0);
  const std::size_t height = input.dim(1);
  const std::size_t width = input.dim(2);
  require(height >= window && width >= window, ErrorCode::kShapeMismatch,
          "maxpool2d input " + shape_string(input.shape()) + " smaller than window " + std::to_string(window));

  const std::size_t out_h = (height - window) / stride + 1;
  const std::size_t out_w = (width - window) / stride + 1;
  Tensor out({channels, out_h, out_w});
  PoolIndices indices{out.shape(), std::vector<std::size_t>(out.size())};

  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      for (std::size_t x = 0; x < out_w; ++x, ++o) {
        std::size_t best = (c * height + y * stride) * width + x * stride;
        float best_value = input[best];
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t offset = (c * height + y * stride + i) * width + x * stride + j;
            if (input[offset] > best_value) {
              best_value = input[offset];
              best = offset;
            }
          }
        }
        out[o] = best_value;
        indices.offsets[o] = best;
      }
    }
  }
  return {std::move(out), std::move(indices)};
}

Tensor maxpool2d_backward(const Tensor& grad_out, const PoolIndices& indices, const Shape& input_shape) {
  require(grad_out.shape() == indices.shape && indices.offsets.size() == grad_out.size(), ErrorCode::kShapeMismatch,
          "maxpool2d_backward gradient " + shape_string(grad_out.shape()) + " does not match indices " +
              shape_string(indices.shape));
  Tensor grad_in(input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const std::size_t offset = indices.offsets[i];
    require(offset < grad_in.size(), ErrorCode::kInvalidArgument,
            "maxpool2d_backward offset " + std::to_string(offset) + " outside input " + shape_string(input_shape));
    grad_in[offset] += grad_out[i];
  }
  return grad_in;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_mask(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? 1.0f : 0.0f;
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "dense weight");
  const std::size_t m = weight.dim(0);
  const std::size_t n = weight.dim(1);
  require(input.size() == n, ErrorCode::kShapeMismatch,
          "dense input has " + std::to_string(input.size()) + " features, weight expects " + std::to_string(n));
  require(bias.size() == m, ErrorCode::kShapeMismatch,
          "dense bias has " + std::to_string(bias.size()) + " entries, weight expects " + std::to_string(m));

  Tensor out({m});
  const float* x = input.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = weight.data().data() + i * n;
    float acc = 0.0f;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = bias[i] + acc;
  }
  return out;
}

DenseGrads dense_vjp(const Tensor& input, const Tensor& weight, const Tensor& grad_out) {
  require_rank(weight, 2, "dense weight");
  const std::size_t m = weight.dim(0);
  const std::size_t n = weight.dim(1);
  require(input.size() == n, ErrorCode::kShapeMismatch,
          "dense_vjp input has " + std::to_string(input.size()) + " features, weight expects " + std::to_string(n));
  require(grad_out.size() == m, ErrorCode::kShapeMismatch,
          "dense_vjp gradient has " + std::to_string(grad_out.size()) + " entries, weight expects " + std::to_string(m));

  DenseGrads grads{Tensor({m, n}), Tensor({m}), Tensor({n})};
  for (std::size_t i = 0; i < m; ++i) {
    const float g = grad_out[i];
    grads.bias[i] = g;
    const float* w_row = weight.data().data() + i * n;
    float* gw_row = grads.weight.data().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      gw_row[j] = g * input[j];
      grads.input[j] += w_row[j] * g;
    }
  }
  return grads;
}

Tensor softmax(const Tensor& logits) {
  require(!logits.empty(), ErrorCode::kInvalidArgument, "softmax needs at least one logit");
  const float peak = *std::max_element(logits.values().begin(), logits.values().end());
  std::vector<double> shifted(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    shifted[i] = std::exp(static_cast<double>(logits[i]) - static_cast<double>(peak));
    total += shifted[i];
  }
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(shifted[i] / total);
  return out;
}

Tensor bilinear_resize(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require(out_h >= 1 && out_w >= 1, ErrorCode::kInvalidArgument, "bilinear_resize target must be at least 1x1");
  require_rank(image, 3, "bilinear_resize image");
  const std::size_t channels = image.dim(0);
  const std::size_t in_h = image.dim(1);
  const std::size_t in_w = image.dim(2);
  if (in_h == out_h && in_w == out_w) return image;

  struct Tap {
    std::size_t lo;
    std::size_t hi;
    float frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> result(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      result[d] = {lo, hi, static_cast<float>(src - static_cast<double>(lo))};
    }
    return result;
  };
  const std::vector<Tap> ty = taps(in_h, out_h);
  const std::vector<Tap> tx = taps(in_w, out_w);

  Tensor out({channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap& vy = ty[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap& vx = tx[x];
        const float top = image.at(c, vy.lo, vx.lo) + vx.frac * (image.at(c, vy.lo, vx.hi) - image.at(c, vy.lo, vx.lo));
        const float bottom =
            image.at(c, vy.hi, vx.lo) + vx.frac * (image.at(c, vy.hi, vx.hi) - image.at(c, vy.hi, vx.lo));
        out.at(c, y, x) = top + vy.frac * (bottom - top);
      }
    }
  }
  return out;
}

std::size_t argmax(std::span<const float> values) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace cxr
