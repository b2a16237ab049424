#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cxr {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array with up to four axes (last axis fastest).
///
/// Image tensors use [channels, height, width]. A default-constructed
/// tensor is empty (rank 0, no storage) and is used for "not captured".
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor vector(std::vector<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t c, std::size_t y, std::size_t x);
  float at(std::size_t c, std::size_t y, std::size_t x) const;

  /// Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Flat input offsets of the winning element per pooled output cell.
struct PoolIndices {
  Shape shape;
  std::vector<std::size_t> offsets;

  bool empty() const noexcept { return offsets.empty(); }
  friend bool operator==(const PoolIndices&, const PoolIndices&) = default;
};

// ---------------------------------------------------------------------------
// Primitives. All are pure; all throw cxr::Error on contract violations.
// ---------------------------------------------------------------------------

/// Cross-correlation with zero padding: kernel [Cout,Cin,kh,kw], input [Cin,H,W].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

/// Max pooling; trailing rows/cols that do not fill a window are dropped.
/// Ties resolve to the first element in row-major window order.
std::pair<Tensor, PoolIndices> maxpool2d(const Tensor& input, std::size_t window = 2, std::size_t stride = 2);

Tensor maxpool2d_backward(const Tensor& grad_out, const PoolIndices& indices, const Shape& input_shape);

Tensor relu(const Tensor& input);
/// 1 where x > 0, else 0 (subgradient 0 at the kink).
Tensor relu_mask(const Tensor& input);

/// out = weight * input + bias, weight [m,n].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
  Tensor weight;
  Tensor bias;
  Tensor input;
};

DenseGrads dense_vjp(const Tensor& input, const Tensor& weight, const Tensor& grad_out);

/// Max-subtracted softmax; the normaliser is accumulated in double.
Tensor softmax(const Tensor& logits);

/// Half-pixel (align_corners = false) bilinear resampling of [C,H,W].
Tensor bilinear_resize(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const float> values);

}  // namespace cxr
