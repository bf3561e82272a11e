#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qsnn {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// Dense row-major float32 array. The single value type flowing through the
/// engine; quantized quantities are held as reals on their grid points.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<float> d);
  Tensor(Shape s, float fill);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  size_t ndim() const { return shape.size(); }
  int64_t dim(size_t i) const { return shape.at(i); }

  float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, float v) { return Tensor(std::move(s), v); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, std::vector<float>{v}); }
};

void check_same_shape(const char* op, const Tensor& a, const Tensor& b);

}  // namespace qsnn
