#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace celldet {

// Dense row-major float32 tensor. Plain value type: copyable, movable,
// immutable by convention once handed to the graph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor full(std::vector<int> shape, float value);
  static Tensor zeros_like(const Tensor& other);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  // Negative indices count from the back.
  int dim(int i) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& at(std::initializer_list<int> idx);
  float at(std::initializer_list<int> idx) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& shape);

  // All elements finite (no NaN/Inf).
  bool all_finite() const;

 private:
  std::int64_t offset(std::initializer_list<int> idx) const;

  std::vector<int> shape_;
  std::vector<float> data_;
};

std::int64_t shape_numel(const std::vector<int>& shape);

}  // namespace celldet
