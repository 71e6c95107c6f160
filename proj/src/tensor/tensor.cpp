#include "celldet/tensor/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace celldet {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim in " + shape_str(shape_));
  }
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (int d : shape_) {
    if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim in " + shape_str(shape_));
  }
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = value;
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

int Tensor::dim(int i) const {
  const int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) {
    throw std::invalid_argument("Tensor::dim: axis " + std::to_string(i) + " out of range for " +
                                shape_str(shape_));
  }
  return shape_[static_cast<std::size_t>(i)];
}

std::int64_t Tensor::offset(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw std::invalid_argument("Tensor::at: index rank mismatch for " + shape_str(shape_));
  }
  std::int64_t off = 0;
  int axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= shape_[static_cast<std::size_t>(axis)]) {
      throw std::out_of_range("Tensor::at: index out of bounds for " + shape_str(shape_));
    }
    off = off * shape_[static_cast<std::size_t>(axis)] + i;
    ++axis;
  }
  return off;
}

float& Tensor::at(std::initializer_list<int> idx) { return data_[static_cast<std::size_t>(offset(idx))]; }

float Tensor::at(std::initializer_list<int> idx) const {
  return data_[static_cast<std::size_t>(offset(idx))];
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace celldet
