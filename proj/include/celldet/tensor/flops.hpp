#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace celldet {

// Inputs to the dominant-term complexity models: sequence length n, sequence
// depth d, attention heads h, convolution kernel size k, filter count f.
struct ComplexityParams {
  std::int64_t n = 1;
  std::int64_t d = 1;
  std::int64_t h = 1;
  std::int64_t k = 1;
  std::int64_t f = 1;

  void validate() const {
    if (n <= 0 || d <= 0 || h <= 0 || k <= 0 || f <= 0) {
      throw std::invalid_argument("ComplexityParams: all parameters must be positive");
    }
  }
};

// Dominant operation count of multi-head self-attention: n^2 * d * h.
inline std::int64_t mhsa_flops(const ComplexityParams& p) {
  p.validate();
  return p.n * p.n * p.d * p.h;
}

// Dominant operation count of a convolutional layer: n * d * k * f.
inline std::int64_t conv_flops(const ComplexityParams& p) {
  p.validate();
  return p.n * p.d * p.k * p.f;
}

}  // namespace celldet
