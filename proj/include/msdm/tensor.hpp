#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "msdm/error.hpp"

namespace msdm {

/// Dense row-major float tensor with an optional gradient buffer of the
/// same shape.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> values;
  std::vector<float> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)), values(count(shape), fill) {}
  Tensor(std::vector<int> s, std::vector<float> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != count(shape)) throw ShapeMismatch("tensor values do not match shape " + shape_str());
  }

  static std::size_t count(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }

  std::size_t size() const { return values.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  float* data() { return values.data(); }
  const float* data() const { return values.data(); }

  bool has_grad() const { return !grad.empty(); }
  void zero_grad() { grad.assign(values.size(), 0.0f); }

  std::string shape_str() const {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += 'x';
      s += std::to_string(shape[i]);
    }
    return s.empty() ? "scalar" : s;
  }

  Tensor reshaped(std::vector<int> s) const {
    if (count(s) != values.size()) throw ShapeMismatch("cannot reshape " + shape_str());
    Tensor t;
    t.shape = std::move(s);
    t.values = values;
    return t;
  }
};

}  // namespace msdm
