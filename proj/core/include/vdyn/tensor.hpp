#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace vdyn {

// Dense row-major tensor of doubles, rank 1 or 2. Scalars are rank-1 tensors
// of size 1. Small enough that copies are cheap and intentional.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_string() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& s);

}  // namespace vdyn
