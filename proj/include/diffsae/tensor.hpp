#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace diffsae {

struct Node;

// Dense row-major tensor, 64-bit values. Copies are cheap handles: shape is
// copied, data/grad buffers are shared. Autograd state (grad buffer + node)
// rides along on the handle; plain value tensors leave both null.
struct Tensor {
  std::vector<std::size_t> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::shared_ptr<std::vector<double>> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);

  // Leaf with gradient tracking; shares `values` storage with the source.
  static Tensor param(const Tensor& values);

  std::size_t numel() const;
  std::size_t rows() const;  // first extent (1 for scalars)
  std::size_t cols() const;  // product of trailing extents

  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }
  double& at(std::size_t i) { return (*data)[i]; }
  double at(std::size_t i) const { return (*data)[i]; }
  double item() const;  // scalar value; throws unless numel()==1

  bool all_finite() const;
  std::string shape_str() const;
};

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace diffsae
