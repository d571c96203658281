#include "diffsae/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace diffsae {

static std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor extent must be positive");
    n *= e;
  }
  return n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::make_shared<std::vector<double>>(n, v));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (product(shape) != values.size())
    throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                " does not match shape " + diffsae::shape_str(shape));
  return Tensor(std::move(shape), std::make_shared<std::vector<double>>(std::move(values)));
}

Tensor Tensor::param(const Tensor& values) {
  Tensor t;
  t.shape = values.shape;
  t.data = values.data;
  t.grad = std::make_shared<std::vector<double>>(values.numel(), 0.0);
  t.requires_grad = true;
  return t;
}

std::size_t Tensor::numel() const { return data ? data->size() : 0; }

std::size_t Tensor::rows() const { return shape.empty() ? 1 : shape[0]; }

std::size_t Tensor::cols() const {
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() on non-scalar tensor " + shape_str());
  return (*data)[0];
}

bool Tensor::all_finite() const {
  for (double v : *data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const { return diffsae::shape_str(shape); }

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream ss;
  ss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) ss << 'x';
    ss << shape[i];
  }
  ss << ']';
  return ss.str();
}

}  // namespace diffsae
