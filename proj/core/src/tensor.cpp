#include "ctn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace ctn {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, real fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

void Tensor::fill(real v) {
  for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (real x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  if (shape_numel(shape) != numel()) throw std::invalid_argument("reshape numel mismatch");
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace ctn
