#pragma once

#include <cstdint>
#include <vector>

namespace ctn {

using real = double;

/// Dense row-major (C-order) tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, real fill);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, real v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(real v) { return Tensor({1}, v); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_[i]; }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  void fill(real v);
  bool all_finite() const;
  Tensor reshaped(std::vector<int64_t> shape) const;

 private:
  std::vector<int64_t> shape_;
  std::vector<real> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace ctn
