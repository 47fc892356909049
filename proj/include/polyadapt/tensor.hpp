#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace polyadapt {

// Dense row-major array of doubles. One- and two-dimensional tensors are the
// common case; a 1-D tensor of length n is treated as a 1 x n row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor scalar(double value);
  static Tensor row(std::span<const double> values);
  static Tensor identity(std::size_t n);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D view; scalars are 1 x 1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  double item() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double value);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Dense kernels used by both the tape and the plain-value helpers.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_transposed_b(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_transposed_a(const Tensor& a, const Tensor& b);  // a^T * b
Tensor transpose(const Tensor& a);

// Numerically stable softmax. Throws Error("empty logits") on empty input.
std::vector<double> softmax_stable(std::span<const double> logits);
std::vector<double> log_softmax_stable(std::span<const double> logits);

// Mean over positions with mask[t] == true of -log softmax(logits[t])[gold[t]].
double cross_entropy(const Tensor& logits, std::span<const int> gold, const std::vector<bool>& mask);

// Weighted sum checksum used by regression goldens.
double checksum(const Tensor& t);

}  // namespace polyadapt
