#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace svae {

/// Dense row-major tensor of 64-bit floats.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(std::vector<double> v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t rows() const;  // 2-d only
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  /// Value of a single-element tensor.
  double item() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Dense kernels behind the tape ops. All are deterministic: outputs are
// bitwise identical regardless of the configured thread count (work is split
// into fixed chunks or fixed reduction blocks, each computed independently).
Tensor matmul(const Tensor& a, const Tensor& b);     // [n,k]x[k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a x b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T x b
Tensor colsum(const Tensor& a);                      // [n,m] -> [m]

// Vectorized elementwise maps, shared by the plain forward passes and the
// tape so both produce bitwise-identical activations.
void tanh_inplace(Tensor& t);
void sigmoid_inplace(Tensor& t);
void exp_inplace(Tensor& t);

void set_threads(int n);
int thread_count();

/// Runs fn(lo, hi) over fixed 4096-element chunks of [0, count), possibly in
/// parallel. Chunk boundaries do not depend on the thread count, and nested
/// calls run their chunks inline (in order), so results never depend on how
/// many threads execute.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn);

/// Same with an explicit chunk size.
void parallel_for_grain(std::size_t count, std::size_t grain,
                        const std::function<void(std::size_t, std::size_t)>& fn);

void check_finite(const Tensor& t, const char* what);

}  // namespace svae
