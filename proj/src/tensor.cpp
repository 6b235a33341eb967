#include "svae/tensor.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "svae/errors.hpp"

namespace svae {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

int g_threads = []() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}();

constexpr std::size_t kChunk = 4096;

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::row(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw ShapeError("rows(): tensor is not 2-d: " + shape_str());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw ShapeError("cols(): tensor is not 2-d: " + shape_str());
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

void set_threads(int n) { g_threads = n < 1 ? 1 : n; }
int thread_count() { return g_threads; }

namespace {
thread_local bool g_in_parallel = false;
}

void parallel_for_grain(std::size_t count, std::size_t grain,
                        const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  std::size_t nchunks = (count + grain - 1) / grain;
  int workers = g_threads;
  if (nchunks == 1 || workers == 1 || g_in_parallel) {
    // Same chunk walk, single thread: results are identical by construction.
    for (std::size_t c = 0; c < nchunks; ++c) {
      fn(c * grain, std::min(c * grain + grain, count));
    }
    return;
  }
  if (static_cast<std::size_t>(workers) > nchunks) workers = static_cast<int>(nchunks);
  std::atomic<std::size_t> next{0};
  auto run = [&]() {
    g_in_parallel = true;
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= nchunks) break;
      std::size_t lo = c * grain;
      std::size_t hi = std::min(lo + grain, count);
      fn(lo, hi);
    }
    g_in_parallel = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int i = 1; i < workers; ++i) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
}

void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn) {
  parallel_for_grain(count, kChunk, fn);
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_str() + " x " + b.shape_str());
  }
  std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({n, m});
  ConstMatMap bm(b.data(), k, m);
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    ConstMatMap am(a.data() + lo * k, hi - lo, k);
    MatMap om(out.data() + lo * m, hi - lo, m);
    om.noalias() = am * bm;
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + a.shape_str() + " x " + b.shape_str() + "^T");
  }
  std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor out({n, m});
  ConstMatMap bm(b.data(), m, k);
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    ConstMatMap am(a.data() + lo * k, hi - lo, k);
    MatMap om(out.data() + lo * m, hi - lo, m);
    om.noalias() = am * bm.transpose();
  });
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + a.shape_str() + "^T x " + b.shape_str());
  }
  std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({k, m});
  // Small output, long reduction: split the reduction into a fixed block
  // grid, compute partial products in parallel, then sum partials in block
  // order. The block grid does not depend on the thread count.
  if (k * m <= 65536 && n >= 16384) {
    constexpr std::size_t kBlocks = 8;
    std::size_t rows_per = (n + kBlocks - 1) / kBlocks;
    std::size_t nblocks = (n + rows_per - 1) / rows_per;
    std::vector<Tensor> partial(nblocks);
    std::atomic<std::size_t> next{0};
    auto run = [&]() {
      for (;;) {
        std::size_t blk = next.fetch_add(1);
        if (blk >= nblocks) return;
        std::size_t lo = blk * rows_per;
        std::size_t hi = std::min(lo + rows_per, n);
        partial[blk] = Tensor({k, m});
        ConstMatMap am(a.data() + lo * k, hi - lo, k);
        ConstMatMap bm(b.data() + lo * m, hi - lo, m);
        MatMap pm(partial[blk].data(), k, m);
        pm.noalias() = am.transpose() * bm;
      }
    };
    int workers = std::min<std::size_t>(g_threads, nblocks);
    std::vector<std::thread> pool;
    for (int i = 1; i < workers; ++i) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += partial[blk][i];
    }
    return out;
  }
  ConstMatMap am(a.data(), n, k);
  ConstMatMap bm(b.data(), n, m);
  parallel_for(k, [&](std::size_t lo, std::size_t hi) {
    MatMap om(out.data() + lo * m, hi - lo, m);
    om.noalias() = am.middleCols(lo, hi - lo).transpose() * bm;
  });
  return out;
}

namespace {

using ArrMap = Eigen::Map<Eigen::ArrayXd>;

template <typename F>
void map_chunks(Tensor& t, F&& f) {
  parallel_for(t.size(), [&](std::size_t lo, std::size_t hi) {
    ArrMap m(t.data() + lo, hi - lo);
    f(m);
  });
}

}  // namespace

void tanh_inplace(Tensor& t) {
  map_chunks(t, [](ArrMap& m) { m = m.tanh(); });
}

void sigmoid_inplace(Tensor& t) {
  map_chunks(t, [](ArrMap& m) { m = 1.0 / (1.0 + (-m).exp()); });
}

void exp_inplace(Tensor& t) {
  map_chunks(t, [](ArrMap& m) { m = m.exp(); });
}

Tensor colsum(const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError("colsum: " + a.shape_str());
  std::size_t n = a.rows(), m = a.cols();
  Tensor out({m});
  const double* p = a.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[j] += p[i * m + j];
  }
  return out;
}

}  // namespace svae
