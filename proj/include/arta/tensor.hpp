#pragma once

// Dense f64 tensors and the forward primitives the model is built from.
//
// Tensors are row-major. Every primitive treats its operand as a matrix whose
// column count is the last extent and whose row count is the product of the
// leading extents; there is no broadcasting beyond a trailing-dimension
// row vector (add_row, layer_norm affine).

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arta/errors.hpp"

namespace arta {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : data_.size() / cols(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Forward compute counters. Multiply-accumulates and transcendental/division
// scalar evaluations are tallied separately, per named region, by the
// forward primitives below (never by backward passes).
struct OpTally {
  std::uint64_t macs = 0;
  std::uint64_t special = 0;  // exp, tanh, sqrt, division
  std::uint64_t flops() const { return 2 * macs + special; }
  OpTally& operator+=(const OpTally& o) {
    macs += o.macs;
    special += o.special;
    return *this;
  }
  bool operator==(const OpTally&) const = default;
};

class OpCounter;

namespace counting {
// Installs `counter` as the sink for the current thread; nullptr disables.
void install(OpCounter* counter);
OpCounter* installed();
void add_macs(std::uint64_t n);
void add_special(std::uint64_t n);

// Attributes counts inside its lifetime to `region` (nested scopes replace,
// then restore, the active region).
class Region {
 public:
  explicit Region(std::string name);
  ~Region();
  Region(const Region&) = delete;
  Region& operator=(const Region&) = delete;

 private:
  std::string previous_;
};

// Suspends counting inside its lifetime (loss terms are not part of the
// network's forward cost).
class Pause {
 public:
  Pause();
  ~Pause();
  Pause(const Pause&) = delete;
  Pause& operator=(const Pause&) = delete;

 private:
  OpCounter* saved_;
};
}  // namespace counting

// Compressed neighbour lists: keys of query i are keys[offsets[i]..offsets[i+1]).
struct Neighborhoods {
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint32_t> keys;

  std::size_t size() const { return offsets.size() - 1; }
  std::span<const std::uint32_t> of(std::size_t i) const {
    return {keys.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  void push(std::span<const std::uint32_t> ks) {
    keys.insert(keys.end(), ks.begin(), ks.end());
    offsets.push_back(static_cast<std::uint32_t>(keys.size()));
  }
  std::size_t total() const { return keys.size(); }

  static Neighborhoods from_mask(const std::vector<std::vector<bool>>& mask);
  static Neighborhoods full(std::size_t n);
};

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Multi-head scaled dot-product attention restricted to per-query key lists.
// q, k, v are [n×d] with d divisible by `heads`. Queries with an empty list
// produce a zero row. `probs`, when non-null, receives the attention weights
// laid out as [query][head][key-in-list].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const Neighborhoods& nb, std::vector<double>* probs = nullptr);

// Single-head attention with a boolean n×n mask. A fully masked row is a
// contract violation unless `query_valid` marks that query invalid.
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         const std::vector<std::vector<bool>>& mask,
                         const std::vector<bool>& query_valid = {});

// Rows of x picked by index; a negative index yields a zero row.
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index);
Tensor concat_rows(std::span<const Tensor* const> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);

}  // namespace ops

class OpCounter {
 public:
  void add(const std::string& region, const OpTally& t);
  const std::vector<std::pair<std::string, OpTally>>& regions() const { return regions_; }
  OpTally total() const;
  OpTally region(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, OpTally>> regions_;
};

}  // namespace arta
