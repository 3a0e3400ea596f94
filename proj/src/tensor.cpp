#include "arta/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "arta/kernels.hpp"

namespace arta {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

thread_local OpCounter* t_sink = nullptr;
thread_local std::string t_region = "unscoped";

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size())
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on a tensor of shape " + shape_string(shape_));
  return data_[0];
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "×" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Counting

void OpCounter::add(const std::string& region, const OpTally& t) {
  for (auto& [name, tally] : regions_) {
    if (name == region) {
      tally += t;
      return;
    }
  }
  regions_.emplace_back(region, t);
}

OpTally OpCounter::total() const {
  OpTally sum;
  for (const auto& [name, tally] : regions_) sum += tally;
  return sum;
}

OpTally OpCounter::region(const std::string& name) const {
  for (const auto& [n, tally] : regions_)
    if (n == name) return tally;
  return {};
}

namespace counting {

void install(OpCounter* counter) { t_sink = counter; }
OpCounter* installed() { return t_sink; }

void add_macs(std::uint64_t n) {
  if (t_sink && n) t_sink->add(t_region, {n, 0});
}
void add_special(std::uint64_t n) {
  if (t_sink && n) t_sink->add(t_region, {0, n});
}

Region::Region(std::string name) : previous_(std::move(t_region)) { t_region = std::move(name); }
Region::~Region() { t_region = std::move(previous_); }

Pause::Pause() : saved_(t_sink) { t_sink = nullptr; }
Pause::~Pause() { t_sink = saved_; }

}  // namespace counting

Neighborhoods Neighborhoods::from_mask(const std::vector<std::vector<bool>>& mask) {
  Neighborhoods nb;
  std::vector<std::uint32_t> row;
  for (const auto& m : mask) {
    row.clear();
    for (std::size_t j = 0; j < m.size(); ++j)
      if (m[j]) row.push_back(static_cast<std::uint32_t>(j));
    nb.push(row);
  }
  return nb;
}

Neighborhoods Neighborhoods::full(std::size_t n) {
  Neighborhoods nb;
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  for (std::size_t i = 0; i < n; ++i) nb.push(all);
  return nb;
}

// ---------------------------------------------------------------------------
// Forward primitives

namespace ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

void require_matrix(const Tensor& a, const char* what) {
  if (a.shape().size() != 2)
    throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_string(a.shape()));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c = Tensor::matrix(m, n);
  kernels::gemm_nn(m, k, n, a.data(), b.data(), c.data());
  counting::add_macs(m * k * n);
  return c;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_matrix(w, "linear");
  if (x.cols() != w.shape()[0] || bias.size() != w.shape()[1])
    throw DimensionError("linear: " + shape_string(x.shape()) + " through " +
                         shape_string(w.shape()) + " + " + shape_string(bias.shape()));
  const std::size_t m = x.rows(), k = w.shape()[0], n = w.shape()[1];
  Tensor y = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) std::copy(bias.data().begin(), bias.data().end(), y.row(i).begin());
  kernels::gemm_nn(m, k, n, x.data(), w.data(), y.data());
  counting::add_macs(m * k * n);
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.size() != x.cols())
    throw DimensionError("add_row: row of " + shape_string(row.shape()) + " onto " +
                         shape_string(x.shape()));
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto dst = y.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += row[c];
  }
  return y;
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
  }
  counting::add_special(x.size());
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x[i];
    if (v >= 0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  counting::add_special(2 * x.size());
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.cols();
  if (d == 0) throw DimensionError("layer_norm: zero feature dimension");
  if (gamma.size() != d || beta.size() != d)
    throw DimensionError("layer_norm: affine parameters do not match " + shape_string(x.shape()));
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
  Tensor y = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto out = y.row(r);
    for (std::size_t c = 0; c < d; ++c) out[c] = (in[c] - mean) * inv * gamma[c] + beta[c];
  }
  counting::add_special(2 * x.rows());
  return y;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const Neighborhoods& nb, std::vector<double>* probs) {
  require_same_shape(q, k, "attention q/k");
  require_same_shape(q, v, "attention q/v");
  const std::size_t n = q.rows(), d = q.cols();
  if (nb.size() != n) throw DimensionError("attention: neighbourhood count differs from queries");
  if (heads == 0 || d % heads != 0) throw DimensionError("attention: heads must divide width");
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out = Tensor::matrix(n, d);
  if (probs) probs->assign(nb.total() * heads, 0.0);
  std::vector<double> w;
  std::uint64_t macs = 0, special = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto keys = nb.of(i);
    if (keys.empty()) continue;
    for (std::uint32_t j : keys)
      if (j >= n) throw DimensionError("attention: neighbour index out of range");
    w.resize(keys.size());
    for (std::size_t h = 0; h < heads; ++h) {
      const std::span<const double> qi = q.row(i).subspan(h * dh, dh);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < keys.size(); ++t) {
        w[t] = kernels::dot(qi, k.row(keys[t]).subspan(h * dh, dh)) * scale;
        mx = std::max(mx, w[t]);
      }
      double sum = 0;
      for (double& wt : w) {
        wt = std::exp(wt - mx);
        sum += wt;
      }
      const double inv = 1.0 / sum;
      auto oi = out.row(i).subspan(h * dh, dh);
      for (std::size_t t = 0; t < keys.size(); ++t) {
        w[t] *= inv;
        kernels::axpy(w[t], v.row(keys[t]).subspan(h * dh, dh), oi);
      }
      if (probs)
        std::copy(w.begin(), w.end(),
                  probs->begin() + static_cast<std::ptrdiff_t>((nb.offsets[i] * heads) +
                                                               h * keys.size()));
      special += keys.size() + 1;
    }
    macs += 2 * keys.size() * d;
  }
  counting::add_macs(macs);
  counting::add_special(special);
  return out;
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         const std::vector<std::vector<bool>>& mask,
                         const std::vector<bool>& query_valid) {
  const std::size_t n = q.rows();
  if (mask.size() != n) throw DimensionError("softmax_attention: mask rows differ from queries");
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i].size() != k.rows())
      throw DimensionError("softmax_attention: mask columns differ from keys");
    const bool valid = query_valid.empty() || query_valid[i];
    if (valid && std::none_of(mask[i].begin(), mask[i].end(), [](bool b) { return b; }))
      throw ContractError("softmax_attention: valid query " + std::to_string(i) +
                          " has every key masked");
  }
  Neighborhoods nb;
  std::vector<std::uint32_t> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    if (query_valid.empty() || query_valid[i])
      for (std::size_t j = 0; j < mask[i].size(); ++j)
        if (mask[i][j]) row.push_back(static_cast<std::uint32_t>(j));
    nb.push(row);
  }
  return attention(q, k, v, 1, nb);
}

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index) {
  const std::size_t d = x.cols();
  Tensor y = Tensor::matrix(index.size(), d);
  for (std::size_t r = 0; r < index.size(); ++r) {
    const std::int64_t src = index[r];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= x.rows())
      throw DimensionError("gather_rows: index " + std::to_string(src) + " out of range");
    auto s = x.row(static_cast<std::size_t>(src));
    std::copy(s.begin(), s.end(), y.row(r).begin());
  }
  return y;
}

Tensor concat_rows(std::span<const Tensor* const> parts) {
  std::size_t rows = 0, d = 0;
  bool have_width = false;
  for (const Tensor* p : parts) {
    if (p->shape().size() != 2) throw DimensionError("concat_rows: expected matrices");
    if (!have_width) {
      d = p->cols();
      have_width = true;
    } else if (p->cols() != d) {
      throw DimensionError("concat_rows: width mismatch");
    }
    rows += p->shape()[0];
  }
  std::vector<double> data;
  data.reserve(rows * d);
  for (const Tensor* p : parts) data.insert(data.end(), p->data().begin(), p->data().end());
  return Tensor({rows, d}, std::move(data));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row count mismatch");
  const std::size_t n = a.rows(), da = a.cols(), db = b.cols();
  Tensor y = Tensor::matrix(n, da + db);
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = y.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(da));
  }
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.shape().size() != 2 || begin + count > x.shape()[0])
    throw DimensionError("slice_rows: range outside " + shape_string(x.shape()));
  const std::size_t d = x.cols();
  const auto first = x.data().begin() + static_cast<std::ptrdiff_t>(begin * d);
  return Tensor({count, d}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * d)));
}

}  // namespace ops

}  // namespace arta
