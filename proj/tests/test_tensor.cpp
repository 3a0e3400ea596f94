#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "arta/autodiff.hpp"
#include "arta/boundary.hpp"
#include "oracles.hpp"

namespace {

using namespace arta;

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

// --- forward ---------------------------------------------------------------

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t({2, 3, 4}, 1.0);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rows(), 6u);
  EXPECT_EQ(t.cols(), 4u);
}

TEST(Matmul, IdentityLeavesMatrix) {
  Rng rng(1);
  const Tensor a = oracle::random_matrix(rng, 3, 3);
  const Tensor eye = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  EXPECT_EQ(ops::matmul(eye, a), a);
}

TEST(Matmul, HandArithmetic) {
  EXPECT_EQ(ops::matmul(Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from_rows({{0}, {1}})),
            Tensor::from_rows({{2}, {4}}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(2);
  const Tensor a = oracle::random_matrix(rng, 5, 7), b = oracle::random_matrix(rng, 7, 3);
  expect_near(ops::matmul(a, b), oracle::matmul(a, b), 1e-12);
}

TEST(Matmul, RejectsMismatchedInner) {
  EXPECT_THROW(ops::matmul(Tensor::matrix(2, 3), Tensor::matrix(2, 3)), DimensionError);
}

TEST(LayerNorm, ConstantRowGoesToZero) {
  const Tensor x = Tensor::from_rows({{3, 3, 3, 3}});
  const Tensor y = ops::layer_norm(x, Tensor({4}, 1.0), Tensor({4}, 0.0), 1e-5);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, NormalisedRowIsKept) {
  const Tensor y = ops::layer_norm(Tensor::from_rows({{1, -1}}), Tensor({2}, 1.0), Tensor({2}, 0.0), 1e-12);
  EXPECT_NEAR(y[0], 1.0, 1e-11);
  EXPECT_NEAR(y[1], -1.0, 1e-11);
}

TEST(LayerNorm, RowStatistics) {
  Rng rng(3);
  const Tensor x = oracle::random_matrix(rng, 4, 8, 3.0);
  const Tensor y = ops::layer_norm(x, Tensor({8}, 1.0), Tensor({8}, 0.0), 1e-5);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0, var = 0;
    for (double v : y.row(r)) mean += v;
    mean /= 8;
    for (double v : y.row(r)) var += (v - mean) * (v - mean);
    double xm = 0, xs = 0;
    for (double v : x.row(r)) xm += v / 8;
    for (double v : x.row(r)) xs += (v - xm) * (v - xm) / 8;
    EXPECT_LT(std::abs(mean), 1e-10);
    EXPECT_NEAR(var / 8, xs / (xs + 1e-5), 1e-12);
  }
  Tensor g = oracle::random_matrix(rng, 1, 8), b = oracle::random_matrix(rng, 1, 8);
  g = Tensor({8}, std::vector<double>(g.data().begin(), g.data().end()));
  b = Tensor({8}, std::vector<double>(b.data().begin(), b.data().end()));
  expect_near(ops::layer_norm(x, g, b, 1e-5), oracle::layer_norm(x, g, b, 1e-5), 1e-12);
}

TEST(Gelu, MatchesClosedForm) {
  const Tensor x = Tensor::from_rows({{-3, -0.5, 0, 0.7, 4}});
  const Tensor y = ops::gelu(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], oracle::gelu(x[i]), 1e-15);
}

TEST(Sigmoid, StableAtExtremes) {
  const Tensor y = ops::sigmoid(Tensor::from_rows({{-800, 0, 800}}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.5);
  EXPECT_EQ(y[2], 1.0);
}

TEST(SoftmaxAttention, SingleKeyReturnsValue) {
  const Tensor q = Tensor::from_rows({{0.3, -2}}), k = Tensor::from_rows({{5, 1}}), v = Tensor::from_rows({{7, -9}});
  EXPECT_EQ(ops::softmax_attention(q, k, v, {{true}}), v);
}

TEST(SoftmaxAttention, IdenticalKeysAverageValues) {
  Rng rng(4);
  const Tensor q = oracle::random_matrix(rng, 3, 4), v = oracle::random_matrix(rng, 3, 4);
  const Tensor k = Tensor::from_rows({{1, 2, 3, 4}, {1, 2, 3, 4}, {1, 2, 3, 4}});
  const std::vector<std::vector<bool>> all(3, std::vector<bool>(3, true));
  const Tensor y = ops::softmax_attention(q, k, v, all);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at(i, c), (v.at(0, c) + v.at(1, c) + v.at(2, c)) / 3, 1e-15);
}

TEST(SoftmaxAttention, MatchesExplicitSoftmax) {
  Rng rng(5);
  const Tensor q = oracle::random_matrix(rng, 6, 4), k = oracle::random_matrix(rng, 6, 4),
               v = oracle::random_matrix(rng, 6, 4);
  std::vector<std::vector<bool>> mask(6, std::vector<bool>(6));
  std::vector<std::vector<std::uint32_t>> keys(6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (j == i || rng.bernoulli(0.5)) {
        mask[i][j] = true;
        keys[i].push_back(static_cast<std::uint32_t>(j));
      }
  expect_near(ops::softmax_attention(q, k, v, mask), oracle::attention(q, k, v, 1, keys), 1e-12);
}

TEST(SoftmaxAttention, FullyMaskedQuery) {
  const Tensor x = Tensor::from_rows({{1, 2}, {3, 4}});
  const std::vector<std::vector<bool>> mask{{true, false}, {false, false}};
  EXPECT_THROW(ops::softmax_attention(x, x, x, mask), ContractError);
  const Tensor y = ops::softmax_attention(x, x, x, mask, {true, false});
  EXPECT_EQ(y.at(1, 0), 0.0);
  EXPECT_EQ(y.at(1, 1), 0.0);
}

TEST(Attention, MultiHeadMatchesOracle) {
  Rng rng(6);
  const Tensor q = oracle::random_matrix(rng, 7, 8), k = oracle::random_matrix(rng, 7, 8),
               v = oracle::random_matrix(rng, 7, 8);
  std::vector<std::vector<std::uint32_t>> keys(7);
  Neighborhoods nb;
  for (std::size_t i = 0; i < 7; ++i) {
    if (i != 3)
      for (std::uint32_t j = 0; j < 7; ++j)
        if (rng.bernoulli(0.6)) keys[i].push_back(j);
    nb.push(keys[i]);
  }
  const Tensor y = ops::attention(q, k, v, 2, nb);
  expect_near(y, oracle::attention(q, k, v, 2, keys), 1e-12);
}

TEST(AllocatorLoss, HandCases) {
  const std::vector<double> p{0.2, 0.7}, t{0.2, 0.7};
  const std::vector<std::uint8_t> all{1, 1};
  EXPECT_EQ(allocator_loss(p, t, all), 0.0);
  EXPECT_EQ(allocator_loss(std::vector<double>{1, 0}, std::vector<double>{0, 0}, all), 0.5);
  const std::vector<std::uint8_t> first{1, 0};
  EXPECT_EQ(allocator_loss(std::vector<double>{0.1, 0.3}, std::vector<double>{0.0, 0.0}, first),
            allocator_loss(std::vector<double>{0.1, 999.0}, std::vector<double>{0.0, 0.0}, first));
}

// --- backward --------------------------------------------------------------

TEST(Backward, SumOfSquares) {
  Tape t;
  Var w = t.parameter(Tensor({3}, {1, 2, 3}));
  t.backward(ops::sum_squares(t, w));
  EXPECT_EQ(t.grad(w), Tensor({3}, {2, 4, 6}));
}

TEST(Backward, DisconnectedParameterHasZeroGradient) {
  Tape t;
  Var w = t.parameter(Tensor({2}, {1, 2}));
  Var p = t.parameter(Tensor({2}, {5, 6}));
  t.backward(ops::sum(t, w));
  EXPECT_EQ(t.grad(p), Tensor({2}, 0.0));
}

TEST(Backward, RequiresScalarLoss) {
  Tape t;
  Var w = t.parameter(Tensor::matrix(2, 2, 1.0));
  EXPECT_THROW(t.backward(w), ContractError);
}

// Checks d(build)/d(inputs) against central differences, every coordinate.
void check_gradients(std::vector<Tensor> inputs, const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                     double tol = 1e-6) {
  auto evaluate = [&] {
    Tape t;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(t.parameter(x));
    return t.value(build(t, vars)).item();
  };
  Tape t;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(t.parameter(x));
  t.backward(build(t, vars));
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const Tensor g = t.grad(vars[a]);
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double fd = oracle::central_difference(evaluate, inputs[a][i], 1e-5);
      EXPECT_LT(oracle::rel_error(g[i], fd), tol) << "input " << a << " coordinate " << i << ": " << g[i] << " vs " << fd;
    }
  }
}

class Gradients : public ::testing::Test {
 protected:
  Rng rng{11};
  Tensor m(std::size_t r, std::size_t c) { return oracle::random_matrix(rng, r, c); }
  Tensor v(std::size_t n) {
    Tensor t({n});
    for (double& x : t.data()) x = rng.normal();
    return t;
  }
};

TEST_F(Gradients, Linear) {
  check_gradients({m(4, 3), m(3, 5), v(5)}, [](Tape& t, const std::vector<Var>& x) {
    return ops::sum_squares(t, ops::linear(t, x[0], x[1], x[2]));
  });
}

TEST_F(Gradients, MatmulAddAddRowScale) {
  check_gradients({m(3, 4), m(4, 2), m(3, 2), v(2)}, [](Tape& t, const std::vector<Var>& x) {
    Var y = ops::add(t, ops::matmul(t, x[0], x[1]), x[2]);
    return ops::sum_squares(t, ops::scale(t, ops::add_row(t, y, x[3]), -1.7));
  });
}

TEST_F(Gradients, GeluSigmoid) {
  check_gradients({m(3, 4)}, [](Tape& t, const std::vector<Var>& x) {
    return ops::add_scalars(t, ops::sum_squares(t, ops::gelu(t, x[0])), ops::sum(t, ops::sigmoid(t, x[0])));
  });
}

TEST_F(Gradients, LayerNorm) {
  check_gradients({m(4, 6), v(6), v(6)}, [](Tape& t, const std::vector<Var>& x) {
    Var y = ops::layer_norm(t, x[0], x[1], x[2], 1e-5);
    return ops::sum_squares(t, ops::matmul(t, y, t.constant(Tensor::from_rows({{1}, {-2}, {0.5}, {3}, {0}, {1}}))));
  });
}

TEST_F(Gradients, AttentionWithSparseLists) {
  Neighborhoods nb;
  nb.push(std::vector<std::uint32_t>{0, 2});
  nb.push(std::vector<std::uint32_t>{});
  nb.push(std::vector<std::uint32_t>{0, 1, 2, 3});
  nb.push(std::vector<std::uint32_t>{3});
  check_gradients({m(4, 4), m(4, 4), m(4, 4)}, [&](Tape& t, const std::vector<Var>& x) {
    return ops::sum_squares(t, ops::attention(t, x[0], x[1], x[2], 2, nb));
  });
}

TEST_F(Gradients, RowPlumbing) {
  check_gradients({m(3, 2), m(2, 2), m(5, 3)}, [](Tape& t, const std::vector<Var>& x) {
    const Var parts[2] = {x[0], x[1]};
    Var rows = ops::concat_rows(t, parts);                      // 5×2
    Var g = ops::gather_rows(t, rows, {4, -1, 0, 4, 2});        // duplicates and a zero row
    Var c = ops::concat_cols(t, g, ops::slice_rows(t, x[2], 0, 5));
    return ops::sum_squares(t, ops::slice_rows(t, c, 1, 4));
  });
}

TEST_F(Gradients, Losses) {
  const std::vector<double> target{0.1, 0.0, 0.5, 0.9};
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  const std::vector<std::int32_t> labels{2, -1, 0};
  check_gradients({m(4, 1), m(3, 3)}, [&](Tape& t, const std::vector<Var>& x) {
    return ops::add_scalars(t, ops::masked_mse(t, ops::sigmoid(t, x[0]), target, mask),
                            ops::cross_entropy(t, x[1], labels));
  });
}

TEST(Losses, MaskedMseAndCrossEntropyValues) {
  Tape t;
  Var p = t.constant(Tensor({3, 1}, {0.5, 0.25, 9}));
  const std::vector<double> target{0.0, 0.25, 0.0};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  EXPECT_DOUBLE_EQ(t.value(ops::masked_mse(t, p, target, mask)).item(), 0.125);
  const std::vector<std::uint8_t> none{0, 0, 0};
  EXPECT_EQ(t.value(ops::masked_mse(t, p, target, none)).item(), 0.0);
  Var logits = t.constant(Tensor::from_rows({{0, 0}, {std::log(3.0), 0}}));
  const std::vector<std::int32_t> labels{0, 0};
  EXPECT_NEAR(t.value(ops::cross_entropy(t, logits, labels)).item(), (std::log(2.0) + std::log(4.0 / 3.0)) / 2, 1e-15);
}

TEST(Tape, ValuesStayFinite) {
  Rng rng(12);
  Tape t;
  Var x = t.constant(oracle::random_matrix(rng, 5, 6, 50.0));
  Var y = ops::layer_norm(t, ops::gelu(t, ops::sigmoid(t, x)), t.constant(Tensor({6}, 1.0)),
                          t.constant(Tensor({6}, 0.0)), 1e-5);
  for (double v : t.value(y).data()) EXPECT_TRUE(std::isfinite(v));
}

// --- counting --------------------------------------------------------------

TEST(Counting, LinearAndRegions) {
  OpCounter counter;
  counting::install(&counter);
  {
    counting::Region r("proj");
    ops::linear(Tensor::matrix(10, 6), Tensor::matrix(6, 4), Tensor({4}, 0.0));
    {
      counting::Pause pause;
      ops::matmul(Tensor::matrix(10, 6), Tensor::matrix(6, 4));
    }
    counting::Region inner("act");
    ops::gelu(Tensor::matrix(3, 3));
  }
  counting::install(nullptr);
  EXPECT_EQ(counter.region("proj").macs, 240u);
  EXPECT_EQ(counter.region("proj").flops(), 2u * 10 * 6 * 4);
  EXPECT_EQ(counter.region("act").special, 9u);
  EXPECT_EQ(counter.total().flops(), 480u + 9u);
}

}  // namespace
