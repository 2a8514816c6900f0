#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sympoint/tensor.hpp"
#include "testing.hpp"

using namespace sympoint;
using sympoint::testing::gradcheck;
using sympoint::testing::random_tensor;
using TD = Tensor<double>;
using Inputs = std::vector<TD>;

namespace {

// Weighted sum with fixed pseudo-random weights so every output entry
// contributes a distinct amount to the scalar under test.
TD probe(const TD& y) {
  std::vector<double> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.3 * double(i) + 0.7) + 0.1 * double(i % 3);
  return sum(mul(y, TD(y.shape(), w)));
}

void expect_grad(const std::function<TD(const Inputs&)>& f, Inputs in) {
  const auto r = gradcheck(f, std::move(in));
  EXPECT_TRUE(r.ok) << r.where;
}

}  // namespace

TEST(TensorOps, ForwardValuesMatchHandComputation) {
  TD a({2, 2}, {1, 2, 3, 4});
  TD b({2, 2}, {5, 6, 7, 8});
  auto c = matmul(a, b);
  EXPECT_DOUBLE_EQ(c[0], 19);
  EXPECT_DOUBLE_EQ(c[1], 22);
  EXPECT_DOUBLE_EQ(c[2], 43);
  EXPECT_DOUBLE_EQ(c[3], 50);
  auto d = matmul_nt(a, b);
  EXPECT_DOUBLE_EQ(d[0], 17);
  EXPECT_DOUBLE_EQ(d[1], 23);
  auto s = softmax(TD({1, 3}, {0, 0, std::log(2.0)}), 1);
  EXPECT_NEAR(s[0], 0.25, 1e-12);
  EXPECT_NEAR(s[2], 0.5, 1e-12);
  auto m = max(a, 0);
  EXPECT_DOUBLE_EQ(m[0], 3);
  EXPECT_DOUBLE_EQ(m[1], 4);
  auto sm = sum(a, 1);
  EXPECT_DOUBLE_EQ(sm[0], 3);
  EXPECT_DOUBLE_EQ(sm[1], 7);
}

TEST(TensorOps, SoftmaxIsStableForHugeNegativeEntries) {
  auto s = softmax(TD({1, 3}, {-1e9, 2.0, -1e9}), 1);
  EXPECT_DOUBLE_EQ(s[1], 1.0);
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  auto ls = log_softmax(TD({1, 2}, {1000.0, 0.0}), 1);
  EXPECT_TRUE(std::isfinite(ls[1]));
  EXPECT_NEAR(ls[1], -1000.0, 1e-9);
}

TEST(TensorOps, LayerNormRowsHaveZeroMeanUnitVariance) {
  Rng rng(3);
  auto y = layer_norm(random_tensor({4, 8}, rng, -3, 5), 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < 8; ++c) mu += y.at(r, c);
    mu /= 8;
    for (std::size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var / 8, 1.0, 1e-9);
  }
}

TEST(TensorOps, BroadcastingShapeErrorsThrow) {
  EXPECT_THROW(add(TD({2, 3}, std::vector<double>(6)), TD({2, 2}, std::vector<double>(4))), TensorError);
  EXPECT_THROW(matmul(TD({2, 3}, std::vector<double>(6)), TD({2, 3}, std::vector<double>(6))), TensorError);
}

TEST(TensorGrad, ElementwiseBinary) {
  Rng rng(1);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  auto bp = random_tensor({1, 4}, rng, 0.5, 2.0);
  expect_grad([](const Inputs& x) { return probe(add(x[0], x[1])); }, {a, b});
  expect_grad([](const Inputs& x) { return probe(sub(x[0], x[1])); }, {a, b});
  expect_grad([](const Inputs& x) { return probe(mul(x[0], x[1])); }, {a, b});
  expect_grad([](const Inputs& x) { return probe(div(x[0], x[1])); }, {a, bp});
  expect_grad([](const Inputs& x) { return probe(add(x[0], x[1])); }, {a, random_tensor({4}, rng)});
}

TEST(TensorGrad, ElementwiseUnary) {
  Rng rng(2);
  auto a = random_tensor({3, 5}, rng, -2, 2);
  auto p = random_tensor({3, 5}, rng, 0.3, 3);
  expect_grad([](const Inputs& x) { return probe(scale(x[0], 1.7)); }, {a});
  expect_grad([](const Inputs& x) { return probe(add_scalar(x[0], -0.3)); }, {a});
  expect_grad([](const Inputs& x) { return probe(exp(x[0])); }, {a});
  expect_grad([](const Inputs& x) { return probe(log(x[0])); }, {p});
  expect_grad([](const Inputs& x) { return probe(sqrt(x[0])); }, {p});
  expect_grad([](const Inputs& x) { return probe(square(x[0])); }, {a});
  expect_grad([](const Inputs& x) { return probe(sigmoid(x[0])); }, {a});
  expect_grad([](const Inputs& x) { return probe(relu(x[0])); }, {a});
  expect_grad([](const Inputs& x) { return probe(softplus(x[0])); }, {a});
  expect_grad([](const Inputs& x) { return probe(neg(x[0])); }, {a});
}

TEST(TensorGrad, Reductions) {
  Rng rng(4);
  auto a = random_tensor({3, 4, 2}, rng);
  expect_grad([](const Inputs& x) { return sum(square(x[0])); }, {a});
  expect_grad([](const Inputs& x) { return mean(square(x[0])); }, {a});
  for (std::size_t axis = 0; axis < 3; ++axis) {
    expect_grad([axis](const Inputs& x) { return probe(sum(x[0], axis)); }, {a});
    expect_grad([axis](const Inputs& x) { return probe(mean(x[0], axis)); }, {a});
    expect_grad([axis](const Inputs& x) { return probe(max(x[0], axis)); }, {a});
    expect_grad([axis](const Inputs& x) { return probe(softmax(x[0], axis)); }, {a});
    expect_grad([axis](const Inputs& x) { return probe(log_softmax(x[0], axis)); }, {a});
  }
  expect_grad([](const Inputs& x) { return probe(layer_norm(x[0])); }, {random_tensor({3, 6}, rng, -2, 2)});
}

TEST(TensorGrad, ShapeOps) {
  Rng rng(5);
  auto a = random_tensor({2, 6}, rng);
  expect_grad([](const Inputs& x) { return probe(reshape(x[0], {3, 4})); }, {a});
  expect_grad([](const Inputs& x) { return probe(transpose(x[0])); }, {a});
  expect_grad([](const Inputs& x) { return probe(broadcast_to(x[0], {3, 2, 6})); }, {a});
  auto b = random_tensor({2, 3}, rng), c = random_tensor({2, 2}, rng);
  expect_grad([](const Inputs& x) { return probe(concat(std::vector<TD>{x[0], x[1]}, 1)); }, {b, c});
  expect_grad([](const Inputs& x) { return probe(concat(std::vector<TD>{x[0], x[1]}, 0)); },
              {b, random_tensor({1, 3}, rng)});
}

TEST(TensorGrad, GatherScatterWithRepeatedIndices) {
  Rng rng(6);
  const std::vector<std::size_t> idx{2, 0, 2, 1, 2};
  auto a = random_tensor({3, 4}, rng);
  expect_grad([&](const Inputs& x) { return probe(gather_rows(x[0], idx)); }, {a});
  auto g = gather_rows(TD({3, 1}, {1, 2, 3}), idx);
  EXPECT_DOUBLE_EQ(g[0], 3);
  EXPECT_DOUBLE_EQ(g[3], 2);
  auto u = random_tensor({5, 2}, rng);
  expect_grad([&](const Inputs& x) { return probe(scatter_add_rows(x[0], idx, 4)); }, {u});
  auto s = scatter_add_rows(TD({5, 1}, {1, 2, 3, 4, 5}), idx, 4);
  EXPECT_DOUBLE_EQ(s[2], 1 + 3 + 5);
  EXPECT_DOUBLE_EQ(s[3], 0);
}

TEST(TensorGrad, MatmulVariants) {
  Rng rng(7);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({5, 4}, rng);
  expect_grad([](const Inputs& x) { return probe(matmul(x[0], x[1])); }, {a, b});
  expect_grad([](const Inputs& x) { return probe(matmul_nt(x[0], x[1])); }, {a, c});
}

TEST(TensorGrad, SharedSubgraphAccumulates) {
  Rng rng(8);
  auto a = random_tensor({2, 3}, rng);
  expect_grad(
      [](const Inputs& x) {
        auto h = sigmoid(x[0]);
        return add(probe(add(mul(h, h), h)), probe(matmul_nt(h, h)));
      },
      {a});
}

TEST(TensorGrad, NoGradGuardSkipsGraph) {
  TD a({2}, {1, 2}, true);
  TD y;
  {
    NoGradGuard g;
    y = square(a);
  }
  EXPECT_FALSE(y.requires_grad());
}
