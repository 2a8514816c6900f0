#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sympoint/optim.hpp"

using namespace sympoint;

namespace {

// Scalar AdamW written out longhand as an independent oracle.
struct ScalarAdamW {
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g, const AdamWConfig& c) {
    ++t;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mh = m / (1 - std::pow(c.beta1, t));
    const double vh = v / (1 - std::pow(c.beta2, t));
    return x * (1 - c.lr * c.weight_decay) - c.lr * mh / (std::sqrt(vh) + c.eps);
  }
};

ParamStore<double> single(double x) {
  ParamStore<double> ps;
  ps.add("x", Tensor<double>({1}, {x}));
  return ps;
}

void set_grad(ParamStore<double>& ps, double g) {
  auto& p = ps.get("x");
  p.zero_grad();
  p.mutable_grad()[0] = g;
}

}  // namespace

TEST(AdamW, ZeroGradientZeroDecayLeavesParameters) {
  auto ps = single(1.25);
  AdamWState<double> st;
  set_grad(ps, 0.0);
  adamw_step(ps, AdamWConfig{.lr = 0.1, .weight_decay = 0.0}, st);
  EXPECT_DOUBLE_EQ(ps.get("x")[0], 1.25);
}

TEST(AdamW, FirstStepOnLinearMovesByLearningRate) {
  auto ps = single(1.0);
  AdamWState<double> st;
  set_grad(ps, 1.0);  // d/dx of f(x) = x
  adamw_step(ps, AdamWConfig{.lr = 0.1, .weight_decay = 0.0}, st);
  EXPECT_NEAR(ps.get("x")[0], 0.9, 1e-6);
}

TEST(AdamW, DecoupledDecayScalesByOneMinusLrWd) {
  auto ps = single(2.0);
  AdamWState<double> st;
  set_grad(ps, 0.0);
  const AdamWConfig c{.lr = 1e-4, .weight_decay = 1e-3};
  adamw_step(ps, c, st);
  EXPECT_DOUBLE_EQ(ps.get("x")[0], 2.0 * (1 - 1e-4 * 1e-3));
}

TEST(AdamW, MatchesScalarOracleOverManySteps) {
  auto ps = single(0.7);
  AdamWState<double> st;
  ScalarAdamW oracle;
  const AdamWConfig c{.lr = 0.05, .weight_decay = 0.01};
  double x = 0.7;
  for (int k = 0; k < 25; ++k) {
    const double g = 2 * (x - 0.3) + std::sin(double(k));
    set_grad(ps, g);
    adamw_step(ps, c, st);
    x = oracle.step(x, g, c);
    EXPECT_NEAR(ps.get("x")[0], x, 1e-12);
  }
}

TEST(AdamW, NonFiniteGradientPolicies) {
  auto ps = single(1.0);
  AdamWState<double> st;
  set_grad(ps, std::nan(""));
  EXPECT_FALSE(adamw_step(ps, AdamWConfig{}, st, NonFinitePolicy::skip));
  EXPECT_DOUBLE_EQ(ps.get("x")[0], 1.0);
  EXPECT_EQ(st.step, 0);
  EXPECT_THROW(adamw_step(ps, AdamWConfig{}, st, NonFinitePolicy::abort), NonFiniteError);
}

TEST(GradClip, ScalesToMaxNorm) {
  ParamStore<double> ps;
  ps.add("a", Tensor<double>({2}, {0, 0}));
  ps.add("b", Tensor<double>({1}, {0}));
  ps.get("a").zero_grad();
  ps.get("b").zero_grad();
  ps.get("a").mutable_grad()[0] = 3;
  ps.get("a").mutable_grad()[1] = 0;
  ps.get("b").mutable_grad()[0] = 4;
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(ps.get("a").grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(ps.get("b").grad()[0], 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm(ps, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(ps.get("b").grad()[0], 0.8, 1e-12);
}

TEST(Checkpoint, RoundTripRestoresParametersAndMoments) {
  const auto dir = std::filesystem::temp_directory_path() / "sympoint_test_optim";
  std::filesystem::create_directories(dir);
  ParamStore<float> ps;
  ps.add("w", Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}));
  ps.add("b", Tensor<float>({3}, {-1, 0.5f, 0.25f}));
  AdamWState<float> st;
  for (auto& [n, p] : ps) {
    p.zero_grad();
    for (auto& g : p.mutable_grad()) g = 0.1f;
  }
  adamw_step(ps, AdamWConfig{}, st);
  save_checkpoint(dir / "ck", ps, &st, {{"epoch", 3}});

  ParamStore<float> qs;
  qs.add("w", Tensor<float>::zeros({2, 3}));
  qs.add("b", Tensor<float>::zeros({3}));
  AdamWState<float> qt;
  const auto manifest = load_checkpoint(dir / "ck", qs, &qt);
  EXPECT_EQ(manifest.at("epoch").get<int>(), 3);
  EXPECT_EQ(qt.step, 1);
  for (const char* n : {"w", "b"}) {
    const auto a = ps.get(n).values(), b = qs.get(n).values();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  }
  EXPECT_EQ(st.m, qt.m);
  EXPECT_EQ(st.v, qt.v);

  ParamStore<float> bad;
  bad.add("w", Tensor<float>::zeros({3, 2}));
  EXPECT_THROW(load_checkpoint<float>(dir / "ck", bad, nullptr), std::runtime_error);
  std::filesystem::remove_all(dir);
}
