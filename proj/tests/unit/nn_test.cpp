#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "citylight/nn/tape.hpp"
#include "support/fd_cases.hpp"
#include "support/gradcheck.hpp"

namespace nn = citylight::nn;
using namespace citylight::testing;

// ---- finite-difference checks, one per op ---------------------------------

class FiniteDifference : public ::testing::TestWithParam<FdCase> {};

TEST_P(FiniteDifference, MatchesAnalyticGradient) {
  std::mt19937_64 rng(1234);
  double worst = 0.0;
  for (int trial = 0; trial < kTrials; ++trial) {
    auto [inputs, op] = GetParam().make(rng);
    worst = std::max(worst, worst_rel(rng, inputs, op));
  }
  EXPECT_LT(worst, kFdTol) << GetParam().name;
}

INSTANTIATE_TEST_SUITE_P(Ops, FiniteDifference, ::testing::ValuesIn(fd_cases()),
                         [](const ::testing::TestParamInfo<FdCase>& i) { return std::string(i.param.name); });

// ---- linear ------------------------------------------------------------------

TEST(Linear, IdentityWeightsReturnInput) {
  std::mt19937_64 rng(3);
  nn::Tape t;
  const nn::Tensor x = random_tensor(rng, 2, 4);
  const auto y = nn::linear(t.constant(x), t.constant(nn::Tensor::Identity(4, 4)), t.constant(nn::Tensor::Zero(1, 4)));
  EXPECT_EQ(y.value(), x);
}

TEST(Linear, ZeroInputReturnsBias) {
  std::mt19937_64 rng(4);
  nn::Tape t;
  const nn::Tensor b = random_tensor(rng, 1, 3);
  const auto y = nn::linear(t.constant(nn::Tensor::Zero(1, 5)), t.constant(random_tensor(rng, 5, 3)), t.constant(b));
  EXPECT_EQ(y.value(), b);
}

TEST(Linear, MatchesTripleLoop) {
  std::mt19937_64 rng(5);
  const nn::Tensor x = random_tensor(rng, 3, 4), W = random_tensor(rng, 4, 2), b = random_tensor(rng, 1, 2);
  nn::Tape t;
  const auto y = nn::linear(t.constant(x), t.constant(W), t.constant(b));
  for (long i = 0; i < 3; ++i) {
    for (long j = 0; j < 2; ++j) {
      double s = b(0, j);
      for (long k = 0; k < 4; ++k) s += x(i, k) * W(k, j);
      EXPECT_NEAR(y.value()(i, j), s, 1e-14);
    }
  }
}

TEST(Linear, ShapeMismatchThrows) {
  nn::Tape t;
  EXPECT_THROW(nn::linear(t.constant(nn::Tensor::Zero(1, 3)), t.constant(nn::Tensor::Zero(4, 2)),
                          t.constant(nn::Tensor::Zero(1, 2))),
               nn::ShapeError);
  EXPECT_THROW(nn::add(t.constant(nn::Tensor::Zero(1, 3)), t.constant(nn::Tensor::Zero(1, 2))), nn::ShapeError);
}

// ---- attention ---------------------------------------------------------------

TEST(Attention, SingleTokenReturnsIt) {
  std::mt19937_64 rng(6);
  nn::Tape t;
  const nn::Tensor tok = random_tensor(rng, 1, 4);
  const auto y = nn::attention(t.constant(random_tensor(rng, 3, 4)), t.constant(tok), t.constant(tok));
  for (long r = 0; r < 3; ++r) {
    for (long c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y.value()(r, c), tok(0, c));
  }
}

TEST(Attention, IdenticalTokensGetUniformWeights) {
  std::mt19937_64 rng(7);
  nn::Tape t;
  const nn::Tensor tok = random_tensor(rng, 1, 3);
  const nn::Tensor K = tok.replicate(5, 1);
  nn::Tensor w;
  nn::attention(t.constant(random_tensor(rng, 2, 3)), t.constant(K), t.constant(K), &w);
  for (long i = 0; i < w.size(); ++i) EXPECT_NEAR(w.data()[i], 0.2, 1e-15);
}

TEST(Attention, MatchesDirectFormula) {
  std::mt19937_64 rng(8);
  const nn::Tensor Q = random_tensor(rng, 2, 3), K = random_tensor(rng, 4, 3), V = random_tensor(rng, 4, 2);
  nn::Tape t;
  const auto y = nn::attention(t.constant(Q), t.constant(K), t.constant(V));
  ASSERT_EQ(y.rows(), 2);
  ASSERT_EQ(y.cols(), 2);
  for (long i = 0; i < 2; ++i) {
    double w[4], z = 0.0;
    for (long j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (long c = 0; c < 3; ++c) dot += Q(i, c) * K(j, c);
      z += (w[j] = std::exp(dot / std::sqrt(3.0)));
    }
    for (long c = 0; c < 2; ++c) {
      double s = 0.0;
      for (long j = 0; j < 4; ++j) s += w[j] / z * V(j, c);
      EXPECT_NEAR(y.value()(i, c), s, 1e-14);
    }
  }
}

TEST(Attention, EmptyKeysGiveZeros) {
  nn::Tape t;
  const auto y = nn::attention(t.constant(nn::Tensor::Ones(2, 3)), t.constant(nn::Tensor(0, 3)), t.constant(nn::Tensor(0, 5)));
  EXPECT_EQ(y.rows(), 2);
  EXPECT_EQ(y.cols(), 5);
  EXPECT_TRUE(y.value().isZero(0.0));
}

TEST(Attention, MismatchedTokenCountsThrow) {
  nn::Tape t;
  EXPECT_THROW(nn::attention(t.constant(nn::Tensor::Ones(1, 3)), t.constant(nn::Tensor::Ones(2, 3)),
                             t.constant(nn::Tensor::Ones(3, 3))),
               nn::ShapeError);
  EXPECT_THROW(nn::attention(t.constant(nn::Tensor::Ones(1, 2)), t.constant(nn::Tensor::Ones(2, 3)),
                             t.constant(nn::Tensor::Ones(2, 3))),
               nn::ShapeError);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const nn::Tensor s = random_tensor(rng, dim(rng), dim(rng), 10.0);
    const nn::Tensor p = nn::softmax_rows(s);
    for (long r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
    nn::Tape t;
    nn::Tensor w;
    nn::attention(t.constant(random_tensor(rng, 3, 4, 5.0)), t.constant(random_tensor(rng, 6, 4, 5.0)),
                  t.constant(random_tensor(rng, 6, 2)), &w);
    for (long r = 0; r < w.rows(); ++r) EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-12);
  }
}

TEST(MaskedLogSoftmax, MaskedEntriesHaveZeroProbability) {
  nn::Tape t;
  nn::Tensor x(1, 4);
  x << 100.0, 1.0, 2.0, 3.0;
  const auto lp = nn::masked_log_softmax(t.constant(x), {0, 1, 1, 0});
  const double p1 = std::exp(lp.value()(0, 1)), p2 = std::exp(lp.value()(0, 2));
  EXPECT_NEAR(p1 + p2, 1.0, 1e-15);
  EXPECT_EQ(lp.value()(0, 0), 0.0);
  EXPECT_THROW(nn::masked_log_softmax(t.constant(x), {0, 0, 0, 0}), std::invalid_argument);
}

// ---- backward ----------------------------------------------------------------

TEST(Backward, LinearGradientIsOuterProduct) {
  std::mt19937_64 rng(10);
  nn::ParameterStore store(1);
  auto& W = store.add_uniform("W", 3, 2, 3);
  const nn::Tensor x = random_tensor(rng, 1, 3);
  nn::Tape t;
  t.backward(nn::sum(nn::matmul(t.constant(x), t.param(W))));
  for (long i = 0; i < 3; ++i) {
    for (long j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(W.grad(i, j), x(0, i));
  }
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  nn::ParameterStore store(2);
  auto& W = store.add_uniform("W", 3, 3, 3);
  nn::Tape t;
  const nn::Var w = t.param(W);
  const nn::Var zero = nn::scale(nn::sum(w), 0.0);
  t.backward(nn::add(zero, t.constant(nn::Tensor::Constant(1, 1, 4.0))));
  EXPECT_TRUE(W.grad.isZero(0.0));
}

TEST(Backward, NonScalarTargetThrows) {
  nn::Tape t;
  EXPECT_THROW(t.backward(t.variable(nn::Tensor::Ones(2, 2))), nn::ShapeError);
}

TEST(Backward, NonFiniteValuesAreRejected) {
  nn::Tape t;
  EXPECT_THROW(nn::exp(t.variable(nn::Tensor::Constant(1, 1, 1e4))), nn::NumericError);
}

// ---- Adam and the store ------------------------------------------------------

TEST(Adam, ZeroGradientLeavesValuesUnchanged) {
  nn::ParameterStore s(3);
  s.add_uniform("a", 4, 4, 4);
  const nn::Tensor before = s.get("a").value;
  s.adam_step();
  EXPECT_EQ(s.get("a").value, before);
  EXPECT_EQ(s.adam_steps(), 1);
}

TEST(Adam, MatchesScalarOracle) {
  nn::ParameterStore s(4);
  auto& p = s.add_constant("w", 1, 1, 0.3);
  const nn::AdamConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.lr, 5e-4);
  double w = 0.3, m = 0.0, v = 0.0;
  const double grads[] = {0.8, -0.1, 2.5, 0.0, -3.0};
  for (int t = 1; t <= 5; ++t) {
    const double g = grads[t - 1];
    p.grad(0, 0) = g;
    s.adam_step(cfg);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    w -= 5e-4 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.value(0, 0), w, 1e-15);
  }
  // first step moves by almost exactly lr against the gradient sign
  nn::ParameterStore s2(4);
  auto& q = s2.add_constant("w", 1, 1, 0.0);
  q.grad(0, 0) = 0.02;
  s2.adam_step(cfg);
  EXPECT_NEAR(q.value(0, 0), -5e-4, 1e-9);
}

TEST(Adam, IdenticalStoresStayIdentical) {
  nn::ParameterStore a(42), b(42);
  for (auto* s : {&a, &b}) {
    s->add_uniform("x", 3, 5, 3);
    s->add_uniform("y", 5, 1, 5);
  }
  std::mt19937_64 rng(11);
  for (int step = 0; step < 10; ++step) {
    const nn::Tensor gx = random_tensor(rng, 3, 5), gy = random_tensor(rng, 5, 1);
    a.get("x").grad = gx;
    b.get("x").grad = gx;
    a.get("y").grad = gy;
    b.get("y").grad = gy;
    a.adam_step();
    b.adam_step();
  }
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(Store, SeededInitializationIsDeterministicAndBounded) {
  nn::ParameterStore a(7), b(7), c(8);
  for (auto* s : {&a, &b, &c}) s->add_uniform("w", 16, 16, 16);
  EXPECT_EQ(a.get("w").value, b.get("w").value);
  EXPECT_NE(a.get("w").value, c.get("w").value);
  EXPECT_LE(a.get("w").value.cwiseAbs().maxCoeff(), 0.25);
}

TEST(Store, SaveLoadSaveIsByteIdentical) {
  nn::ParameterStore s(9);
  s.add_uniform("actor/W", 3, 4, 3);
  s.add_uniform("critic/b", 1, 4, 4);
  std::mt19937_64 rng(12);
  s.get("actor/W").grad = random_tensor(rng, 3, 4);
  s.adam_step();
  const auto dir = std::filesystem::temp_directory_path() / "citylight_nn_test";
  std::filesystem::create_directories(dir);
  s.save(dir / "a.json", {{"note", "x"}});
  const auto loaded = nn::ParameterStore::load(dir / "a.json");
  loaded.save(dir / "b.json", {{"note", "x"}});
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_EQ(loaded.get("actor/W").value, s.get("actor/W").value);
  EXPECT_EQ(loaded.adam_steps(), 1);
  std::filesystem::remove_all(dir);
}

TEST(Store, RejectsDuplicatesAndMissing) {
  nn::ParameterStore s;
  s.add_constant("a", 1, 1, 0.0);
  EXPECT_THROW(s.add_constant("a", 1, 1, 0.0), std::invalid_argument);
  EXPECT_THROW(s.get("b"), std::out_of_range);
  EXPECT_THROW(nn::ParameterStore::from_json({{"format", "other"}}), std::runtime_error);
}

TEST(Store, ClipGradNorm) {
  nn::ParameterStore s;
  auto& p = s.add_constant("a", 1, 2, 0.0);
  p.grad << 30.0, 40.0;
  s.clip_grad_norm(10.0);
  EXPECT_NEAR(p.grad(0, 0), 6.0, 1e-12);
  EXPECT_NEAR(p.grad(0, 1), 8.0, 1e-12);
}
