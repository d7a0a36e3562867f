#include <gtest/gtest.h>

#include <cmath>

#include "lano/error.hpp"
#include "lano/ops.hpp"
#include "lano/rng.hpp"
#include "lano/verify.hpp"

using namespace lano;
using Td = Tensor<double>;

TEST(Tensor, SoftmaxOfZerosIsUniform) {
  const auto s = softmax(Td({3}, 0.0), 0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s[i], 1.0 / 3.0, 1e-15);
}

TEST(Tensor, SoftmaxRowsAreDistributions) {
  Rng rng(4);
  Td x({5, 7});
  for (auto& v : x.values()) v = rng.uniform(-20.0, 20.0);
  const auto s = softmax(x, 1);
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      const double v = s[r * 7 + c];
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Tensor, LayerNormOfConstantIsBeta) {
  const Td x({2, 4}, 3.25);
  const Td gamma({4}, 2.0);
  const Td beta({4}, std::vector<double>{0.0, 0.5, -1.0, 0.0});
  const auto y = layer_norm(x, gamma, beta);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y[r * 4 + c], beta[c]);
  }
}

TEST(Tensor, MatmulShapeAndOracle) {
  const auto c = check_matmul_oracle(VerifyOptions{});
  EXPECT_TRUE(c.passed) << c.detail;
  const auto p = matmul(Td({2, 3}, 1.0), Td({3, 4}, 1.0));
  EXPECT_EQ(p.shape(), (Shape{2, 4}));
  EXPECT_EQ(p[0], 3.0);
}

TEST(Tensor, MatmulShapeMismatchThrows) {
  EXPECT_THROW(matmul(Td({2, 3}), Td({4, 2})), ShapeError);
  EXPECT_THROW(add(Td({2, 3}), Td({4})), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  Td x({5}, std::vector<double>{1, -2, 3, 0.5, 7});
  x.set_requires_grad(true);
  GradientTape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(sum(x));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Backward, HalfSquaredNormGivesInput) {
  Td x({4}, std::vector<double>{1.5, -2.0, 0.25, 3.0});
  x.set_requires_grad(true);
  GradientTape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(scale(sum(mul(x, x)), 0.5));
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], x[i]);
}

TEST(Backward, NonScalarLossThrows) {
  Td x({3}, 1.0);
  x.set_requires_grad(true);
  GradientTape<double> tape;
  TapeScope<double> scope(tape);
  const auto y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Backward, NoGradScopeRecordsNothing) {
  Td x({3}, 1.0);
  x.set_requires_grad(true);
  GradientTape<double> tape;
  TapeScope<double> scope(tape);
  {
    NoGradScope<double> off(nullptr);
    (void)sum(square(x));
  }
  EXPECT_EQ(tape.size(), 0u);
}

// Three-layer MLP against central differences at step 1e-5.
TEST(Backward, MlpMatchesFiniteDifferences) {
  Rng rng(17);
  auto rand = [&](Shape s) {
    Td t(std::move(s));
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
  };
  std::vector<Td> params{rand({4, 6}), rand({6}), rand({6, 5}), rand({5}), rand({5, 2}), rand({2})};
  const auto x = rand({3, 4});
  auto loss = [&] {
    auto h = gelu(linear(x, params[0], params[1]));
    h = gelu(linear(h, params[2], params[3]));
    return sum(square(linear(h, params[4], params[5])));
  };
  for (auto& p : params) p.set_requires_grad(true);
  GradientTape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(loss());
  }
  NoGradScope<double> off(nullptr);
  const double h = 1e-5;
  for (auto& p : params) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double keep = p.values()[i];
      p.values()[i] = keep + h;
      const double up = loss().item();
      p.values()[i] = keep - h;
      const double down = loss().item();
      p.values()[i] = keep;
      const double fd = (up - down) / (2 * h);
      num += (fd - p.grad()[i]) * (fd - p.grad()[i]);
      den += fd * fd;
    }
    EXPECT_LT(std::sqrt(num / den), 1e-6);
  }
}

TEST(Backward, EveryPrimitiveMatchesFiniteDifferences) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    VerifyOptions o;
    o.seed = seed;
    const auto c = check_primitive_gradients(o);
    EXPECT_TRUE(c.passed) << c.detail << " metric " << c.metric;
  }
}

TEST(Tensor, BroadcastAddGradientReduces) {
  Td a({2, 3}, 1.0), b({3}, 2.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  GradientTape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(sum(add(a, b)));
  }
  for (double g : b.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Tensor, Conv2dIdentityKernel) {
  Rng rng(3);
  Td x({1, 4, 5});
  for (auto& v : x.values()) v = rng.normal();
  Td w({1, 1, 3, 3}, 0.0);
  w.values()[4] = 1.0;
  const auto y = conv2d(x, w, Td(), 1, 1);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Tensor, ForwardIsDeterministic) {
  Rng r1(9), r2(9);
  Td a({8, 8}), b({8, 8});
  for (auto& v : a.values()) v = r1.normal();
  for (auto& v : b.values()) v = r2.normal();
  const auto p = softmax(matmul(a, a), 1), q = softmax(matmul(b, b), 1);
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_EQ(p[i], q[i]);
}
