#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lano/error.hpp"
#include "lano/metrics.hpp"

using lano::relative_l2;

TEST(RelativeL2, IdenticalIsZero) {
  std::vector<double> t{1.0, -2.0, 3.0};
  EXPECT_EQ(relative_l2(t, t), 0.0);
}

TEST(RelativeL2, ZeroPredictionIsOne) {
  std::vector<double> p(3, 0.0), t{1.0, -2.0, 3.0};
  EXPECT_DOUBLE_EQ(relative_l2(p, t), 1.0);
}

TEST(RelativeL2, WorkedExample) {
  std::vector<double> p{1.0, 0.0}, t{1.0, 1.0};
  EXPECT_NEAR(relative_l2(p, t), 0.70711, 1e-5);
}

TEST(RelativeL2, JointScaleInvariant) {
  std::vector<double> p{0.3, -1.2, 2.0, 0.1}, t{0.5, -1.0, 1.5, 0.0};
  const double base = relative_l2(p, t);
  for (double c : {-3.0, 0.01, 250.0}) {
    std::vector<double> ps, ts;
    for (std::size_t i = 0; i < p.size(); ++i) {
      ps.push_back(c * p[i]);
      ts.push_back(c * t[i]);
    }
    EXPECT_NEAR(relative_l2(ps, ts), base, 1e-12);
  }
}

TEST(RelativeL2, FloatOverload) {
  std::vector<float> p{1.0f, 0.0f}, t{1.0f, 1.0f};
  EXPECT_NEAR(relative_l2(p, t), std::sqrt(0.5), 1e-6);
}

TEST(RelativeL2, Errors) {
  std::vector<double> z(3, 0.0), p{1.0, 2.0, 3.0}, shorter{1.0};
  EXPECT_THROW(relative_l2(p, z), lano::ValueError);
  EXPECT_THROW(relative_l2(shorter, p), lano::ShapeError);
}
