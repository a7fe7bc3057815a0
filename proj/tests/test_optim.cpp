#include "milcnn/optim.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <array>

namespace milcnn {
namespace {

using testing::random_tensor;
using testing::uniform_index;

Tensor scalar(double v) { return Tensor(Shape{1}, v); }

TEST(SgdStep, PlainGradientDescent) {
  Tensor w = scalar(1.0), g = scalar(0.5), v = scalar(0.0);
  sgd_step(w, g, v, {0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(w[0], 0.95);
}

TEST(SgdStep, TwoMomentumSteps) {
  Tensor w = scalar(1.0), g = scalar(0.5), v = scalar(0.0);
  const SgdParams p{0.1, 0.9, 0.0};
  sgd_step(w, g, v, p);
  EXPECT_NEAR(v[0], -0.05, 1e-15);
  EXPECT_NEAR(w[0], 0.95, 1e-15);
  sgd_step(w, g, v, p);
  EXPECT_NEAR(v[0], -0.095, 1e-15);
  EXPECT_NEAR(w[0], 0.855, 1e-15);
}

TEST(SgdStep, ZeroGradientAtRest) {
  Tensor w = scalar(0.3), g = scalar(0.0), v = scalar(0.0);
  sgd_step(w, g, v, {0.1, 0.9, 0.0});
  EXPECT_EQ(w[0], 0.3);
}

TEST(SgdStep, ShapeMismatchThrows) {
  Tensor w(Shape{2}), g(Shape{3}), v(Shape{2});
  EXPECT_THROW(sgd_step(w, g, v, {}), ShapeError);
}

// Oracle: the recurrence unrolled by hand on plain doubles.
TEST(SgdStep, MatchesScalarRecurrence) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = uniform_index(rng, 1, 20);
    Tensor w = random_tensor({n}, rng), v(Shape{n});
    const SgdParams p{std::uniform_real_distribution<double>(1e-3, 0.5)(rng),
                      std::uniform_real_distribution<double>(0.0, 0.99)(rng),
                      std::uniform_real_distribution<double>(0.0, 1e-2)(rng)};
    std::vector<double> ws(w.data().begin(), w.data().end()), vs(static_cast<std::size_t>(n));
    for (int step = 0; step < 5; ++step) {
      const Tensor g = random_tensor({n}, rng);
      sgd_step(w, g, v, p);
      for (Index i = 0; i < n; ++i) {
        auto& vi = vs[static_cast<std::size_t>(i)];
        auto& wi = ws[static_cast<std::size_t>(i)];
        vi = p.momentum * vi - p.learning_rate * (g[i] + p.weight_decay * wi);
        wi += vi;
      }
    }
    for (Index i = 0; i < n; ++i) EXPECT_NEAR(w[i], ws[static_cast<std::size_t>(i)], 1e-14);
  }
}

TEST(SgdStep, DecayOnlyWhereFlagged) {
  Tensor a = scalar(1.0), b = scalar(1.0), ga = scalar(0.0), gb = scalar(0.0);
  std::vector<ParamRef> params{{"a.weight", &a, &ga, true}, {"a.bias", &b, &gb, false}};
  OptimizerState state = OptimizerState::zeros_like(params);
  sgd_step(params, state, {0.1, 0.0, 0.5});
  EXPECT_DOUBLE_EQ(a[0], 0.95);
  EXPECT_EQ(b[0], 1.0);
}

TEST(OptimizerState, MirrorsParameterShapes) {
  Tensor a(Shape{2, 3}), b(Shape{4}), ga(Shape{2, 3}), gb(Shape{4});
  std::vector<ParamRef> params{{"a", &a, &ga, true}, {"b", &b, &gb, false}};
  const OptimizerState s = OptimizerState::zeros_like(params);
  ASSERT_EQ(s.velocity.size(), 2u);
  EXPECT_EQ(s.velocity[0].shape(), a.shape());
  EXPECT_EQ(s.velocity[1].shape(), b.shape());
  EXPECT_EQ(s.velocity[0].data().cwiseAbs().sum(), 0.0);
  EXPECT_TRUE(s.matches(params));
  Tensor c(Shape{5}), gc(Shape{5});
  params[1] = {"c", &c, &gc, false};
  EXPECT_FALSE(s.matches(params));
}

TEST(LrAt, CifarSchedule) {
  const std::array<LrDrop, 2> s{LrDrop{80, 0.01}, LrDrop{120, 0.001}};
  EXPECT_EQ(lr_at(0, 0.1, s), 0.1);
  EXPECT_EQ(lr_at(79, 0.1, s), 0.1);
  EXPECT_EQ(lr_at(80, 0.1, s), 0.01);
  EXPECT_EQ(lr_at(119, 0.1, s), 0.01);
  EXPECT_EQ(lr_at(120, 0.1, s), 0.001);
  EXPECT_EQ(lr_at(10000, 0.1, s), 0.001);
}

TEST(LrAt, EmptyScheduleKeepsInitial) {
  EXPECT_EQ(lr_at(0, 0.3, {}), 0.3);
  EXPECT_EQ(lr_at(500, 0.3, {}), 0.3);
}

TEST(LrAt, PiecewiseConstantProperty) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<LrDrop> s;
    int epoch = 0;
    double lr = 1.0;
    for (Index k = uniform_index(rng, 0, 4); k > 0; --k) {
      epoch += static_cast<int>(uniform_index(rng, 1, 10));
      lr *= 0.1;
      s.push_back({epoch, lr});
    }
    for (int e = 0; e < epoch + 5; ++e) {
      double expect = 1.0;
      for (const auto& d : s)
        if (d.epoch <= e) expect = d.learning_rate;
      EXPECT_EQ(lr_at(e, 1.0, s), expect);
    }
  }
}

}  // namespace
}  // namespace milcnn
