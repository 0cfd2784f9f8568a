#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "btgd/core.hpp"

using namespace btgd;

namespace {

ScalarField square_1d() {
  return ScalarField(
      1, [](std::span<const double> x) { return x[0] * x[0]; },
      [](std::span<const double> x) { return Vector{2 * x[0]}; });
}

ScalarField cube_1d() {
  return ScalarField(
      1, [](std::span<const double> x) { return x[0] * x[0] * x[0]; },
      [](std::span<const double> x) { return Vector{3 * x[0] * x[0]}; });
}

ScalarField saddle_2d() {
  return ScalarField(2, [](std::span<const double> p) { return p[0] * p[0] - p[1] * p[1]; });
}

}  // namespace

TEST(Point, RejectsNonFiniteAndEmpty) {
  EXPECT_THROW(Point(Vector{}), InvalidArgument);
  EXPECT_THROW(Point({1.0, std::nan("")}), NonFiniteEvaluation);
  EXPECT_THROW(Point({INFINITY}), NonFiniteEvaluation);
  const Point p{3.0, 4.0};
  EXPECT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p.norm(), 5.0);
  EXPECT_EQ(Point::zeros(3), Point({0.0, 0.0, 0.0}));
}

TEST(Vec, BasicAlgebra) {
  const Vector a{1, 2, 3}, b{4, 5, 6};
  EXPECT_DOUBLE_EQ(vec::dot(a, b), 32.0);
  EXPECT_EQ(vec::sub(b, a), (Vector{3, 3, 3}));
  EXPECT_EQ(vec::scaled(2.0, a), (Vector{2, 4, 6}));
  EXPECT_EQ(vec::combine(1.0, a, -1.0, b), (Vector{-3, -3, -3}));
  EXPECT_DOUBLE_EQ(vec::distance(a, b), std::sqrt(27.0));
  EXPECT_FALSE(vec::all_finite(Vector{1.0, NAN}));
}

TEST(SymMatrix, ConstructionAndMultiply) {
  EXPECT_THROW((SymMatrix{{1, 2}, {3, 4}}), InvalidArgument);
  EXPECT_THROW((SymMatrix{{1, 2}, {2}}), InvalidArgument);
  const SymMatrix m{{2, 1}, {1, 3}};
  EXPECT_EQ(m.multiply(Vector{1, 1}), (Vector{3, 4}));
}

TEST(ScalarField, ValueIsCheckedAndDimensioned) {
  ScalarField bad(1, [](std::span<const double>) { return NAN; });
  EXPECT_THROW(bad.value(Vector{0.0}), NonFiniteEvaluation);
  EXPECT_THROW(square_1d().value(Vector{1.0, 2.0}), InvalidArgument);
  EXPECT_THROW(ScalarField(0, [](std::span<const double>) { return 0.0; }), InvalidArgument);
}

TEST(ScalarField, DeterministicValues) {
  const ScalarField f = saddle_2d();
  const Vector x{0.3, -1.7};
  EXPECT_EQ(f.value(x), f.value(x));
  EXPECT_EQ(f.gradient(x), f.gradient(x));
}

TEST(FdGradient, ConstantFieldIsZero) {
  ScalarField c(3, [](std::span<const double>) { return 7.5; });
  for (double g : fd_gradient(c, Vector{1, -2, 3}, 1e-6)) EXPECT_EQ(g, 0.0);
}

TEST(FdGradient, SquareAtThree) {
  EXPECT_NEAR(fd_gradient(square_1d(), Vector{3.0}, 1e-6)[0], 6.0, 1e-6);
}

TEST(FdGradient, SaddlePartials) {
  const Vector g = fd_gradient(saddle_2d(), Vector{1.0, 2.0}, 1e-6);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], -4.0, 1e-6);
}

TEST(FdGradient, NonFiniteValueThrows) {
  ScalarField f(1, [](std::span<const double> x) { return x[0] > 0 ? INFINITY : 0.0; });
  EXPECT_THROW(fd_gradient(f, Vector{0.0}, 1e-6), NonFiniteEvaluation);
}

TEST(FdGradient, DefaultStepScalesWithNorm) {
  EXPECT_DOUBLE_EQ(default_gradient_step(Vector{0.5}), 1e-6);
  EXPECT_DOUBLE_EQ(default_gradient_step(Vector{3.0, 4.0}), 5e-6);
}

TEST(FdHessian, HalfSquare) {
  ScalarField f(1, [](std::span<const double> x) { return 0.5 * x[0] * x[0]; });
  EXPECT_NEAR(fd_hessian(f, Vector{0.0}, 1e-4)(0, 0), 1.0, 1e-4);
}

TEST(FdHessian, SaddleDiagonal) {
  const SymMatrix h = fd_hessian(saddle_2d(), Vector{0.0, 0.0}, 1e-4);
  EXPECT_NEAR(h(0, 0), 2.0, 1e-4);
  EXPECT_NEAR(h(1, 1), -2.0, 1e-4);
  EXPECT_NEAR(h(0, 1), 0.0, 1e-4);
}

TEST(FdHessian, LinearFieldIsZeroAndSymmetric) {
  ScalarField f(3, [](std::span<const double> x) { return 2 * x[0] - 3 * x[1] + 0.5 * x[2]; });
  const SymMatrix h = fd_hessian(f, Vector{1.3, -0.2, 4.0}, 1e-4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(h(i, j), 0.0, 1e-4);
}

TEST(FdHessian, ExactlySymmetricOnMixedField) {
  ScalarField f(3, [](std::span<const double> x) {
    return std::sin(x[0] * x[1]) + std::exp(0.3 * x[2] * x[0]) + x[1] * x[1] * x[2];
  });
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 20; ++k) {
    const SymMatrix h = fd_hessian(f, Vector{u(rng), u(rng), u(rng)});
    EXPECT_TRUE(h.is_symmetric());
  }
}

TEST(Armijo, ZeroGradientZeroDirection) {
  ScalarField flat(2, [](std::span<const double>) { return 1.0; });
  EXPECT_TRUE(armijo_holds(flat, Vector{0.0, 0.0}, Vector{0.0, 0.0}, 1.0, 0.5));
}

TEST(Armijo, SquareThreshold) {
  EXPECT_FALSE(armijo_holds(square_1d(), Vector{1.0}, Vector{2.0}, 1.0, 0.5));
  EXPECT_TRUE(armijo_holds(square_1d(), Vector{1.0}, Vector{2.0}, 0.5, 0.5));
}

TEST(Armijo, CubeHoldsWithEquality) {
  const double d0 = (3.0 + std::sqrt(3.0)) / 6.0;
  EXPECT_TRUE(armijo_holds(cube_1d(), Vector{1.0}, Vector{3.0}, d0, 0.5));
  const double y = 1.0 - 3.0 * d0;
  EXPECT_NEAR(y * y * y - 1.0, -0.5 * d0 * 9.0, 1e-12);
}

TEST(Armijo, NeverAcceptsIncrease) {
  ScalarField f(1, [](std::span<const double> x) { return 1e6 + x[0]; },
                [](std::span<const double>) { return Vector{0.0}; });
  EXPECT_FALSE(armijo_holds(f, Vector{0.0}, Vector{-1e-9}, 1.0, 0.5));
}

TEST(Armijo, MonotoneInAlpha) {
  const ScalarField f(2, [](std::span<const double> p) {
    return std::pow(p[0] - 1, 2) + 3 * std::pow(p[1] + 0.5, 4) + p[0] * p[1];
  });
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 200; ++k) {
    const Vector x{u(rng), u(rng)};
    const Vector g = f.gradient(x);
    const double sigma = std::ldexp(1.0, -static_cast<int>(k % 8));
    for (double alpha : {0.9, 0.5, 0.1}) {
      if (!armijo_holds(f, x, g, sigma, alpha)) continue;
      for (double smaller : {alpha / 2, alpha / 10, 1e-4})
        EXPECT_TRUE(armijo_holds(f, x, g, sigma, smaller));
    }
  }
}

TEST(Armijo, Preconditions) {
  EXPECT_THROW(armijo_holds(square_1d(), Vector{1.0}, Vector{2.0}, 0.0, 0.5), InvalidArgument);
  EXPECT_THROW(armijo_holds(square_1d(), Vector{1.0}, Vector{2.0, 1.0}, 1.0, 0.5), InvalidArgument);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(LineSearchConfig{}.validate());
  EXPECT_THROW((LineSearchConfig{0.0, 0.5, 1.0, 100}).validate(), InvalidArgument);
  EXPECT_THROW((LineSearchConfig{0.5, 1.0, 1.0, 100}).validate(), InvalidArgument);
  EXPECT_THROW((LineSearchConfig{0.5, 0.5, 0.0, 100}).validate(), InvalidArgument);
  EXPECT_THROW((LineSearchConfig{0.5, 0.5, 1.0, 0}).validate(), InvalidArgument);
  EXPECT_THROW((StopRule{0.0, 10, 1.0}).validate(), InvalidArgument);
  EXPECT_THROW((StopRule{1e-8, 0, 1.0}).validate(), InvalidArgument);
  EXPECT_THROW((StopRule{1e-8, 10, 0.0}).validate(), InvalidArgument);
  EXPECT_THROW((DirectionBounds{2.0, 1.0, 0.5}).validate(), InvalidArgument);
  EXPECT_THROW((DirectionBounds{0.5, 2.0, 0.0}).validate(), InvalidArgument);
}

TEST(DirectionBounds, CheckSandwichAndCone) {
  const DirectionBounds b{0.5, 2.0, 0.5};
  const Vector g{1.0, 0.0};
  EXPECT_TRUE(b.check(g, Vector{1.0, 0.0}).holds());
  EXPECT_FALSE(b.check(g, Vector{0.4, 0.0}).norm_ok);
  EXPECT_FALSE(b.check(g, Vector{2.1, 0.0}).norm_ok);
  // cosine exactly 0.5 sits on the cone boundary
  EXPECT_TRUE(b.check(g, Vector{0.5, std::sqrt(0.75)}).angle_ok);
  EXPECT_FALSE(b.check(g, Vector{0.4, std::sqrt(0.84)}).angle_ok);
}

TEST(Termination, Names) {
  EXPECT_STREQ(to_string(Termination::Converged), "Converged");
  EXPECT_STREQ(to_string(Termination::Stalled), "Stalled");
}
