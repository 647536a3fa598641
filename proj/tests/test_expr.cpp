#include "freebdy/expr.hpp"
#include "freebdy/random.hpp"
#include "reference_expr.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <vector>

using freebdy::Expression;

namespace {

double at(const std::string& src, std::vector<double> x) {
  return Expression::parse(src, 16).eval(std::span<const double>(x));
}

std::vector<std::vector<double>> box_points(int count, std::uint64_t seed) {
  freebdy::CounterRng rng(seed, 1);
  std::vector<std::vector<double>> pts;
  for (int k = 0; k < count; ++k) pts.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)});
  return pts;
}

}  // namespace

TEST(Expr, Precedence) {
  EXPECT_EQ(at("1+2*3", {}), 7.0);
  EXPECT_EQ(at("2*x1^2 + sin(x2)", {1.0, 0.0}), 2.0);
  EXPECT_EQ(at("-2^2", {}), -4.0);
  EXPECT_EQ(at("2^-1", {}), 0.5);
  EXPECT_EQ(at("8/4/2", {}), 1.0);
  EXPECT_EQ(at("2^3^2", {}), 64.0);  // left-associative
  EXPECT_EQ(at("(1+2)*3", {}), 9.0);
  EXPECT_EQ(at("exp(0)", {}), 1.0);
  EXPECT_EQ(at("x1^3", {2.0}), 8.0);
}

TEST(Expr, SyntaxErrorCarriesOffset) {
  try {
    Expression::parse("x1 +", 3);
    FAIL() << "expected a parse error";
  } catch (const freebdy::ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(Expression::parse("", 3), freebdy::ParseError);
  EXPECT_THROW(Expression::parse("foo(x1)", 3), freebdy::ParseError);
  EXPECT_THROW(Expression::parse("x4", 3), freebdy::ParseError);
  EXPECT_THROW(Expression::parse("x0", 3), freebdy::ParseError);
  EXPECT_THROW(Expression::parse("(x1", 3), freebdy::ParseError);
  EXPECT_THROW(Expression::parse("x1 x2", 3), freebdy::ParseError);
}

TEST(Expr, DomainErrorsNameTheSubexpression) {
  try {
    at("x1/x2", {1.0, 0.0});
    FAIL() << "expected a domain error";
  } catch (const freebdy::DomainError& e) {
    EXPECT_EQ(e.subexpression(), "(x1/x2)");
  }
  EXPECT_THROW(at("sqrt(x1 - 2)", {1.0}), freebdy::DomainError);
  EXPECT_THROW(at("log(x1)", {0.0}), freebdy::DomainError);
  EXPECT_THROW(at("x1^-1", {0.0}), freebdy::DomainError);
  EXPECT_THROW(at("x1^0.5", {-1.0}), freebdy::DomainError);
}

TEST(Expr, TooFewCoordinates) {
  const auto e = Expression::parse("x1 + x3", 3);
  const std::vector<double> two{1.0, 2.0};
  EXPECT_THROW(e.eval(std::span<const double>(two)), freebdy::PreconditionError);
}

TEST(Expr, CorpusMatchesReferenceBitwise) {
  const auto pts = box_points(25, 9);
  for (const auto& src : reference::corpus()) {
    const auto e = Expression::parse(src, 3);
    for (const auto& x : pts) {
      const double a = e.eval(std::span<const double>(x));
      const double b = reference::eval(src, x);
      EXPECT_EQ(std::bit_cast<std::uint64_t>(a), std::bit_cast<std::uint64_t>(b)) << src;
    }
  }
}

TEST(Expr, RoundTripIsStable) {
  freebdy::CounterRng rng(77, 3);
  for (int k = 0; k < 300; ++k) {
    const std::string src = reference::random_expression(rng, 1 + k % 4);
    const auto e = Expression::parse(src, 3);
    const auto again = Expression::parse(e.serialize(), 3);
    EXPECT_TRUE(e.structurally_equal(again)) << src << " -> " << e.serialize();
    EXPECT_EQ(again.serialize(), e.serialize());
  }
  for (const auto& src : reference::corpus()) {
    const auto e = Expression::parse(src, 3);
    EXPECT_TRUE(e.structurally_equal(Expression::parse(e.serialize(), 3))) << src;
  }
}

TEST(Expr, RandomExpressionsMatchReference) {
  freebdy::CounterRng rng(5, 4);
  const auto pts = box_points(5, 10);
  for (int k = 0; k < 200; ++k) {
    const std::string src = reference::random_expression(rng, 3);
    const auto e = Expression::parse(src, 3);
    const auto re = Expression::parse(e.serialize(), 3);
    for (const auto& x : pts) {
      const double ref = reference::eval(src, x);
      EXPECT_EQ(std::bit_cast<std::uint64_t>(e.eval(std::span<const double>(x))), std::bit_cast<std::uint64_t>(ref)) << src;
      EXPECT_EQ(std::bit_cast<std::uint64_t>(re.eval(std::span<const double>(x))), std::bit_cast<std::uint64_t>(ref)) << src;
    }
  }
}

TEST(Expr, ConstantsSerializeExactly) {
  for (double v : {0.1, -2.5e-300, 1.0 / 3.0, 6.02214076e23}) {
    const auto e = Expression::constant(v);
    EXPECT_EQ(e.eval(freebdy::Vec()), v);
    EXPECT_TRUE(e.is_constant());
  }
}

TEST(Expr, GradientExamples) {
  freebdy::Vec x(1);
  x << 3.0;
  EXPECT_NEAR(Expression::parse("x1^2", 1).gradient(x, 1e-5)[0], 6.0, 1e-8);
  x << 0.0;
  EXPECT_NEAR(Expression::parse("sin(x1)", 1).gradient(x, 1e-5)[0], std::cos(0.0), 1e-9);
  freebdy::Vec y = freebdy::Vec::Constant(3, 0.4);
  EXPECT_EQ(Expression::parse("5", 3).gradient(y, 1e-5), freebdy::Vec::Zero(3));
  EXPECT_THROW(Expression::parse("x1", 1).gradient(x, 0.0), freebdy::PreconditionError);
}

// Halving h quarters the error against analytic derivatives.
TEST(Expr, GradientConvergesAtOrderTwo) {
  struct Case {
    const char* src;
    double (*d)(double, double);
  };
  const Case cases[] = {
      {"exp(x1) * sin(x2)", [](double a, double b) { return std::exp(a) * std::sin(b); }},
      {"x1^3 + x1*x2", [](double a, double b) { return 3 * a * a + b; }},
      {"cos(2*x1) + x2", [](double a, double) { return -2 * std::sin(2 * a); }},
      {"sqrt(1 + x1^2)", [](double a, double) { return a / std::sqrt(1 + a * a); }},
      {"log(2 + x1) * x2", [](double a, double b) { return b / (2 + a); }},
  };
  freebdy::Vec x(2);
  x << 0.7, 0.4;
  for (const auto& c : cases) {
    const auto e = Expression::parse(c.src, 2);
    const double exact = c.d(x[0], x[1]);
    const double e1 = std::fabs(e.gradient(x, 1e-2)[0] - exact);
    const double e2 = std::fabs(e.gradient(x, 5e-3)[0] - exact);
    EXPECT_NEAR(e1 / e2, 4.0, 1.2) << c.src;
  }
}
