#include "tapprox/expr.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace tapprox;

namespace {

Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd x(3);
  x << a, b, c;
  return x;
}

}  // namespace

TEST_CASE("parse: arity and codomain") {
  const auto cone = parse_map("x1^2 + x2^2 - x3^2", 3);
  CHECK(cone.arity() == 3);
  CHECK(cone.codomain() == 1);

  const auto ident = parse_map("x1; x2", 2);
  CHECK(ident.arity() == 2);
  CHECK(ident.codomain() == 2);

  const auto sine = parse_map("x1^2 + x2^2 - sin(x3)^2", 3);
  CHECK(sine.codomain() == 1);

  CHECK_THROWS_AS(parse_map("x4", 3), ParseError);
}

TEST_CASE("evaluate: hand values") {
  const auto cone = parse_map("x1^2 + x2^2 - x3^2", 3);
  CHECK(cone.evaluate(vec3(1, 1, 1))[0] == 1.0);

  const auto ident = parse_map("x1; x2", 2);
  Eigen::VectorXd x(2);
  x << 0.3, -0.4;
  CHECK(ident.evaluate(x)[0] == 0.3);
  CHECK(ident.evaluate(x)[1] == -0.4);

  const auto sine = parse_map("x1^2 + x2^2 - sin(x3)^2", 3);
  CHECK(sine.evaluate(vec3(0, 0, M_PI / 2))[0] == Catch::Approx(-1.0).margin(1e-15));
}

TEST_CASE("jacobian: hand values and finite-difference cross-check") {
  const auto cone = parse_map("x1^2 + x2^2 - x3^2", 3);
  const Eigen::MatrixXd J = cone.jacobian(vec3(1, 2, 3));
  CHECK(J(0, 0) == 2.0);
  CHECK(J(0, 1) == 4.0);
  CHECK(J(0, 2) == -6.0);

  const auto ident = parse_map("x1; x2", 2);
  Eigen::VectorXd x(2);
  x << 0.7, -0.1;
  CHECK(ident.jacobian(x).isApprox(Eigen::MatrixXd::Identity(2, 2)));

  const auto sine = parse_map("x1^2 + x2^2 - sin(x3)^2", 3);
  const Eigen::MatrixXd Js = sine.jacobian(vec3(0, 0, 0.5));
  CHECK(Js(0, 0) == 0.0);
  CHECK(Js(0, 1) == 0.0);
  CHECK(std::abs(Js(0, 2) - (-std::sin(1.0))) <= 1e-8);
  auto eval = [&](const Eigen::VectorXd& y) { return sine.evaluate(y)[0]; };
  const Eigen::VectorXd fd = oracles::fd_gradient(eval, vec3(0, 0, 0.5), 1e-5);
  CHECK((Js.row(0).transpose() - fd).norm() <= 1e-8);
}

TEST_CASE("property: jacobian matches 5-point finite differences") {
  std::mt19937_64 rng(11);
  oracles::ExpressionGenerator gen(3, 42);
  int tested = 0;
  int attempts = 0;
  while (tested < 40 && attempts < 400) {
    ++attempts;
    const std::string src = gen.generate(3);
    AnalyticMap f;
    try {
      f = parse_map(src, 3);
    } catch (const ParseError&) {
      continue;  // generator occasionally violates the analyticity rules
    }
    const Eigen::VectorXd x = oracles::random_ball_point(rng, 3, 0.8);
    Eigen::MatrixXd J;
    double fx;
    try {
      J = f.jacobian(x);
      fx = f.evaluate(x)[0];
    } catch (const DomainError&) {
      continue;
    }
    if (!std::isfinite(fx) || !J.allFinite() || std::abs(fx) > 1e6) continue;
    auto eval = [&](const Eigen::VectorXd& y) { return f.evaluate(y)[0]; };
    Eigen::VectorXd fd;
    try {
      fd = oracles::fd_gradient(eval, x, 1e-5);
    } catch (const DomainError&) {
      continue;
    }
    const double scale = std::max(1.0, J.row(0).norm());
    INFO("source: " << src);
    CHECK((J.row(0).transpose() - fd).norm() <= 1e-6 * scale);
    ++tested;
  }
  CHECK(tested >= 30);
}

TEST_CASE("property: parse(unparse(f)) evaluates identically") {
  std::mt19937_64 rng(77);
  oracles::ExpressionGenerator gen(3, 1234);
  int tested = 0, attempts = 0;
  while (tested < 30 && attempts < 300) {
    ++attempts;
    AnalyticMap f;
    try {
      f = parse_map(gen.generate(3), 3);
    } catch (const ParseError&) {
      continue;
    }
    AnalyticMap g;
    try {
      g = parse_map(f.unparse(), 3);
    } catch (const ParseError&) {
      INFO("unparse: " << f.unparse());
      FAIL("unparse did not round-trip through the parser");
    }
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd x = oracles::random_ball_point(rng, 3, 0.9);
      double a, b;
      try {
        a = f.evaluate(x)[0];
        b = g.evaluate(x)[0];
      } catch (const DomainError&) {
        continue;
      }
      CHECK(a == b);  // same tree shape, bitwise identical arithmetic
    }
    ++tested;
  }
  CHECK(tested >= 20);
}

TEST_CASE("evaluate is deterministic") {
  const auto f = parse_map("sin(x1)*exp(x2) - cos(x1*x2)/(1 + x1^2)", 2);
  Eigen::VectorXd x(2);
  x << 0.123456789, -0.987654321;
  const double a = f.evaluate(x)[0];
  const double b = f.evaluate(x)[0];
  CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}

TEST_CASE("grammar: precedence and aliases") {
  // '^' binds tighter than unary minus
  CHECK(parse_map("-x1^2", 1).evaluate(Eigen::VectorXd::Constant(1, 2.0))[0] == -4.0);
  // x,y,z,w alias x1..x4 for arity <= 4
  const auto f = parse_map("x + 2*y - z*w", 4);
  Eigen::VectorXd x(4);
  x << 1, 2, 3, 4;
  CHECK(f.evaluate(x)[0] == 1 + 4 - 12);
  // aliases are unavailable above arity 4
  CHECK_THROWS_AS(parse_map("y", 5), ParseError);
  // scientific literals and constants
  CHECK(parse_map("2e-2 + pi + e", 1).evaluate(Eigen::VectorXd::Zero(1))[0] ==
        Catch::Approx(0.02 + M_PI + M_E));
}

TEST_CASE("parse errors are position-annotated") {
  try {
    parse_map("x1 + ", 2);
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(err.position == 5);
  }
  try {
    parse_map("x1 + foo(x2)", 2);
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(std::string(err.what()).find("foo") != std::string::npos);
  }
}

TEST_CASE("analyticity at the origin is enforced at parse time") {
  CHECK_THROWS_AS(parse_map("x1/x2", 2), ParseError);       // denominator vanishes at O
  CHECK_NOTHROW(parse_map("x1/(1 + x2)", 2));
  CHECK_THROWS_AS(parse_map("log(x1)", 1), ParseError);     // log 0
  CHECK_NOTHROW(parse_map("log(1 + x1)", 1));
  CHECK_THROWS_AS(parse_map("sqrt(x1^2)", 1), ParseError);  // sqrt 0
  CHECK_NOTHROW(parse_map("sqrt(1 + x1)", 1));
  CHECK_THROWS_AS(parse_map("x1^-1", 1), ParseError);       // negative power of 0
  CHECK_NOTHROW(parse_map("(1 + x1)^-2", 1));
}

TEST_CASE("domain violations at evaluation time") {
  const auto f = parse_map("log(1 + x1)", 1);
  CHECK_THROWS_AS(f.evaluate(Eigen::VectorXd::Constant(1, -2.0)), DomainError);
  const auto g = parse_map("sqrt(1 + x1)", 1);
  CHECK_THROWS_AS(g.evaluate(Eigen::VectorXd::Constant(1, -3.0)), DomainError);
  const auto h = parse_map("x1/(1 - x2)", 2);
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  CHECK_THROWS_AS(h.evaluate(x), DomainError);
}

TEST_CASE("vanishing at the origin") {
  CHECK(parse_map("x1^2 + x2^2 - sin(x3)^2", 3).vanishes_at_origin());
  CHECK(parse_map("exp(x1) - 1", 1).vanishes_at_origin());
  CHECK_FALSE(parse_map("1 + x1", 1).vanishes_at_origin());
}

TEST_CASE("negative integer exponents") {
  const auto f = parse_map("(1 + x1)^-2", 1);
  CHECK(f.evaluate(Eigen::VectorXd::Constant(1, 1.0))[0] == Catch::Approx(0.25));
  const auto g = parse_map(f.unparse(), 1);
  CHECK(g.evaluate(Eigen::VectorXd::Constant(1, 1.0))[0] == Catch::Approx(0.25));
}
