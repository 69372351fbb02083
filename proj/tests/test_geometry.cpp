#include "tapprox/geometry.hpp"

#include "tapprox/horn.hpp"
#include "tapprox/sampler.hpp"

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

Eigen::MatrixXd random_frame(std::mt19937_64& rng, int p, int n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd M(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) M(i, j) = gauss(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  return Q.transpose();
}

Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, int p) {
  return random_frame(rng, p, p);
}

// Closed-form orthonormal-basis infimum from principal angles.
double delta_reference(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A * B.transpose());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    const double c = std::min(1.0, std::max(-1.0, svd.singularValues()[j]));
    sum += 0.5 * (1.0 - c);
  }
  return 2.0 * std::sqrt(sum / static_cast<double>(A.rows()));
}

}  // namespace

TEST_CASE("normal_frame: hand cases") {
  const auto plane = parse_map("x3", 3);
  const auto fr = normal_frame(plane, vec3(0.3, -0.2, 0.0));
  REQUIRE(fr.codim() == 1);
  CHECK(std::abs(std::abs(fr.basis(0, 2)) - 1.0) <= 1e-12);
  CHECK(std::abs(fr.basis(0, 0)) <= 1e-12);

  const auto cone = parse_map("x1^2 + x2^2 - x3^2", 3);
  const auto fc = normal_frame(cone, vec3(1, 0, 1));
  const Eigen::VectorXd expect = vec3(1, 0, -1) / std::sqrt(2.0);
  CHECK(std::abs(std::abs(fc.basis.row(0).dot(expect)) - 1.0) <= 1e-12);

  CHECK_THROWS_AS(normal_frame(cone, vec3(0, 0, 0)), RankDeficientError);
}

TEST_CASE("normal_frame: invariants on random maps") {
  std::mt19937_64 rng(3);
  const auto f = parse_map("x1^2 + x2^2 - x3^2; x1 + sin(x3)", 3);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd x = oracles::random_ball_point(rng, 3, 0.5);
    NormalFrame fr;
    try {
      fr = normal_frame(f, x);
    } catch (const RankDeficientError&) {
      continue;
    }
    // rows orthonormal
    const Eigen::MatrixXd G = fr.basis * fr.basis.transpose();
    CHECK((G - Eigen::MatrixXd::Identity(2, 2)).lpNorm<Eigen::Infinity>() <= 1e-10);
    // basis spans the Jacobian row space
    const Eigen::MatrixXd J = f.jacobian(x);
    for (int i = 0; i < J.rows(); ++i) {
      const Eigen::VectorXd row = J.row(i);
      const Eigen::VectorXd resid = row - fr.basis.transpose() * (fr.basis * row);
      CHECK(resid.norm() <= 1e-8 * row.norm());
    }
  }
}

TEST_CASE("lambda: hand cases") {
  const auto diag = parse_map("3*x1; 2*x2", 2);
  Eigen::VectorXd x(2);
  x << 0.4, -0.9;
  CHECK(lambda(diag, x) == Catch::Approx(2.0).epsilon(1e-13));

  const auto cone = parse_map("x1^2 + x2^2 - x3^2", 3);
  const double r = 0.1;
  for (int i = 0; i < 100; ++i) {
    const double phi = 2.0 * M_PI * i / 100.0;
    const double rho = r / std::sqrt(2.0);
    const Eigen::VectorXd p = vec3(rho * std::cos(phi), rho * std::sin(phi), rho);
    CHECK(std::abs(lambda(cone, p) - 2.0 * p.norm()) <= 1e-9);
  }
  CHECK(lambda(cone, vec3(0, 0, 0)) == 0.0);
}

TEST_CASE("lambda equals the smallest singular value (closed-form oracle)") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int done = 0;
  while (done < 100) {
    const int p = 1 + static_cast<int>(rng() % 3);
    const int n = p + static_cast<int>(rng() % (4 - p + 1)) + (p == 3 ? 0 : 0);
    Eigen::MatrixXd M(p, std::max(n, p));
    for (int i = 0; i < M.rows(); ++i)
      for (int j = 0; j < M.cols(); ++j) M(i, j) = gauss(rng);
    const auto f = parse_map(oracles::linear_map_source(M), static_cast<int>(M.cols()));
    const Eigen::VectorXd x = oracles::random_ball_point(rng, static_cast<int>(M.cols()), 1.0);
    const double expect = oracles::smallest_singular_closed_form(M);
    if (expect < 1e-6) continue;  // keep to comfortably full-rank samples
    CHECK(std::abs(lambda(f, x) - expect) <= 1e-10);
    ++done;
  }
}

TEST_CASE("lambda perturbation bound") {
  // h has Jacobian norm <= 0.71 on the test ball, so |L(f) - L(f+d*h)| <= d.
  const std::string h = "0.5*sin(x1) + 0.5*cos(x2) - 0.5";
  const auto f = parse_map("x1^2 + x2^2 - x3^2", 3);
  std::mt19937_64 rng(19);
  for (double delta : {1e-3, 1e-4}) {
    char buf[256];
    snprintf(buf, sizeof(buf), "x1^2 + x2^2 - x3^2 + %.10g*(%s)", delta, h.c_str());
    const auto g = parse_map(buf, 3);
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd x = oracles::random_ball_point(rng, 3, 0.5);
      CHECK(std::abs(lambda(f, x) - lambda(g, x)) <= delta * (1.0 + 1e-6));
    }
  }
}

TEST_CASE("grassmann_delta: hand cases") {
  Eigen::MatrixXd e1(1, 2), e2(1, 2);
  e1 << 1, 0;
  e2 << 0, 1;
  CHECK(grassmann_delta(e1, e2) == Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));

  Eigen::MatrixXd a(1, 3), b(1, 3);
  a << 0, 0, 1;
  const double th = 0.2;
  b << std::sin(th), 0, std::cos(th);
  CHECK(grassmann_delta(a, b) == Catch::Approx(2.0 * std::sin(0.1)).epsilon(1e-12));

  CHECK(grassmann_delta(a, a) <= 1e-12);

  Eigen::MatrixXd c(1, 2);
  c << 1, 0;
  CHECK_THROWS_AS(grassmann_delta(a, c), DimensionError);
}

TEST_CASE("grassmann_delta: metric properties") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 1 + static_cast<int>(rng() % 2);
    const int n = p + 1 + static_cast<int>(rng() % 3);
    const Eigen::MatrixXd A = random_frame(rng, p, n);
    const Eigen::MatrixXd B = random_frame(rng, p, n);

    const double d = grassmann_delta(A, B);
    CHECK(d >= 0.0);
    CHECK(d <= 2.0);
    CHECK(std::abs(d - grassmann_delta(B, A)) <= 1e-12);

    // invariance under orthonormal re-basing of either side
    const Eigen::MatrixXd QA = random_orthogonal(rng, p);
    const Eigen::MatrixXd QB = random_orthogonal(rng, p);
    CHECK(std::abs(grassmann_delta(QA * A, QB * B) - d) <= 1e-10);

    // zero iff equal spans
    CHECK(grassmann_delta(QA * A, A) <= 1e-10);
    if (d > 1e-5) CHECK(grassmann_delta(A, B) > 1e-10);

    // agreement with the principal-angle closed form
    CHECK(std::abs(d - delta_reference(A, B)) <= 1e-10);
  }
}

TEST_CASE("grassmann_delta_oracle: literal-definition optimizer agrees") {
  std::mt19937_64 rng(137);

  // identical frames
  const Eigen::MatrixXd F = random_frame(rng, 2, 4);
  CHECK(grassmann_delta_oracle(F, F) <= 1e-8);

  // hyperplane pair at angle 0.2: closed form min(|n1-n2|, |n1+n2|)
  Eigen::MatrixXd a(1, 3), b(1, 3);
  a << 0, 0, 1;
  b << std::sin(0.2), 0, std::cos(0.2);
  CHECK(std::abs(grassmann_delta_oracle(a, b) - 2.0 * std::sin(0.1)) <= 1e-6);

  // 50 random pairs, p <= 2, n <= 4
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 1 + static_cast<int>(rng() % 2);
    const int n = std::max(p + 1, 2 + static_cast<int>(rng() % 3));
    const Eigen::MatrixXd A = random_frame(rng, p, n);
    const Eigen::MatrixXd B = random_frame(rng, p, n);
    const double closed = grassmann_delta(A, B);
    const double opt = grassmann_delta_oracle(A, B);
    INFO("p=" << p << " n=" << n);
    CHECK(opt >= closed - 1e-6);
    CHECK(opt <= closed + 1e-4);
  }
}

TEST_CASE("horn membership on the cone family") {
  const auto cone = parse_map("x1^2 + x2^2 - x3^2", 3);
  RadiusSchedule sch{0.1, 0.5, 5};
  const auto fam = continue_family(cone, sch, 400, 11);

  // axis point: d((0,0,t), cone) = t/sqrt(2)
  const Eigen::VectorXd x = vec3(0, 0, 0.1);
  const auto w1 = horn_contains(fam, x, 1.0);
  CHECK(w1.contained);
  CHECK(w1.distance == Catch::Approx(0.1 / std::sqrt(2.0)).margin(5e-3));

  const auto w2 = horn_contains(fam, x, 2.0);
  CHECK_FALSE(w2.contained);

  // points of V itself are contained for any exponent
  const Eigen::VectorXd on_v = fam.slices[1].points.front().x;
  CHECK(horn_contains(fam, on_v, 3.0).contained);

  // monotone in sigma: contained at sigma implies contained below
  for (double sigma : {1.5, 1.2, 1.0, 0.5}) {
    if (horn_contains(fam, x, sigma).contained) {
      for (double lower : {0.4, 0.2}) CHECK(horn_contains(fam, x, lower).contained);
    }
  }

  SphereSliceFamily empty;
  empty.map = cone;
  CHECK_THROWS_AS(horn_contains(empty, x, 1.0), PreconditionError);
}

TEST_CASE("tangential horn membership") {
  const auto f = parse_map("x1^2 + x2^2 - sin(x3)^2", 3);
  const auto cone = parse_map("x1^2 + x2^2 - x3^2", 3);
  RadiusSchedule sch{0.01, 0.5, 3};
  const auto fam_f = continue_family(f, sch, 300, 5);
  const auto fam_cone = continue_family(cone, sch, 300, 5);

  // a sample against its own family matches itself
  const TangentSample& self = fam_f.slices[0].points.front();
  CHECK(tangential_horn_contains(fam_f, self, 3.0).contained);

  // V(f) samples against the cubic truncation at r = 1e-2: match distance
  // ~ c r^3 and Delta ~ 0.24 r^2, so tau = 1.5 admits, tau = 2.5 does not
  // (Delta decays strictly slower than r^2.5).
  int admitted = 0, rejected = 0;
  for (const auto& s : fam_f.slices[0].points) {
    if (!s.regular()) continue;
    if (tangential_horn_contains(fam_cone, s, 1.5).contained) ++admitted;
    if (!tangential_horn_contains(fam_cone, s, 2.5).contained) ++rejected;
  }
  const int total = static_cast<int>(fam_f.slices[0].points.size());
  CHECK(admitted == total);
  CHECK(rejected == total);
}
