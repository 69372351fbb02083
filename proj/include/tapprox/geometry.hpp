// Differential-geometric primitives: orthonormal normal frames of implicit
// submanifolds, the transverse stretch Lambda of a map, and the subspace
// distance Delta between normal spaces.
#pragma once

#include "tapprox/expr.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace tapprox {

// Relative rank cutoff for Jacobians.
inline constexpr double kRankTolerance = 1e-10;

struct NormalFrame {
  Eigen::VectorXd point;
  // p x n, rows are an orthonormal basis of the normal space (the row space
  // of the Jacobian at the point).
  Eigen::MatrixXd basis;

  int ambient_dim() const { return static_cast<int>(basis.cols()); }
  int codim() const { return static_cast<int>(basis.rows()); }
};

struct TangentSample {
  Eigen::VectorXd x;
  double radius = 0.0;
  std::optional<NormalFrame> frame;  // absent at numerically singular points
  double lambda_value = 0.0;

  bool regular() const { return frame.has_value(); }
};

namespace detail {

inline Eigen::MatrixXd orthonormal_rows(const Eigen::MatrixXd& J) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
  return svd.matrixV().leftCols(J.rows()).transpose();
}

inline bool full_rank(const Eigen::VectorXd& singular_values) {
  const Eigen::Index p = singular_values.size();
  if (p == 0) return false;
  const double smax = singular_values[0];
  if (smax == 0.0) return false;
  return singular_values[p - 1] > kRankTolerance * smax;
}

}  // namespace detail

inline NormalFrame normal_frame(const AnalyticMap& f, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd J = f.jacobian(x);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
  if (!detail::full_rank(svd.singularValues()))
    throw RankDeficientError("Jacobian is rank-deficient at the requested point");
  NormalFrame fr;
  fr.point = x;
  fr.basis = svd.matrixV().leftCols(J.rows()).transpose();
  return fr;
}

// Lambda(f)(x): 0 when rk(d_x f) < p, otherwise the smallest stretch of the
// differential transverse to its kernel, i.e. the p-th singular value.
// Total by construction; never throws.
inline double lambda(const AnalyticMap& f, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd J = f.jacobian(x);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (!detail::full_rank(sv)) return 0.0;
  return sv[sv.size() - 1];
}

inline int jacobian_rank(const AnalyticMap& f, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd J = f.jacobian(x);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > kRankTolerance * sv[0]) ++r;
  return r;
}

// Distance between subspaces spanned by two orthonormal frames: the infimum
// over orthonormal bases of max_j ||v1_j - v2_j||. In terms of the principal
// angles t_1..t_p this equals 2*sqrt(mean_j sin^2(t_j/2)); see the oracle
// below for the direct minimization. Computed from sines of principal angles
// (singular values of F1*(I - P2)), which stays accurate for nearby spans.
inline double grassmann_delta(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2) {
  if (B1.cols() != B2.cols()) throw DimensionError("frames live in different ambient spaces");
  if (B1.rows() != B2.rows()) throw DimensionError("frames have different codimension");
  const Eigen::Index n = B1.cols();
  const Eigen::Index p = B1.rows();
  const Eigen::MatrixXd residual =
      B1 * (Eigen::MatrixXd::Identity(n, n) - B2.transpose() * B2);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double s = std::min(1.0, std::max(0.0, svd.singularValues()[j]));
    const double c = std::sqrt(std::max(0.0, 1.0 - s * s));
    sum += s * s / (2.0 * (1.0 + c));  // sin^2(theta/2), no cancellation
  }
  return 2.0 * std::sqrt(sum / static_cast<double>(p));
}

inline double grassmann_delta(const NormalFrame& F1, const NormalFrame& F2) {
  return grassmann_delta(F1.basis, F2.basis);
}

// ---------------------------------------------------------------------------
// Literal-definition oracle: minimize max_j ||v1_j - v2_j|| over pairs of
// orthonormal bases, each parametrized by a product of Givens rotations and
// an optional reflection. Test oracle only; p <= 3.
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXd givens_product(int p, const Eigen::VectorXd& angles, bool reflect) {
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(p, p);
  int idx = 0;
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) {
      const double c = std::cos(angles[idx]);
      const double s = std::sin(angles[idx]);
      ++idx;
      Eigen::MatrixXd G = Eigen::MatrixXd::Identity(p, p);
      G(i, i) = c;
      G(j, j) = c;
      G(i, j) = -s;
      G(j, i) = s;
      Q = Q * G;
    }
  if (reflect) Q.row(0) *= -1.0;
  return Q;
}

inline double max_row_gap(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    worst = std::max(worst, (A.row(i) - B.row(i)).norm());
  return worst;
}

// Small Nelder-Mead; good enough for the <= 6-dimensional oracle landscapes.
template <class F>
double nelder_mead(F&& fn, Eigen::VectorXd x0, int steps) {
  const int d = static_cast<int>(x0.size());
  if (d == 0) return fn(x0);
  std::vector<Eigen::VectorXd> xs(d + 1, x0);
  std::vector<double> fs(d + 1);
  for (int i = 0; i < d; ++i) xs[i + 1][i] += 0.25;
  for (int i = 0; i <= d; ++i) fs[i] = fn(xs[i]);
  auto order = [&] {
    for (int i = 0; i <= d; ++i)
      for (int j = i + 1; j <= d; ++j)
        if (fs[j] < fs[i]) {
          std::swap(fs[i], fs[j]);
          std::swap(xs[i], xs[j]);
        }
  };
  order();
  for (int it = 0; it < steps; ++it) {
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += xs[i];
    centroid /= d;
    const Eigen::VectorXd refl = centroid + (centroid - xs[d]);
    const double frefl = fn(refl);
    if (frefl < fs[0]) {
      const Eigen::VectorXd expd = centroid + 2.0 * (centroid - xs[d]);
      const double fexp = fn(expd);
      if (fexp < frefl) {
        xs[d] = expd;
        fs[d] = fexp;
      } else {
        xs[d] = refl;
        fs[d] = frefl;
      }
    } else if (frefl < fs[d - 1]) {
      xs[d] = refl;
      fs[d] = frefl;
    } else {
      const Eigen::VectorXd contr = centroid + 0.5 * (xs[d] - centroid);
      const double fcontr = fn(contr);
      if (fcontr < fs[d]) {
        xs[d] = contr;
        fs[d] = fcontr;
      } else {
        for (int i = 1; i <= d; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = fn(xs[i]);
        }
      }
    }
    order();
    if ((xs[d] - xs[0]).norm() < 1e-12 && fs[d] - fs[0] < 1e-14) break;
  }
  return fs[0];
}

}  // namespace detail

inline double grassmann_delta_oracle(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2,
                                     int restarts = 8, int steps = 400) {
  if (B1.cols() != B2.cols()) throw DimensionError("frames live in different ambient spaces");
  if (B1.rows() != B2.rows()) throw DimensionError("frames have different codimension");
  const int p = static_cast<int>(B1.rows());
  if (p > 3) throw DimensionError("oracle supports codimension <= 3");
  const int nangles = p * (p - 1) / 2;
  std::mt19937_64 rng(0x5eedULL + 31 * p);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * M_PI);

  double best = std::numeric_limits<double>::infinity();
  for (int ra = 0; ra < 2; ++ra)
    for (int rb = 0; rb < 2; ++rb) {
      auto objective = [&](const Eigen::VectorXd& t) {
        const Eigen::MatrixXd QA =
            detail::givens_product(p, t.head(nangles), ra == 1);
        const Eigen::MatrixXd QB =
            detail::givens_product(p, t.tail(nangles), rb == 1);
        return detail::max_row_gap(QA * B1, QB * B2);
      };
      if (nangles == 0) {
        best = std::min(best, objective(Eigen::VectorXd()));
        continue;
      }
      for (int s = 0; s < restarts; ++s) {
        Eigen::VectorXd x0(2 * nangles);
        for (int i = 0; i < 2 * nangles; ++i) x0[i] = s == 0 ? 0.0 : uni(rng);
        best = std::min(best, detail::nelder_mead(objective, x0, steps));
      }
    }
  return best;
}

inline double grassmann_delta_oracle(const NormalFrame& F1, const NormalFrame& F2,
                                     int restarts = 8, int steps = 400) {
  return grassmann_delta_oracle(F1.basis, F2.basis, restarts, steps);
}

}  // namespace tapprox
