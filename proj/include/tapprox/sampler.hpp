// Sampling of V(f) on shrinking spheres: quasi-uniform seeding, Gauss-Newton
// solves of the augmented system (f(x)=0, |x|=r), tangent-frame attachment,
// isolated-singularity validation and radius continuation.
#pragma once

#include "tapprox/expr.hpp"
#include "tapprox/geometry.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

namespace tapprox {

struct SamplerOptions {
  int max_newton_iter = 60;
  double residual_tol = 1e-10;      // relative to max(1, |J|)
  double sphere_tol = 1e-12;        // relative to r
  double dedupe_factor = 1e-3;      // dedupe radius = factor * r
  double lambda_floor = 1e-8;       // below this a sample counts as singular
};

struct SphereSlice {
  double r = 0.0;
  std::vector<TangentSample> points;
  int seeds_attempted = 0;
  int seeds_converged = 0;

  bool empty() const { return points.empty(); }
  double min_lambda() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : points) m = std::min(m, s.lambda_value);
    return m;
  }
};

struct RadiusSchedule {
  double R = 0.1;
  double rho = 0.5;
  int count = 6;

  std::vector<double> radii() const {
    if (R <= 0.0 || rho <= 0.0 || rho >= 1.0 || count < 1)
      throw PreconditionError("radius schedule must have R > 0, 0 < rho < 1, count >= 1");
    std::vector<double> out(count);
    double r = R;
    for (int i = 0; i < count; ++i, r *= rho) out[i] = r;
    return out;
  }
};

struct SphereSliceFamily {
  AnalyticMap map;
  std::uint64_t map_digest = 0;
  std::uint64_t seed = 0;
  int budget = 0;
  std::vector<SphereSlice> slices;  // strictly decreasing radii

  bool any_empty() const {
    for (const auto& s : slices)
      if (s.empty()) return true;
    return slices.empty();
  }
};

// ---------------------------------------------------------------------------
// Quasi-uniform directions: Halton points pushed through the inverse normal
// CDF and normalized, with a seed-dependent Cranley-Patterson rotation.
// ---------------------------------------------------------------------------

namespace detail {

inline double halton(std::uint64_t index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

// Acklam's rational approximation of the standard normal quantile.
inline double inverse_normal_cdf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > phigh) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

inline const int kHaltonPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

// Low-discrepancy directions on S^(n-1), deterministic in the seed. For n = 3
// a golden-angle spiral (uniform azimuth gaps by the three-gap theorem, which
// the slice coverage bounds rely on); in general Halton points through the
// normal quantile. The seed enters as a Cranley-Patterson shift.
inline std::vector<Eigen::VectorXd> sphere_directions(int n, int count, std::uint64_t seed) {
  if (n > 12) throw DimensionError("direction sequence supports arity <= 12");
  std::mt19937_64 rng(seed * 6364136223846793005ull + 1442695040888963407ull);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::vector<Eigen::VectorXd> dirs;
  dirs.reserve(count);
  if (n == 3) {
    const double golden_angle = M_PI * (3.0 - std::sqrt(5.0));
    const double az_shift = 2.0 * M_PI * uni(rng);
    const double z_shift = uni(rng);
    for (int i = 0; i < count; ++i) {
      double zfrac = (i + 0.5) / count + z_shift;
      zfrac -= std::floor(zfrac);
      const double z = 2.0 * zfrac - 1.0;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double az = golden_angle * i + az_shift;
      Eigen::VectorXd d(3);
      d << rho * std::cos(az), rho * std::sin(az), z;
      dirs.push_back(d);
    }
    return dirs;
  }

  Eigen::VectorXd shift(n);
  for (int i = 0; i < n; ++i) shift[i] = uni(rng);
  std::uint64_t index = 1;
  while (static_cast<int>(dirs.size()) < count) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) {
      double u = halton(index, kHaltonPrimes[i]) + shift[i];
      u -= std::floor(u);
      u = std::min(1.0 - 1e-12, std::max(1e-12, u));
      z[i] = inverse_normal_cdf(u);
    }
    ++index;
    const double norm = z.norm();
    if (norm < 1e-8) continue;
    dirs.push_back(z / norm);
  }
  return dirs;
}

struct NewtonResult {
  Eigen::VectorXd x;
  double f_residual = std::numeric_limits<double>::infinity();
  double sphere_gap = std::numeric_limits<double>::infinity();
  double jac_norm = 0.0;
  bool accepted = false;
};

// Gauss-Newton on (f(x), (|x|^2 - r^2)/(2r)) with a truncated-SVD pseudo-
// inverse step. Iterates past the acceptance tolerance toward the noise
// floor so that quadratically degenerate zeros still resolve to machine
// precision.
inline NewtonResult newton_slice(const AnalyticMap& f, double r, Eigen::VectorXd x,
                                 const SamplerOptions& opt) {
  const int p = f.codomain();
  const int n = f.arity();
  NewtonResult best;
  double best_res = std::numeric_limits<double>::infinity();
  int no_improve = 0;

  for (int it = 0; it < opt.max_newton_iter; ++it) {
    Eigen::VectorXd fx;
    Eigen::MatrixXd Jf;
    try {
      fx = f.evaluate(x);
      Jf = f.jacobian(x);
    } catch (const DomainError&) {
      break;
    }
    const double jac_norm = Jf.norm();
    const double sphere = (x.squaredNorm() - r * r) / (2.0 * r);
    const double scale = std::max(1.0, jac_norm);
    const double res = std::max(fx.norm() / scale, std::abs(sphere) / r);

    if (res < best_res) {
      best.x = x;
      best.f_residual = fx.norm();
      best.sphere_gap = std::abs(x.norm() - r);
      best.jac_norm = jac_norm;
      if (res < 0.7 * best_res) no_improve = 0;
      best_res = res;
    } else {
      ++no_improve;
    }
    if (res < 1e-17 || no_improve >= 4) break;

    Eigen::MatrixXd J(p + 1, n);
    J.topRows(p) = Jf;
    J.row(p) = x.transpose() / r;
    Eigen::VectorXd G(p + 1);
    G.head(p) = fx;
    G[p] = sphere;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-14);
    Eigen::VectorXd step = svd.solve(-G);
    const double max_step = 0.45 * r;
    if (step.norm() > max_step) step *= max_step / step.norm();
    x += step;
  }

  if (best.x.size() == n) {
    const double scale = std::max(1.0, best.jac_norm);
    best.accepted = best.f_residual <= opt.residual_tol * scale &&
                    best.sphere_gap <= opt.sphere_tol * r;
  }
  return best;
}

}  // namespace detail

// Gauss-Newton projection x <- x - J^+ f(x). Returns a nearby zero on
// success; |x0 - y| is then an upper bound for d(x0, V(f)).
inline std::optional<Eigen::VectorXd> project_to_variety(const AnalyticMap& f,
                                                         const Eigen::VectorXd& x0,
                                                         int max_iter = 50) {
  Eigen::VectorXd x = x0;
  double best_res = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x0;
  double best_scale = 1.0;
  int no_improve = 0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd fx;
    Eigen::MatrixXd J;
    try {
      fx = f.evaluate(x);
      J = f.jacobian(x);
    } catch (const DomainError&) {
      break;
    }
    const double scale = std::max(1.0, J.norm());
    const double res = fx.norm() / scale;
    if (res < best_res) {
      best_x = x;
      best_scale = scale;
      if (res < 0.7 * best_res) no_improve = 0;
      best_res = res;
    } else {
      ++no_improve;
    }
    if (res < 1e-17 || no_improve >= 4) break;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-14);
    if (svd.singularValues().size() == 0 || svd.singularValues()[0] == 0.0) break;
    Eigen::VectorXd step = svd.solve(-fx);
    if (!step.allFinite() || step.norm() == 0.0) break;
    x += step;
  }
  if (best_res <= 1e-10) return best_x;
  (void)best_scale;
  return std::nullopt;
}

namespace detail {

// Deterministic sequential dedupe in hit order, then frame/lambda attachment.
inline void finish_slice(const AnalyticMap& f, const std::vector<Eigen::VectorXd>& hits,
                         SphereSlice& slice, const SamplerOptions& opt) {
  const double dedupe = opt.dedupe_factor * slice.r;
  std::vector<Eigen::VectorXd> kept;
  for (const auto& x : hits) {
    bool dup = false;
    for (const auto& y : kept)
      if ((x - y).norm() < dedupe) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(x);
  }

  for (const auto& x : kept) {
    TangentSample s;
    s.x = x;
    s.radius = x.norm();
    const Eigen::MatrixXd J = f.jacobian(x);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (full_rank(sv)) {
      NormalFrame fr;
      fr.point = x;
      fr.basis = svd.matrixV().leftCols(J.rows()).transpose();
      s.frame = std::move(fr);
      s.lambda_value = sv[sv.size() - 1];
    } else {
      s.lambda_value = 0.0;
    }
    slice.points.push_back(std::move(s));
  }
}

}  // namespace detail

inline SphereSlice sample_slice(const AnalyticMap& f, double r, int budget,
                                std::uint64_t rng_seed, const SamplerOptions& opt = {}) {
  if (r <= 0.0) throw PreconditionError("slice radius must be positive");
  if (budget < 1) throw PreconditionError("budget must be at least 1");
  if (!f.vanishes_at_origin())
    throw PreconditionError("map does not vanish at the origin");

  SphereSlice slice;
  slice.r = r;
  slice.seeds_attempted = budget;

  std::vector<Eigen::VectorXd> hits;
  for (const auto& dir : detail::sphere_directions(f.arity(), budget, rng_seed)) {
    auto res = detail::newton_slice(f, r, r * dir, opt);
    if (!res.accepted) continue;
    ++slice.seeds_converged;
    hits.push_back(res.x);
  }
  detail::finish_slice(f, hits, slice, opt);
  return slice;
}

// Path continuation over a decreasing radius schedule: warm-start each radius
// from the previous slice rescaled, topped up with fresh quasi-uniform seeds
// to maintain the budget.
inline SphereSliceFamily continue_family(const AnalyticMap& f, const RadiusSchedule& schedule,
                                         int budget, std::uint64_t rng_seed,
                                         const SamplerOptions& opt = {}) {
  const std::vector<double> radii = schedule.radii();
  SphereSliceFamily fam;
  fam.map = f;
  fam.map_digest = f.digest();
  fam.seed = rng_seed;
  fam.budget = budget;

  for (std::size_t j = 0; j < radii.size(); ++j) {
    const double r = radii[j];
    if (j == 0) {
      fam.slices.push_back(sample_slice(f, r, budget, rng_seed, opt));
      continue;
    }
    const SphereSlice& prev = fam.slices.back();
    SphereSlice slice;
    slice.r = r;

    std::vector<Eigen::VectorXd> hits;
    int warm = 0;
    const double scale_to = r / prev.r;
    for (const auto& s : prev.points) {
      if (warm >= budget) break;
      ++warm;
      auto res = detail::newton_slice(f, r, scale_to * s.x, opt);
      if (res.accepted) hits.push_back(res.x);
    }
    const int fresh = budget - warm;
    slice.seeds_attempted = budget;
    if (fresh > 0) {
      const std::uint64_t fresh_seed = rng_seed ^ (0x9e3779b97f4a7c15ull * (j + 1));
      for (const auto& dir : detail::sphere_directions(f.arity(), fresh, fresh_seed)) {
        auto res = detail::newton_slice(f, r, r * dir, opt);
        if (res.accepted) hits.push_back(res.x);
      }
    }
    slice.seeds_converged = static_cast<int>(hits.size());
    detail::finish_slice(f, hits, slice, opt);
    fam.slices.push_back(std::move(slice));
  }
  return fam;
}

// ---------------------------------------------------------------------------
// Isolated-singularity validation
// ---------------------------------------------------------------------------

enum class ISVerdict {
  IsolatedSingularity,       // "IS of dimension d"
  OriginIsolated,            // every slice empty
  SingularLocusTouchesSlice, // some sampled lambda below the floor
  Inconclusive,
};

inline std::string to_string(ISVerdict v) {
  switch (v) {
    case ISVerdict::IsolatedSingularity: return "IS";
    case ISVerdict::OriginIsolated: return "O isolated";
    case ISVerdict::SingularLocusTouchesSlice: return "singular locus touches slice";
    case ISVerdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct ISReportRow {
  double r = 0.0;
  int cardinality = 0;
  double min_lambda = std::numeric_limits<double>::quiet_NaN();
  int dimension = -1;  // n - majority Jacobian rank
};

struct ISReport {
  ISVerdict verdict = ISVerdict::Inconclusive;
  int dimension = -1;
  std::vector<ISReportRow> rows;
  std::string detail;

  bool is_IS() const { return verdict == ISVerdict::IsolatedSingularity; }
};

inline ISReport validate_is(const SphereSliceFamily& fam, const SamplerOptions& opt = {}) {
  const int n = fam.map.arity();
  const int p = fam.map.codomain();
  ISReport rep;

  bool all_empty = true, any_empty = false, lambda_violation = false;
  bool dims_ok = true;
  for (const auto& slice : fam.slices) {
    ISReportRow row;
    row.r = slice.r;
    row.cardinality = static_cast<int>(slice.points.size());
    if (slice.empty()) {
      any_empty = true;
      rep.rows.push_back(row);
      continue;
    }
    all_empty = false;
    row.min_lambda = slice.min_lambda();
    if (row.min_lambda <= opt.lambda_floor) lambda_violation = true;

    // Majority vote over per-point Jacobian ranks.
    std::vector<int> counts(n + 1, 0);
    for (const auto& s : slice.points) {
      const int rank = s.regular() ? p : jacobian_rank(fam.map, s.x);
      ++counts[std::min(rank, n)];
    }
    int mode = 0;
    for (int rk = 0; rk <= n; ++rk)
      if (counts[rk] > counts[mode]) mode = rk;
    row.dimension = n - mode;
    if (row.dimension != n - p) dims_ok = false;
    rep.rows.push_back(row);
  }

  if (fam.slices.empty()) {
    rep.detail = "no slices sampled";
    return rep;
  }
  if (all_empty) {
    rep.verdict = ISVerdict::OriginIsolated;
    return rep;
  }
  if (lambda_violation) {
    rep.verdict = ISVerdict::SingularLocusTouchesSlice;
    return rep;
  }
  if (any_empty) {
    rep.verdict = ISVerdict::Inconclusive;
    rep.detail = "empty slice in a family with non-empty slices";
    return rep;
  }
  if (!dims_ok) {
    rep.verdict = ISVerdict::Inconclusive;
    rep.detail = "sampled dimension differs from n - p";
    return rep;
  }
  rep.verdict = ISVerdict::IsolatedSingularity;
  rep.dimension = n - p;
  return rep;
}

inline ISReport validate_is(const AnalyticMap& f, const RadiusSchedule& schedule, int budget,
                            std::uint64_t rng_seed, const SamplerOptions& opt = {}) {
  return validate_is(continue_family(f, schedule, budget, rng_seed, opt), opt);
}

// ---------------------------------------------------------------------------
// Closest point on V(f) ∩ S_r: tangential descent with slice reprojection,
// warm-started from a cloud point. Refines cloud nearest-neighbor distances
// to surface accuracy.
// ---------------------------------------------------------------------------

inline std::optional<Eigen::VectorXd> closest_point_on_slice(const AnalyticMap& f, double r,
                                                             const Eigen::VectorXd& target,
                                                             const Eigen::VectorXd& start,
                                                             const SamplerOptions& opt = {}) {
  const int p = f.codomain();
  const int n = f.arity();
  auto reproject = [&](const Eigen::VectorXd& z) -> std::optional<Eigen::VectorXd> {
    auto res = detail::newton_slice(f, r, z, opt);
    if (!res.accepted) return std::nullopt;
    return res.x;
  };

  auto maybe = reproject(start);
  if (!maybe) return std::nullopt;
  Eigen::VectorXd y = *maybe;
  double best_dist = (target - y).norm();

  for (int it = 0; it < 30; ++it) {
    Eigen::MatrixXd A(p + 1, n);
    A.topRows(p) = f.jacobian(y);
    A.row(p) = y.transpose() / r;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] == 0.0) break;
    Eigen::VectorXd gap = target - y;
    // Tangential component: remove the row-space part of the slice Jacobian.
    Eigen::VectorXd d = gap;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
      if (sv[k] <= 1e-14 * sv[0]) continue;
      const Eigen::VectorXd v = svd.matrixV().col(k);
      d -= v * v.dot(gap);
    }
    if (d.norm() <= 1e-14 * std::max(r, best_dist)) break;

    bool improved = false;
    double scale = 1.0;
    for (int tries = 0; tries < 4; ++tries, scale *= 0.5) {
      auto next = reproject(y + scale * d);
      if (!next) continue;
      const double dist = (target - *next).norm();
      if (dist < best_dist) {
        y = *next;
        best_dist = dist;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Serialization: JSON-lines (one record per sample) and flat CSV.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json sample_to_json(const TangentSample& s) {
  nlohmann::ordered_json j;
  j["r"] = s.radius;
  j["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
  if (s.frame) {
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < s.frame->basis.rows(); ++i) {
      auto row = nlohmann::ordered_json::array();
      for (Eigen::Index k = 0; k < s.frame->basis.cols(); ++k)
        row.push_back(s.frame->basis(i, k));
      rows.push_back(std::move(row));
    }
    j["frame"] = std::move(rows);
  } else {
    j["frame"] = nullptr;
  }
  j["lambda"] = s.lambda_value;
  return j;
}

inline void write_family_jsonl(const SphereSliceFamily& fam, std::ostream& os) {
  for (const auto& slice : fam.slices)
    for (const auto& s : slice.points) os << sample_to_json(s).dump() << '\n';
}

inline void write_family_csv(const SphereSliceFamily& fam, std::ostream& os) {
  const int n = fam.map.arity();
  const int p = fam.map.codomain();
  os << "r";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  os << ",lambda";
  for (int i = 1; i <= p; ++i)
    for (int k = 1; k <= n; ++k) os << ",nu" << i << "_" << k;
  os << '\n';
  for (const auto& slice : fam.slices)
    for (const auto& s : slice.points) {
      os << detail::format_double(s.radius);
      for (int i = 0; i < n; ++i) os << ',' << detail::format_double(s.x[i]);
      os << ',' << detail::format_double(s.lambda_value);
      for (int i = 0; i < p; ++i)
        for (int k = 0; k < n; ++k)
          os << ',' << (s.frame ? detail::format_double(s.frame->basis(i, k)) : "");
      os << '\n';
    }
}

struct PointCloud {
  std::vector<Eigen::VectorXd> points;
  std::vector<std::optional<NormalFrame>> frames;
};

inline PointCloud read_cloud_jsonl(std::istream& is) {
  PointCloud cloud;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    const auto xs = j.at("x").get<std::vector<double>>();
    Eigen::VectorXd x(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) x[i] = xs[i];
    cloud.points.push_back(x);
    if (j.contains("frame") && !j.at("frame").is_null()) {
      const auto rows = j.at("frame").get<std::vector<std::vector<double>>>();
      NormalFrame fr;
      fr.point = x;
      fr.basis.resize(rows.size(), xs.size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k) fr.basis(i, k) = rows[i][k];
      cloud.frames.push_back(std::move(fr));
    } else {
      cloud.frames.push_back(std::nullopt);
    }
  }
  return cloud;
}

}  // namespace tapprox
