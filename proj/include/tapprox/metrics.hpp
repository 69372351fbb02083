// Distance functionals between sphere slices, log-log decay fitting, and the
// Lojasiewicz-type exponent estimators feeding the truncation-order bound.
#pragma once

#include "tapprox/geometry.hpp"
#include "tapprox/sampler.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace tapprox {

// ---------------------------------------------------------------------------
// Point-set distances. Note the argument order of the one-sided distance:
// delta(A, B) = sup_{x in B} d(x, A), the supremum ranging over the SECOND
// argument.
// ---------------------------------------------------------------------------

inline double point_set_distance(const Eigen::VectorXd& x,
                                 const std::vector<Eigen::VectorXd>& A) {
  if (A.empty()) throw PreconditionError("distance to an empty set");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& y : A) best = std::min(best, (x - y).norm());
  return best;
}

inline double delta_one_sided(const std::vector<Eigen::VectorXd>& A,
                              const std::vector<Eigen::VectorXd>& B) {
  if (A.empty() || B.empty()) throw PreconditionError("one-sided delta of an empty set");
  double worst = 0.0;
  for (const auto& x : B) worst = std::max(worst, point_set_distance(x, A));
  return worst;
}

inline double hausdorff(const std::vector<Eigen::VectorXd>& A,
                        const std::vector<Eigen::VectorXd>& B) {
  return std::max(delta_one_sided(A, B), delta_one_sided(B, A));
}

inline std::vector<Eigen::VectorXd> slice_points(const SphereSlice& slice) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(slice.points.size());
  for (const auto& s : slice.points) out.push_back(s.x);
  return out;
}

// d(x, V(g) ∩ S_r): cloud nearest neighbor refined by a constrained
// closest-point solve on the slice.
inline double distance_to_slice(const AnalyticMap& g, const SphereSlice& slice,
                                const Eigen::VectorXd& x, const SamplerOptions& opt = {}) {
  if (slice.empty()) throw PreconditionError("distance to an empty slice");
  double best = std::numeric_limits<double>::infinity();
  const TangentSample* nearest = nullptr;
  for (const auto& s : slice.points) {
    const double d = (s.x - x).norm();
    if (d < best) {
      best = d;
      nearest = &s;
    }
  }
  if (best == 0.0) return 0.0;
  if (auto refined = closest_point_on_slice(g, slice.r, x, nearest->x, opt))
    best = std::min(best, (x - *refined).norm());
  return best;
}

// ---------------------------------------------------------------------------
// Decay-exponent fitting
// ---------------------------------------------------------------------------

struct ExponentFit {
  std::vector<std::pair<double, double>> pairs;  // (r, d) as given
  double slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;
  bool exact_zero = false;
  int used = 0;

  // Slope used in verdict comparisons: exact containment counts as +infinity.
  double effective_slope() const {
    return exact_zero ? std::numeric_limits<double>::infinity() : slope;
  }
};

inline ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& pairs,
                                double zero_floor = 1e-12) {
  ExponentFit fit;
  fit.pairs = pairs;
  std::vector<std::pair<double, double>> usable;
  for (const auto& [r, d] : pairs) {
    if (r <= 0.0 || r >= 1.0)
      throw PreconditionError("fit_exponent needs radii in (0, 1)");
    if (d > zero_floor) usable.emplace_back(std::log(r), std::log(d));
  }
  if (usable.empty()) {
    fit.exact_zero = true;
    return fit;
  }
  if (usable.size() < 3)
    throw PreconditionError("fit_exponent needs at least 3 pairs above the zero floor");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [lx, ly] : usable) {
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double m = static_cast<double>(usable.size());
  const double denom = m * sxx - sx * sx;
  if (denom == 0.0) throw PreconditionError("fit_exponent needs distinct radii");
  fit.slope = (m * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / m;
  fit.used = static_cast<int>(usable.size());
  for (const auto& [lx, ly] : usable)
    fit.max_residual = std::max(fit.max_residual, std::abs(ly - (fit.intercept + fit.slope * lx)));
  return fit;
}

// ---------------------------------------------------------------------------
// Exponent estimators. All estimates come from finite samples and carry
// multiplicative safety margins; the inequalities behind them are monotone in
// the estimated exponents, so rounding up (and clamping gamma down) is safe.
// Log ratios are formed only for quantities strictly inside (0, 1).
// ---------------------------------------------------------------------------

struct EstimatorOptions {
  double margin = 0.05;
  double gamma_margin = 0.02;
  double mu_margin = 0.1;
  double zero_floor = 1e-300;
  std::uint64_t seed = 0x1005;
};

namespace detail {

inline bool log_ratio_ok(double v) { return v > 1e-300 && v < 1.0; }

}  // namespace detail

// alpha: |f(x)| > d(x, V)^alpha off V. Probes leave V from slice points along
// normal directions at scales |x|^q, q in {1.2, 1.5, 2}.
inline double estimate_alpha(const AnalyticMap& f, const SphereSliceFamily& fam,
                             int probes = 200, const EstimatorOptions& opt = {}) {
  static const double kScales[] = {1.2, 1.5, 2.0};
  std::mt19937_64 rng(opt.seed ^ 0xa1f0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<const TangentSample*> regular;
  for (const auto& slice : fam.slices)
    for (const auto& s : slice.points)
      if (s.regular()) regular.push_back(&s);
  if (regular.empty()) throw PreconditionError("no regular samples available for alpha probes");

  std::vector<Eigen::VectorXd> cloud;
  for (const auto& slice : fam.slices)
    for (const auto& s : slice.points) cloud.push_back(s.x);

  const std::size_t stride = std::max<std::size_t>(1, regular.size() * 3 * 2 / std::max(1, probes));
  double sup = 0.0;
  bool any = false;
  std::size_t taken = 0;
  for (std::size_t i = 0; i < regular.size(); i += stride) {
    const TangentSample& s = *regular[i];
    const int p = s.frame->codim();
    Eigen::VectorXd mix(p);
    for (int k = 0; k < p; ++k) mix[k] = gauss(rng);
    if (mix.norm() == 0.0) mix[0] = 1.0;
    mix.normalize();
    const Eigen::VectorXd nu = s.frame->basis.transpose() * mix;
    for (double q : kScales) {
      const double t = std::pow(s.radius, q);
      for (double sign : {1.0, -1.0}) {
        const Eigen::VectorXd probe = s.x + sign * t * nu;
        double value;
        try {
          value = f.evaluate(probe).norm();
        } catch (const DomainError&) {
          continue;
        }
        double dist = point_set_distance(probe, cloud);
        if (auto proj = project_to_variety(f, probe))
          dist = std::min(dist, (probe - *proj).norm());
        if (!detail::log_ratio_ok(value) || !detail::log_ratio_ok(dist)) continue;
        sup = std::max(sup, std::log(value) / std::log(dist));
        any = true;
        ++taken;
      }
    }
  }
  if (!any) throw PreconditionError("no valid alpha probes");
  (void)taken;
  return (1.0 + opt.margin) * sup;
}

// gamma: |grad f_i(x) - grad f_i(y)| < |x - y|^gamma for close pairs, clamped
// to 1 per the Taylor-side requirement. Pairs are nearest neighbors within a
// slice and between consecutive slices.
inline double estimate_gamma(const AnalyticMap& f, const SphereSliceFamily& fam,
                             int max_pairs = 400, const EstimatorOptions& opt = {}) {
  const double clamp = 1.0 - opt.gamma_margin;
  std::vector<std::pair<const TangentSample*, const TangentSample*>> pairs;

  for (const auto& slice : fam.slices) {
    for (std::size_t i = 0; i < slice.points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      const TangentSample* mate = nullptr;
      for (std::size_t j = 0; j < slice.points.size(); ++j) {
        if (i == j) continue;
        const double d = (slice.points[i].x - slice.points[j].x).norm();
        if (d < best) {
          best = d;
          mate = &slice.points[j];
        }
      }
      if (mate) pairs.emplace_back(&slice.points[i], mate);
    }
  }
  for (std::size_t si = 0; si + 1 < fam.slices.size(); ++si) {
    const auto& a = fam.slices[si];
    const auto& b = fam.slices[si + 1];
    for (const auto& s : a.points) {
      double best = std::numeric_limits<double>::infinity();
      const TangentSample* mate = nullptr;
      for (const auto& t : b.points) {
        const double d = (s.x - t.x).norm();
        if (d < best) {
          best = d;
          mate = &t;
        }
      }
      if (mate) pairs.emplace_back(&s, mate);
    }
  }

  const std::size_t stride = std::max<std::size_t>(1, pairs.size() / std::max(1, max_pairs));
  double inf_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pairs.size(); i += stride) {
    const auto& [sa, sb] = pairs[i];
    const double dxy = (sa->x - sb->x).norm();
    if (!detail::log_ratio_ok(dxy)) continue;
    for (int comp = 0; comp < f.codomain(); ++comp) {
      const double dgrad = (f.gradient(comp, sa->x) - f.gradient(comp, sb->x)).norm();
      if (dgrad == 0.0) continue;  // constant-gradient pairs are skipped
      if (!detail::log_ratio_ok(dgrad)) continue;
      inf_ratio = std::min(inf_ratio, std::log(dgrad) / std::log(dxy));
    }
  }
  if (!std::isfinite(inf_ratio)) return clamp;
  return std::min(clamp, inf_ratio);
}

struct BetaSigma {
  double beta = 0.0;
  double sigma = 1.0;
};

// beta, sigma: phi(y) > |x|^beta for x on V near O and y in B(x, |x|^sigma),
// with phi ranging over Lambda f and each |grad f_i|. sigma enforces the
// constraint sigma > max(1, (beta + s) / gamma).
inline BetaSigma estimate_beta_sigma(const AnalyticMap& f, const SphereSliceFamily& fam,
                                     double s, double gamma_hat,
                                     const EstimatorOptions& opt = {}) {
  if (fam.any_empty())
    throw PreconditionError("beta/sigma estimation requires non-empty slices");

  auto phi_values = [&](const Eigen::VectorXd& x) {
    std::vector<double> vals;
    vals.push_back(lambda(f, x));
    for (int i = 0; i < f.codomain(); ++i) vals.push_back(f.gradient(i, x).norm());
    return vals;
  };

  double sup = 0.0;
  for (const auto& slice : fam.slices)
    for (const auto& sample : slice.points) {
      if (!detail::log_ratio_ok(sample.radius)) continue;
      for (double v : phi_values(sample.x)) {
        if (!detail::log_ratio_ok(v)) continue;
        sup = std::max(sup, std::log(v) / std::log(sample.radius));
      }
    }

  BetaSigma out;
  out.beta = std::max((1.0 + opt.margin) * sup, opt.margin);
  auto sigma_from = [&](double beta) {
    return (1.0 + opt.margin) * std::max(1.0, (beta + s) / gamma_hat);
  };
  out.sigma = sigma_from(out.beta);

  // Ball-robustness: re-evaluate phi at perturbed points y in B(x, |x|^sigma)
  // and enlarge beta if the bound fails there.
  std::mt19937_64 rng(opt.seed ^ 0xbe7a);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int round = 0; round < 3; ++round) {
    bool violated = false;
    for (const auto& slice : fam.slices) {
      const std::size_t stride = std::max<std::size_t>(1, slice.points.size() / 25);
      for (std::size_t i = 0; i < slice.points.size(); i += stride) {
        const auto& sample = slice.points[i];
        if (!detail::log_ratio_ok(sample.radius)) continue;
        Eigen::VectorXd dir(f.arity());
        for (int k = 0; k < f.arity(); ++k) dir[k] = gauss(rng);
        if (dir.norm() == 0.0) continue;
        dir.normalize();
        const double rad = std::pow(sample.radius, out.sigma);
        const Eigen::VectorXd y = sample.x + 0.9 * rad * dir;
        const double bound = std::pow(sample.radius, out.beta);
        for (double v : phi_values(y)) {
          if (v > bound) continue;
          if (!detail::log_ratio_ok(v)) continue;
          const double needed = std::log(v) / std::log(sample.radius);
          if (needed > out.beta / (1.0 + opt.margin)) {
            out.beta = std::max(out.beta, (1.0 + opt.margin) * needed);
            violated = true;
          }
        }
      }
    }
    if (!violated) break;
    out.sigma = sigma_from(out.beta);
  }
  return out;
}

// Regular-separation exponent of V and the complement of the ball union:
// points with d(x, V) < |x|^mu lie inside U as soon as mu > sigma, so the
// heuristic inflates sigma.
inline double estimate_mu(double sigma_hat, const EstimatorOptions& opt = {}) {
  if (sigma_hat <= 1.0) throw PreconditionError("mu estimation needs sigma > 1");
  return sigma_hat * (1.0 + opt.mu_margin);
}

// k0 = floor(max{alpha*sigma, beta+sigma+1, alpha*mu}) + 1
inline int k0_bound(double alpha, double beta, double sigma, double mu) {
  for (double v : {alpha, beta, sigma, mu})
    if (!std::isfinite(v)) throw PreconditionError("k0_bound needs finite exponents");
  if (alpha <= 0.0 || beta < 0.0 || sigma <= 1.0 || mu <= 0.0)
    throw PreconditionError("k0_bound needs positive exponents and sigma > 1");
  const double m = std::max({alpha * sigma, beta + sigma + 1.0, alpha * mu});
  return static_cast<int>(std::floor(m)) + 1;
}

// ---------------------------------------------------------------------------
// ExponentProfile: the constants of the truncation argument, as estimated.
// ---------------------------------------------------------------------------

struct ExponentProfile {
  double s = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double sigma = 0.0;
  double mu = 0.0;
  double eta = 0.0;
  double tau = 0.0;
  int k0 = 0;
  double validity_radius = 0.0;
  EstimatorOptions options;
};

inline ExponentProfile estimate_profile(const AnalyticMap& f, const SphereSliceFamily& fam,
                                        double s, const EstimatorOptions& opt = {}) {
  ExponentProfile prof;
  prof.s = s;
  prof.options = opt;
  prof.gamma = estimate_gamma(f, fam, 400, opt);
  const BetaSigma bs = estimate_beta_sigma(f, fam, s, prof.gamma, opt);
  prof.beta = bs.beta;
  prof.sigma = bs.sigma;
  prof.alpha = estimate_alpha(f, fam, 200, opt);
  prof.mu = estimate_mu(prof.sigma, opt);
  // Midpoint of the admissible interval (beta + s, gamma * sigma).
  prof.eta = 0.5 * (prof.beta + s + prof.gamma * prof.sigma);
  prof.tau = prof.eta - prof.beta;
  prof.k0 = k0_bound(prof.alpha, prof.beta, prof.sigma, prof.mu);
  if (!fam.slices.empty()) prof.validity_radius = fam.slices.front().r;
  return prof;
}

inline nlohmann::ordered_json profile_to_json(const ExponentProfile& p) {
  nlohmann::ordered_json j;
  j["s"] = p.s;
  j["alpha"] = p.alpha;
  j["beta"] = p.beta;
  j["gamma"] = p.gamma;
  j["sigma"] = p.sigma;
  j["mu"] = p.mu;
  j["eta"] = p.eta;
  j["tau"] = p.tau;
  j["k0"] = p.k0;
  j["validity_radius"] = p.validity_radius;
  j["margins"] = {{"margin", p.options.margin},
                  {"gamma_margin", p.options.gamma_margin},
                  {"mu_margin", p.options.mu_margin}};
  return j;
}

}  // namespace tapprox
