// Horn and tangential-horn membership: the operational containment tests
// behind the order-s comparison of zero sets.
#pragma once

#include "tapprox/geometry.hpp"
#include "tapprox/sampler.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace tapprox {

struct HornWitness {
  bool contained = false;
  double distance = std::numeric_limits<double>::infinity();
  double delta = std::numeric_limits<double>::infinity();  // tangential test only
  double threshold = 0.0;                                  // |x|^exponent
  Eigen::VectorXd witness;
};

namespace detail {

inline std::vector<std::pair<double, const TangentSample*>> nearest_samples(
    const SphereSliceFamily& fam, const Eigen::VectorXd& x, std::size_t count) {
  std::vector<std::pair<double, const TangentSample*>> all;
  for (const auto& slice : fam.slices)
    for (const auto& s : slice.points) all.emplace_back((s.x - x).norm(), &s);
  if (all.empty()) throw PreconditionError("empty slice family");
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  if (all.size() > count) all.resize(count);
  return all;
}

}  // namespace detail

// x is in the horn neighborhood H(A, sigma) iff d(x, A) < |x|^sigma. The
// distance to A = V(f) is estimated from the cloud and refined by projection
// onto the variety.
inline HornWitness horn_contains(const SphereSliceFamily& fam, const Eigen::VectorXd& x,
                                 double sigma) {
  const double norm_x = x.norm();
  if (norm_x <= 0.0) throw PreconditionError("horn membership needs |x| > 0");
  auto near = detail::nearest_samples(fam, x, 1);

  HornWitness w;
  w.distance = near.front().first;
  w.witness = near.front().second->x;
  if (auto proj = project_to_variety(fam.map, x)) {
    const double d = (x - *proj).norm();
    if (d < w.distance) {
      w.distance = d;
      w.witness = *proj;
    }
  }
  w.threshold = std::pow(norm_x, sigma);
  w.contained = w.distance < w.threshold;
  return w;
}

// Tangential horn: some y in A with |x - y| < |x|^tau and
// Delta(T_y A, T) < |x|^tau. Searches the nearest m cloud candidates plus a
// projection-refined candidate.
inline HornWitness tangential_horn_contains(const SphereSliceFamily& fam,
                                            const TangentSample& sample, double tau,
                                            int candidates = 8) {
  if (!sample.frame) throw PreconditionError("tangential test needs a regular sample");
  const double norm_x = sample.x.norm();
  if (norm_x <= 0.0) throw PreconditionError("horn membership needs |x| > 0");

  HornWitness w;
  w.threshold = std::pow(norm_x, tau);

  auto consider = [&](const Eigen::VectorXd& y, const std::optional<NormalFrame>& frame) {
    if (!frame) return;
    const double dist = (sample.x - y).norm();
    const double delta = grassmann_delta(*frame, *sample.frame);
    const double score = std::max(dist, delta);
    if (score < std::max(w.distance, w.delta)) {
      w.distance = dist;
      w.delta = delta;
      w.witness = y;
    }
    if (dist < w.threshold && delta < w.threshold) w.contained = true;
  };

  for (const auto& [dist, s] : detail::nearest_samples(fam, sample.x, candidates))
    consider(s->x, s->frame);

  if (auto proj = project_to_variety(fam.map, sample.x)) {
    try {
      consider(*proj, normal_frame(fam.map, *proj));
    } catch (const RankDeficientError&) {
    }
  }
  return w;
}

}  // namespace tapprox
