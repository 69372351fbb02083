// End-to-end equivalence pipelines: the order-s comparison of two zero sets,
// its tangential strengthening, the truncation-order search, and the batch
// corpus runner behind the CLI.
#pragma once

#include "tapprox/expr.hpp"
#include "tapprox/horn.hpp"
#include "tapprox/jets.hpp"
#include "tapprox/metrics.hpp"
#include "tapprox/sampler.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace tapprox {

inline constexpr const char* kToolName = "tapprox";
inline constexpr const char* kToolVersion = "0.1.0";

struct VerifyOptions {
  RadiusSchedule schedule;
  int budget = 500;
  std::uint64_t seed = 1;
  int match_candidates = 8;
  double zero_floor = 1e-12;
  SamplerOptions sampler;
  EstimatorOptions estimator;
};

struct RadiusRow {
  double r = 0.0;
  int slice_f = 0;
  int slice_g = 0;
  // One-sided slice distances; forward means f's samples measured against g
  // (the paper's delta(V_g cap S_r, V_f cap S_r)).
  double dist_f_to_g = 0.0;
  double dist_g_to_f = 0.0;
  double max_match_dist = 0.0;
  double max_delta_f_to_g = 0.0;
  double max_delta_g_to_f = 0.0;
};

struct EquivalenceReport {
  std::string f_source;
  std::string g_source;
  int arity = 0;
  double s = 1.0;
  bool tangential = false;
  RadiusSchedule schedule;
  int budget = 0;
  std::uint64_t seed = 0;
  double validity_radius = 0.0;
  double tau = 0.0;
  std::vector<RadiusRow> rows;
  ExponentFit distance_forward;
  ExponentFit distance_backward;
  ExponentFit delta_forward;
  ExponentFit delta_backward;
  bool s_equivalent = false;
  bool tangentially_s_equivalent = false;
  std::optional<ExponentProfile> profile;

  static bool slope_passes(const ExponentFit& fit, double s) {
    return fit.exact_zero || fit.slope > s;
  }
};

namespace detail {

struct DirectionalResult {
  std::vector<double> dist;        // per radius: sup over source samples
  std::vector<double> match_dist;  // per radius: max matched |x-y|
  std::vector<double> match_delta; // per radius: max matched Delta
};

// One sweep of src's samples against dst's slices: refined sup distance plus,
// when requested, the best tangential match (minimizing max(|x-y|, Delta))
// among the m nearest cloud candidates and the refined closest point.
inline DirectionalResult sweep_direction(const SphereSliceFamily& src,
                                         const SphereSliceFamily& dst, bool tangential,
                                         const VerifyOptions& opt) {
  DirectionalResult out;
  for (std::size_t j = 0; j < src.slices.size(); ++j) {
    const SphereSlice& a = src.slices[j];
    const SphereSlice& b = dst.slices[j];
    if (a.empty() || b.empty())
      throw PreconditionError("empty slice at radius " + std::to_string(a.r));

    double worst_dist = 0.0, worst_match = 0.0, worst_delta = 0.0;
    for (const auto& sample : a.points) {
      // Cloud candidates, nearest first.
      std::vector<std::pair<double, const TangentSample*>> near;
      near.reserve(b.points.size());
      for (const auto& t : b.points) near.emplace_back((t.x - sample.x).norm(), &t);
      std::stable_sort(near.begin(), near.end(),
                       [](const auto& l, const auto& r) { return l.first < r.first; });

      double dist = near.front().first;
      std::optional<Eigen::VectorXd> refined;
      if (dist > 0.0) {
        refined = closest_point_on_slice(dst.map, b.r, sample.x, near.front().second->x,
                                         opt.sampler);
        if (refined) dist = std::min(dist, (sample.x - *refined).norm());
      }
      worst_dist = std::max(worst_dist, dist);

      if (tangential && sample.regular()) {
        double best_score = std::numeric_limits<double>::infinity();
        double best_dist = 0.0, best_delta = 0.0;
        auto consider = [&](double d, const std::optional<NormalFrame>& frame) {
          if (!frame) return;
          const double delta = grassmann_delta(*frame, *sample.frame);
          const double score = std::max(d, delta);
          if (score < best_score) {
            best_score = score;
            best_dist = d;
            best_delta = delta;
          }
        };
        const std::size_t m = std::min<std::size_t>(near.size(), opt.match_candidates);
        for (std::size_t c = 0; c < m; ++c)
          consider(near[c].first, near[c].second->frame);
        if (refined) {
          try {
            consider((sample.x - *refined).norm(), normal_frame(dst.map, *refined));
          } catch (const RankDeficientError&) {
          }
        }
        if (std::isfinite(best_score)) {
          worst_match = std::max(worst_match, best_dist);
          worst_delta = std::max(worst_delta, best_delta);
        }
      }
    }
    out.dist.push_back(worst_dist);
    out.match_dist.push_back(worst_match);
    out.match_delta.push_back(worst_delta);
  }
  return out;
}

inline double validity_radius(const SphereSliceFamily& a, const SphereSliceFamily& b,
                              const SamplerOptions& opt) {
  const ISReport ra = validate_is(a, opt), rb = validate_is(b, opt);
  double best = 0.0;
  for (std::size_t j = 0; j < ra.rows.size() && j < rb.rows.size(); ++j) {
    const auto row_ok = [&](const ISReportRow& row, const SphereSliceFamily& fam) {
      return row.cardinality > 0 && row.min_lambda > opt.lambda_floor &&
             row.dimension == fam.map.arity() - fam.map.codomain();
    };
    if (row_ok(ra.rows[j], a) && row_ok(rb.rows[j], b))
      best = std::max(best, ra.rows[j].r);
  }
  return best;
}

inline void require_is_pair(const SphereSliceFamily& fa, const SphereSliceFamily& fb,
                            const SamplerOptions& opt) {
  const ISReport ra = validate_is(fa, opt);
  if (!ra.is_IS())
    throw PreconditionError("map '" + fa.map.unparse() + "' failed IS validation: " +
                            to_string(ra.verdict));
  const ISReport rb = validate_is(fb, opt);
  if (!rb.is_IS())
    throw PreconditionError("map '" + fb.map.unparse() + "' failed IS validation: " +
                            to_string(rb.verdict));
  if (ra.dimension != rb.dimension)
    throw PreconditionError("maps define IS's of different dimensions");
}

}  // namespace detail

// Core comparison over prebuilt families. Computes the distance part always
// and the tangential part on request.
inline EquivalenceReport check_families(const SphereSliceFamily& fam_f,
                                        const SphereSliceFamily& fam_g, double s,
                                        bool tangential, const VerifyOptions& opt) {
  detail::require_is_pair(fam_f, fam_g, opt.sampler);

  EquivalenceReport rep;
  rep.f_source = fam_f.map.unparse();
  rep.g_source = fam_g.map.unparse();
  rep.arity = fam_f.map.arity();
  rep.s = s;
  rep.tangential = tangential;
  rep.schedule = opt.schedule;
  rep.budget = opt.budget;
  rep.seed = opt.seed;
  rep.validity_radius = detail::validity_radius(fam_f, fam_g, opt.sampler);

  const auto fwd = detail::sweep_direction(fam_f, fam_g, tangential, opt);
  const auto bwd = detail::sweep_direction(fam_g, fam_f, tangential, opt);

  std::vector<std::pair<double, double>> dist_fwd, dist_bwd, delta_fwd, delta_bwd;
  for (std::size_t j = 0; j < fam_f.slices.size(); ++j) {
    RadiusRow row;
    row.r = fam_f.slices[j].r;
    row.slice_f = static_cast<int>(fam_f.slices[j].points.size());
    row.slice_g = static_cast<int>(fam_g.slices[j].points.size());
    row.dist_f_to_g = fwd.dist[j];
    row.dist_g_to_f = bwd.dist[j];
    row.max_match_dist = std::max(fwd.match_dist[j], bwd.match_dist[j]);
    row.max_delta_f_to_g = fwd.match_delta[j];
    row.max_delta_g_to_f = bwd.match_delta[j];
    rep.rows.push_back(row);

    dist_fwd.emplace_back(row.r, row.dist_f_to_g);
    dist_bwd.emplace_back(row.r, row.dist_g_to_f);
    delta_fwd.emplace_back(row.r, row.max_delta_f_to_g);
    delta_bwd.emplace_back(row.r, row.max_delta_g_to_f);
  }

  rep.distance_forward = fit_exponent(dist_fwd, opt.zero_floor);
  rep.distance_backward = fit_exponent(dist_bwd, opt.zero_floor);
  rep.s_equivalent = EquivalenceReport::slope_passes(rep.distance_forward, s) &&
                     EquivalenceReport::slope_passes(rep.distance_backward, s);
  if (tangential) {
    rep.delta_forward = fit_exponent(delta_fwd, opt.zero_floor);
    rep.delta_backward = fit_exponent(delta_bwd, opt.zero_floor);
    rep.tangentially_s_equivalent =
        rep.s_equivalent && EquivalenceReport::slope_passes(rep.delta_forward, s) &&
        EquivalenceReport::slope_passes(rep.delta_backward, s);
  }
  rep.tau = s;
  return rep;
}

inline EquivalenceReport check_s_equivalence(const AnalyticMap& f, const AnalyticMap& g,
                                             double s, const VerifyOptions& opt = {}) {
  const auto fam_f = continue_family(f, opt.schedule, opt.budget, opt.seed, opt.sampler);
  const auto fam_g = continue_family(g, opt.schedule, opt.budget, opt.seed, opt.sampler);
  return check_families(fam_f, fam_g, s, /*tangential=*/false, opt);
}

inline EquivalenceReport check_tangential(const AnalyticMap& f, const AnalyticMap& g, double s,
                                          const VerifyOptions& opt = {}) {
  const auto fam_f = continue_family(f, opt.schedule, opt.budget, opt.seed, opt.sampler);
  const auto fam_g = continue_family(g, opt.schedule, opt.budget, opt.seed, opt.sampler);
  return check_families(fam_f, fam_g, s, /*tangential=*/true, opt);
}

// ---------------------------------------------------------------------------
// approximate: the constructive side of the truncation theorem. Estimates the
// exponent profile and the theoretical order bound k0, then searches k
// upward from k_min for the first truncation whose zero set is an IS
// tangentially s-equivalent to V(f).
// ---------------------------------------------------------------------------

struct ApproximateOptions {
  VerifyOptions verify;
  int k_min = 2;
  int headroom = 2;
};

struct TruncationAttempt {
  int k = 0;
  std::string map_source;
  std::string is_verdict;
  bool passed = false;
  std::optional<EquivalenceReport> report;
};

struct ApproximateResult {
  std::optional<int> k_star;
  int k0 = 0;
  ExponentProfile profile;
  std::vector<TruncationAttempt> attempts;
  std::optional<AnalyticMap> truncation;  // T^{k_star} f
  std::optional<EquivalenceReport> report;
};

inline ApproximateResult approximate(const AnalyticMap& f, double s,
                                     const ApproximateOptions& opt = {}) {
  const VerifyOptions& vo = opt.verify;
  const auto fam_f = continue_family(f, vo.schedule, vo.budget, vo.seed, vo.sampler);
  const ISReport is_f = validate_is(fam_f, vo.sampler);
  if (!is_f.is_IS())
    throw PreconditionError("map '" + f.unparse() + "' failed IS validation: " +
                            to_string(is_f.verdict));

  ApproximateResult result;
  result.profile = estimate_profile(f, fam_f, s, vo.estimator);
  result.k0 = result.profile.k0;

  const int k_max = std::max(result.k0 + opt.headroom, opt.k_min);
  for (int k = opt.k_min; k <= k_max; ++k) {
    TruncationAttempt attempt;
    attempt.k = k;
    const AnalyticMap g = truncate_map(f, k);
    attempt.map_source = g.unparse();

    SphereSliceFamily fam_g;
    bool sampled = false;
    try {
      fam_g = continue_family(g, vo.schedule, vo.budget, vo.seed, vo.sampler);
      sampled = true;
    } catch (const PreconditionError&) {
      attempt.is_verdict = "not sampleable";
    }
    if (sampled) {
      const ISReport is_g = validate_is(fam_g, vo.sampler);
      attempt.is_verdict = to_string(is_g.verdict);
      if (is_g.is_IS() && is_g.dimension == is_f.dimension) {
        EquivalenceReport rep = check_families(fam_f, fam_g, s, /*tangential=*/true, vo);
        rep.profile = result.profile;
        rep.tau = result.profile.tau;
        attempt.passed = rep.tangentially_s_equivalent;
        attempt.report = std::move(rep);
      }
    }
    const bool passed = attempt.passed;
    result.attempts.push_back(std::move(attempt));
    if (passed) {
      result.k_star = k;
      result.truncation = g;
      result.report = result.attempts.back().report;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// JSON / CSV serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json fit_to_json(const ExponentFit& fit) {
  nlohmann::ordered_json j;
  j["exact_zero"] = fit.exact_zero;
  if (fit.exact_zero) {
    j["slope"] = nullptr;
  } else {
    j["slope"] = fit.slope;
    j["intercept"] = fit.intercept;
    j["max_residual"] = fit.max_residual;
    j["points_used"] = fit.used;
  }
  return j;
}

inline nlohmann::ordered_json report_to_json(const EquivalenceReport& rep) {
  nlohmann::ordered_json j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["f"] = rep.f_source;
  j["g"] = rep.g_source;
  j["arity"] = rep.arity;
  j["s"] = rep.s;
  j["tangential"] = rep.tangential;
  j["schedule"] = {{"R", rep.schedule.R}, {"rho", rep.schedule.rho}, {"count", rep.schedule.count}};
  j["budget"] = rep.budget;
  j["seed"] = rep.seed;
  j["validity_radius"] = rep.validity_radius;
  j["tau"] = rep.tau;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : rep.rows) {
    nlohmann::ordered_json r;
    r["r"] = row.r;
    r["slice_f"] = row.slice_f;
    r["slice_g"] = row.slice_g;
    r["dist_f_to_g"] = row.dist_f_to_g;
    r["dist_g_to_f"] = row.dist_g_to_f;
    r["max_match_dist"] = row.max_match_dist;
    r["max_delta_f_to_g"] = row.max_delta_f_to_g;
    r["max_delta_g_to_f"] = row.max_delta_g_to_f;
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  j["slopes"] = {{"distance_forward", fit_to_json(rep.distance_forward)},
                 {"distance_backward", fit_to_json(rep.distance_backward)},
                 {"delta_forward", fit_to_json(rep.delta_forward)},
                 {"delta_backward", fit_to_json(rep.delta_backward)}};
  j["verdicts"] = {{"s_equivalent", rep.s_equivalent},
                   {"tangentially_s_equivalent", rep.tangentially_s_equivalent}};
  j["profile"] = rep.profile ? profile_to_json(*rep.profile) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json approximate_to_json(const ApproximateResult& res) {
  nlohmann::ordered_json j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["k_star"] = res.k_star ? nlohmann::ordered_json(*res.k_star) : nlohmann::ordered_json(nullptr);
  j["k0"] = res.k0;
  j["profile"] = profile_to_json(res.profile);
  if (res.truncation) j["truncation"] = res.truncation->unparse();
  auto attempts = nlohmann::ordered_json::array();
  for (const auto& a : res.attempts) {
    nlohmann::ordered_json aj;
    aj["k"] = a.k;
    aj["map"] = a.map_source;
    aj["is_verdict"] = a.is_verdict;
    aj["passed"] = a.passed;
    aj["report"] = a.report ? report_to_json(*a.report) : nlohmann::ordered_json(nullptr);
    attempts.push_back(std::move(aj));
  }
  j["attempts"] = std::move(attempts);
  return j;
}

inline std::string slope_csv_field(const ExponentFit& fit) {
  return fit.exact_zero ? "inf" : detail::format_double(fit.slope);
}

inline void write_decay_csv(const EquivalenceReport& rep, std::ostream& os) {
  os << "r,dist_f_to_g,dist_g_to_f,max_match_dist,max_delta_f_to_g,max_delta_g_to_f\n";
  for (const auto& row : rep.rows) {
    os << detail::format_double(row.r) << ',' << detail::format_double(row.dist_f_to_g) << ','
       << detail::format_double(row.dist_g_to_f) << ','
       << detail::format_double(row.max_match_dist) << ','
       << detail::format_double(row.max_delta_f_to_g) << ','
       << detail::format_double(row.max_delta_g_to_f) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Corpus runner
// ---------------------------------------------------------------------------

struct CorpusEntry {
  std::string name;
  std::string map_source;
  int arity = 0;
  double s = 1.0;
  std::string mode;                 // "approximate" | "verify"
  std::optional<std::string> pair;  // required for mode "verify"
  RadiusSchedule schedule;
  int budget = 500;
  std::uint64_t seed = 1;
};

struct CorpusConfig {
  std::vector<CorpusEntry> entries;
};

struct ConfigError : Error {
  using Error::Error;
};

inline CorpusConfig parse_corpus_config(const nlohmann::json& j) {
  auto fail = [](const std::string& path, const std::string& what) -> void {
    throw ConfigError("config error at " + path + ": " + what);
  };
  CorpusConfig cfg;
  if (!j.is_object() || !j.contains("entries")) fail("$", "expected object with 'entries'");
  const auto& entries = j.at("entries");
  if (!entries.is_array() || entries.empty()) fail("$.entries", "need at least 1 entry");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string path = "$.entries[" + std::to_string(i) + "]";
    const auto& e = entries[i];
    if (!e.is_object()) fail(path, "expected object");
    CorpusEntry entry;
    auto need = [&](const char* key) -> const nlohmann::json& {
      if (!e.contains(key)) fail(path + "." + key, "missing required field");
      return e.at(key);
    };
    entry.name = need("name").get<std::string>();
    entry.map_source = need("map").get<std::string>();
    entry.arity = need("arity").get<int>();
    if (entry.arity < 1) fail(path + ".arity", "must be >= 1");
    entry.s = need("s").get<double>();
    if (entry.s < 1.0) fail(path + ".s", "must be >= 1");
    entry.mode = need("mode").get<std::string>();
    if (entry.mode != "approximate" && entry.mode != "verify")
      fail(path + ".mode", "must be 'approximate' or 'verify'");
    if (e.contains("pair")) entry.pair = e.at("pair").get<std::string>();
    if (entry.mode == "verify" && !entry.pair)
      fail(path + ".pair", "mode 'verify' requires a pair map");
    if (e.contains("schedule")) {
      const auto& sch = e.at("schedule");
      entry.schedule.R = sch.value("R", entry.schedule.R);
      entry.schedule.rho = sch.value("rho", entry.schedule.rho);
      entry.schedule.count = sch.value("count", entry.schedule.count);
      if (entry.schedule.R <= 0.0 || entry.schedule.R >= 1.0)
        fail(path + ".schedule.R", "must be in (0, 1)");
      if (entry.schedule.rho <= 0.0 || entry.schedule.rho >= 1.0)
        fail(path + ".schedule.rho", "must be in (0, 1)");
      if (entry.schedule.count < 3) fail(path + ".schedule.count", "must be >= 3");
    }
    entry.budget = e.value("budget", entry.budget);
    if (entry.budget < 1) fail(path + ".budget", "must be >= 1");
    entry.seed = e.value("seed", entry.seed);
    cfg.entries.push_back(std::move(entry));
  }
  return cfg;
}

struct CorpusEntryResult {
  CorpusEntry entry;
  bool pass = false;
  std::optional<int> k_star;
  int k0 = -1;
  nlohmann::ordered_json report_json;
  std::optional<EquivalenceReport> decay_report;
  std::string error;
};

inline CorpusEntryResult run_corpus_entry(const CorpusEntry& entry) {
  CorpusEntryResult result;
  result.entry = entry;
  VerifyOptions vo;
  vo.schedule = entry.schedule;
  vo.budget = entry.budget;
  vo.seed = entry.seed;

  const AnalyticMap f = parse_map(entry.map_source, entry.arity);
  if (entry.mode == "approximate") {
    ApproximateOptions ao;
    ao.verify = vo;
    const ApproximateResult res = approximate(f, entry.s, ao);
    result.pass = res.k_star.has_value();
    result.k_star = res.k_star;
    result.k0 = res.k0;
    result.report_json = approximate_to_json(res);
    if (res.report) result.decay_report = res.report;
  } else {
    const AnalyticMap g = parse_map(*entry.pair, entry.arity);
    EquivalenceReport rep = check_tangential(f, g, entry.s, vo);
    result.pass = rep.tangentially_s_equivalent;
    result.report_json = report_to_json(rep);
    result.decay_report = std::move(rep);
  }
  return result;
}

struct CorpusRunSummary {
  std::vector<CorpusEntryResult> results;
  bool all_pass = true;
  bool numeric_failure = false;
};

inline CorpusRunSummary run_corpus(const CorpusConfig& cfg,
                                   const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  CorpusRunSummary summary;

  std::ofstream csv(out_dir / "summary.csv");
  csv << "entry,s,mode,k_star,k0,distance_forward,distance_backward,delta_forward,"
         "delta_backward,s_equivalent,tangential,R\n";

  for (const auto& entry : cfg.entries) {
    CorpusEntryResult result;
    try {
      result = run_corpus_entry(entry);
    } catch (const PreconditionError& err) {
      result.entry = entry;
      result.error = err.what();
      summary.numeric_failure = true;
      summary.all_pass = false;
    }

    {
      std::ofstream rf(out_dir / (entry.name + ".report.json"));
      if (result.error.empty()) {
        rf << result.report_json.dump(2) << '\n';
      } else {
        nlohmann::ordered_json j;
        j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
        j["error"] = result.error;
        rf << j.dump(2) << '\n';
      }
    }
    if (result.decay_report) {
      std::ofstream df(out_dir / (entry.name + ".decay.csv"));
      write_decay_csv(*result.decay_report, df);
    }

    csv << entry.name << ',' << detail::format_double(entry.s) << ',' << entry.mode << ',';
    csv << (result.k_star ? std::to_string(*result.k_star) : "") << ',';
    csv << (result.k0 >= 0 ? std::to_string(result.k0) : "") << ',';
    if (result.decay_report) {
      const auto& rep = *result.decay_report;
      csv << slope_csv_field(rep.distance_forward) << ',' << slope_csv_field(rep.distance_backward)
          << ',' << slope_csv_field(rep.delta_forward) << ',' << slope_csv_field(rep.delta_backward)
          << ',' << (rep.s_equivalent ? "true" : "false") << ','
          << (rep.tangentially_s_equivalent ? "true" : "false") << ','
          << detail::format_double(rep.validity_radius) << '\n';
    } else {
      csv << ",,,,,," << '\n';
    }

    if (!result.pass) summary.all_pass = false;
    summary.results.push_back(std::move(result));
  }
  return summary;
}

}  // namespace tapprox
