// Command-line front end: truncation, slice sampling, distances, exponent
// estimation and the equivalence/approximation pipelines.
//
// Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 usage or config
// error, 3 numeric failure (empty slice, non-IS input, rank deficiency).

#include "tapprox/tapprox.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct CommonFlags {
  std::string radii = "0.1:0.5:6";
  std::string out_dir;
  std::string format = "json";
  std::uint64_t seed = 1;
  int budget = 500;
};

tapprox::RadiusSchedule parse_radii(const std::string& spec) {
  tapprox::RadiusSchedule sch;
  std::istringstream is(spec);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(is, part, ':')) parts.push_back(part);
  if (parts.size() != 3) throw tapprox::ConfigError("--radii expects R:rho:m");
  try {
    sch.R = std::stod(parts[0]);
    sch.rho = std::stod(parts[1]);
    sch.count = std::stoi(parts[2]);
  } catch (const std::exception&) {
    throw tapprox::ConfigError("--radii expects numeric R:rho:m");
  }
  return sch;
}

Eigen::VectorXd parse_point(const std::string& spec, int n) {
  std::istringstream is(spec);
  std::string part;
  std::vector<double> vals;
  while (std::getline(is, part, ',')) vals.push_back(std::stod(part));
  if (static_cast<int>(vals.size()) != n)
    throw tapprox::ConfigError("--at expects " + std::to_string(n) + " comma-separated values");
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = vals[i];
  return x;
}

void emit(const ordered_json& j, const CommonFlags& flags, const std::string& filename) {
  if (flags.out_dir.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  fs::create_directories(flags.out_dir);
  std::ofstream os(fs::path(flags.out_dir) / filename);
  os << j.dump(2) << '\n';
}

Eigen::MatrixXd read_frame_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw tapprox::ConfigError("cannot open frame file " + path);
  json j;
  is >> j;
  const auto rows = j.at("basis").get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw tapprox::ConfigError("frame file has an empty basis");
  Eigen::MatrixXd B(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw tapprox::ConfigError("frame rows have inconsistent lengths");
    for (std::size_t k = 0; k < rows[i].size(); ++k) B(i, k) = rows[i][k];
  }
  return B;
}

tapprox::PointCloud read_cloud_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw tapprox::ConfigError("cannot open cloud file " + path);
  return tapprox::read_cloud_jsonl(is);
}

int run(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for tangential approximation of analytic zero sets"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string expr_f, expr_g, at_spec, config_path, cloud_a, cloud_b, frame_a, frame_b;
  int arity = 3;
  int order = 3;
  double s = 1.0;
  double radius = 0.1;
  bool tangential = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--radii", flags.radii, "geometric radius schedule R:rho:m");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--format", flags.format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--seed", flags.seed, "RNG seed");
    cmd->add_option("--budget", flags.budget, "seed directions per slice");
  };

  auto* cmd_truncate = app.add_subcommand("truncate", "Taylor-truncate a map");
  cmd_truncate->add_option("expr", expr_f, "map source")->required();
  cmd_truncate->add_option("--n", arity, "arity")->required();
  cmd_truncate->add_option("--k", order, "truncation order")->required();
  add_common(cmd_truncate);

  auto* cmd_sample = app.add_subcommand("sample", "sample V(f) on a sphere");
  cmd_sample->add_option("expr", expr_f, "map source")->required();
  cmd_sample->add_option("--n", arity, "arity")->required();
  cmd_sample->add_option("--r", radius, "sphere radius")->required();
  add_common(cmd_sample);

  auto* cmd_delta = app.add_subcommand("delta", "distances between two point clouds");
  cmd_delta->add_option("cloudA", cloud_a, "JSONL cloud file")->required();
  cmd_delta->add_option("cloudB", cloud_b, "JSONL cloud file")->required();
  add_common(cmd_delta);

  auto* cmd_lambda = app.add_subcommand("lambda", "transverse stretch of the differential");
  cmd_lambda->add_option("expr", expr_f, "map source")->required();
  cmd_lambda->add_option("--n", arity, "arity")->required();
  cmd_lambda->add_option("--at", at_spec, "evaluation point x1,...,xn")->required();
  add_common(cmd_lambda);

  auto* cmd_grassmann = app.add_subcommand("grassmann", "subspace distance between two frames");
  cmd_grassmann->add_option("frameA", frame_a, "JSON frame file")->required();
  cmd_grassmann->add_option("frameB", frame_b, "JSON frame file")->required();
  add_common(cmd_grassmann);

  auto* cmd_exponents = app.add_subcommand("exponents", "estimate the exponent profile");
  cmd_exponents->add_option("expr", expr_f, "map source")->required();
  cmd_exponents->add_option("--n", arity, "arity")->required();
  cmd_exponents->add_option("--s", s, "target order")->required();
  add_common(cmd_exponents);

  auto* cmd_verify = app.add_subcommand("verify", "compare two zero sets at order s");
  cmd_verify->add_option("exprF", expr_f, "first map")->required();
  cmd_verify->add_option("exprG", expr_g, "second map")->required();
  cmd_verify->add_option("--n", arity, "arity")->required();
  cmd_verify->add_option("--s", s, "target order")->required();
  cmd_verify->add_flag("--tangential", tangential, "also compare tangent planes");
  add_common(cmd_verify);

  auto* cmd_approx = app.add_subcommand("approximate", "find the smallest passing truncation");
  cmd_approx->add_option("expr", expr_f, "map source")->required();
  cmd_approx->add_option("--n", arity, "arity")->required();
  cmd_approx->add_option("--s", s, "target order")->required();
  add_common(cmd_approx);

  auto* cmd_corpus = app.add_subcommand("corpus", "run a corpus config");
  cmd_corpus->add_option("config", config_path, "corpus config JSON")->required();
  add_common(cmd_corpus);

  CLI11_PARSE(app, argc, argv);

  tapprox::VerifyOptions vo;
  vo.schedule = parse_radii(flags.radii);
  vo.budget = flags.budget;
  vo.seed = flags.seed;

  if (cmd_truncate->parsed()) {
    const auto f = tapprox::parse_map(expr_f, arity);
    const auto jets = tapprox::taylor(f, order);
    const auto g = tapprox::to_map(jets);
    if (flags.format == "csv") {
      std::ostringstream os;
      os << "component";
      for (int i = 1; i <= arity; ++i) os << ",e" << i;
      os << ",coef\n";
      for (std::size_t c = 0; c < jets.size(); ++c)
        for (const auto& [m, coef] : jets[c].terms()) {
          os << c + 1;
          for (int e : m) os << ',' << e;
          os << ',' << tapprox::detail::format_double(coef) << '\n';
        }
      std::cout << os.str();
      return 0;
    }
    ordered_json j;
    j["map"] = g.unparse();
    auto comps = ordered_json::array();
    for (const auto& sjet : jets) comps.push_back(tapprox::series_to_json(sjet));
    j["components"] = std::move(comps);
    emit(j, flags, "truncate.json");
    return 0;
  }

  if (cmd_sample->parsed()) {
    const auto f = tapprox::parse_map(expr_f, arity);
    tapprox::SphereSliceFamily fam;
    fam.map = f;
    fam.slices.push_back(tapprox::sample_slice(f, radius, flags.budget, flags.seed));
    if (flags.format == "csv") {
      tapprox::write_family_csv(fam, std::cout);
    } else {
      tapprox::write_family_jsonl(fam, std::cout);
    }
    return 0;
  }

  if (cmd_delta->parsed()) {
    const auto A = read_cloud_file(cloud_a);
    const auto B = read_cloud_file(cloud_b);
    const double dAB = tapprox::delta_one_sided(A.points, B.points);
    const double dBA = tapprox::delta_one_sided(B.points, A.points);
    ordered_json j;
    j["delta_A_B"] = dAB;  // sup over B of distance to A
    j["delta_B_A"] = dBA;
    j["hausdorff"] = std::max(dAB, dBA);
    emit(j, flags, "delta.json");
    return 0;
  }

  if (cmd_lambda->parsed()) {
    const auto f = tapprox::parse_map(expr_f, arity);
    const auto x = parse_point(at_spec, arity);
    ordered_json j;
    j["lambda"] = tapprox::lambda(f, x);
    emit(j, flags, "lambda.json");
    return 0;
  }

  if (cmd_grassmann->parsed()) {
    const Eigen::MatrixXd A = read_frame_file(frame_a);
    const Eigen::MatrixXd B = read_frame_file(frame_b);
    ordered_json j;
    j["delta"] = tapprox::grassmann_delta(A, B);
    emit(j, flags, "grassmann.json");
    return 0;
  }

  if (cmd_exponents->parsed()) {
    const auto f = tapprox::parse_map(expr_f, arity);
    const auto fam = tapprox::continue_family(f, vo.schedule, vo.budget, vo.seed);
    const auto is = tapprox::validate_is(fam);
    if (!is.is_IS())
      throw tapprox::PreconditionError("map failed IS validation: " + to_string(is.verdict));
    const auto prof = tapprox::estimate_profile(f, fam, s);
    emit(tapprox::profile_to_json(prof), flags, "exponents.json");
    return 0;
  }

  if (cmd_verify->parsed()) {
    const auto f = tapprox::parse_map(expr_f, arity);
    const auto g = tapprox::parse_map(expr_g, arity);
    const auto rep = tangential ? tapprox::check_tangential(f, g, s, vo)
                                : tapprox::check_s_equivalence(f, g, s, vo);
    emit(tapprox::report_to_json(rep), flags, "verify.json");
    const bool pass = tangential ? rep.tangentially_s_equivalent : rep.s_equivalent;
    return pass ? 0 : 1;
  }

  if (cmd_approx->parsed()) {
    const auto f = tapprox::parse_map(expr_f, arity);
    tapprox::ApproximateOptions ao;
    ao.verify = vo;
    const auto res = tapprox::approximate(f, s, ao);
    emit(tapprox::approximate_to_json(res), flags, "approximate.json");
    return res.k_star ? 0 : 1;
  }

  if (cmd_corpus->parsed()) {
    std::ifstream is(config_path);
    if (!is) throw tapprox::ConfigError("cannot open config " + config_path);
    json raw;
    try {
      is >> raw;
    } catch (const json::exception& err) {
      throw tapprox::ConfigError(std::string("config is not valid JSON: ") + err.what());
    }
    const auto cfg = tapprox::parse_corpus_config(raw);
    const fs::path out = flags.out_dir.empty() ? fs::path("corpus_out") : fs::path(flags.out_dir);
    const auto summary = tapprox::run_corpus(cfg, out);
    for (const auto& res : summary.results) {
      std::cout << res.entry.name << ": "
                << (res.error.empty() ? (res.pass ? "pass" : "fail") : "error — " + res.error);
      if (res.k_star) std::cout << " (k_star=" << *res.k_star << ", k0=" << res.k0 << ")";
      std::cout << '\n';
    }
    if (summary.numeric_failure) return 3;
    return summary.all_pass ? 0 : 1;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const tapprox::ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return 2;
  } catch (const tapprox::ParseError& err) {
    std::cerr << "parse error: " << err.what() << '\n';
    return 2;
  } catch (const tapprox::PreconditionError& err) {
    std::cerr << "numeric failure: " << err.what() << '\n';
    return 3;
  } catch (const tapprox::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
}
