#pragma once

// Command-line front end: delta, mean, transport, orbit, probe.
// Exit codes: 0 success, 1 usage error, 2 domain error ({"error": code, "detail": ...}).

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "json_io.hpp"
#include "kahler/delta_constants.hpp"
#include "kahler/holonomy.hpp"
#include "kahler/karcher.hpp"
#include "kahler/parallel.hpp"
#include "kahler/prober.hpp"

namespace kahler::cli {

using io::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Directions marched by the injectivity estimate; fixed so the cache key determines the result.
inline constexpr int kInjectivityDirections = 32;

struct RunConfig {
  std::string subcommand;
  std::string config_file;
  std::string out;
  std::string csv;
  int threads = 0;
  bool timestamp = false;
  bool no_timestamp = false;

  // delta estimation (also used by mean --check-convexity, orbit, probe)
  int dim = 4;
  int samples = 2000;
  double resolution = 0.01;
  std::uint64_t seed = 0;
  std::optional<double> epsilon_override;
  bool no_cache = false;

  // mean
  std::string input;
  double tol = 1e-10;
  int max_iter = 500;
  bool check_convexity = false;

  // manifold and loops
  std::string manifold;
  std::string point;
  std::string to;
  std::string j = "auto";
  std::string holonomy;
  std::string replay;
  int delta_dim = 0;
  std::string loop_kind = "coordinate_rectangles";
  int loops = 6;
  double loop_scale = 0.5;
  int ode_steps = 2000;
  int word_length = 3;
  int max_samples = 256;

  // probe
  int grid = 17;
  int grid_steps = 4;
  bool no_refine = false;
  double tol_fix = 1e-5;
  double tol_path = 1e-4;
  double tol_cert = 1e-3;
};

namespace detail {

inline Vec parse_point(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("cannot parse coordinate '" + item + "' in --point");
    }
  }
  if (values.empty()) throw UsageError("--point needs comma-separated coordinates");
  return Eigen::Map<Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline LoopKind parse_loop_kind(const std::string& s) {
  if (s == "coordinate_rectangles") return LoopKind::coordinate_rectangles;
  if (s == "fourier_random") return LoopKind::fourier_random;
  throw UsageError("--loop-kind must be coordinate_rectangles or fourier_random");
}

inline std::string format_number(double v) { return io::number(v).dump(); }

inline std::filesystem::path cache_path() {
  if (const char* env = std::getenv("KAHLER_PROBE_CACHE"); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return std::filesystem::path(xdg) / "kahler" / "delta_cache.json";
  if (const char* home = std::getenv("HOME"); home && *home) return std::filesystem::path(home) / ".cache" / "kahler" / "delta_cache.json";
  return {};
}

struct DeltaRecord {
  DeltaConstant constant;
  CurvatureMethod method = CurvatureMethod::refined;
  std::string cache_key;
};

inline std::string cache_key(int n, const RunConfig& c) {
  return "n=" + std::to_string(n) + ";seed=" + std::to_string(c.seed) + ";ns=" + std::to_string(c.samples) + ";res=" + format_number(c.resolution);
}

/// delta_2n for real dimension 2n, through the on-disk cache unless disabled.
inline DeltaRecord resolve_delta(int real_dim, const RunConfig& c, std::ostream& err) {
  if (real_dim % 2 != 0) fail(ErrorCode::OddDimension, "dimension " + std::to_string(real_dim) + " is odd");
  const int n = real_dim / 2;
  DeltaRecord r;
  r.cache_key = cache_key(n, c);
  if (c.epsilon_override) {
    r.method = CurvatureMethod::user_override;
    r.constant = delta_2n(n, user_curvature_bound(n, *c.epsilon_override), estimate_injectivity(n, kInjectivityDirections, c.resolution, c.seed));
    return r;
  }
  const auto path = cache_path();
  const bool use_cache = !c.no_cache && !path.empty();
  json cache = json::object();
  if (use_cache && std::filesystem::exists(path)) {
    try {
      cache = io::read_file(path.string());
    } catch (const std::exception& e) {
      err << "warning: ignoring unreadable delta cache " << path << ": " << e.what() << "\n";
      cache = json::object();
    }
    if (cache.is_object() && cache.contains(r.cache_key)) {
      const json& e = cache.at(r.cache_key);
      r.constant = {n, e.at("delta").get<double>(), e.at("epsilon").get<double>(), e.at("inj_lower").get<double>()};
      return r;
    }
  }
  const auto eps = estimate_epsilon(n, c.samples, c.seed, true);
  const auto inj = estimate_injectivity(n, kInjectivityDirections, c.resolution, c.seed);
  r.constant = delta_2n(n, eps, inj);
  if (use_cache) {
    if (!cache.is_object()) cache = json::object();
    cache[r.cache_key] = {{"epsilon", eps.epsilon}, {"inj_lower", inj.inj_lower}, {"delta", r.constant.delta}};
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    const auto tmp = path.string() + ".tmp" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count());
    {
      std::ofstream out(tmp);
      out << cache.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
      std::filesystem::remove(tmp, ec);
      err << "warning: could not write delta cache " << path << "\n";
    }
  }
  return r;
}

inline json delta_json(const DeltaRecord& r, const RunConfig& c) {
  json j = io::to_json(r.constant);
  j["curvature_method"] = to_string(r.method);
  j["samples"] = c.samples;
  j["resolution"] = c.resolution;
  j["injectivity_directions"] = kInjectivityDirections;
  j["seed"] = c.seed;
  j["cache_key"] = r.cache_key;
  return j;
}

// Accepts a bare matrix or any CLI output carrying a single structure.
inline OrthoComplexStructure structure_from_json(const json& doc) {
  if (doc.contains("rows")) return validate_j(io::matrix_from_json(doc), kTolAlg);
  const json& body = doc.contains("result") ? doc.at("result") : doc;
  for (const char* key : {"j_prime", "mean", "structure", "midpoint", "base_j"}) {
    if (body.contains(key) && body.at(key).is_object()) return validate_j(io::matrix_from_json(body.at(key)), kTolAlg);
  }
  io::parse_fail("no structure matrix found");
}

inline OrthoComplexStructure resolve_structure(const std::string& spec, const ManifoldChart& chart, const Vec& p) {
  if (spec == "auto") return auto_structure(chart, p);
  return structure_from_json(io::read_file(spec));
}

inline std::vector<SmoothPath> paths_of(const std::vector<LoopSpec>& specs) {
  std::vector<SmoothPath> out;
  for (const auto& s : specs) out.push_back(make_path(s));
  return out;
}

struct SampledHolonomy {
  std::string manifold;
  Vec base_point;
  std::vector<LoopSpec> specs;
  std::vector<HolonomySample> samples;
};

inline json holonomy_json(const SampledHolonomy& h) {
  json loops = json::array();
  for (const auto& s : h.specs) loops.push_back(io::to_json(s));
  return {{"manifold", h.manifold}, {"base_point", io::to_json(h.base_point)}, {"loops", loops}, {"samples", io::samples_to_json(h.samples)}};
}

inline SampledHolonomy holonomy_from_json(const json& doc) {
  const json& body = doc.contains("result") ? doc.at("result") : doc;
  SampledHolonomy h;
  h.manifold = body.at("manifold").get<std::string>();
  h.base_point = io::vec_from_json(body.at("base_point"));
  for (const auto& l : body.at("loops")) h.specs.push_back(io::loop_spec_from_json(l));
  const auto paths = paths_of(h.specs);
  for (const auto& s : body.at("samples")) {
    HolonomySample hs;
    hs.base_point = h.base_point;
    hs.word = s.at("word").get<LoopWord>();
    hs.matrix = io::matrix_from_json(s.at("matrix"));
    hs.ode_steps = s.value("ode_steps", 0);
    hs.orthogonality_defect = s.value("orthogonality_defect", 0.0);
    hs.loop = word_path(paths, hs.word);
    h.samples.push_back(std::move(hs));
  }
  return h;
}

inline SampledHolonomy sample_holonomy(const RunConfig& c) {
  SampledHolonomy h;
  h.manifold = c.manifold;
  const ManifoldChart chart = catalog(c.manifold);
  h.base_point = parse_point(c.point);
  if (h.base_point.size() != chart.dim) throw UsageError("--point needs " + std::to_string(chart.dim) + " coordinates");
  h.specs = loop_family_specs(chart, h.base_point, parse_loop_kind(c.loop_kind), c.loops, c.loop_scale, c.seed);
  h.samples = holonomy_samples(chart, h.base_point, paths_of(h.specs),
                               {.steps = c.ode_steps, .word_length = c.word_length, .max_samples = static_cast<std::size_t>(c.max_samples)});
  return h;
}

inline std::string word_string(const LoopWord& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? " " : "") + std::to_string(w[i]);
  return s;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

inline json certificate_json(const CertificateSet& c) {
  return {{"grid", c.grid},
          {"nabla_j_residual", io::number(c.nabla_j)},
          {"nijenhuis_max", io::number(c.nijenhuis)},
          {"d_omega_max", io::number(c.d_omega)},
          {"path_independence_residual", io::number(c.path_independence)}};
}

inline json verdict_json(const DichotomyVerdict& v, const std::string& manifold, const json& delta) {
  json loops = json::array();
  for (const auto& s : v.loop_specs) loops.push_back(io::to_json(s));
  json r = {{"kind", to_string(v.kind)},
            {"manifold", manifold},
            {"base_point", io::to_json(v.base_point)},
            {"base_j", io::to_json(v.base_j.matrix())},
            {"delta", delta},
            {"loops", loops},
            {"ode_steps", v.ode_steps}};
  if (v.orbit_report) {
    const auto& o = *v.orbit_report;
    json d = json::array();
    double raw_defect = 0;
    for (std::size_t i = 0; i < o.distances.size(); ++i) {
      d.push_back(io::number(o.distances[i]));
      raw_defect = std::max(raw_defect, o.samples[i].orthogonality_defect);
    }
    r["orbit"] = {{"sample_count", o.samples.size()},
                  {"max_distance", o.max_distance},
                  {"argmax", o.argmax_loop},
                  {"argmax_word", o.samples[o.argmax_loop].word},
                  {"cut_locus_count", o.cut_locus_count},
                  {"max_raw_orthogonality_defect", raw_defect},
                  {"distances", d},
                  {"lower_bound_note", "distances come from sampled loops only and bound the true orbit diameter from below"}};
  } else {
    r["orbit"] = nullptr;
  }
  if (v.kind == VerdictKind::HolonomyObstruction) {
    r["witness"] = {{"word", v.witness_word}, {"distance", v.witness_distance}, {"ode_steps", v.ode_steps}};
  } else {
    r["witness"] = nullptr;
  }
  r["j_prime"] = v.j_prime ? io::to_json(v.j_prime->matrix()) : json(nullptr);
  if (v.certificates) {
    const auto& c = *v.certificates;
    json trace = json::array();
    for (double t : c.fixedness_trace) trace.push_back(io::number(t));
    r["certificates"] = {{"fixedness", io::number(c.fixedness)},
                         {"averaging_rounds", c.fix_rounds},
                         {"fixedness_trace", trace},
                         {"coarse", certificate_json(c.coarse)},
                         {"fine", c.fine ? certificate_json(*c.fine) : json(nullptr)},
                         {"refinement_ok", c.refinement_ok}};
  } else {
    r["certificates"] = nullptr;
  }
  r["failed_stage"] = v.failed_stage;
  r["error_code"] = v.error_code;
  r["diagnostics"] = v.diagnostics;
  r["evidence"] = v.kind == VerdictKind::HolonomyObstruction
                      ? "obstruction: the witness loop can be replayed with transport --replay"
                      : (v.kind == VerdictKind::KahlerWitness ? "certificate-backed: sampled holonomy and finite-difference residuals, not a proof"
                                                              : "inconclusive: see failed_stage");
  return r;
}

}  // namespace detail

inline json resolved_config(const RunConfig& c) {
  json j = {{"subcommand", c.subcommand}};
  auto delta_keys = [&] {
    j["samples"] = c.samples;
    j["resolution"] = c.resolution;
    j["seed"] = c.seed;
    j["epsilon-override"] = c.epsilon_override ? json(*c.epsilon_override) : json(nullptr);
  };
  auto loop_keys = [&] {
    j["manifold"] = c.manifold;
    j["point"] = c.point;
    j["loop-kind"] = c.loop_kind;
    j["loops"] = c.loops;
    j["loop-scale"] = c.loop_scale;
    j["ode-steps"] = c.ode_steps;
    j["word-length"] = c.word_length;
    j["max-samples"] = c.max_samples;
    j["seed"] = c.seed;
  };
  if (c.subcommand == "delta") {
    j["dim"] = c.dim;
    delta_keys();
  } else if (c.subcommand == "mean") {
    j["input"] = c.input;
    j["tol"] = c.tol;
    j["max-iter"] = c.max_iter;
    j["check-convexity"] = c.check_convexity;
    if (c.check_convexity) delta_keys();
  } else if (c.subcommand == "transport") {
    if (!c.replay.empty()) {
      j["replay"] = c.replay;
    } else {
      loop_keys();
      j["to"] = c.to;
    }
  } else if (c.subcommand == "orbit") {
    if (!c.holonomy.empty()) {
      j["holonomy"] = c.holonomy;
    } else {
      loop_keys();
    }
    j["j"] = c.j;
    delta_keys();
  } else if (c.subcommand == "probe") {
    loop_keys();
    j["j"] = c.j;
    j["delta-dim"] = c.delta_dim;
    delta_keys();
    j["grid"] = c.grid;
    j["grid-steps"] = c.grid_steps;
    j["no-refine"] = c.no_refine;
    j["tol"] = c.tol;
    j["max-iter"] = c.max_iter;
    j["tol-fix"] = c.tol_fix;
    j["tol-path"] = c.tol_path;
    j["tol-cert"] = c.tol_cert;
  }
  return j;
}

namespace detail {

inline json run_delta(const RunConfig& c, std::ostream& err) {
  if (c.dim < 4) fail(ErrorCode::DimensionTooSmall, "delta needs real dimension at least 4");
  const auto rec = resolve_delta(c.dim, c, err);
  const auto compat = convexity_compatibility(rec.constant);
  json r = delta_json(rec, c);
  r["convexity"] = {{"convex_radius", compat.convex_radius},
                    {"karcher_diameter", compat.karcher_diameter},
                    {"ball_is_convex", compat.ball_is_convex},
                    {"diameter_ok", compat.diameter_ok}};
  return r;
}

inline json run_mean(const RunConfig& c, std::ostream& err, std::string& csv) {
  if (c.input.empty()) throw UsageError("mean needs --input");
  const json doc = io::read_file(c.input);
  const json& body = doc.contains("points") ? doc : (doc.contains("result") ? doc.at("result") : doc);
  const char* key = body.contains("points") ? "points" : "orbit";
  if (!body.contains(key) || !body.at(key).is_array()) io::parse_fail("input needs a \"points\" array");
  std::vector<OrthoComplexStructure> points;
  for (const auto& m : body.at(key)) points.push_back(validate_j(io::matrix_from_json(m), kTolAlg));
  const WeightedSampleSet set = body.contains("weights") ? WeightedSampleSet(points, body.at("weights").get<std::vector<double>>())
                                                        : WeightedSampleSet::uniform(points);
  KarcherOptions opt{.tol = c.tol, .max_iter = c.max_iter};
  json r;
  if (c.check_convexity) {
    const auto rec = resolve_delta(points.front().dim(), c, err);
    opt.delta = rec.constant;
    r["delta"] = delta_json(rec, c);
  }
  const MeanResult m = karcher_mean(set, opt);
  json trace = json::array(), dist = json::array();
  csv = "index,weight,distance_to_mean\n";
  for (double e : m.energy_trace) trace.push_back(e);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double d = distance(m.mean, set.points()[i]);
    dist.push_back(d);
    csv += std::to_string(i) + "," + format_number(set.weights()[i]) + "," + format_number(d) + "\n";
  }
  r["mean"] = io::to_json(m.mean.matrix());
  r["iterations"] = m.iterations;
  r["final_grad_norm"] = m.final_grad_norm;
  r["energy"] = m.energy;
  r["converged"] = m.converged;
  r["energy_trace"] = trace;
  r["distances_to_mean"] = dist;
  return r;
}

inline json run_transport(const RunConfig& c) {
  if (!c.replay.empty()) {
    const json doc = io::read_file(c.replay);
    const json& v = doc.contains("result") ? doc.at("result") : doc;
    if (!v.contains("witness") || v.at("witness").is_null()) io::parse_fail("verdict has no obstruction witness to replay");
    const ManifoldChart chart = catalog(v.at("manifold").get<std::string>());
    std::vector<LoopSpec> specs;
    for (const auto& l : v.at("loops")) specs.push_back(io::loop_spec_from_json(l));
    const auto base_j = validate_j(io::matrix_from_json(v.at("base_j")), kTolAlg);
    const LoopWord word = v.at("witness").at("word").get<LoopWord>();
    const int steps = v.at("witness").at("ode_steps").get<int>();
    const double replayed = replay_witness(chart, specs, word, base_j, steps);
    const double delta = v.at("delta").at("delta").get<double>();
    return {{"replayed_distance", replayed},
            {"recorded_distance", v.at("witness").at("distance")},
            {"delta", delta},
            {"exceeds_delta", replayed > delta}};
  }
  if (c.manifold.empty() || c.point.empty()) throw UsageError("transport needs --manifold and --point (or --replay)");
  if (!c.to.empty()) {
    const ManifoldChart chart = catalog(c.manifold);
    const Vec p = parse_point(c.point), q = parse_point(c.to);
    if (p.size() != chart.dim || q.size() != chart.dim) throw UsageError("--point and --to need " + std::to_string(chart.dim) + " coordinates");
    const Mat m = parallel_transport(chart, polyline({p, q}, false), c.ode_steps);
    return {{"manifold", c.manifold}, {"from", io::to_json(p)}, {"to", io::to_json(q)}, {"ode_steps", c.ode_steps},
            {"matrix", io::to_json(m)}, {"orthogonality_defect", orthogonality_defect(m)}};
  }
  return holonomy_json(sample_holonomy(c));
}

inline json run_orbit(const RunConfig& c, std::ostream& err, std::string& csv) {
  SampledHolonomy h;
  if (!c.holonomy.empty()) {
    h = holonomy_from_json(io::read_file(c.holonomy));
  } else {
    if (c.manifold.empty() || c.point.empty()) throw UsageError("orbit needs --holonomy or --manifold and --point");
    h = sample_holonomy(c);
  }
  const ManifoldChart chart = catalog(h.manifold);
  const auto j = resolve_structure(c.j, chart, h.base_point);
  const OrbitReport rep = orbit(j, h.samples);
  const auto rec = resolve_delta(chart.dim, c, err);
  json dist = json::array(), pts = json::array();
  csv = "index,word,distance\n";
  for (std::size_t i = 0; i < rep.orbit.size(); ++i) {
    dist.push_back(io::number(rep.distances[i]));
    pts.push_back(io::to_json(rep.orbit[i].matrix()));
    csv += std::to_string(i) + "," + word_string(rep.samples[i].word) + "," + format_number(rep.distances[i]) + "\n";
  }
  return {{"manifold", h.manifold},
          {"base_point", io::to_json(h.base_point)},
          {"base_j", io::to_json(j.matrix())},
          {"max_distance", rep.max_distance},
          {"argmax", rep.argmax_loop},
          {"argmax_word", rep.samples[rep.argmax_loop].word},
          {"cut_locus_count", rep.cut_locus_count},
          {"distances", dist},
          {"orbit", pts},
          {"delta", delta_json(rec, c)},
          {"near_preserved", near_preservation_test(rep, rec.constant)}};
}

inline json run_probe(const RunConfig& c, std::ostream& err, std::string& csv) {
  if (c.manifold.empty() || c.point.empty()) throw UsageError("probe needs --manifold and --point");
  const ManifoldChart chart = catalog(c.manifold);
  const Vec p = parse_point(c.point);
  if (p.size() != chart.dim) throw UsageError("--point needs " + std::to_string(chart.dim) + " coordinates");
  const int delta_dim = c.delta_dim == 0 ? chart.dim : c.delta_dim;
  if (delta_dim != chart.dim)
    fail(ErrorCode::DimensionMismatch, "--delta-dim " + std::to_string(delta_dim) + " differs from the chart dimension " + std::to_string(chart.dim));
  const auto rec = resolve_delta(delta_dim, c, err);
  require_inside(chart, p);
  const std::optional<OrthoComplexStructure> j =
      c.j == "auto" ? std::nullopt : std::optional<OrthoComplexStructure>(resolve_structure(c.j, chart, p));

  ProbeConfig cfg;
  cfg.loop_kind = parse_loop_kind(c.loop_kind);
  cfg.loops = c.loops;
  cfg.loop_scale = c.loop_scale;
  cfg.seed = c.seed;
  cfg.ode_steps = c.ode_steps;
  cfg.word_length = c.word_length;
  cfg.max_samples = static_cast<std::size_t>(c.max_samples);
  cfg.mean_tol = c.tol;
  cfg.mean_max_iter = c.max_iter;
  cfg.tol_fix = c.tol_fix;
  cfg.tol_path = c.tol_path;
  cfg.tol_cert = c.tol_cert;
  cfg.grid = c.grid;
  cfg.grid_steps = c.grid_steps;
  cfg.refine = !c.no_refine;
  const DichotomyVerdict v = probe(chart, p, j, rec.constant, cfg);
  csv = "index,word,distance\n";
  if (v.orbit_report)
    for (std::size_t i = 0; i < v.orbit_report->distances.size(); ++i)
      csv += std::to_string(i) + "," + word_string(v.orbit_report->samples[i].word) + "," + format_number(v.orbit_report->distances[i]) + "\n";
  return verdict_json(v, c.manifold, delta_json(rec, c));
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

inline std::string option_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + (v[i].is_string() ? v[i].get<std::string>() : v[i].dump());
    return s;
  }
  return v.dump();
}

// Splices keys from a JSON config file into the argument list; flags given explicitly win.
inline std::vector<std::string> merge_config(const std::vector<std::string>& args, CLI::App& app) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  json cfg;
  try {
    cfg = io::read_file(config_path);
  } catch (const Error& e) {
    throw UsageError("config file: " + std::string(e.what()));
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (!cfg.is_object()) throw UsageError("config file must hold a JSON object");

  std::vector<std::string> out = args;
  std::size_t sub_pos = out.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (app.get_subcommand_no_throw(out[i]) != nullptr) {
      sub_pos = i;
      break;
    }
  }
  if (sub_pos == out.size()) {
    if (!cfg.contains("subcommand")) throw UsageError("no subcommand given");
    out.push_back(cfg.at("subcommand").get<std::string>());
    sub_pos = out.size() - 1;
    if (app.get_subcommand_no_throw(out[sub_pos]) == nullptr) throw UsageError("unknown subcommand '" + out[sub_pos] + "' in config");
  }
  CLI::App* sub = app.get_subcommand(out[sub_pos]);
  auto given = [&](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "subcommand") {
      if (value.get<std::string>() != out[sub_pos]) throw UsageError("config subcommand '" + value.get<std::string>() + "' conflicts with the command line");
      continue;
    }
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr) opt = app.get_option_no_throw(flag);
    if (opt == nullptr || key == "config") throw UsageError("unknown config key '" + key + "'");
    if (given(flag) || value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    extra.push_back(option_value(value));
  }
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, extra.begin(), extra.end());
  return out;
}

inline void emit(const json& doc, const RunConfig& c, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (c.out.empty()) {
    out << text;
  } else {
    write_text(c.out, text);
  }
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Holonomy dichotomy toolkit for orthogonal complex structures"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", c.config_file, "JSON file with option values (command-line flags override)");
  app.add_option("--out", c.out, "write the result JSON here instead of standard output");
  app.add_option("--csv", c.csv, "also write the distance table as CSV (mean, orbit, probe)");
  app.add_option("--threads", c.threads, "worker threads (0 = available parallelism)")->check(CLI::NonNegativeNumber);
  app.add_flag("--timestamp", c.timestamp, "add a UTC timestamp to the output");
  app.add_flag("--no-timestamp", c.no_timestamp, "omit the timestamp (default)");

  auto add_delta_opts = [&](CLI::App* s) {
    s->add_option("--samples", c.samples, "random 2-planes for the curvature estimate")->check(CLI::Range(100, 100000000));
    s->add_option("--resolution", c.resolution, "geodesic march step for the injectivity estimate");
    s->add_option("--seed", c.seed, "random seed");
    s->add_option("--epsilon-override", c.epsilon_override, "use this curvature bound instead of estimating it");
    s->add_flag("--no-cache", c.no_cache, "neither read nor write the delta cache");
  };
  auto add_loop_opts = [&](CLI::App* s) {
    s->add_option("--manifold", c.manifold, "catalog chart name");
    s->add_option("--point", c.point, "base point, comma-separated coordinates");
    s->add_option("--loop-kind", c.loop_kind, "coordinate_rectangles or fourier_random");
    s->add_option("--loops", c.loops, "number of base loops")->check(CLI::PositiveNumber);
    s->add_option("--loop-scale", c.loop_scale, "loop size in coordinates")->check(CLI::PositiveNumber);
    s->add_option("--ode-steps", c.ode_steps, "RK4 steps per loop")->check(CLI::Range(100, 100000000));
    s->add_option("--word-length", c.word_length, "close the sample under words up to this length")->check(CLI::Range(1, 8));
    s->add_option("--max-samples", c.max_samples, "cap on the word-closed sample")->check(CLI::PositiveNumber);
  };

  CLI::App* delta = app.add_subcommand("delta", "estimate the curvature bound, injectivity radius and delta_2n");
  delta->add_option("--dim", c.dim, "real dimension 2n");
  add_delta_opts(delta);

  CLI::App* mean = app.add_subcommand("mean", "Riemannian center of mass of a weighted point set");
  mean->add_option("--input", c.input, "JSON with \"points\" (and optional \"weights\"), or an orbit output");
  mean->add_option("--tol", c.tol, "gradient-norm tolerance");
  mean->add_option("--max-iter", c.max_iter, "iteration cap")->check(CLI::PositiveNumber);
  mean->add_flag("--check-convexity", c.check_convexity, "enforce the convexity hypotheses with delta_2n");
  add_delta_opts(mean);

  CLI::App* transport = app.add_subcommand("transport", "parallel transport and sampled holonomy");
  add_loop_opts(transport);
  transport->add_option("--to", c.to, "transport along the straight segment to this point instead of sampling loops");
  transport->add_option("--replay", c.replay, "recompute the witness of a probe verdict");

  CLI::App* orb = app.add_subcommand("orbit", "orbit of J under sampled holonomy");
  add_loop_opts(orb);
  orb->add_option("--holonomy", c.holonomy, "holonomy samples written by transport");
  orb->add_option("--j", c.j, "auto or a JSON file holding a structure");
  add_delta_opts(orb);

  CLI::App* prb = app.add_subcommand("probe", "run the dichotomy pipeline");
  add_loop_opts(prb);
  prb->add_option("--j", c.j, "auto or a JSON file holding a structure");
  prb->add_option("--delta-dim", c.delta_dim, "real dimension 2n for delta (defaults to the chart's)");
  add_delta_opts(prb);
  prb->add_option("--grid", c.grid, "grid nodes per axis for the global field")->check(CLI::Range(2, 257));
  prb->add_option("--grid-steps", c.grid_steps, "RK4 substeps per grid spacing")->check(CLI::PositiveNumber);
  prb->add_flag("--no-refine", c.no_refine, "skip the refined-grid decay check");
  prb->add_option("--tol", c.tol, "center-of-mass gradient tolerance");
  prb->add_option("--max-iter", c.max_iter, "center-of-mass iteration cap")->check(CLI::PositiveNumber);
  prb->add_option("--tol-fix", c.tol_fix, "fixedness tolerance");
  prb->add_option("--tol-path", c.tol_path, "path-independence tolerance");
  prb->add_option("--tol-cert", c.tol_cert, "tolerance for the three certificates");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = detail::merge_config(args, app);
    std::vector<const char*> merged{argv[0]};
    for (const auto& a : args) merged.push_back(a.c_str());
    app.parse(static_cast<int>(merged.size()), merged.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  c.subcommand = app.get_subcommands().front()->get_name();
  if (c.timestamp && c.no_timestamp) {
    err << "error: --timestamp and --no-timestamp are exclusive\n";
    return 1;
  }
  set_max_threads(static_cast<unsigned>(c.threads));

  json doc = {{"command", c.subcommand}, {"config", resolved_config(c)}};
  if (c.timestamp) doc["timestamp"] = detail::utc_timestamp();
  try {
    std::string csv;
    if (c.subcommand == "delta") doc["result"] = detail::run_delta(c, err);
    if (c.subcommand == "mean") doc["result"] = detail::run_mean(c, err, csv);
    if (c.subcommand == "transport") doc["result"] = detail::run_transport(c);
    if (c.subcommand == "orbit") doc["result"] = detail::run_orbit(c, err, csv);
    if (c.subcommand == "probe") doc["result"] = detail::run_probe(c, err, csv);
    if (!c.csv.empty()) {
      if (csv.empty()) throw UsageError("--csv applies to mean, orbit and probe");
      detail::write_text(c.csv, csv);
    }
    detail::emit(doc, c, out);
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    json failure = {{"error", std::string(to_string(e.code()))}, {"detail", e.detail()}, {"command", c.subcommand}, {"config", resolved_config(c)}};
    try {
      detail::emit(failure, c, out);
    } catch (const UsageError&) {
      out << failure.dump(2) << "\n";
    }
    return 2;
  } catch (const json::exception& e) {
    json failure = {{"error", std::string(to_string(ErrorCode::ParseError))}, {"detail", e.what()}, {"command", c.subcommand}};
    detail::emit(failure, c, out);
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace kahler::cli
