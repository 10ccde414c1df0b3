#pragma once

// The holonomy dichotomy, numerically: either some sampled loop moves J_p farther than
// delta, or J_p averages to a holonomy-fixed J' whose parallel extension is certified
// Kahler by finite-difference residuals.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kahler/acs_manifold.hpp"
#include "kahler/delta_constants.hpp"
#include "kahler/errors.hpp"
#include "kahler/holonomy.hpp"
#include "kahler/karcher.hpp"
#include "kahler/parallel.hpp"

namespace kahler {

struct OrbitReport {
  OrthoComplexStructure base_j;
  std::vector<HolonomySample> samples;
  std::vector<OrthoComplexStructure> orbit;  // orbit[i] = conjugate(samples[i].matrix, base_j)
  std::vector<double> distances;  // NaN where the orbit point sits on the cut locus
  double max_distance = 0.0;
  std::size_t argmax_loop = 0;
  std::size_t cut_locus_count = 0;
};

inline OrbitReport orbit(const OrthoComplexStructure& j, const std::vector<HolonomySample>& samples) {
  if (samples.empty()) fail(ErrorCode::InvalidArgument, "no holonomy samples");
  OrbitReport r;
  r.base_j = j;
  r.samples = samples;
  r.orbit.resize(samples.size());
  r.distances.assign(samples.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& s : samples) {
    if (s.matrix.rows() != j.dim()) fail(ErrorCode::DimensionMismatch, "sample dimension differs from J");
    if (s.matrix.determinant() < 0) fail(ErrorCode::DeterminantAnomaly, "holonomy sample has determinant -1");
  }
  parallel_for(samples.size(), [&](std::size_t i) {
    r.orbit[i] = conjugate(samples[i].matrix, j);
    try {
      r.distances[i] = distance(j, r.orbit[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::CutLocus) throw;
    }
  });
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (std::isnan(r.distances[i])) {
      ++r.cut_locus_count;
      continue;
    }
    if (r.distances[i] > r.max_distance) {
      r.max_distance = r.distances[i];
      r.argmax_loop = i;
    }
  }
  return r;
}

inline bool near_preservation_test(const OrbitReport& report, const DeltaConstant& delta) {
  if (report.base_j.n() != delta.n) fail(ErrorCode::DimensionMismatch, "delta constant was computed for another dimension");
  return report.cut_locus_count == 0 && report.max_distance <= delta.delta;
}

/// Uniform-weight center of mass of the orbit.
inline MeanResult average_to_fixed(const OrbitReport& report, double tol, const DeltaConstant& delta, int max_iter = 500) {
  const auto s = WeightedSampleSet::uniform(report.orbit);
  const MeanResult m = karcher_mean(s, {.tol = tol, .max_iter = max_iter, .delta = delta, .start = report.base_j});
  if (!m.converged)
    fail(ErrorCode::DidNotConverge, "center of mass gradient " + std::to_string(m.final_grad_norm) + " after " +
                                        std::to_string(m.iterations) + " iterations");
  return m;
}

inline double fixedness_check(const OrthoComplexStructure& j, const std::vector<HolonomySample>& samples) {
  std::vector<double> r(samples.size(), 0.0);
  parallel_for(samples.size(), [&](std::size_t i) { r[i] = distance(j, conjugate(samples[i].matrix, j)); });
  return r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
}

struct FixedPointResult {
  OrthoComplexStructure j_prime;
  int rounds = 0;
  double fixedness = std::numeric_limits<double>::infinity();
  std::vector<double> fixedness_trace;
  int mean_iterations = 0;  // summed over rounds
};

/// Repeats J <- center of mass of its orbit. With a genuine group one round reaches the fixed
/// structure; a finite sample contracts toward it round by round. Rounds continue past
/// tol_fix until fixedness drops below polish_tol or stops improving, so that the parallel
/// extension built from J' inherits as little non-fixedness as the numerics allow.
inline FixedPointResult iterate_to_fixed(const OrthoComplexStructure& j, const std::vector<HolonomySample>& samples, double mean_tol,
                                         double polish_tol, const DeltaConstant& delta, int max_rounds, int max_iter = 500) {
  FixedPointResult r;
  r.j_prime = j;
  r.fixedness = fixedness_check(j, samples);
  r.fixedness_trace.push_back(r.fixedness);
  OrthoComplexStructure current = j;
  int stalled = 0;
  while (r.fixedness >= polish_tol && r.rounds < max_rounds && stalled < 3) {
    const OrbitReport rep = orbit(current, samples);
    const MeanResult m = average_to_fixed(rep, mean_tol, delta, max_iter);
    current = m.mean;
    r.mean_iterations += m.iterations;
    ++r.rounds;
    const double fixedness = fixedness_check(current, samples);
    r.fixedness_trace.push_back(fixedness);
    if (fixedness < 0.999 * r.fixedness) {
      stalled = 0;
    } else {
      ++stalled;
    }
    if (fixedness < r.fixedness) {
      r.fixedness = fixedness;
      r.j_prime = current;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Global field

struct GlobalJField {
  ManifoldChart chart;
  Vec base_point;
  Box grid_box;
  int grid_res = 0;
  std::vector<double> j_coord;  // coordinate-frame J at every grid node, row-major d x d blocks
  double path_independence_residual = 0.0;
  int path_checks = 0;
  double structure_defect = 0.0;  // worst validate_j defect of the frame-expressed J

  int dim() const { return chart.dim; }
  std::size_t node_count() const {
    std::size_t c = 1;
    for (int a = 0; a < chart.dim; ++a) c *= static_cast<std::size_t>(grid_res);
    return c;
  }
  double spacing(int axis) const { return (grid_box.upper(axis) - grid_box.lower(axis)) / (grid_res - 1); }
  double coordinate(int axis, int i) const { return grid_box.lower(axis) + i * spacing(axis); }

  /// Node index with axis 0 varying slowest.
  std::size_t flat(const std::vector<int>& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < chart.dim; ++a) f = f * static_cast<std::size_t>(grid_res) + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
    return f;
  }
  std::vector<int> unflatten(std::size_t f) const {
    std::vector<int> idx(static_cast<std::size_t>(chart.dim));
    for (int a = chart.dim - 1; a >= 0; --a) {
      idx[static_cast<std::size_t>(a)] = static_cast<int>(f % static_cast<std::size_t>(grid_res));
      f /= static_cast<std::size_t>(grid_res);
    }
    return idx;
  }
  Vec point(const std::vector<int>& idx) const {
    Vec x(chart.dim);
    for (int a = 0; a < chart.dim; ++a) x(a) = coordinate(a, idx[static_cast<std::size_t>(a)]);
    return x;
  }
  Mat j_coordinate(std::size_t f) const {
    const int d = chart.dim;
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        j_coord.data() + f * static_cast<std::size_t>(d * d), d, d);
  }
  void set_j_coordinate(std::size_t f, const Mat& j) {
    const int d = chart.dim;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(j_coord.data() + f * static_cast<std::size_t>(d * d),
                                                                                       d, d) = j;
  }
  /// Orthonormal-frame expression of J at a node.
  OrthoComplexStructure j_at(std::size_t f) const {
    const Vec x = point(unflatten(f));
    const Mat frame = orthonormal_frame(chart, x);
    return validate_j(frame.triangularView<Eigen::Upper>().solve(j_coordinate(f) * frame), 1e-8);
  }
};

/// Central 80% of the chart's domain box.
inline Box grid_sub_box(const ManifoldChart& chart) {
  const Vec c = chart.domain.center(), w = chart.domain.width();
  return {c - 0.4 * w, c + 0.4 * w};
}

namespace detail {

inline Mat conjugate_by_transport(const Mat& v, const Mat& j0) { return v * j0 * v.inverse(); }

// Transports the frame v along the straight leg from x to x + (target - x(axis)) e_axis.
inline void transport_leg(const ManifoldChart& chart, Vec& x, int axis, double target, int substeps, Mat& v, Christoffel& gamma) {
  Vec to = x;
  to(axis) = target;
  if (to(axis) == x(axis)) return;
  transport_segment(chart, line_segment(x, to), substeps, v, gamma);
  x = to;
}

inline int leg_substeps(double length, double spacing, int steps) {
  return std::max(1, static_cast<int>(std::ceil(std::abs(length) / spacing * steps - 1e-9)));
}

}  // namespace detail

/// Parallel extension of J' over a grid on the central sub-box: the canonical path to a node
/// moves along axis 0, then axis 1, and so on; steps is the RK4 substep count per grid spacing.
inline GlobalJField build_global_j(const ManifoldChart& chart, const Vec& p, const OrthoComplexStructure& j_prime, int grid_res, int steps,
                                   std::uint64_t seed = 0, int path_checks = 10) {
  if (grid_res < 2) fail(ErrorCode::GridTooCoarse, "grid needs at least two nodes per axis");
  if (steps < 1) fail(ErrorCode::InvalidArgument, "steps must be positive");
  if (j_prime.dim() != chart.dim) fail(ErrorCode::DimensionMismatch, "J' dimension differs from the chart");
  require_inside(chart, p);
  const int d = chart.dim;

  GlobalJField field;
  field.chart = chart;
  field.base_point = p;
  field.grid_box = grid_sub_box(chart);
  field.grid_res = grid_res;
  field.j_coord.assign(field.node_count() * static_cast<std::size_t>(d * d), 0.0);

  const Mat fp = orthonormal_frame(chart, p);
  const Mat j0 = fp * j_prime.matrix() * fp.inverse();

  // Level a holds transported frames at nodes whose first a coordinates are on the grid and
  // whose remaining coordinates equal p's.
  std::vector<Mat> frames{Mat::Identity(d, d)};
  for (int axis = 0; axis < d; ++axis) {
    const double h = field.spacing(axis);
    std::vector<Mat> next(frames.size() * static_cast<std::size_t>(grid_res));
    parallel_for(frames.size(), [&](std::size_t node) {
      Vec start = p;
      std::size_t rest = node;
      for (int a = axis - 1; a >= 0; --a) {
        start(a) = field.coordinate(a, static_cast<int>(rest % static_cast<std::size_t>(grid_res)));
        rest /= static_cast<std::size_t>(grid_res);
      }
      Christoffel gamma(d);
      // Sweep outward from p(axis) in both directions so every leg reuses the previous one.
      int first_up = 0;
      while (first_up < grid_res && field.coordinate(axis, first_up) < p(axis)) ++first_up;
      Vec x = start;
      Mat v = frames[node];
      for (int i = first_up; i < grid_res; ++i) {
        const double target = field.coordinate(axis, i);
        detail::transport_leg(chart, x, axis, target, detail::leg_substeps(target - x(axis), h, steps), v, gamma);
        next[node * static_cast<std::size_t>(grid_res) + static_cast<std::size_t>(i)] = v;
      }
      x = start;
      v = frames[node];
      for (int i = first_up - 1; i >= 0; --i) {
        const double target = field.coordinate(axis, i);
        detail::transport_leg(chart, x, axis, target, detail::leg_substeps(target - x(axis), h, steps), v, gamma);
        next[node * static_cast<std::size_t>(grid_res) + static_cast<std::size_t>(i)] = v;
      }
    });
    frames = std::move(next);
  }

  std::vector<double> defects(frames.size(), 0.0);
  parallel_for(frames.size(), [&](std::size_t f) {
    field.set_j_coordinate(f, detail::conjugate_by_transport(frames[f], j0));
    const Vec x = field.point(field.unflatten(f));
    const Mat frame = orthonormal_frame(chart, x);
    const Mat on = frame.triangularView<Eigen::Upper>().solve(field.j_coordinate(f) * frame);
    defects[f] = std::max(max_abs(on * on + Mat::Identity(d, d)), max_abs(on.transpose() * on - Mat::Identity(d, d)));
  });
  field.structure_defect = *std::max_element(defects.begin(), defects.end());
  if (field.structure_defect > 1e-8)
    fail(ErrorCode::StepTooCoarse, "transported J fails the structure check by " + std::to_string(field.structure_defect));

  // Second path: reversed axis order, at seeded nodes.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, field.node_count() - 1);
  std::vector<std::size_t> nodes(static_cast<std::size_t>(std::max(path_checks, 0)));
  for (auto& n : nodes) n = pick(rng);
  std::vector<double> residuals(nodes.size(), 0.0);
  parallel_for(nodes.size(), [&](std::size_t k) {
    const Vec q = field.point(field.unflatten(nodes[k]));
    Vec x = p;
    Mat v = Mat::Identity(d, d);
    Christoffel gamma(d);
    for (int axis = d - 1; axis >= 0; --axis)
      detail::transport_leg(chart, x, axis, q(axis), detail::leg_substeps(q(axis) - x(axis), field.spacing(axis), steps), v, gamma);
    const Mat alt = detail::conjugate_by_transport(v, j0);
    const Mat frame = orthonormal_frame(chart, q);
    residuals[k] = max_abs(frame.triangularView<Eigen::Upper>().solve((alt - field.j_coordinate(nodes[k])) * frame));
  });
  field.path_checks = static_cast<int>(nodes.size());
  field.path_independence_residual = residuals.empty() ? 0.0 : *std::max_element(residuals.begin(), residuals.end());
  return field;
}

/// Samples a coordinate-frame field given as a function; used for fixtures and controls.
inline GlobalJField sample_field(const ManifoldChart& chart, int grid_res, const std::function<Mat(const Vec&)>& j_coord) {
  GlobalJField field;
  field.chart = chart;
  field.base_point = chart.domain.center();
  field.grid_box = grid_sub_box(chart);
  field.grid_res = grid_res;
  field.j_coord.assign(field.node_count() * static_cast<std::size_t>(chart.dim * chart.dim), 0.0);
  for (std::size_t f = 0; f < field.node_count(); ++f) field.set_j_coordinate(f, j_coord(field.point(field.unflatten(f))));
  return field;
}

// ---------------------------------------------------------------------------
// Certificates

namespace detail {

inline void require_grid(const GlobalJField& field) {
  if (field.grid_res < 9) fail(ErrorCode::GridTooCoarse, "certificates need at least 9 nodes per axis");
}

// Five-point central difference along one axis: f' = (f(-2) - 8 f(-1) + 8 f(1) - f(2)) / 12h.
template <typename Get>
Mat central_derivative(const GlobalJField& field, std::size_t f, std::size_t stride, int axis, Get&& get) {
  return (get(f - 2 * stride) - 8.0 * get(f - stride) + 8.0 * get(f + stride) - get(f + 2 * stride)) / (12.0 * field.spacing(axis));
}

// Visits every node at least two steps from the grid boundary, with J there and its
// central-difference derivatives dJ[k].
template <typename Fn>
double max_over_interior(const GlobalJField& field, Fn&& fn) {
  const int d = field.dim();
  std::vector<std::size_t> interior;
  for (std::size_t f = 0; f < field.node_count(); ++f) {
    const auto idx = field.unflatten(f);
    if (std::all_of(idx.begin(), idx.end(), [&](int i) { return i > 1 && i < field.grid_res - 2; })) interior.push_back(f);
  }
  std::vector<double> worst(interior.size(), 0.0);
  std::size_t stride = 1;
  std::vector<std::size_t> strides(static_cast<std::size_t>(d));
  for (int a = d - 1; a >= 0; --a) {
    strides[static_cast<std::size_t>(a)] = stride;
    stride *= static_cast<std::size_t>(field.grid_res);
  }
  auto get_j = [&](std::size_t g) { return field.j_coordinate(g); };
  parallel_for(interior.size(), [&](std::size_t n) {
    const std::size_t f = interior[n];
    std::vector<Mat> dj(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) dj[static_cast<std::size_t>(k)] = central_derivative(field, f, strides[static_cast<std::size_t>(k)], k, get_j);
    worst[n] = fn(f, field.j_coordinate(f), dj, strides);
  });
  return worst.empty() ? 0.0 : *std::max_element(worst.begin(), worst.end());
}

}  // namespace detail

/// (nabla_k J)^i_j = d_k J^i_j + Gamma^i_kl J^l_j - Gamma^l_kj J^i_l, max over interior nodes.
inline double covariant_constancy_check(const GlobalJField& field) {
  detail::require_grid(field);
  const int d = field.dim();
  return detail::max_over_interior(field, [&](std::size_t f, const Mat& j, const std::vector<Mat>& dj, const auto&) {
    const Christoffel gamma = christoffel(field.chart, field.point(field.unflatten(f)));
    double worst = 0;
    for (int k = 0; k < d; ++k) {
      Mat gk(d, d);  // gk(i, l) = Gamma^i_kl
      for (int i = 0; i < d; ++i)
        for (int l = 0; l < d; ++l) gk(i, l) = gamma(i, k, l);
      worst = std::max(worst, max_abs(dj[static_cast<std::size_t>(k)] + gk * j - j * gk));
    }
    return worst;
  });
}

/// Nijenhuis tensor at one interior node: n[(i * d + j) * d + l] = N^i_jl.
inline std::vector<double> nijenhuis_tensor(const Mat& j, const std::vector<Mat>& dj) {
  const auto d = static_cast<int>(j.rows());
  std::vector<double> n(static_cast<std::size_t>(d * d * d), 0.0);
  for (int i = 0; i < d; ++i)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        double v = 0;
        for (int k = 0; k < d; ++k) {
          v += j(k, a) * dj[static_cast<std::size_t>(k)](i, b) - j(k, b) * dj[static_cast<std::size_t>(k)](i, a);
          v -= j(i, k) * (dj[static_cast<std::size_t>(a)](k, b) - dj[static_cast<std::size_t>(b)](k, a));
        }
        n[static_cast<std::size_t>((i * d + a) * d + b)] = v;
      }
  return n;
}

inline double nijenhuis_check(const GlobalJField& field) {
  detail::require_grid(field);
  return detail::max_over_interior(field, [&](std::size_t, const Mat& j, const std::vector<Mat>& dj, const auto&) {
    const auto n = nijenhuis_tensor(j, dj);
    double worst = 0;
    for (double v : n) worst = std::max(worst, std::abs(v));
    return worst;
  });
}

/// omega_ij = g_ik J^k_j must be antisymmetric and closed.
inline double kahler_form_check(const GlobalJField& field) {
  detail::require_grid(field);
  const int d = field.dim();
  std::vector<double> asym(field.node_count(), 0.0);
  parallel_for(field.node_count(), [&](std::size_t f) {
    const Mat w = field.chart.metric(field.point(field.unflatten(f))) * field.j_coordinate(f);
    asym[f] = max_abs(w + w.transpose());
  });
  const double worst_asym = *std::max_element(asym.begin(), asym.end());
  if (worst_asym > 1e-8) fail(ErrorCode::FormNotAntisymmetric, "g J is not antisymmetric: " + std::to_string(worst_asym));

  auto omega = [&](std::size_t f) { return Mat(field.chart.metric(field.point(field.unflatten(f))) * field.j_coordinate(f)); };
  return detail::max_over_interior(field, [&](std::size_t f, const Mat&, const std::vector<Mat>&, const std::vector<std::size_t>& strides) {
    std::vector<Mat> dw(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) dw[static_cast<std::size_t>(k)] = detail::central_derivative(field, f, strides[static_cast<std::size_t>(k)], k, omega);
    double worst = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j)
        for (int k = j + 1; k < d; ++k) {
          const double v = dw[static_cast<std::size_t>(i)](j, k) + dw[static_cast<std::size_t>(j)](k, i) + dw[static_cast<std::size_t>(k)](i, j);
          worst = std::max(worst, std::abs(v));
        }
    return worst;
  });
}

// ---------------------------------------------------------------------------
// Pipeline

enum class VerdictKind { KahlerWitness, HolonomyObstruction, Inconclusive };

inline std::string to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::KahlerWitness: return "KahlerWitness";
    case VerdictKind::HolonomyObstruction: return "HolonomyObstruction";
    case VerdictKind::Inconclusive: return "Inconclusive";
  }
  return "unknown";
}

inline std::string to_string(LoopKind k) { return k == LoopKind::coordinate_rectangles ? "coordinate_rectangles" : "fourier_random"; }

struct ProbeConfig {
  LoopKind loop_kind = LoopKind::coordinate_rectangles;
  int loops = 6;
  double loop_scale = 0.5;
  std::uint64_t seed = 0;
  int ode_steps = 2000;
  int word_length = 3;
  std::size_t max_samples = 256;
  double mean_tol = 1e-10;
  int mean_max_iter = 500;
  int max_fix_rounds = 200;
  double tol_fix = 1e-5;
  double fix_polish = 1e-12;  // averaging continues toward this while it still improves
  double tol_path = 1e-4;
  double tol_cert = 1e-3;
  int grid = 17;
  int grid_steps = 4;  // RK4 substeps per grid spacing
  bool refine = true;  // repeat the certificates on the grid with halved spacing
  double refinement_factor = 3.0;
  // Residuals already at round-off level carry no discretization error left to decay.
  double refinement_floor = 1e-8;
};

struct CertificateSet {
  int grid = 0;
  double nabla_j = 0.0;
  double nijenhuis = 0.0;
  double d_omega = 0.0;
  double path_independence = 0.0;
};

struct KahlerCertificates {
  double fixedness = 0.0;
  int fix_rounds = 0;
  std::vector<double> fixedness_trace;
  CertificateSet coarse;
  std::optional<CertificateSet> fine;
  bool refinement_ok = true;
};

struct DichotomyVerdict {
  VerdictKind kind = VerdictKind::Inconclusive;
  DeltaConstant delta_used;
  OrthoComplexStructure base_j;
  Vec base_point;
  std::vector<LoopSpec> loop_specs;
  int ode_steps = 0;
  std::optional<OrbitReport> orbit_report;
  // HolonomyObstruction
  std::optional<std::size_t> witness_index;
  LoopWord witness_word;
  double witness_distance = 0.0;
  // KahlerWitness
  std::optional<OrthoComplexStructure> j_prime;
  std::optional<GlobalJField> field;
  std::optional<KahlerCertificates> certificates;
  // Inconclusive
  std::string failed_stage;
  std::string error_code;
  std::string diagnostics;
};

/// Chart's own structure in the orthonormal frame at p when the chart defines one, else canonical_j.
inline OrthoComplexStructure auto_structure(const ManifoldChart& chart, const Vec& p) {
  if (chart.dim % 2 != 0) fail(ErrorCode::OddDimension, "chart dimension is odd");
  if (!chart.complex_structure) return canonical_j(chart.dim / 2);
  const Mat f = orthonormal_frame(chart, p);
  return validate_j(f.triangularView<Eigen::Upper>().solve(chart.complex_structure(p) * f), 1e-8);
}

inline CertificateSet certify(const GlobalJField& field) {
  CertificateSet c;
  c.grid = field.grid_res;
  c.path_independence = field.path_independence_residual;
  c.nabla_j = covariant_constancy_check(field);
  c.nijenhuis = nijenhuis_check(field);
  c.d_omega = kahler_form_check(field);
  return c;
}

inline bool decays(double coarse, double fine, const ProbeConfig& cfg) {
  return coarse < cfg.refinement_floor || coarse >= cfg.refinement_factor * fine;
}

/// Re-derives the witness distance from the loop descriptors alone.
inline double replay_witness(const ManifoldChart& chart, const std::vector<LoopSpec>& specs, const LoopWord& word,
                             const OrthoComplexStructure& base_j, int steps) {
  std::vector<SmoothPath> loops;
  for (const auto& s : specs) loops.push_back(make_path(s));
  const Mat h = polar_orthogonal(parallel_transport(chart, word_path(loops, word), steps * static_cast<int>(word.size())));
  return distance(base_j, conjugate(h, base_j));
}

inline DichotomyVerdict probe(const ManifoldChart& chart, const Vec& p, const std::optional<OrthoComplexStructure>& j_p,
                              const DeltaConstant& delta, const ProbeConfig& cfg = {}) {
  require_inside(chart, p);
  DichotomyVerdict v;
  v.base_point = p;
  v.base_j = j_p ? *j_p : auto_structure(chart, p);
  v.delta_used = delta;
  v.ode_steps = cfg.ode_steps;
  if (v.base_j.dim() != chart.dim) fail(ErrorCode::DimensionMismatch, "J_p dimension differs from the chart");
  if (delta.n * 2 != chart.dim) fail(ErrorCode::DimensionMismatch, "delta constant was computed for another dimension");

  std::string stage;
  auto inconclusive = [&](const std::string& detail, const std::string& code = "") {
    v.kind = VerdictKind::Inconclusive;
    v.failed_stage = stage;
    v.error_code = code;
    v.diagnostics = detail;
    return v;
  };
  try {
    stage = "loops";
    v.loop_specs = loop_family_specs(chart, p, cfg.loop_kind, cfg.loops, cfg.loop_scale, cfg.seed);
    std::vector<SmoothPath> loops;
    for (const auto& s : v.loop_specs) loops.push_back(make_path(s));

    stage = "holonomy";
    const auto samples = holonomy_samples(chart, p, loops, {.steps = cfg.ode_steps, .word_length = cfg.word_length, .max_samples = cfg.max_samples});

    stage = "orbit";
    v.orbit_report = orbit(v.base_j, samples);
    const OrbitReport& rep = *v.orbit_report;
    if (rep.max_distance > delta.delta) {
      v.kind = VerdictKind::HolonomyObstruction;
      v.witness_index = rep.argmax_loop;
      v.witness_word = rep.samples[rep.argmax_loop].word;
      v.witness_distance = rep.max_distance;
      return v;
    }
    if (!near_preservation_test(rep, delta))
      return inconclusive(std::to_string(rep.cut_locus_count) + " orbit points lie on the cut locus of J_p");

    stage = "averaging";
    KahlerCertificates cert;
    const FixedPointResult fixed = iterate_to_fixed(v.base_j, samples, cfg.mean_tol, cfg.fix_polish, delta, cfg.max_fix_rounds, cfg.mean_max_iter);
    v.j_prime = fixed.j_prime;
    cert.fixedness = fixed.fixedness;
    cert.fix_rounds = fixed.rounds;
    cert.fixedness_trace = fixed.fixedness_trace;
    v.certificates = cert;
    stage = "fixedness";
    if (!(fixed.fixedness < cfg.tol_fix))
      return inconclusive("sampled holonomy moves J' by " + std::to_string(fixed.fixedness) + " after " + std::to_string(fixed.rounds) +
                          " averaging rounds");

    stage = "global_field";
    v.field = build_global_j(chart, p, *v.j_prime, cfg.grid, cfg.grid_steps, cfg.seed);
    v.certificates->coarse.path_independence = v.field->path_independence_residual;
    stage = "path_independence";
    if (!(v.field->path_independence_residual < cfg.tol_path))
      return inconclusive("parallel extension depends on the path: " + std::to_string(v.field->path_independence_residual));

    stage = "certificates";
    v.certificates->coarse = certify(*v.field);
    const CertificateSet& c = v.certificates->coarse;
    if (!(c.nabla_j < cfg.tol_cert && c.nijenhuis < cfg.tol_cert && c.d_omega < cfg.tol_cert))
      return inconclusive("certificate residuals exceed " + std::to_string(cfg.tol_cert));

    if (cfg.refine) {
      stage = "refinement";
      const GlobalJField fine = build_global_j(chart, p, *v.j_prime, 2 * cfg.grid - 1, cfg.grid_steps, cfg.seed);
      v.certificates->fine = certify(fine);
      const CertificateSet& f = *v.certificates->fine;
      v.certificates->refinement_ok = decays(c.nabla_j, f.nabla_j, cfg) && decays(c.nijenhuis, f.nijenhuis, cfg) &&
                                      decays(c.d_omega, f.d_omega, cfg) && f.path_independence < cfg.tol_path;
      if (!v.certificates->refinement_ok) return inconclusive("residuals do not decay under grid refinement");
    }
    v.kind = VerdictKind::KahlerWitness;
    return v;
  } catch (const Error& e) {
    return inconclusive(e.detail(), std::string(to_string(e.code())));
  }
}

}  // namespace kahler
