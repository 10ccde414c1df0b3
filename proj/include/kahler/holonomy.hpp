#pragma once

// Chart-defined Riemannian manifolds, Levi-Civita parallel transport by RK4, and sampled
// holonomy expressed in orthonormal frames at the base point.

#include <algorithm>
#include <array>
#include <complex>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "kahler/acs_manifold.hpp"
#include "kahler/errors.hpp"
#include "kahler/linalg.hpp"
#include "kahler/parallel.hpp"

namespace kahler {

/// Gamma^k_ij stored densely, k slowest.
class Christoffel {
 public:
  Christoffel() = default;
  explicit Christoffel(int dim) : dim_(dim), data_(static_cast<std::size_t>(dim * dim * dim), 0.0) {}

  int dim() const { return dim_; }
  double& operator()(int k, int i, int j) { return data_[static_cast<std::size_t>((k * dim_ + i) * dim_ + j)]; }
  double operator()(int k, int i, int j) const { return data_[static_cast<std::size_t>((k * dim_ + i) * dim_ + j)]; }
  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  /// A(k, j) = Gamma^k_ij v^i: the connection matrix along direction v.
  void contract_direction(const Vec& v, Mat& a) const {
    a.setZero(dim_, dim_);
    for (int k = 0; k < dim_; ++k)
      for (int i = 0; i < dim_; ++i) {
        const double vi = v(i);
        if (vi == 0.0) continue;
        for (int j = 0; j < dim_; ++j) a(k, j) += (*this)(k, i, j) * vi;
      }
  }

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

struct Box {
  Vec lower;
  Vec upper;

  Vec center() const { return 0.5 * (lower + upper); }
  Vec width() const { return upper - lower; }
};

using MetricFn = std::function<Mat(const Vec&)>;
using ChristoffelFn = std::function<void(const Vec&, Christoffel&)>;
using StructureFn = std::function<Mat(const Vec&)>;

struct ManifoldChart {
  int dim = 0;
  MetricFn metric;
  Box domain;
  bool periodic = false;  // coordinates wrap; the metric is periodic with the box
  ChristoffelFn christoffel;  // optional analytic Christoffel symbols
  StructureFn complex_structure;  // optional coordinate-frame structure used for AUTO probes
  std::string name;
};

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Strictly inside the domain with the given margin (always true for periodic charts).
inline bool inside(const ManifoldChart& chart, const Vec& x, double margin = 0.0) {
  if (x.size() != chart.dim) return false;
  if (chart.periodic) return x.allFinite();
  for (int i = 0; i < chart.dim; ++i) {
    if (!(x(i) > chart.domain.lower(i) + margin && x(i) < chart.domain.upper(i) - margin)) return false;
  }
  return true;
}

inline void require_inside(const ManifoldChart& chart, const Vec& x, double margin = 0.0) {
  if (!inside(chart, x, margin)) fail(ErrorCode::OutsideDomain, "point lies outside the chart " + chart.name);
}

/// Central-difference Christoffels: Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij).
inline void christoffel_fd(const ManifoldChart& chart, const Vec& x, Christoffel& out) {
  const int d = chart.dim;
  const double h = kFiniteDifferenceStep;
  require_inside(chart, x, 2 * h);
  std::vector<Mat> dg(static_cast<std::size_t>(d));
  Vec xp = x, xm = x;
  for (int i = 0; i < d; ++i) {
    xp(i) = x(i) + h;
    xm(i) = x(i) - h;
    dg[static_cast<std::size_t>(i)] = (chart.metric(xp) - chart.metric(xm)) / (2 * h);
    xp(i) = x(i);
    xm(i) = x(i);
  }
  const Mat g = chart.metric(x);
  Eigen::LDLT<Mat> ldlt(g);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0))
    fail(ErrorCode::MetricNotInvertible, "metric is singular in chart " + chart.name);
  const Mat ginv = ldlt.solve(Mat::Identity(d, d));
  if (out.dim() != d) out = Christoffel(d);
  // lowered(l, i, j) = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      Vec lowered(d);
      for (int l = 0; l < d; ++l)
        lowered(l) = 0.5 * (dg[static_cast<std::size_t>(i)](j, l) + dg[static_cast<std::size_t>(j)](i, l) -
                            dg[static_cast<std::size_t>(l)](i, j));
      const Vec raised = ginv * lowered;
      for (int k = 0; k < d; ++k) {
        out(k, i, j) = raised(k);
        out(k, j, i) = raised(k);
      }
    }
}

inline void christoffel(const ManifoldChart& chart, const Vec& x, Christoffel& out) {
  if (chart.christoffel) {
    require_inside(chart, x);
    if (out.dim() != chart.dim) out = Christoffel(chart.dim);
    chart.christoffel(x, out);
    return;
  }
  christoffel_fd(chart, x, out);
}

inline Christoffel christoffel(const ManifoldChart& chart, const Vec& x) {
  Christoffel out(chart.dim);
  christoffel(chart, x, out);
  return out;
}

/// Columns form a g(x)-orthonormal basis (Gram-Schmidt on e_0, e_1, ... in order).
inline Mat orthonormal_frame(const ManifoldChart& chart, const Vec& x) {
  require_inside(chart, x);
  return gram_schmidt_frame(chart.metric(x));
}

// ---------------------------------------------------------------------------
// Paths and loops

struct RectangleLoop {
  Vec base;
  int axis_a = 0;
  int axis_b = 1;
  double side_a = 0.0;
  double side_b = 0.0;
};

struct FourierLoop {
  Vec base;
  Mat sin_coeff;  // row k-1 multiplies sin(2 pi k t)
  Mat cos_coeff;  // row k-1 multiplies cos(2 pi k t) - 1
};

/// Closed polygon through the listed vertices, returning to the first.
struct PolygonLoop {
  std::vector<Vec> vertices;
};

using LoopSpec = std::variant<RectangleLoop, FourierLoop, PolygonLoop>;

/// One smooth piece parameterized over s in [0, 1].
struct PathSegment {
  std::function<Vec(double)> point;
  std::function<Vec(double)> velocity;
};

/// Piecewise-smooth path; the pieces share the unit parameter interval equally and RK4
/// steps never straddle a corner.
struct SmoothPath {
  std::vector<PathSegment> segments;
  bool closed = false;

  Vec start() const { return segments.front().point(0.0); }
  Vec end() const { return segments.back().point(1.0); }

  Vec at(double t) const {
    const auto count = static_cast<double>(segments.size());
    const double scaled = std::clamp(t, 0.0, 1.0) * count;
    const auto idx = std::min(segments.size() - 1, static_cast<std::size_t>(scaled));
    return segments[idx].point(scaled - static_cast<double>(idx));
  }
};

inline PathSegment line_segment(const Vec& from, const Vec& to) {
  const Vec delta = to - from;
  return {[from, delta](double s) -> Vec { return from + s * delta; }, [delta](double) -> Vec { return delta; }};
}

inline SmoothPath polyline(const std::vector<Vec>& vertices, bool close) {
  SmoothPath path;
  for (std::size_t i = 0; i + 1 < vertices.size(); ++i) path.segments.push_back(line_segment(vertices[i], vertices[i + 1]));
  if (close) path.segments.push_back(line_segment(vertices.back(), vertices.front()));
  path.closed = close || (vertices.front() - vertices.back()).cwiseAbs().maxCoeff() <= 1e-12;
  return path;
}

inline SmoothPath make_path(const LoopSpec& spec) {
  return std::visit(
      [](const auto& loop) -> SmoothPath {
        using T = std::decay_t<decltype(loop)>;
        if constexpr (std::is_same_v<T, RectangleLoop>) {
          Vec a = loop.base, b = loop.base, c = loop.base;
          a(loop.axis_a) += loop.side_a;
          b(loop.axis_a) += loop.side_a;
          b(loop.axis_b) += loop.side_b;
          c(loop.axis_b) += loop.side_b;
          return polyline({loop.base, a, b, c}, true);
        } else if constexpr (std::is_same_v<T, FourierLoop>) {
          const Vec base = loop.base;
          const Mat sc = loop.sin_coeff, cc = loop.cos_coeff;
          PathSegment seg{[base, sc, cc](double t) -> Vec {
                            Vec x = base;
                            for (Eigen::Index k = 0; k < sc.rows(); ++k) {
                              const double w = 2 * std::numbers::pi * static_cast<double>(k + 1);
                              x += std::sin(w * t) * sc.row(k).transpose() + (std::cos(w * t) - 1.0) * cc.row(k).transpose();
                            }
                            return x;
                          },
                          [sc, cc](double t) -> Vec {
                            Vec v = Vec::Zero(sc.cols());
                            for (Eigen::Index k = 0; k < sc.rows(); ++k) {
                              const double w = 2 * std::numbers::pi * static_cast<double>(k + 1);
                              v += w * std::cos(w * t) * sc.row(k).transpose() - w * std::sin(w * t) * cc.row(k).transpose();
                            }
                            return v;
                          }};
          SmoothPath path;
          path.segments.push_back(std::move(seg));
          path.closed = true;
          return path;
        } else {
          return polyline(loop.vertices, true);
        }
      },
      spec);
}

inline SmoothPath reversed(const SmoothPath& path) {
  SmoothPath out;
  out.closed = path.closed;
  for (auto it = path.segments.rbegin(); it != path.segments.rend(); ++it) {
    const PathSegment seg = *it;
    out.segments.push_back({[seg](double s) { return seg.point(1.0 - s); }, [seg](double s) -> Vec { return -seg.velocity(1.0 - s); }});
  }
  return out;
}

/// First a, then b.
inline SmoothPath concatenate(const SmoothPath& a, const SmoothPath& b) {
  SmoothPath out;
  out.segments = a.segments;
  out.segments.insert(out.segments.end(), b.segments.begin(), b.segments.end());
  out.closed = (out.start() - out.end()).cwiseAbs().maxCoeff() <= 1e-12;
  return out;
}

inline void require_path_inside(const ManifoldChart& chart, const SmoothPath& path, ErrorCode code, int samples_per_segment = 256) {
  for (const auto& seg : path.segments) {
    for (int s = 0; s <= samples_per_segment; ++s) {
      const Vec x = seg.point(static_cast<double>(s) / samples_per_segment);
      if (!inside(chart, x, 2 * kFiniteDifferenceStep))
        fail(code, "path leaves the domain of chart " + chart.name);
    }
  }
}

// ---------------------------------------------------------------------------
// Transport

/// Integrates dV/dt = -A(x(t), x'(t)) V with classical RK4 across one segment, in place.
inline void transport_segment(const ManifoldChart& chart, const PathSegment& seg, int steps, Mat& v, Christoffel& work_gamma) {
  const int d = chart.dim;
  const double h = 1.0 / steps;
  Mat a0(d, d), a_mid(d, d), a1(d, d), k1(d, d), k2(d, d), k3(d, d), k4(d, d), tmp(d, d);
  auto connection = [&](double s, Mat& a) {
    christoffel(chart, seg.point(s), work_gamma);
    work_gamma.contract_direction(seg.velocity(s), a);
  };
  connection(0.0, a0);
  for (int step = 0; step < steps; ++step) {
    const double s = step * h;
    connection(s + 0.5 * h, a_mid);
    connection(s + h, a1);
    k1.noalias() = -a0 * v;
    tmp = v + 0.5 * h * k1;
    k2.noalias() = -a_mid * tmp;
    tmp = v + 0.5 * h * k2;
    k3.noalias() = -a_mid * tmp;
    tmp = v + h * k3;
    k4.noalias() = -a1 * tmp;
    v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    std::swap(a0, a1);
  }
}

/// Coordinate-frame transport matrix P: columns are the transported coordinate basis.
inline Mat transport_coordinate(const ManifoldChart& chart, const SmoothPath& path, int steps) {
  if (path.segments.empty()) return Mat::Identity(chart.dim, chart.dim);
  const int per_segment = std::max(1, (steps + static_cast<int>(path.segments.size()) - 1) / static_cast<int>(path.segments.size()));
  Mat v = Mat::Identity(chart.dim, chart.dim);
  Christoffel gamma(chart.dim);
  for (const auto& seg : path.segments) transport_segment(chart, seg, per_segment, v, gamma);
  return v;
}

inline constexpr double kMaxOrthogonalityDefect = 1e-4;

/// Transport expressed in orthonormal frames at both ends: F(q)^{-1} P F(p).
inline Mat parallel_transport_raw(const ManifoldChart& chart, const SmoothPath& path, int steps) {
  if (steps < 1) fail(ErrorCode::InvalidArgument, "steps must be positive");
  const Vec p = path.start(), q = path.end();
  require_inside(chart, p);
  require_inside(chart, q);
  const Mat coord = transport_coordinate(chart, path, steps);
  const Mat fp = orthonormal_frame(chart, p);
  const Mat fq = orthonormal_frame(chart, q);
  return fq.triangularView<Eigen::Upper>().solve(coord * fp);
}

inline Mat parallel_transport(const ManifoldChart& chart, const SmoothPath& path, int steps) {
  if (steps < 100) fail(ErrorCode::InvalidArgument, "parallel_transport requires at least 100 steps");
  require_path_inside(chart, path, ErrorCode::OutsideDomain);
  Mat m = parallel_transport_raw(chart, path, steps);
  const double defect = orthogonality_defect(m);
  if (defect > kMaxOrthogonalityDefect)
    fail(ErrorCode::StepTooCoarse, "orthogonality defect " + std::to_string(defect) + " with " + std::to_string(steps) + " steps");
  return m;
}

// ---------------------------------------------------------------------------
// Loop families

enum class LoopKind { coordinate_rectangles, fourier_random };

inline std::vector<LoopSpec> loop_family_specs(const ManifoldChart& chart, const Vec& p, LoopKind kind, int count, double scale,
                                               std::uint64_t seed) {
  if (count < 1) fail(ErrorCode::InvalidArgument, "count must be positive");
  if (!(scale > 0)) fail(ErrorCode::InvalidArgument, "scale must be positive");
  require_inside(chart, p);
  const int d = chart.dim;
  std::vector<LoopSpec> specs;
  if (kind == LoopKind::coordinate_rectangles) {
    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) pairs.emplace_back(a, b);
    for (int k = 0; k < count; ++k) {
      const auto& [a, b] = pairs[static_cast<std::size_t>(k) % pairs.size()];
      const auto cycle = static_cast<std::size_t>(k) / pairs.size();
      RectangleLoop r{p, a, b, (cycle % 2 == 0 ? 1.0 : -1.0) * scale, ((cycle / 2) % 2 == 0 ? 1.0 : -1.0) * scale};
      specs.emplace_back(std::move(r));
    }
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    for (int k = 0; k < count; ++k) {
      FourierLoop f{p, Mat(3, d), Mat(3, d)};
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < d; ++c) {
          f.sin_coeff(r, c) = uniform(rng);
          f.cos_coeff(r, c) = uniform(rng);
        }
      // Per coordinate, |x - p| <= sum_k |a_k| + 2 |b_k|; normalize that bound to scale.
      for (int c = 0; c < d; ++c) {
        const double reach = f.sin_coeff.col(c).cwiseAbs().sum() + 2.0 * f.cos_coeff.col(c).cwiseAbs().sum();
        f.sin_coeff.col(c) *= scale / reach;
        f.cos_coeff.col(c) *= scale / reach;
      }
      specs.emplace_back(std::move(f));
    }
  }
  for (const auto& s : specs) require_path_inside(chart, make_path(s), ErrorCode::LoopEscapesDomain);
  return specs;
}

inline std::vector<SmoothPath> loop_family(const ManifoldChart& chart, const Vec& p, LoopKind kind, int count, double scale,
                                           std::uint64_t seed) {
  std::vector<SmoothPath> loops;
  for (const auto& s : loop_family_specs(chart, p, kind, count, scale, seed)) loops.push_back(make_path(s));
  return loops;
}

// ---------------------------------------------------------------------------
// Holonomy samples

/// A word in the base loops: +k means loop k-1, -k its reverse; traversed left to right.
using LoopWord = std::vector<int>;

struct HolonomySample {
  Vec base_point;
  LoopWord word;
  SmoothPath loop;
  Mat matrix;  // orthonormal-frame holonomy after polar correction
  int ode_steps = 0;
  double orthogonality_defect = 0.0;  // before correction
};

struct HolonomyOptions {
  int steps = 2000;
  int word_length = 3;  // 1 = base loops only
  std::size_t max_samples = 256;
};

inline SmoothPath word_path(const std::vector<SmoothPath>& loops, const LoopWord& word) {
  SmoothPath path;
  for (int letter : word) {
    const auto& loop = loops.at(static_cast<std::size_t>(std::abs(letter) - 1));
    path = path.segments.empty() ? (letter > 0 ? loop : reversed(loop)) : concatenate(path, letter > 0 ? loop : reversed(loop));
  }
  path.closed = true;
  return path;
}

/// Holonomy around the base loops, optionally closed under products and inverses up to
/// word_length letters (shortlex order, duplicates dropped, capped at max_samples).
inline std::vector<HolonomySample> holonomy_samples(const ManifoldChart& chart, const Vec& p, const std::vector<SmoothPath>& loops,
                                                    const HolonomyOptions& opt = {}) {
  require_inside(chart, p);
  for (const auto& loop : loops) {
    if ((loop.start() - p).cwiseAbs().maxCoeff() > 1e-12 || (loop.end() - p).cwiseAbs().maxCoeff() > 1e-12)
      fail(ErrorCode::InvalidArgument, "loop is not closed at the base point");
  }
  std::vector<HolonomySample> base(loops.size());
  parallel_for(loops.size(), [&](std::size_t i) {
    Mat raw = parallel_transport(chart, loops[i], opt.steps);
    HolonomySample s;
    s.base_point = p;
    s.word = {static_cast<int>(i) + 1};
    s.loop = loops[i];
    s.ode_steps = opt.steps;
    s.orthogonality_defect = orthogonality_defect(raw);
    s.matrix = polar_orthogonal(raw);
    base[i] = std::move(s);
  });
  if (opt.word_length <= 1) return base;

  std::vector<HolonomySample> out;
  auto is_new = [&](const Mat& m) {
    for (const auto& s : out)
      if (max_abs(s.matrix - m) < 1e-9) return false;
    return true;
  };
  // Generators: each loop and its inverse.
  std::vector<std::pair<int, const HolonomySample*>> generators;
  for (std::size_t i = 0; i < base.size(); ++i) generators.emplace_back(static_cast<int>(i) + 1, &base[i]);
  for (std::size_t i = 0; i < base.size(); ++i) generators.emplace_back(-static_cast<int>(i) - 1, &base[i]);

  auto letter_matrix = [](int letter, const HolonomySample& s) -> Mat { return letter > 0 ? s.matrix : Mat(s.matrix.transpose()); };
  std::vector<HolonomySample> level;
  for (const auto& [letter, s] : generators) {
    HolonomySample g = *s;
    g.word = {letter};
    g.matrix = letter_matrix(letter, *s);
    if (letter < 0) g.loop = reversed(s->loop);
    if (out.size() < opt.max_samples && is_new(g.matrix)) out.push_back(g);
    level.push_back(std::move(g));
  }
  for (int length = 2; length <= opt.word_length && out.size() < opt.max_samples; ++length) {
    std::vector<HolonomySample> next;
    for (const auto& prefix : level) {
      for (const auto& [letter, s] : generators) {
        if (letter == -prefix.word.back()) continue;
        HolonomySample w;
        w.base_point = p;
        w.word = prefix.word;
        w.word.push_back(letter);
        // The loop traversed later acts after the earlier ones.
        w.matrix = polar_orthogonal(letter_matrix(letter, *s) * prefix.matrix);
        w.ode_steps = opt.steps;
        w.orthogonality_defect = std::max(prefix.orthogonality_defect, s->orthogonality_defect);
        w.loop = word_path(loops, w.word);
        if (out.size() < opt.max_samples && is_new(w.matrix)) out.push_back(w);
        next.push_back(std::move(w));
        if (out.size() >= opt.max_samples) break;
      }
      if (out.size() >= opt.max_samples) break;
    }
    level = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Catalog

namespace detail {

inline Box cube(int dim, double lo, double hi) {
  return {Vec::Constant(dim, lo), Vec::Constant(dim, hi)};
}

// Round metric of radius 1 in stereographic coordinates: g = 4 / (1 + |x|^2)^2 * I.
inline Mat stereographic_metric(const Vec& x) {
  const double c = 2.0 / (1.0 + x.squaredNorm());
  return Mat::Identity(x.size(), x.size()) * (c * c);
}

// Conformal metric e^{2f} I: Gamma^k_ij = delta_ik f_j + delta_jk f_i - delta_ij f_k,
// with f = log 2 - log(1 + |x|^2). Applied to the coordinate block [offset, offset + len).
inline void stereographic_christoffel_block(const Vec& x, int offset, int len, Christoffel& g) {
  const Vec y = x.segment(offset, len);
  const double denom = 1.0 + y.squaredNorm();
  for (int k = 0; k < len; ++k)
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < len; ++j) {
        double v = 0;
        if (i == k) v += -2.0 * y(j) / denom;
        if (j == k) v += -2.0 * y(i) / denom;
        if (i == j) v -= -2.0 * y(k) / denom;
        g(offset + k, offset + i, offset + j) = v;
      }
}

// Fubini-Study in the affine chart C^2 = R^4, coordinates (x1, y1, x2, y2).
// h_ab = delta_ab / (1 + |z|^2) - conj(z_a) z_b / (1 + |z|^2)^2 and g(u, v) = Re(sum h_ab u_a conj(v_b)).
inline Mat fubini_study_metric(const Vec& x) {
  using C = std::complex<double>;
  const int n = static_cast<int>(x.size()) / 2;
  std::vector<C> z(static_cast<std::size_t>(n));
  double r2 = 0;
  for (int a = 0; a < n; ++a) {
    z[static_cast<std::size_t>(a)] = C(x(2 * a), x(2 * a + 1));
    r2 += std::norm(z[static_cast<std::size_t>(a)]);
  }
  const double s = 1.0 + r2;
  Mat g(2 * n, 2 * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const C h = (a == b ? C(1.0 / s) : C(0.0)) - std::conj(z[static_cast<std::size_t>(a)]) * z[static_cast<std::size_t>(b)] / (s * s);
      // Real basis vector for x_a is the complex unit e_a, for y_a it is i e_a.
      g(2 * a, 2 * b) = h.real();
      g(2 * a, 2 * b + 1) = (h * std::conj(C(0, 1))).real();
      g(2 * a + 1, 2 * b) = (C(0, 1) * h).real();
      g(2 * a + 1, 2 * b + 1) = (C(0, 1) * h * std::conj(C(0, 1))).real();
    }
  return g;
}

// Levi-Civita connection of a Kahler metric only mixes holomorphic indices:
// Gamma^a_bc = -(delta_ab conj(z_c) + delta_ac conj(z_b)) / (1 + |z|^2) for Fubini-Study.
// In real coordinates, Gamma(u, v) is the real vector with complex components
// sum_bc Gamma^a_bc u_b v_c, where u_b = u_{x_b} + i u_{y_b}.
inline void fubini_study_christoffel(const Vec& x, Christoffel& g) {
  using C = std::complex<double>;
  constexpr int kMaxN = 8;
  const int n = static_cast<int>(x.size()) / 2;
  if (n > kMaxN) fail(ErrorCode::InvalidArgument, "Fubini-Study chart supports complex dimension up to 8");
  std::array<C, kMaxN> z{};
  double r2 = 0;
  for (int a = 0; a < n; ++a) {
    z[static_cast<std::size_t>(a)] = C(x(2 * a), x(2 * a + 1));
    r2 += std::norm(z[static_cast<std::size_t>(a)]);
  }
  const double s = 1.0 + r2;
  auto gamma_c = [&](int a, int b, int c) {
    C v = 0;
    if (a == b) v -= std::conj(z[static_cast<std::size_t>(c)]);
    if (a == c) v -= std::conj(z[static_cast<std::size_t>(b)]);
    return v / s;
  };
  const C unit[2] = {C(1, 0), C(0, 1)};
  for (int i = 0; i < 2 * n; ++i)
    for (int j = 0; j < 2 * n; ++j) {
      const int b = i / 2, c = j / 2;
      const C ub = unit[i % 2], vc = unit[j % 2];
      for (int a = 0; a < n; ++a) {
        const C w = gamma_c(a, b, c) * ub * vc;
        g(2 * a, i, j) = w.real();
        g(2 * a + 1, i, j) = w.imag();
      }
    }
}

}  // namespace detail

inline const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {"flat_torus_4", "round_sphere_2", "round_sphere_4", "fubini_study_cp2",
                                                 "product_s2_s2"};
  return names;
}

inline ManifoldChart catalog(const std::string& name) {
  ManifoldChart c;
  c.name = name;
  if (name == "flat_torus_4") {
    c.dim = 4;
    c.domain = detail::cube(4, 0.0, 1.0);
    c.periodic = true;
    c.metric = [](const Vec&) -> Mat { return Mat::Identity(4, 4); };
    c.christoffel = [](const Vec&, Christoffel& g) { g.set_zero(); };
  } else if (name == "round_sphere_2" || name == "round_sphere_4") {
    const int d = name == "round_sphere_2" ? 2 : 4;
    c.dim = d;
    c.domain = detail::cube(d, -4.0, 4.0);
    c.metric = detail::stereographic_metric;
    c.christoffel = [d](const Vec& x, Christoffel& g) { detail::stereographic_christoffel_block(x, 0, d, g); };
  } else if (name == "fubini_study_cp2") {
    c.dim = 4;
    c.domain = detail::cube(4, -1.0, 1.0);
    c.metric = detail::fubini_study_metric;
    c.christoffel = detail::fubini_study_christoffel;
    c.complex_structure = [](const Vec&) -> Mat { return canonical_j(2).matrix(); };
  } else if (name == "product_s2_s2") {
    c.dim = 4;
    c.domain = detail::cube(4, -4.0, 4.0);
    c.metric = [](const Vec& x) -> Mat {
      Mat g = Mat::Zero(4, 4);
      g.topLeftCorner(2, 2) = detail::stereographic_metric(x.head(2));
      g.bottomRightCorner(2, 2) = detail::stereographic_metric(x.tail(2));
      return g;
    };
    c.christoffel = [](const Vec& x, Christoffel& g) {
      g.set_zero();
      detail::stereographic_christoffel_block(x, 0, 2, g);
      detail::stereographic_christoffel_block(x, 2, 2, g);
    };
    c.complex_structure = [](const Vec&) -> Mat { return canonical_j(2).matrix(); };
  } else {
    fail(ErrorCode::UnknownManifold, "no catalog chart named '" + name + "'");
  }
  return c;
}

}  // namespace kahler
