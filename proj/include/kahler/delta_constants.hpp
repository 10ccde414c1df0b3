#pragma once

// Numerical estimates of the curvature bound, the injectivity radius, and the constant
//   delta = min(inj / 2, pi / (4 sqrt(eps)))
// for the space of structures on R^{2n}. The space is homogeneous, so every estimate is
// taken at canonical_j(n).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "kahler/acs_manifold.hpp"
#include "kahler/parallel.hpp"

namespace kahler {

enum class CurvatureMethod { sampled, refined, user_override };

inline std::string to_string(CurvatureMethod m) {
  switch (m) {
    case CurvatureMethod::sampled: return "sampled";
    case CurvatureMethod::refined: return "refined";
    case CurvatureMethod::user_override: return "user_override";
  }
  return "unknown";
}

inline constexpr double kCurvatureSafetyFactor = 1.05;

struct CurvatureBound {
  int n = 0;
  double epsilon = 0.0;
  CurvatureMethod method = CurvatureMethod::sampled;
  int samples = 0;
  double max_sampled = 0.0;  // largest curvature actually observed
};

struct InjectivityEstimate {
  int n = 0;
  double inj_lower = 0.0;
  int directions_sampled = 0;
  double resolution = 0.0;
  // Smallest parameter at which some direction stopped (log failure or lost minimality).
  double first_stop = 0.0;
  // Largest |distance - t| seen before any direction stopped.
  double max_march_deviation = 0.0;
};

struct DeltaConstant {
  int n = 0;
  double delta = 0.0;
  double epsilon_used = 0.0;
  double inj_used = 0.0;
};

namespace detail {

struct Plane {
  Vec a;
  Vec b;
};

inline Mat combine(const std::vector<TangentPhi>& basis, const Vec& coeff) {
  Mat m = Mat::Zero(basis.front().mat.rows(), basis.front().mat.cols());
  for (std::size_t k = 0; k < basis.size(); ++k) m += coeff(static_cast<Eigen::Index>(k)) * basis[k].mat;
  return m;
}

// The basis is orthonormal, so orthonormalizing the coefficient vectors orthonormalizes the
// plane. Nearly parallel pairs are rejected: their Gram determinant is all round-off.
inline double plane_curvature(const OrthoComplexStructure& j, const std::vector<TangentPhi>& basis, const Plane& p) {
  const double na = p.a.norm();
  if (!(na > 0)) return -std::numeric_limits<double>::infinity();
  const Vec a = p.a / na;
  Vec b = p.b - p.b.dot(a) * a;
  const double nb = b.norm();
  if (nb < 1e-6 * p.b.norm() || !(nb > 0)) return -std::numeric_limits<double>::infinity();
  b /= nb;
  try {
    return sectional_curvature(j, {j, combine(basis, a)}, {j, combine(basis, b)});
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

// Coordinate ascent over the coefficients of both spanning vectors.
inline double ascend(const OrthoComplexStructure& j, const std::vector<TangentPhi>& basis, Plane p) {
  double best = plane_curvature(j, basis, p);
  double step = 0.1;
  const Eigen::Index m = p.a.size();
  for (int sweep = 0; sweep < 20000 && step > 1e-9; ++sweep) {
    const double before = best;
    for (Eigen::Index k = 0; k < 2 * m; ++k) {
      Vec& v = k < m ? p.a : p.b;
      const Eigen::Index idx = k % m;
      for (double sign : {1.0, -1.0}) {
        v(idx) += sign * step;
        const double value = plane_curvature(j, basis, p);
        if (value > best) {
          best = value;
          break;
        }
        v(idx) -= sign * step;
      }
    }
    p.a.normalize();
    p.b.normalize();
    best = std::max(best, plane_curvature(j, basis, p));
    if (best - before < 1e-10) step *= 0.5;
  }
  return best;
}

}  // namespace detail

/// Largest sampled sectional curvature at canonical_j(n), times the safety factor.
inline CurvatureBound estimate_epsilon(int n, int num_samples, std::uint64_t seed, bool refine) {
  if (n < 2) fail(ErrorCode::DimensionTooSmall, "no tangent 2-planes when n = 1");
  if (num_samples < 100) fail(ErrorCode::InvalidArgument, "num_samples must be at least 100");

  const auto j = canonical_j(n);
  const auto basis = tangent_basis(j);
  const auto m = static_cast<Eigen::Index>(basis.size());

  std::mt19937_64 rng(seed);
  std::vector<detail::Plane> planes(static_cast<std::size_t>(num_samples));
  for (auto& p : planes) {
    p.a = gaussian_matrix(m, 1, rng);
    p.b = gaussian_matrix(m, 1, rng);
  }
  std::vector<double> values(planes.size());
  parallel_for(planes.size(), [&](std::size_t i) { values[i] = detail::plane_curvature(j, basis, planes[i]); });

  double best = *std::max_element(values.begin(), values.end());
  if (refine) {
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t top = std::min<std::size_t>(10, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t x, std::size_t y) { return values[x] > values[y] || (values[x] == values[y] && x < y); });
    std::vector<double> refined(top);
    parallel_for(top, [&](std::size_t i) { refined[i] = detail::ascend(j, basis, planes[order[i]]); });
    best = std::max(best, *std::max_element(refined.begin(), refined.end()));
  }
  if (!(best > 0)) fail(ErrorCode::DegeneratePlane, "no positively curved plane found");

  CurvatureBound bound;
  bound.n = n;
  bound.max_sampled = best;
  bound.epsilon = kCurvatureSafetyFactor * best;
  bound.method = refine ? CurvatureMethod::refined : CurvatureMethod::sampled;
  bound.samples = num_samples;
  return bound;
}

inline CurvatureBound user_curvature_bound(int n, double epsilon) {
  if (!(epsilon > 0) || !std::isfinite(epsilon)) fail(ErrorCode::InvalidArgument, "epsilon must be positive and finite");
  CurvatureBound bound;
  bound.n = n;
  bound.epsilon = epsilon;
  bound.method = CurvatureMethod::user_override;
  return bound;
}

/// Conservative lower bound on the injectivity radius: march along random unit geodesics
/// until the logarithm fails or distance(J, exp(t phi)) drops below t - 2 * resolution.
inline InjectivityEstimate estimate_injectivity(int n, int num_directions, double resolution, std::uint64_t seed) {
  if (n < 2) fail(ErrorCode::DimensionTooSmall, "the space is discrete when n = 1");
  if (!(resolution > 0) || resolution > 0.01) fail(ErrorCode::InvalidArgument, "resolution must lie in (0, 0.01]");
  if (num_directions < 1) fail(ErrorCode::InvalidArgument, "num_directions must be positive");

  const auto j = canonical_j(n);
  std::vector<TangentPhi> directions;
  directions.reserve(static_cast<std::size_t>(num_directions));
  for (int k = 0; k < num_directions; ++k) directions.push_back(random_tangent(j, seed * 1000003ULL + static_cast<std::uint64_t>(k), 1.0));

  struct March {
    double stop = 0.0;
    double deviation = 0.0;
  };
  std::vector<March> marches(directions.size());
  // Diameter of the space is finite; this cap is never reached for n >= 2.
  const double t_cap = 64.0 * std::numbers::pi;
  parallel_for(directions.size(), [&](std::size_t i) {
    March m;
    for (long step = 1;; ++step) {
      const double t = static_cast<double>(step) * resolution;
      if (t > t_cap) fail(ErrorCode::DidNotConverge, "geodesic march did not stop");
      double d = 0.0;
      try {
        d = distance(j, exp_map(j, directions[i], t));
      } catch (const Error&) {
        m.stop = t;
        break;
      }
      if (d < t - 2.0 * resolution) {
        m.stop = t;
        break;
      }
      m.deviation = std::max(m.deviation, std::abs(d - t));
    }
    marches[i] = m;
  });

  InjectivityEstimate est;
  est.n = n;
  est.resolution = resolution;
  est.directions_sampled = num_directions;
  est.first_stop = std::numeric_limits<double>::infinity();
  for (const auto& m : marches) est.first_stop = std::min(est.first_stop, m.stop);
  for (const auto& m : marches) est.max_march_deviation = std::max(est.max_march_deviation, m.deviation);
  est.inj_lower = est.first_stop - resolution;
  return est;
}

inline InjectivityEstimate user_injectivity(int n, double inj) {
  if (!(inj > 0)) fail(ErrorCode::InvalidArgument, "injectivity radius must be positive");
  InjectivityEstimate est;
  est.n = n;
  est.inj_lower = inj;
  est.first_stop = inj;
  return est;
}

inline DeltaConstant delta_2n(int n, const CurvatureBound& eps, const InjectivityEstimate& inj) {
  if (eps.n != n || inj.n != n)
    fail(ErrorCode::DimensionMismatch, "curvature/injectivity estimates were computed for another dimension");
  if (n < 2) fail(ErrorCode::DimensionTooSmall, "delta is defined for n > 1");
  if (!(eps.epsilon > 0) || !(inj.inj_lower > 0)) fail(ErrorCode::InvalidArgument, "inputs must be positive");
  DeltaConstant d;
  d.n = n;
  d.epsilon_used = eps.epsilon;
  d.inj_used = inj.inj_lower;
  d.delta = std::min(inj.inj_lower / 2.0, std::numbers::pi / (4.0 * std::sqrt(eps.epsilon)));
  return d;
}

struct ConvexityCompatibility {
  double convex_radius = 0.0;  // min(inj / 2, pi / (2 sqrt(eps)))
  double karcher_diameter = 0.0;  // pi / (2 sqrt(eps))
  bool ball_is_convex = false;  // delta <= convex_radius
  bool diameter_ok = false;  // 2 delta <= karcher_diameter
};

inline ConvexityCompatibility convexity_compatibility(const DeltaConstant& d) {
  ConvexityCompatibility c;
  c.karcher_diameter = std::numbers::pi / (2.0 * std::sqrt(d.epsilon_used));
  c.convex_radius = std::min(d.inj_used / 2.0, c.karcher_diameter);
  c.ball_is_convex = d.delta <= c.convex_radius;
  c.diameter_ok = 2.0 * d.delta <= c.karcher_diameter;
  return c;
}

}  // namespace kahler
