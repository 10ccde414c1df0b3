#pragma once

// Riemannian center of mass of a finite weighted set of structures:
//   E(y) = 1/2 sum_i w_i d(x_i, y)^2,  grad E(y) = -sum_i w_i log_y(x_i).
// The minimizer is found by gradient descent along geodesics with Armijo halving.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "kahler/acs_manifold.hpp"
#include "kahler/delta_constants.hpp"
#include "kahler/parallel.hpp"

namespace kahler {

/// A discrete probability measure on one component of the space.
class WeightedSampleSet {
 public:
  WeightedSampleSet(std::vector<OrthoComplexStructure> points, std::vector<double> weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.empty()) fail(ErrorCode::InvalidArgument, "sample set is empty");
    if (points_.size() != weights_.size()) fail(ErrorCode::DimensionMismatch, "points and weights differ in length");
    double total = 0;
    for (double w : weights_) {
      if (!(w >= 0)) fail(ErrorCode::InvalidArgument, "weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidArgument, "weights sum to " + std::to_string(total));
    const int cls = orientation_class(points_.front());
    for (const auto& p : points_) {
      require_same_dim(points_.front(), p);
      if (orientation_class(p) != cls) fail(ErrorCode::ComponentMismatch, "sample set spans both components");
    }
  }

  static WeightedSampleSet uniform(std::vector<OrthoComplexStructure> points) {
    const std::size_t count = points.size();
    return WeightedSampleSet(std::move(points), std::vector<double>(count, count ? 1.0 / static_cast<double>(count) : 0.0));
  }

  const std::vector<OrthoComplexStructure>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return points_.size(); }

  std::size_t heaviest() const {
    return static_cast<std::size_t>(std::max_element(weights_.begin(), weights_.end()) - weights_.begin());
  }

 private:
  std::vector<OrthoComplexStructure> points_;
  std::vector<double> weights_;
};

struct MeanResult {
  OrthoComplexStructure mean;
  int iterations = 0;
  double final_grad_norm = 0.0;
  double energy = 0.0;
  bool converged = false;
  std::vector<double> energy_trace;
};

inline double karcher_energy(const OrthoComplexStructure& y, const WeightedSampleSet& s) {
  std::vector<double> terms(s.size());
  parallel_for(s.size(), [&](std::size_t i) {
    const double d = distance(s.points()[i], y);
    terms[i] = s.weights()[i] * d * d;
  });
  double total = 0;
  for (double t : terms) total += t;  // fixed order
  return 0.5 * total;
}

inline TangentPhi karcher_gradient(const OrthoComplexStructure& y, const WeightedSampleSet& s) {
  std::vector<Mat> terms(s.size());
  parallel_for(s.size(), [&](std::size_t i) { terms[i] = s.weights()[i] * log_map(y, s.points()[i]).mat; });
  Mat g = Mat::Zero(y.dim(), y.dim());
  for (const auto& t : terms) g -= t;
  return {y, g};
}

struct ConvexityReport {
  bool ball_ok = false;
  bool diameter_ok = false;
  std::size_t center_index = 0;
  double center_radius = std::numeric_limits<double>::infinity();
  double diameter = std::numeric_limits<double>::infinity();
  double radius_bound = 0.0;  // 2 delta
  double diameter_bound = 0.0;  // pi / (2 sqrt(eps))

  bool ok() const { return ball_ok && diameter_ok; }
};

/// Checks the hypotheses for a unique center of mass: some sample point sees all others
/// within 2 delta, and the diameter is at most pi / (2 sqrt(eps)).
inline ConvexityReport check_convexity(const WeightedSampleSet& s, const DeltaConstant& delta) {
  if (s.points().front().n() != delta.n)
    fail(ErrorCode::DimensionMismatch, "delta constant was computed for another dimension");
  const std::size_t count = s.size();
  std::vector<double> dist(count * count, 0.0);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = i + 1; k < count; ++k) pairs.emplace_back(i, k);
  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [i, k] = pairs[p];
    double d = std::numeric_limits<double>::infinity();
    try {
      d = distance(s.points()[i], s.points()[k]);
    } catch (const Error&) {
    }
    dist[i * count + k] = d;
    dist[k * count + i] = d;
  });

  ConvexityReport r;
  r.radius_bound = 2.0 * delta.delta;
  r.diameter_bound = std::numbers::pi / (2.0 * std::sqrt(delta.epsilon_used));
  r.diameter = 0;
  for (std::size_t i = 0; i < count; ++i) {
    double radius = 0;
    for (std::size_t k = 0; k < count; ++k) radius = std::max(radius, dist[i * count + k]);
    r.diameter = std::max(r.diameter, radius);
    if (radius < r.center_radius) {
      r.center_radius = radius;
      r.center_index = i;
    }
  }
  r.ball_ok = r.center_radius <= r.radius_bound;
  r.diameter_ok = r.diameter <= r.diameter_bound;
  return r;
}

struct KarcherOptions {
  double tol = 1e-10;
  int max_iter = 500;
  std::optional<DeltaConstant> delta;  // when set, the convexity hypotheses are enforced
  std::optional<OrthoComplexStructure> start;  // default: heaviest sample point
};

inline MeanResult karcher_mean(const WeightedSampleSet& s, const KarcherOptions& opt = {}) {
  if (!(opt.tol >= 1e-12)) fail(ErrorCode::InvalidArgument, "tolerance must be at least 1e-12");
  if (opt.delta) {
    const auto report = check_convexity(s, *opt.delta);
    if (!report.ok())
      fail(ErrorCode::ConvexityViolation, "sample set radius " + std::to_string(report.center_radius) + " / diameter " +
                                              std::to_string(report.diameter) + " exceed the convexity bounds");
  }

  MeanResult r;
  OrthoComplexStructure y = opt.start ? *opt.start : s.points()[s.heaviest()];
  double energy = karcher_energy(y, s);
  r.energy_trace.push_back(energy);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const TangentPhi grad = karcher_gradient(y, s);
    const double gnorm = tangent_norm(grad);
    r.iterations = it;
    r.final_grad_norm = gnorm;
    if (gnorm < opt.tol) {
      r.converged = true;
      break;
    }
    const TangentPhi descent{y, -grad.mat};
    // Differences below this are round-off in the energy sum.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::max(energy, 1e-300);
    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      OrthoComplexStructure candidate = exp_map(y, descent, step);
      double e = 0;
      try {
        e = karcher_energy(candidate, s);
      } catch (const Error&) {
        continue;
      }
      if (e <= energy - 1e-4 * step * gnorm * gnorm + slack) {
        y = std::move(candidate);
        energy = e;
        accepted = true;
        break;
      }
    }
    r.energy_trace.push_back(energy);
    if (!accepted) break;
  }
  r.mean = y;
  r.energy = energy;
  return r;
}

}  // namespace kahler
