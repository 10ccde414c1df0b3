#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kahler/prober.hpp"

using namespace kahler;

namespace {

const DeltaConstant& delta4() {
  static const DeltaConstant d = delta_2n(2, estimate_epsilon(2, 1000, 7, true), estimate_injectivity(2, 20, 0.01, 7));
  return d;
}

HolonomySample sample_of(const Mat& m) {
  HolonomySample s;
  s.base_point = Vec::Zero(m.rows());
  s.matrix = m;
  s.loop.closed = true;
  return s;
}

Mat plane_rotation(int dim, int a, int b, double angle) {
  Mat r = Mat::Identity(dim, dim);
  r(a, a) = std::cos(angle);
  r(b, b) = std::cos(angle);
  r(a, b) = -std::sin(angle);
  r(b, a) = std::sin(angle);
  return r;
}

// Structure for which the (0, 2) and (1, 3) planes are complex lines.
OrthoComplexStructure crossed_j() {
  Mat j = Mat::Zero(4, 4);
  j(2, 0) = 1;
  j(0, 2) = -1;
  j(3, 1) = 1;
  j(1, 3) = -1;
  return validate_j(j, 1e-15);
}

std::vector<HolonomySample> cyclic_group(int order, int dim, int a, int b) {
  std::vector<HolonomySample> g;
  for (int k = 0; k < order; ++k) g.push_back(sample_of(plane_rotation(dim, a, b, 2 * std::numbers::pi * k / order)));
  return g;
}

// Replaces J at every node by a nearby compatible structure, moved a distance `size` in the
// orthonormal frame along a random tangent direction.
void perturb_field(GlobalJField& field, double size, std::uint64_t seed) {
  for (std::size_t f = 0; f < field.node_count(); ++f) {
    const Vec x = field.point(field.unflatten(f));
    const Mat frame = orthonormal_frame(field.chart, x);
    const auto j = field.j_at(f);
    const auto moved = exp_map(j, random_tangent(j, seed + f, size), 1.0);
    field.set_j_coordinate(f, frame * moved.matrix() * frame.inverse());
  }
}

}  // namespace

TEST(Orbit, TrivialAndCommutingSamples) {
  const auto j = random_j(2, 3);
  const auto rep = orbit(j, {sample_of(Mat::Identity(4, 4)), sample_of(expm(0.7 * j.matrix()))});
  EXPECT_EQ(rep.orbit.size(), 2u);
  EXPECT_LT(max_abs(rep.orbit[0].matrix() - j.matrix()), 1e-15);
  EXPECT_LT(rep.distances[1], 1e-12);
  EXPECT_LT(rep.max_distance, 1e-12);
  EXPECT_TRUE(near_preservation_test(rep, delta4()));
}

TEST(Orbit, InvariantsAndArgmax) {
  const auto j = canonical_j(2);
  std::vector<HolonomySample> s;
  for (double angle : {0.1, 0.4, 0.2}) s.push_back(sample_of(plane_rotation(4, 0, 2, angle)));
  const auto rep = orbit(j, s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_LT(max_abs(rep.orbit[i].matrix() - conjugate(s[i].matrix, j).matrix()), 1e-15);
    EXPECT_NEAR(rep.distances[i], distance(j, rep.orbit[i]), 1e-15);
  }
  EXPECT_EQ(rep.argmax_loop, 1u);
  EXPECT_EQ(rep.max_distance, rep.distances[1]);
}

TEST(Orbit, DeterminantAnomalyIsFlagged) {
  Mat reflection = Mat::Identity(4, 4);
  reflection(0, 0) = -1;
  try {
    orbit(canonical_j(2), {sample_of(reflection)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DeterminantAnomaly);
  }
}

TEST(Orbit, EquivariantUnderConjugation) {
  const auto chart = catalog("round_sphere_4");
  const Vec p = Eigen::Vector4d(0.1, -0.2, 0.2, 0.1);
  const auto samples = holonomy_samples(chart, p, loop_family(chart, p, LoopKind::fourier_random, 5, 0.4, 2), {.steps = 1000, .word_length = 2});
  const auto j = random_j(2, 17);
  std::mt19937_64 rng(18);
  const Mat q = random_special_orthogonal(4, rng);
  auto moved = samples;
  for (auto& s : moved) s.matrix = q.transpose() * s.matrix * q;
  const auto a = orbit(j, samples), b = orbit(conjugate(q, j), moved);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_NEAR(a.distances[i], b.distances[i], 1e-9);
    EXPECT_LT(max_abs(conjugate(q, a.orbit[i]).matrix() - b.orbit[i].matrix()), 1e-9);
  }
}

TEST(Orbit, SphereHolonomyMovesEveryStructure) {
  const auto chart = catalog("round_sphere_4");
  const Vec p = Vec::Zero(4);
  const auto samples = holonomy_samples(chart, p, loop_family(chart, p, LoopKind::fourier_random, 6, 0.5, 4), {.steps = 1000, .word_length = 1});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto j = random_j(2, seed);
    EXPECT_GT(orbit(j, samples).max_distance, 1e-2);
    EXPECT_GT(fixedness_check(j, samples), 1e-2);
  }
}

TEST(NearPreservation, Boundary) {
  const auto j = canonical_j(2);
  OrbitReport rep = orbit(j, {sample_of(Mat::Identity(4, 4))});
  EXPECT_TRUE(near_preservation_test(rep, delta4()));
  rep.max_distance = delta4().delta;
  EXPECT_TRUE(near_preservation_test(rep, delta4()));
  rep.max_distance = delta4().delta + 1e-6;
  EXPECT_FALSE(near_preservation_test(rep, delta4()));
  DeltaConstant other = delta4();
  other.n = 3;
  try {
    near_preservation_test(rep, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(AverageToFixed, SingletonOrbit) {
  const auto j = random_j(2, 5);
  const auto m = average_to_fixed(orbit(j, {sample_of(Mat::Identity(4, 4))}), 1e-10, delta4());
  EXPECT_LT(max_abs(m.mean.matrix() - j.matrix()), 1e-15);
}

TEST(AverageToFixed, TwoPointOrbitOfAnInvolutiveSquare) {
  // Q is itself a complex structure, so Q^2 = -I acts trivially and {I, Q, Q^2, Q^3} is a group
  // whose orbit through J is {J, Q^-1 J Q}.
  const auto j = canonical_j(2);
  const auto q = exp_map(j, random_tangent(j, 40, 0.3), 1.0);
  const Mat qm = q.matrix();
  std::vector<HolonomySample> group;
  for (int k = 0; k < 4; ++k) {
    Mat power = Mat::Identity(4, 4);
    for (int i = 0; i < k; ++i) power = power * qm;
    group.push_back(sample_of(power));
  }
  const auto rep = orbit(j, group);
  const double tol = 1e-10;
  const auto m = average_to_fixed(rep, tol, delta4());
  const auto other = conjugate(qm, j);
  const auto midpoint = exp_map(j, log_map(j, other), 0.5);
  EXPECT_LT(max_abs(m.mean.matrix() - midpoint.matrix()), 1e-9);
  EXPECT_LT(distance(m.mean, conjugate(qm, m.mean)), 10 * tol);
  EXPECT_GT(distance(j, other), 0.1);
}

TEST(AverageToFixed, FiniteCyclicHolonomy) {
  const auto group = cyclic_group(5, 4, 0, 2);
  const auto j = exp_map(crossed_j(), random_tangent(crossed_j(), 9, 0.25), 1.0);
  const double tol = 1e-10;
  const auto m = average_to_fixed(orbit(j, group), tol, delta4());
  for (const auto& h : group) EXPECT_LT(distance(m.mean, conjugate(h.matrix, m.mean)), 10 * tol);
  EXPECT_LT(fixedness_check(m.mean, group), 10 * tol);
  EXPECT_GT(fixedness_check(j, group), 1e-2);
}

TEST(AverageToFixed, ConvexityViolationIsReported) {
  const auto j = canonical_j(2);
  DeltaConstant tiny = delta4();
  tiny.delta = 1e-3;
  try {
    average_to_fixed(orbit(j, cyclic_group(5, 4, 0, 2)), 1e-10, tiny);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConvexityViolation);
  }
}

TEST(FixednessCheck, IdentitySamples) {
  EXPECT_LT(fixedness_check(random_j(2, 1), {sample_of(Mat::Identity(4, 4)), sample_of(Mat::Identity(4, 4))}), 1e-14);
}

TEST(IterateToFixed, SampledSubsetOfAGroupConverges) {
  // Two rotations that do not form a group; the structures they both fix still attract.
  const std::vector<HolonomySample> s = {sample_of(plane_rotation(4, 0, 2, 0.9)), sample_of(plane_rotation(4, 1, 3, -1.2))};
  const auto start = exp_map(crossed_j(), random_tangent(crossed_j(), 3, 0.2), 1.0);
  const auto r = iterate_to_fixed(start, s, 1e-12, 1e-12, delta4(), 200);
  EXPECT_LT(r.fixedness, 1e-9);
  EXPECT_GT(r.rounds, 1);
  for (std::size_t i = 1; i < r.fixedness_trace.size(); ++i) EXPECT_LE(r.fixedness, r.fixedness_trace[i]);
}

TEST(BuildGlobalJ, FlatTorusIsConstant) {
  const auto chart = catalog("flat_torus_4");
  const auto j = random_j(2, 6);
  const auto field = build_global_j(chart, Vec::Constant(4, 0.5), j, 9, 4);
  EXPECT_EQ(field.node_count(), 6561u);
  for (std::size_t f = 0; f < field.node_count(); ++f) EXPECT_LT(max_abs(field.j_at(f).matrix() - j.matrix()), 1e-10);
  EXPECT_LT(field.path_independence_residual, 1e-10);
  EXPECT_GE(field.path_checks, 10);
  EXPECT_LT(covariant_constancy_check(field), 1e-8);
  EXPECT_LT(nijenhuis_check(field), 1e-8);
  EXPECT_LT(kahler_form_check(field), 1e-8);
}

TEST(BuildGlobalJ, FubiniStudyStructureExtendsConsistently) {
  const auto chart = catalog("fubini_study_cp2");
  const Vec p = Eigen::Vector4d(0.1, -0.2, 0.05, 0.15);
  const auto field = build_global_j(chart, p, auto_structure(chart, p), 17, 4, 3);
  EXPECT_LT(field.path_independence_residual, 1e-4);
  EXPECT_LT(field.structure_defect, 1e-8);
  // The extension is multiplication by i in the chart.
  for (std::size_t f = 0; f < field.node_count(); f += 97)
    EXPECT_LT(max_abs(field.j_coordinate(f) - canonical_j(2).matrix()), 1e-9);
  EXPECT_LT(covariant_constancy_check(field), 1e-3);
  EXPECT_LT(nijenhuis_check(field), 1e-3);
  EXPECT_LT(kahler_form_check(field), 1e-3);
}

TEST(BuildGlobalJ, SphereNegativeControlDependsOnThePath) {
  const auto chart = catalog("round_sphere_4");
  const auto field = build_global_j(chart, Vec::Zero(4), canonical_j(2), 9, 40, 1);
  EXPECT_GT(field.path_independence_residual, 1e-2);
}

TEST(Certificates, KahlerFormRefinementDecay) {
  const auto chart = catalog("fubini_study_cp2");
  const auto j0 = [](const Vec&) -> Mat { return canonical_j(2).matrix(); };
  const double coarse = kahler_form_check(sample_field(chart, 17, j0));
  const double fine = kahler_form_check(sample_field(chart, 33, j0));
  EXPECT_LT(coarse, 1e-3);
  EXPECT_GT(coarse / fine, 3.0);
}

TEST(Certificates, PerturbedFieldFailsEveryCheck) {
  const auto chart = catalog("fubini_study_cp2");
  const Vec p = Vec::Zero(4);
  auto field = build_global_j(chart, p, auto_structure(chart, p), 17, 4);
  const double h = field.spacing(0);
  perturb_field(field, 1e-2, 77);
  EXPECT_LT(field.structure_defect, 1e-8);
  EXPECT_GT(covariant_constancy_check(field), 1e-2 / h);
  EXPECT_GT(nijenhuis_check(field), 1e-2);
  EXPECT_GT(kahler_form_check(field), 1e-2);
}

TEST(Certificates, NonIntegrableRotatingStructureOnTheTorus) {
  const auto chart = catalog("flat_torus_4");
  // J(x) = R J0 R^T with R = exp(theta(x0) K) rotating the (0, 2) plane.
  Mat k = Mat::Zero(4, 4);
  k(0, 2) = -1;
  k(2, 0) = 1;
  const Mat j0 = canonical_j(2).matrix();
  auto theta = [](double x0) { return 0.8 * std::sin(2 * std::numbers::pi * x0); };
  auto dtheta = [](double x0) { return 0.8 * 2 * std::numbers::pi * std::cos(2 * std::numbers::pi * x0); };
  auto jfield = [&](const Vec& x) -> Mat {
    const Mat r = expm(theta(x(0)) * k);
    return r * j0 * r.transpose();
  };
  const auto field = sample_field(chart, 33, jfield);
  const double residual = nijenhuis_check(field);

  // Oracle at one node: N(e_a, e_b) = [J e_a, J e_b] - J[J e_a, e_b] - J[e_a, J e_b] for the
  // coordinate fields, with the exact derivative d_0 J = theta' [K, J].
  const std::vector<int> idx = {11, 16, 16, 16};
  const Vec x = field.point(idx);
  const Mat j = jfield(x);
  auto dj = [&](int axis) -> Mat { return axis == 0 ? Mat(dtheta(x(0)) * (k * j - j * k)) : Mat(Mat::Zero(4, 4)); };
  auto derivative_along = [&](const Vec& v, int col) {  // directional derivative of x -> J(x) e_col along v
    Vec out = Vec::Zero(4);
    for (int a = 0; a < 4; ++a) out += v(a) * dj(a).col(col);
    return out;
  };
  double oracle_max = 0;
  std::vector<Mat> djs;
  for (int a = 0; a < 4; ++a) djs.push_back(dj(a));
  const auto numeric = nijenhuis_tensor(j, djs);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const Vec va = j.col(a), vb = j.col(b);
      const Vec bracket = derivative_along(va, b) - derivative_along(vb, a);  // [J e_a, J e_b]
      const Vec ja_b = -dj(b).col(a);  // [J e_a, e_b]
      const Vec a_jb = dj(a).col(b);  // [e_a, J e_b]
      const Vec n = bracket - j * ja_b - j * a_jb;
      for (int i = 0; i < 4; ++i) {
        oracle_max = std::max(oracle_max, std::abs(n(i)));
        EXPECT_NEAR(numeric[static_cast<std::size_t>((i * 4 + a) * 4 + b)], n(i), 1e-12);
      }
    }
  EXPECT_GT(oracle_max, 0.5);

  // Finite differences on the grid reproduce the oracle at that node.
  std::vector<Mat> fd;
  const std::size_t f = field.flat(idx);
  for (int a = 0; a < 4; ++a) {
    std::size_t stride = 1;
    for (int b = 3; b > a; --b) stride *= static_cast<std::size_t>(field.grid_res);
    fd.push_back(detail::central_derivative(field, f, stride, a, [&](std::size_t g) { return field.j_coordinate(g); }));
  }
  const auto from_grid = nijenhuis_tensor(field.j_coordinate(f), fd);
  for (std::size_t i = 0; i < from_grid.size(); ++i) EXPECT_NEAR(from_grid[i], numeric[i], 1e-3 * std::max(1.0, std::abs(numeric[i])));
  EXPECT_GT(residual, 0.5);
}

TEST(Certificates, CoarseGridIsRejected) {
  const auto chart = catalog("flat_torus_4");
  const auto field = sample_field(chart, 8, [](const Vec&) -> Mat { return canonical_j(2).matrix(); });
  for (auto check : {covariant_constancy_check, nijenhuis_check, kahler_form_check}) {
    try {
      check(field);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::GridTooCoarse);
    }
  }
}

TEST(Probe, FlatTorusIsKahler) {
  const auto chart = catalog("flat_torus_4");
  ProbeConfig cfg;
  cfg.grid = 9;
  cfg.refine = false;
  const auto v = probe(chart, Vec::Constant(4, 0.5), std::nullopt, delta4(), cfg);
  ASSERT_EQ(v.kind, VerdictKind::KahlerWitness) << v.failed_stage << ": " << v.diagnostics;
  EXPECT_EQ(v.orbit_report->max_distance, 0.0);
  EXPECT_LT(v.certificates->coarse.nabla_j, 1e-8);
  EXPECT_LT(v.certificates->coarse.nijenhuis, 1e-8);
  EXPECT_LT(v.certificates->coarse.d_omega, 1e-8);
}

TEST(Probe, RoundSphereIsObstructedWithReplayableWitness) {
  const auto chart = catalog("round_sphere_4");
  const auto v = probe(chart, Vec::Zero(4), std::nullopt, delta4());
  ASSERT_EQ(v.kind, VerdictKind::HolonomyObstruction);
  EXPECT_GT(v.witness_distance, v.delta_used.delta);
  EXPECT_FALSE(v.certificates.has_value());
  const double replayed = replay_witness(chart, v.loop_specs, v.witness_word, v.base_j, v.ode_steps);
  EXPECT_NEAR(replayed, v.witness_distance, 1e-6);
  EXPECT_GT(replayed, delta4().delta);
}

TEST(Probe, FubiniStudyIsKahlerAndPullsPerturbationsBack) {
  const auto chart = catalog("fubini_study_cp2");
  const Vec p = Vec::Zero(4);
  ProbeConfig cfg;
  cfg.refine = false;
  const auto jfs = auto_structure(chart, p);
  const double s = delta4().delta / 4;
  const auto start = exp_map(jfs, random_tangent(jfs, 12, 1.0), s);
  const auto v = probe(chart, p, start, delta4(), cfg);
  ASSERT_EQ(v.kind, VerdictKind::KahlerWitness) << v.failed_stage << ": " << v.diagnostics;
  EXPECT_LE(v.orbit_report->max_distance, delta4().delta);
  EXPECT_LT(v.certificates->fixedness, 1e-5);
  EXPECT_LT(distance(*v.j_prime, jfs), 0.1 * s);
}

TEST(Probe, FailuresAreInconclusiveNotVerdicts) {
  const auto chart = catalog("fubini_study_cp2");
  ProbeConfig cfg;
  cfg.loop_scale = 1.5;  // leaves the chart
  auto v = probe(chart, Vec::Zero(4), std::nullopt, delta4(), cfg);
  EXPECT_EQ(v.kind, VerdictKind::Inconclusive);
  EXPECT_EQ(v.failed_stage, "loops");
  EXPECT_EQ(v.error_code, "LoopEscapesDomain");

  cfg = ProbeConfig{};
  cfg.grid = 9;
  cfg.refine = false;
  cfg.tol_cert = 1e-12;
  v = probe(chart, Vec::Zero(4), std::nullopt, delta4(), cfg);
  EXPECT_EQ(v.kind, VerdictKind::Inconclusive);
  EXPECT_EQ(v.failed_stage, "certificates");

  try {
    probe(chart, Vec::Constant(4, 2.0), std::nullopt, delta4(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutsideDomain);
  }
}

TEST(Probe, NeverWitnessesKahlerBeyondDelta) {
  // A delta so small that the Fubini-Study orbit of a perturbed J exceeds it.
  const auto chart = catalog("fubini_study_cp2");
  const Vec p = Vec::Zero(4);
  DeltaConstant small = delta4();
  small.delta = 0.05;
  const auto jfs = auto_structure(chart, p);
  ProbeConfig cfg;
  cfg.grid = 9;
  cfg.refine = false;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto v = probe(chart, p, exp_map(jfs, random_tangent(jfs, seed, 0.3), 1.0), small, cfg);
    if (v.orbit_report && v.orbit_report->max_distance > small.delta) EXPECT_NE(v.kind, VerdictKind::KahlerWitness);
    EXPECT_EQ(v.kind, VerdictKind::HolonomyObstruction);
  }
}
