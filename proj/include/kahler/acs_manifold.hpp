#pragma once

// The space of metric almost complex structures on (R^{2n}, <,>), viewed as the
// homogeneous space O(2n)/U(n) with metric <phi, psi> = tr(phi psi^T).
//
// Everything here works in orthonormal coordinates, where the adjoint is the transpose.
// Geodesics are exp(tX) J exp(-tX) for X skew and anticommuting with J, which is the
// same curve as exp(2tX) J. The tangent vector phi and the Lie direction X are related by
// phi = 2 X J, X = -phi J / 2.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kahler/errors.hpp"
#include "kahler/linalg.hpp"

namespace kahler {

inline constexpr double kTolAlg = 1e-10;
inline constexpr double kTolLog = 1e-8;

/// A point of the space: J with J^2 = -I and J^T J = I.
class OrthoComplexStructure {
 public:
  OrthoComplexStructure() = default;

  Eigen::Index dim() const { return mat_.rows(); }
  Eigen::Index n() const { return mat_.rows() / 2; }
  const Mat& matrix() const { return mat_; }

  /// Wraps a matrix without checking. Only for values produced by closed operations.
  static OrthoComplexStructure unchecked(Mat m) {
    OrthoComplexStructure j;
    j.mat_ = std::move(m);
    return j;
  }

 private:
  Mat mat_;
};

/// Tangent vector phi at base: phi J = -J phi, phi^T = -phi.
struct TangentPhi {
  OrthoComplexStructure base;
  Mat mat;
};

/// Skew X anticommuting with base; the Lie-algebra side of a tangent vector.
struct LieDirection {
  OrthoComplexStructure base;
  Mat mat;
};

inline LieDirection to_lie(const TangentPhi& phi) {
  return {phi.base, -0.5 * phi.mat * phi.base.matrix()};
}

inline TangentPhi to_phi(const LieDirection& x) { return {x.base, 2.0 * x.mat * x.base.matrix()}; }

/// Block-diagonal J0 with n blocks [[0,-1],[1,0]].
inline OrthoComplexStructure canonical_j(int n) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "canonical_j requires n >= 1");
  Mat j = Mat::Zero(2 * n, 2 * n);
  for (int k = 0; k < n; ++k) {
    j(2 * k, 2 * k + 1) = -1.0;
    j(2 * k + 1, 2 * k) = 1.0;
  }
  return OrthoComplexStructure::unchecked(std::move(j));
}

inline OrthoComplexStructure validate_j(const Mat& mat, double tol = kTolAlg) {
  if (mat.rows() != mat.cols()) fail(ErrorCode::InvalidArgument, "matrix is not square");
  if (mat.rows() == 0 || mat.rows() % 2 != 0)
    fail(ErrorCode::OddDimension, "dimension " + std::to_string(mat.rows()) + " is not even and positive");
  const Mat id = Mat::Identity(mat.rows(), mat.cols());
  const double square_defect = max_abs(mat * mat + id);
  if (!(square_defect <= tol))
    fail(ErrorCode::NotAComplexStructure, "max |J^2 + I| = " + std::to_string(square_defect));
  const double orth_defect = std::max(max_abs(mat.transpose() * mat - id), max_abs(mat.transpose() + mat));
  if (!(orth_defect <= tol))
    fail(ErrorCode::NotOrthogonal, "max |J^T J - I|, |J^T + J| = " + std::to_string(orth_defect));
  return OrthoComplexStructure::unchecked(mat);
}

inline void require_same_dim(const OrthoComplexStructure& a, const OrthoComplexStructure& b) {
  if (a.dim() != b.dim())
    fail(ErrorCode::DimensionMismatch,
         "dimensions " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
}

inline void require_same_base(const OrthoComplexStructure& a, const OrthoComplexStructure& b) {
  require_same_dim(a, b);
  if (max_abs(a.matrix() - b.matrix()) > kTolAlg)
    fail(ErrorCode::BasePointMismatch, "tangent vectors live at different base points");
}

/// Checks the tangent-space invariants and wraps the matrix.
inline TangentPhi make_tangent(const OrthoComplexStructure& base, const Mat& mat, double tol = kTolAlg) {
  if (mat.rows() != base.dim() || mat.cols() != base.dim())
    fail(ErrorCode::DimensionMismatch, "tangent matrix size does not match base point");
  const Mat& j = base.matrix();
  const double scale = std::max(1.0, max_abs(mat));
  if (max_abs(mat + mat.transpose()) > tol * scale)
    fail(ErrorCode::InvalidArgument, "tangent matrix is not skew-symmetric");
  if (max_abs(mat * j + j * mat) > tol * scale)
    fail(ErrorCode::InvalidArgument, "tangent matrix does not anticommute with J");
  return {base, mat};
}

inline TangentPhi zero_tangent(const OrthoComplexStructure& base) {
  return {base, Mat::Zero(base.dim(), base.dim())};
}

/// Orthonormal basis (e1, J e1, e2, J e2, ...) built from the standard basis in order.
/// Satisfies B^T J B = canonical_j(n).
inline Mat adapted_basis(const OrthoComplexStructure& j) {
  const Eigen::Index d = j.dim();
  const Mat& jm = j.matrix();
  Mat basis(d, d);
  Eigen::Index filled = 0;
  for (Eigen::Index k = 0; k < d && filled < d; ++k) {
    Vec v = Vec::Unit(d, k);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index c = 0; c < filled; ++c) v -= basis.col(c).dot(v) * basis.col(c);
    }
    const double norm = v.norm();
    if (norm < 0.5) continue;
    v /= norm;
    basis.col(filled) = v;
    basis.col(filled + 1) = jm * v;
    filled += 2;
  }
  return basis;
}

/// Orientation class (+1 or -1) of J: the sign of det of a J-adapted orthonormal basis.
/// The two classes are the two connected components of the space.
inline int orientation_class(const OrthoComplexStructure& j) {
  return adapted_basis(j).determinant() > 0 ? 1 : -1;
}

/// Q with conjugate(Q, from) = to, i.e. Q^T from Q = to. Q is special orthogonal when both
/// structures lie in the same component.
inline Mat aligning_rotation(const OrthoComplexStructure& from, const OrthoComplexStructure& to) {
  require_same_dim(from, to);
  return adapted_basis(from) * adapted_basis(to).transpose();
}

/// tr(phi psi^T).
inline double metric_inner(const TangentPhi& phi, const TangentPhi& psi) {
  require_same_base(phi.base, psi.base);
  return frobenius_inner(phi.mat, psi.mat);
}

inline double tangent_norm(const TangentPhi& phi) { return phi.mat.norm(); }

/// Frobenius-orthogonal projection of an arbitrary matrix onto the tangent space at J.
inline TangentPhi project_tangent(const OrthoComplexStructure& j, const Mat& a) {
  if (a.rows() != j.dim() || a.cols() != j.dim())
    fail(ErrorCode::DimensionMismatch, "matrix size does not match base point");
  const Mat s = skew_part(a);
  return {j, 0.5 * (s + j.matrix() * s * j.matrix())};
}

inline OrthoComplexStructure exp_map(const OrthoComplexStructure& j, const TangentPhi& phi, double t) {
  require_same_base(j, phi.base);
  const Mat x = -0.5 * phi.mat * j.matrix();
  const Mat e = expm(t * x);
  return OrthoComplexStructure::unchecked(e * j.matrix() * e.transpose());
}

inline TangentPhi log_map(const OrthoComplexStructure& j1, const OrthoComplexStructure& j2) {
  require_same_dim(j1, j2);
  if (orientation_class(j1) != orientation_class(j2))
    fail(ErrorCode::ComponentMismatch, "structures lie in different orientation classes");

  const Eigen::Index d = j1.dim();
  const Mat& a = j1.matrix();
  const Mat r = j2.matrix() * a.transpose();
  const Mat id = Mat::Identity(d, d);
  const double gap = min_singular_value(r + id);
  if (gap < 1e-7) fail(ErrorCode::CutLocus, "J2 J1^-1 has an eigenvalue at -1 (gap " + std::to_string(gap) + ")");

  const Mat x = 0.5 * logm(r);
  const double skew_defect = max_abs(x + x.transpose());
  const double anti_defect = max_abs(x * a + a * x);
  const Mat e = expm(x);
  const double round_trip = max_abs(e * a * e.transpose() - j2.matrix());
  if (skew_defect > kTolLog || anti_defect > kTolLog || round_trip > kTolLog) {
    // Near the cut locus the principal logarithm is too ill-conditioned to trust.
    const ErrorCode code = gap < 1e-3 ? ErrorCode::CutLocus : ErrorCode::ComponentMismatch;
    fail(code, "logarithm round-trip failed (skew " + std::to_string(skew_defect) + ", anticommute " +
                   std::to_string(anti_defect) + ", reconstruction " + std::to_string(round_trip) + ")");
  }
  return project_tangent(j1, 2.0 * x * a);
}

inline double distance(const OrthoComplexStructure& j1, const OrthoComplexStructure& j2) {
  return tangent_norm(log_map(j1, j2));
}

/// Q^{-1} J Q.
inline OrthoComplexStructure conjugate(const Mat& q, const OrthoComplexStructure& j) {
  if (q.rows() != j.dim() || q.cols() != j.dim())
    fail(ErrorCode::DimensionMismatch, "group element size does not match structure");
  if (!is_orthogonal(q, kTolAlg))
    fail(ErrorCode::NotOrthogonalGroupElement, "Q^T Q != I, defect " + std::to_string(orthogonality_defect(q)));
  return OrthoComplexStructure::unchecked(q.transpose() * j.matrix() * q);
}

/// Tangent vector carried along by conjugation: Q^T phi Q at conjugate(Q, base).
inline TangentPhi conjugate(const Mat& q, const TangentPhi& phi) {
  return {conjugate(q, phi.base), q.transpose() * phi.mat * q};
}

/// Symmetric-space sectional curvature of the plane spanned by phi, psi.
inline double sectional_curvature(const OrthoComplexStructure& j, const TangentPhi& phi, const TangentPhi& psi) {
  require_same_base(j, phi.base);
  require_same_base(j, psi.base);
  const Mat x = -0.5 * phi.mat * j.matrix();
  const Mat y = -0.5 * psi.mat * j.matrix();
  auto q = [](const Mat& a, const Mat& b) { return 4.0 * frobenius_inner(a, b); };
  const double gram = q(x, x) * q(y, y) - q(x, y) * q(x, y);
  if (gram < 1e-14) fail(ErrorCode::DegeneratePlane, "Gram determinant " + std::to_string(gram));
  const Mat br = commutator(x, y);
  return q(br, br) / gram;
}

/// canonical_j(n) conjugated by a Haar-random special orthogonal matrix; deterministic per seed.
inline OrthoComplexStructure random_j(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Mat q = random_special_orthogonal(2 * n, rng);
  return conjugate(q, canonical_j(n));
}

inline TangentPhi random_tangent(const OrthoComplexStructure& j, std::uint64_t seed, double norm) {
  if (!(norm > 0)) fail(ErrorCode::InvalidArgument, "norm must be positive");
  for (std::uint64_t attempt = 0; attempt < 8; ++attempt) {
    std::mt19937_64 rng(seed + attempt * 0x9E3779B97F4A7C15ULL);
    const Mat a = gaussian_matrix(j.dim(), j.dim(), rng);
    TangentPhi phi = project_tangent(j, a);
    const double len = tangent_norm(phi);
    if (len > 1e-12 * std::max(1.0, a.norm())) {
      phi.mat *= norm / len;
      return phi;
    }
  }
  fail(ErrorCode::ZeroProjection, "tangent space is zero-dimensional or projection vanished");
}

/// Orthonormal basis of the tangent space at J (dimension n(n-1)), as tangent vectors.
inline std::vector<TangentPhi> tangent_basis(const OrthoComplexStructure& j) {
  const Eigen::Index d = j.dim();
  std::vector<TangentPhi> basis;
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = a + 1; b < d; ++b) {
      Mat e = Mat::Zero(d, d);
      e(a, b) = 1.0;
      e(b, a) = -1.0;
      Mat v = project_tangent(j, e).mat;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : basis) v -= frobenius_inner(u.mat, v) * u.mat;
      const double len = v.norm();
      if (len > 1e-8) basis.push_back({j, v / len});
    }
  }
  return basis;
}

}  // namespace kahler
