#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "kahler/errors.hpp"

namespace kahler {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double frobenius_inner(const Mat& a, const Mat& b) { return a.cwiseProduct(b).sum(); }

inline Mat skew_part(const Mat& a) { return 0.5 * (a - a.transpose()); }

inline Mat commutator(const Mat& a, const Mat& b) { return a * b - b * a; }

inline bool is_orthogonal(const Mat& q, double tol) {
  return q.rows() == q.cols() && max_abs(q.transpose() * q - Mat::Identity(q.rows(), q.cols())) <= tol;
}

inline double orthogonality_defect(const Mat& q) {
  return max_abs(q.transpose() * q - Mat::Identity(q.rows(), q.cols()));
}

/// Matrix exponential (Pade with scaling and squaring).
inline Mat expm(const Mat& a) { return a.exp(); }

/// Principal matrix logarithm. Undefined when the argument has eigenvalues on the
/// closed negative real axis; callers are expected to screen for that.
inline Mat logm(const Mat& a) { return a.log(); }

/// Nearest orthogonal matrix in Frobenius norm (orthogonal factor of the polar decomposition).
inline Mat polar_orthogonal(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Smallest singular value; for a normal matrix R, sigma_min(R + I) is the distance
/// from the spectrum to -1.
inline double min_singular_value(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues().minCoeff();
}

/// Gram-Schmidt on the coordinate basis e_0, e_1, ... with respect to the inner product
/// `gram`. Returns F (upper triangular, positive diagonal) with F^T * gram * F = I.
/// Gram-Schmidt in this order coincides with the inverse transpose of the Cholesky factor.
inline Mat gram_schmidt_frame(const Mat& gram) {
  const Eigen::Index d = gram.rows();
  Mat frame = Mat::Zero(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    Vec v = Vec::Unit(d, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      v -= (frame.col(j).dot(gram * v)) * frame.col(j);
    }
    const double norm2 = v.dot(gram * v);
    if (!(norm2 > 1e-300)) fail(ErrorCode::MetricNotInvertible, "metric is not positive definite");
    frame.col(k) = v / std::sqrt(norm2);
  }
  return frame;
}

inline Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// Haar-distributed special orthogonal matrix: QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q, then one column flipped if det = -1.
inline Mat random_special_orthogonal(Eigen::Index dim, std::mt19937_64& rng) {
  Mat g = gaussian_matrix(dim, dim, rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (r(k, k) < 0) q.col(k) = -q.col(k);
  }
  if (q.determinant() < 0) q.col(0) = -q.col(0);
  return q;
}

}  // namespace kahler
