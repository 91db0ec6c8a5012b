// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "error.hpp"

namespace hjparisi {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Tolerance used for every PSD membership test in the library.
inline constexpr double kPsdTol = 1e-10;

/// Entrywise scalar product a . b = tr(a b^T).
inline double frob_dot(const Mat& a, const Mat& b) { return (a.array() * b.array()).sum(); }

inline double frob_norm(const Mat& a) { return a.norm(); }

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline bool is_psd(const Mat& a, double tol = kPsdTol) { return min_eigenvalue(a) >= -tol; }

/// Principal square root of a PSD matrix. Eigenvalues in [-tol, 0) are
/// clamped to zero; anything more negative is reported as NotPsd.
inline Mat psd_sqrt(const Mat& a, double tol = kPsdTol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  Vec lambda = es.eigenvalues();
  require(lambda.size() == 0 || lambda.minCoeff() >= -tol, ErrorCode::NotPsd,
          "matrix has eigenvalue " + std::to_string(lambda.size() ? lambda.minCoeff() : 0.0));
  lambda = lambda.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

/// Euclidean projection onto the PSD cone (eigenvalue clipping).
inline Mat clip_psd(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  Vec lambda = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

/// Solves s X + X s = a for symmetric X, given symmetric positive definite s.
inline Mat solve_symmetric_sylvester(const Mat& s, const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(s));
  const Vec& mu = es.eigenvalues();
  require(mu.minCoeff() > 0.0, ErrorCode::Singular, "Sylvester operator is singular");
  const Mat& v = es.eigenvectors();
  Mat x = v.transpose() * a * v;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) /= mu(i) + mu(j);
  return symmetrize(v * x * v.transpose());
}

/// Orthonormal-free basis of S^D used for directional derivatives:
/// E_ii for the diagonal, E_ij + E_ji for i < j.
inline std::vector<Mat> symmetric_basis(int dim) {
  std::vector<Mat> basis;
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      Mat e = Mat::Zero(dim, dim);
      e(i, j) = 1.0;
      e(j, i) = 1.0;
      basis.push_back(std::move(e));
    }
  }
  return basis;
}

/// Low-rank factor B with B B^T = a for PSD a, dropping eigenvalues at or
/// below `drop` (relative to the largest one).
inline Mat psd_factor(const Mat& a, double drop = 1e-14) {
  const auto dim = a.rows();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  const Vec& lambda = es.eigenvalues();
  const double top = std::max(lambda.size() ? lambda.maxCoeff() : 0.0, 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) > drop * std::max(top, 1.0) && lambda(i) > 0.0) keep.push_back(i);
  Mat factor(dim, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    factor.col(static_cast<Eigen::Index>(c)) =
        es.eigenvectors().col(keep[c]) * std::sqrt(lambda(keep[c]));
  return factor;
}

}  // namespace hjparisi
