#pragma once

// Cramer-Rao quantities from an estimated FIM.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fimest/error.hpp"
#include "fimest/fim.hpp"

namespace fimest {

inline constexpr double kDefaultLoading = 1e-3;

struct CrlbMatrix {
  Eigen::MatrixXd c_mat;
  double loading_used = 0.0;  // amount added to every eigenvalue of F

  Eigen::VectorXd standard_deviations() const { return c_mat.diagonal().cwiseSqrt(); }
};

/// Diagonal weights for the weighted CRLB volume.
struct WeightMatrix {
  Eigen::VectorXd weights;
};

namespace detail {

inline void check_symmetric(const Eigen::MatrixXd& f) {
  if (f.rows() != f.cols() || f.rows() == 0) throw Error(ErrorCode::ShapeError, "FIM must be square");
  const double scale = std::max(1.0, f.cwiseAbs().maxCoeff());
  if ((f - f.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorCode::ShapeError, "FIM must be symmetric");
  }
}

}  // namespace detail

/// Scaled-identity diagonal loading used as a stand-in for Haff-style
/// shrinkage: F + eps * (tr F / d) I, or F + eps I when tr F <= 0.
inline double loading_amount(const Eigen::MatrixXd& f, double epsilon) {
  const double tr = f.trace();
  return tr > 0.0 ? epsilon * tr / static_cast<double>(f.rows()) : epsilon;
}

inline Eigen::MatrixXd regularize_fim(const Eigen::MatrixXd& f, double epsilon = kDefaultLoading) {
  detail::check_symmetric(f);
  if (!(epsilon > 0.0)) throw Error(ErrorCode::DomainError, "loading epsilon must be positive");
  Eigen::MatrixXd out = f;
  out.diagonal().array() += loading_amount(f, epsilon);
  return out;
}

inline FimEstimate regularize_fim(const FimEstimate& f, double epsilon = kDefaultLoading) {
  auto out = FimEstimate::from_matrix(regularize_fim(f.f_mat, epsilon), f.method);
  out.residual_norm = f.residual_norm;
  out.iterations = f.iterations;
  return out;
}

inline CrlbMatrix invert_to_crlb(const Eigen::MatrixXd& f, double epsilon = kDefaultLoading) {
  const Eigen::MatrixXd reg = regularize_fim(f, epsilon);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (reg + reg.transpose()));
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigendecomposition failed");
  const Eigen::VectorXd lam = eig.eigenvalues();
  if (!(lam.minCoeff() > 0.0)) {
    throw Error(ErrorCode::NumericalFailure, "regularized FIM has eigenvalue " + std::to_string(lam.minCoeff()) +
                                                 "; increase the loading");
  }
  CrlbMatrix out;
  out.c_mat = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  out.c_mat = (0.5 * (out.c_mat + out.c_mat.transpose())).eval();
  out.loading_used = loading_amount(f, epsilon);
  return out;
}

inline CrlbMatrix invert_to_crlb(const FimEstimate& f, double epsilon = kDefaultLoading) {
  return invert_to_crlb(f.f_mat, epsilon);
}

/// log det(V D W V^T) where C = V D V^T.
inline double weighted_volume(const CrlbMatrix& c, const WeightMatrix& w) {
  const auto d = c.c_mat.rows();
  if (w.weights.size() != d) {
    throw Error(ErrorCode::ShapeError, std::to_string(w.weights.size()) + " weights for a " + std::to_string(d) +
                                           "-parameter CRLB");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(w.weights(i) > 0.0) || !std::isfinite(w.weights(i))) {
      throw Error(ErrorCode::SingularWeight, "weight " + std::to_string(i) + " is not positive");
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.c_mat);
  const Eigen::VectorXd lam = eig.eigenvalues();
  if (!(lam.minCoeff() > 0.0)) throw Error(ErrorCode::NumericalFailure, "CRLB matrix is not positive definite");
  // det(V D W V^T) = det(D) det(W) for orthonormal V.
  return lam.array().log().sum() + w.weights.array().log().sum();
}

}  // namespace fimest
