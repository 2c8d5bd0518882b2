#pragma once

// Fisher information from perturbed sampling. A perturbation u of theta gives
// Q = 2 D_alpha(p_theta, p_theta+u) ~ u^T F u, which is linear in the packed
// FIM vector [F11..Fdd, F12, F13, .., F(d-1)d]. Stacking M perturbations
// gives Q ~ U f_vec, solved by least squares or by a PSD-constrained fit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fimest/divergence.hpp"
#include "fimest/emst.hpp"
#include "fimest/error.hpp"
#include "fimest/models.hpp"
#include "fimest/parallel.hpp"
#include "fimest/random.hpp"

namespace fimest {

inline std::size_t packed_size(std::size_t d) { return d * (d + 1) / 2; }

/// Packs a symmetric matrix: diagonal first, then the strict upper triangle
/// row by row.
inline Eigen::VectorXd vec_fim(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorCode::ShapeError, "vec_fim needs a nonempty square matrix");
  }
  if (m != m.transpose()) throw Error(ErrorCode::ShapeError, "vec_fim needs a symmetric matrix");
  const Eigen::Index d = m.rows();
  Eigen::VectorXd v(static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d))));
  v.head(d) = m.diagonal();
  Eigen::Index k = d;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) v(k++) = m(i, j);
  }
  return v;
}

inline Eigen::MatrixXd mat_fim(const Eigen::VectorXd& v) {
  // d(d+1)/2 = len  =>  d = (sqrt(8 len + 1) - 1) / 2
  const auto len = static_cast<std::size_t>(v.size());
  const auto d = static_cast<std::size_t>((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0 + 0.5);
  if (len == 0 || packed_size(d) != len) {
    throw Error(ErrorCode::ShapeError, "length " + std::to_string(len) + " is not d(d+1)/2 for any d");
  }
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd m(n, n);
  m.diagonal() = v.head(n);
  Eigen::Index k = n;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = m(j, i) = v(k++);
  }
  return m;
}

/// Row of U for one direction: [u1^2 .. ud^2, 2 u1 u2, 2 u1 u3, .., 2 u(d-1) ud].
inline Eigen::RowVectorXd design_row(const Eigen::RowVectorXd& u) {
  const Eigen::Index d = u.size();
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d))));
  row.head(d) = u.array().square();
  Eigen::Index k = d;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) row(k++) = 2.0 * u(i) * u(j);
  }
  return row;
}

struct PerturbationLaw {
  enum class Kind { Ball, Gaussian };
  Kind kind = Kind::Ball;
  double scale = 0.1;  // ball radius, or per-component standard deviation

  static PerturbationLaw ball(double radius) { return {Kind::Ball, radius}; }
  static PerturbationLaw gaussian(double sigma) { return {Kind::Gaussian, sigma}; }
};

inline const char* to_string(PerturbationLaw::Kind kind) {
  return kind == PerturbationLaw::Kind::Ball ? "ball" : "gaussian";
}

struct PerturbationDesign {
  std::size_t dim = 0;
  Eigen::MatrixXd directions;  // M x d, one u_k per row
  Eigen::MatrixXd design;      // M x d(d+1)/2
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(directions.rows()); }

  /// Builds U from explicit directions. No rank check: tests and the
  /// diagonal estimator use deliberately partial designs.
  static PerturbationDesign from_directions(Eigen::MatrixXd dirs, std::uint64_t seed = 0) {
    if (dirs.rows() == 0 || dirs.cols() == 0) throw Error(ErrorCode::ShapeError, "empty direction set");
    PerturbationDesign out;
    out.dim = static_cast<std::size_t>(dirs.cols());
    out.design.resize(dirs.rows(), static_cast<Eigen::Index>(packed_size(out.dim)));
    for (Eigen::Index k = 0; k < dirs.rows(); ++k) out.design.row(k) = design_row(dirs.row(k));
    out.directions = std::move(dirs);
    out.seed = seed;
    return out;
  }

  Eigen::Index rank() const {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    return qr.rank();
  }

  bool full_rank() const { return rank() == design.cols(); }
};

/// M directions drawn from `law` on the stream derive_seed(seed, attempt).
/// A rank-deficient draw is retried once on a fresh stream.
inline PerturbationDesign sample_perturbations(std::size_t d, std::size_t m, PerturbationLaw law, std::uint64_t seed) {
  if (d == 0) throw Error(ErrorCode::DomainError, "parameter dimension must be >= 1");
  if (m < packed_size(d)) {
    throw Error(ErrorCode::DomainError, "need at least d(d+1)/2 = " + std::to_string(packed_size(d)) +
                                            " perturbations, got " + std::to_string(m));
  }
  if (!(law.scale > 0.0) || !std::isfinite(law.scale)) {
    throw Error(ErrorCode::DomainError, "perturbation scale must be positive");
  }
  const auto rows = static_cast<Eigen::Index>(m);
  const auto cols = static_cast<Eigen::Index>(d);
  for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
    CounterStream stream(derive_seed(seed, attempt), 0);
    Eigen::MatrixXd dirs(rows, cols);
    for (Eigen::Index k = 0; k < rows; ++k) {
      for (Eigen::Index j = 0; j < cols; ++j) dirs(k, j) = stream.normal();
      if (law.kind == PerturbationLaw::Kind::Gaussian) {
        dirs.row(k) *= law.scale;
      } else {
        // Uniform in the ball: isotropic direction, radius r U^(1/d).
        const double r = law.scale * std::pow(stream.uniform(), 1.0 / static_cast<double>(d));
        dirs.row(k) *= r / dirs.row(k).norm();
      }
    }
    auto design = PerturbationDesign::from_directions(std::move(dirs), seed);
    if (design.full_rank()) return design;
  }
  throw Error(ErrorCode::RankDeficient, "design matrix is rank deficient after a retry");
}

struct QEntry {
  std::size_t perturbation = 0;
  std::uint64_t seed_p = 0;
  std::uint64_t seed_q = 0;
  DivergenceEstimate divergence;
};

/// Q_k from d_hat_k (see QScale) with the divergence estimate it came from.
struct QVector {
  Eigen::VectorXd values;
  std::vector<QEntry> provenance;
};

/// How a divergence estimate maps to the quadratic form u^T F u.
///
/// D_alpha has generator curvature f''(1) = 2 alpha (1 - alpha), so
/// D_alpha ~ alpha (1 - alpha) u^T F u for small u. `Curvature` divides by
/// that factor (4 d_hat at alpha = 1/2) and is consistent for F.
/// `TwiceDivergence` is the plain Q = 2 d_hat, which targets
/// 4 alpha (1 - alpha) F / 2, i.e. F / 2 at alpha = 1/2.
enum class QScale { Curvature, TwiceDivergence };

inline double q_from_divergence(const DivergenceEstimate& est, QScale scale) {
  return scale == QScale::Curvature ? est.d_hat / (est.alpha * (1.0 - est.alpha)) : 2.0 * est.d_hat;
}

struct QOptions {
  /// One reference sample for all perturbations instead of one per
  /// perturbation.
  bool shared_reference = false;
  QScale scale = QScale::Curvature;
  std::size_t workers = default_workers();
};

namespace detail {

inline RowMatrix checked_sample(const GenerativeModel& model, std::span<const double> theta, std::size_t n,
                                std::uint64_t seed, std::size_t job) {
  RowMatrix x;
  try {
    x = model.sample(theta, n, seed);
  } catch (const Error& e) {
    throw ModelError(job, e.code(), e.what());
  } catch (const std::exception& e) {
    throw ModelError(job, ErrorCode::ModelFailure, e.what());
  }
  if (x.rows() != static_cast<Eigen::Index>(n) || x.cols() != static_cast<Eigen::Index>(model.output_dim())) {
    throw ModelError(job, ErrorCode::ProtocolError,
                     "sampler returned " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ", expected " +
                         std::to_string(n) + "x" + std::to_string(model.output_dim()));
  }
  if (!x.allFinite()) throw ModelError(job, ErrorCode::NonFiniteInput, "sampler returned a non-finite value");
  return x;
}

}  // namespace detail

/// Seeds of perturbation k: reference derive_seed(seed, k, 0) (or
/// derive_seed(seed, 0, 2) when shared), perturbed derive_seed(seed, k, 1).
inline QVector estimate_q_directions(const GenerativeModel& model, std::span<const double> theta,
                                     const Eigen::MatrixXd& directions, std::size_t n_p, std::size_t n_q,
                                     std::uint64_t seed, const QOptions& options = {}) {
  if (theta.size() != model.param_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "theta has " + std::to_string(theta.size()) +
                                                  " entries, model expects " + std::to_string(model.param_dim()));
  }
  if (directions.cols() != static_cast<Eigen::Index>(theta.size())) {
    throw Error(ErrorCode::DimensionMismatch, "perturbations do not match the parameter dimension");
  }
  if (n_p < 2 || n_q < 2) throw Error(ErrorCode::DomainError, "need at least two samples per cloud");

  const auto m = static_cast<std::size_t>(directions.rows());
  QVector out;
  out.values.resize(directions.rows());
  out.provenance.resize(m);

  PointCloud shared;
  const std::uint64_t shared_seed = derive_seed(seed, 0, 2);
  if (options.shared_reference) {
    shared = PointCloud(detail::checked_sample(model, theta, n_p, shared_seed, 0));
  }

  parallel_for(
      m,
      [&](std::size_t k) {
        const std::uint64_t seed_p = options.shared_reference ? shared_seed : derive_seed(seed, k, 0);
        const std::uint64_t seed_q = derive_seed(seed, k, 1);
        std::vector<double> moved(theta.begin(), theta.end());
        for (std::size_t j = 0; j < moved.size(); ++j) moved[j] += directions(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));

        const PointCloud xq(detail::checked_sample(model, moved, n_q, seed_q, k));
        const auto est = options.shared_reference
                             ? estimate_divergence(shared, xq)
                             : estimate_divergence(PointCloud(detail::checked_sample(model, theta, n_p, seed_p, k)), xq);
        out.values(static_cast<Eigen::Index>(k)) = q_from_divergence(est, options.scale);
        out.provenance[k] = {k, seed_p, seed_q, est};
      },
      options.workers);
  return out;
}

inline QVector estimate_q(const GenerativeModel& model, std::span<const double> theta, const PerturbationDesign& design,
                          std::size_t n_p, std::size_t n_q, std::uint64_t seed, const QOptions& options = {}) {
  return estimate_q_directions(model, theta, design.directions, n_p, n_q, seed, options);
}

/// Noiseless Q_k = u_k^T F u_k, bypassing sampling.
inline QVector quadratic_q(const PerturbationDesign& design, const Eigen::MatrixXd& f) {
  QVector out;
  out.values = (design.directions * f).cwiseProduct(design.directions).rowwise().sum();
  out.provenance.resize(design.size());
  for (std::size_t k = 0; k < design.size(); ++k) out.provenance[k].perturbation = k;
  return out;
}

enum class FimMethod { PlainLs, PsdConstrained };

inline const char* to_string(FimMethod m) { return m == FimMethod::PlainLs ? "plain_ls" : "psd_constrained"; }

struct FimEstimate {
  Eigen::VectorXd f_vec;
  Eigen::MatrixXd f_mat;
  FimMethod method = FimMethod::PlainLs;
  double residual_norm = 0.0;
  double min_eigenvalue = 0.0;
  std::size_t iterations = 0;

  static FimEstimate from_matrix(const Eigen::MatrixXd& f, FimMethod method = FimMethod::PlainLs) {
    FimEstimate out;
    out.f_vec = vec_fim(f);
    out.f_mat = f;
    out.method = method;
    out.min_eigenvalue = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(f, Eigen::EigenvaluesOnly).eigenvalues()(0);
    return out;
  }
};

inline double ls_objective(const PerturbationDesign& design, const Eigen::VectorXd& q, const Eigen::VectorXd& f_vec) {
  return (design.design * f_vec - q).squaredNorm();
}

namespace detail {

inline void check_design_q(const PerturbationDesign& design, const QVector& q) {
  if (q.values.size() != design.design.rows()) {
    throw Error(ErrorCode::ShapeError, std::to_string(q.values.size()) + " Q values for " +
                                           std::to_string(design.design.rows()) + " perturbations");
  }
}

inline FimEstimate finish(const PerturbationDesign& design, const QVector& q, Eigen::VectorXd f_vec, FimMethod method,
                          std::size_t iterations) {
  FimEstimate out;
  out.f_mat = mat_fim(f_vec);
  out.f_vec = std::move(f_vec);
  out.method = method;
  out.residual_norm = (design.design * out.f_vec - q.values).norm();
  out.min_eigenvalue =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(out.f_mat, Eigen::EigenvaluesOnly).eigenvalues()(0);
  out.iterations = iterations;
  return out;
}

}  // namespace detail

/// Unconstrained least squares: argmin |U f - Q|^2 = (U^T U)^-1 U^T Q.
/// Solved through a QR of U; the result need not be PSD.
inline FimEstimate ls_fim(const PerturbationDesign& design, const QVector& q) {
  detail::check_design_q(design, q);
  const Eigen::MatrixXd& u = design.design;
  if (u.rows() < u.cols()) {
    throw Error(ErrorCode::SingularNormalEquations, "fewer perturbations than FIM unknowns");
  }
  const Eigen::VectorXd sv = Eigen::BDCSVD<Eigen::MatrixXd>(u).singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || (smax / smin) * (smax / smin) > 1e12) {
    throw Error(ErrorCode::SingularNormalEquations, "condition estimate of U^T U exceeds 1e12");
  }
  Eigen::VectorXd f_vec = u.colPivHouseholderQr().solve(q.values);
  return detail::finish(design, q, std::move(f_vec), FimMethod::PlainLs, 0);
}

/// Per-axis fit F_ii = sum Q t^2 / sum t^4, floored at 0.
inline double fit_diagonal_entry(std::span<const double> magnitudes, std::span<const double> q) {
  if (magnitudes.empty() || magnitudes.size() != q.size()) {
    throw Error(ErrorCode::ShapeError, "need one Q value per magnitude");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double t2 = magnitudes[k] * magnitudes[k];
    num += q[k] * t2;
    den += t2 * t2;
  }
  if (!(den > 0.0)) throw Error(ErrorCode::DomainError, "perturbation magnitudes must be nonzero");
  return std::max(num / den, 0.0);
}

/// Magnitudes for axis-wise perturbations drawn from `law`: Gaussian draws
/// for the Gaussian law, uniform on [-r, r] for the ball law.
inline std::vector<std::vector<double>> sample_axis_magnitudes(std::size_t d, std::size_t per_axis, PerturbationLaw law,
                                                               std::uint64_t seed) {
  CounterStream stream(seed, 1);
  std::vector<std::vector<double>> out(d, std::vector<double>(per_axis));
  for (auto& axis : out) {
    for (auto& t : axis) {
      t = law.kind == PerturbationLaw::Kind::Gaussian ? law.scale * stream.normal()
                                                      : law.scale * (2.0 * stream.uniform() - 1.0);
    }
  }
  return out;
}

struct DiagonalFit {
  Eigen::VectorXd diagonal;
  QVector q;  // in axis-major order
};

/// Diagonal FIM from axis-aligned perturbations u = t e_i, one 1-D fit per
/// axis. Perturbations are numbered axis-major for seeding.
inline DiagonalFit diagonal_fim(const GenerativeModel& model, std::span<const double> theta,
                                const std::vector<std::vector<double>>& magnitudes, std::size_t n_p, std::size_t n_q,
                                std::uint64_t seed, const QOptions& options = {}) {
  const std::size_t d = theta.size();
  if (magnitudes.size() != d) throw Error(ErrorCode::ShapeError, "need magnitudes for every axis");
  std::size_t total = 0;
  for (const auto& axis : magnitudes) {
    if (axis.empty()) throw Error(ErrorCode::DomainError, "need at least one magnitude per axis");
    for (double t : axis) {
      if (!(t != 0.0) || !std::isfinite(t)) throw Error(ErrorCode::DomainError, "magnitudes must be nonzero");
    }
    total += axis.size();
  }
  Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(d));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (double t : magnitudes[i]) dirs(row++, static_cast<Eigen::Index>(i)) = t;
  }
  DiagonalFit out;
  out.q = estimate_q_directions(model, theta, dirs, n_p, n_q, seed, options);
  out.diagonal.resize(static_cast<Eigen::Index>(d));
  std::size_t offset = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const std::span<const double> q(out.q.values.data() + offset, magnitudes[i].size());
    out.diagonal(static_cast<Eigen::Index>(i)) = fit_diagonal_entry(magnitudes[i], q);
    offset += magnitudes[i].size();
  }
  return out;
}

struct PsdSolverOptions {
  std::size_t max_iterations = 100000;
  double tolerance = 1e-10;  // relative primal and dual residual
};

namespace detail {

inline Eigen::MatrixXd clip_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

// Exact feasibility: clip, then rescale rows/columns by sqrt(t_i / X_ii).
// A congruence keeps the matrix PSD and pins the diagonal.
inline Eigen::MatrixXd polish_feasible(const Eigen::MatrixXd& x, const Eigen::VectorXd& targets) {
  Eigen::MatrixXd out = clip_psd(x);
  Eigen::VectorXd s(targets.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    s(i) = out(i, i) > 0.0 ? std::sqrt(targets(i) / out(i, i)) : 0.0;
  }
  out = s.asDiagonal() * out * s.asDiagonal();
  out = (0.5 * (out + out.transpose())).eval();
  out.diagonal() = targets;
  return out;
}

}  // namespace detail

/// Least squares over PSD matrices with a fixed diagonal:
///   minimize |U vec(F) - Q|^2  s.t.  F_ii = t_i,  F >= 0.
/// ADMM on the split x = w, where x carries the fixed diagonal and the
/// quadratic, and w lives in the PSD cone. Coordinates are scaled so the
/// Euclidean norm of the packed vector is the Frobenius norm of the matrix.
/// The penalty adapts by residual balancing. The returned matrix satisfies
/// both constraints to rounding error.
inline FimEstimate psd_constrained_fim(const PerturbationDesign& design, const QVector& q,
                                       const Eigen::VectorXd& diag_targets, const PsdSolverOptions& opt = {}) {
  detail::check_design_q(design, q);
  const auto d = static_cast<Eigen::Index>(design.dim);
  if (diag_targets.size() != d) throw Error(ErrorCode::ShapeError, "need one diagonal target per parameter");
  if (!diag_targets.allFinite() || (diag_targets.array() < 0.0).any()) {
    throw Error(ErrorCode::DomainError, "diagonal targets must be finite and nonnegative");
  }
  // A zero target forces its whole row and column to zero; drop those
  // coordinates so the remaining feasible set has an interior.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (diag_targets(i) > 0.0) keep.push_back(i);
  }
  if (static_cast<Eigen::Index>(keep.size()) < d) {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
    std::size_t iterations = 0;
    if (!keep.empty()) {
      const auto reduced = PerturbationDesign::from_directions(design.directions(Eigen::all, keep), design.seed);
      const auto sub = psd_constrained_fim(reduced, q, diag_targets(keep), opt);
      f(keep, keep) = sub.f_mat;
      iterations = sub.iterations;
    }
    return detail::finish(design, q, vec_fim(f), FimMethod::PsdConstrained, iterations);
  }

  // With D = diag(sqrt(t)), F = D G D maps the problem onto unit-diagonal G
  // and directions u D, which keeps the solver well scaled for any targets.
  const Eigen::VectorXd root = diag_targets.cwiseSqrt();
  if ((diag_targets.array() != 1.0).any()) {
    const auto scaled = PerturbationDesign::from_directions(design.directions * root.asDiagonal(), design.seed);
    const auto unit = psd_constrained_fim(scaled, q, Eigen::VectorXd::Ones(d), opt);
    Eigen::MatrixXd f = root.asDiagonal() * unit.f_mat * root.asDiagonal();
    f = (0.5 * (f + f.transpose())).eval();
    f.diagonal() = diag_targets;
    return detail::finish(design, q, vec_fim(f), FimMethod::PsdConstrained, unit.iterations);
  }

  const Eigen::Index p = design.design.cols();
  const Eigen::Index off = p - d;
  if (off == 0) {
    return detail::finish(design, q, diag_targets, FimMethod::PsdConstrained, 0);
  }

  const Eigen::MatrixXd a_off = design.design.rightCols(off) / std::sqrt(2.0);
  const Eigen::VectorXd rhs0 = 2.0 * a_off.transpose() * (q.values - design.design.leftCols(d) * diag_targets);
  const Eigen::MatrixXd gram = 2.0 * a_off.transpose() * a_off;

  auto to_mat = [&](const Eigen::VectorXd& z_off) {
    Eigen::VectorXd v(p);
    v.head(d) = diag_targets;
    v.tail(off) = z_off / std::sqrt(2.0);
    return mat_fim(v);
  };
  auto to_off = [&](const Eigen::MatrixXd& m) -> Eigen::VectorXd {
    return vec_fim(m).tail(off) * std::sqrt(2.0);
  };

  double rho = std::max(gram.diagonal().mean(), 1e-300);
  Eigen::LLT<Eigen::MatrixXd> chol(gram + rho * Eigen::MatrixXd::Identity(off, off));

  // x and w share the fixed diagonal; only the diagonal of w can drift, so
  // it is tracked separately through the full matrix.
  Eigen::MatrixXd w = Eigen::MatrixXd(diag_targets.asDiagonal());
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(d, d);
  bool converged = false;
  std::size_t it = 0;
  for (; it < opt.max_iterations; ++it) {
    const Eigen::MatrixXd target = w - lambda;
    const Eigen::VectorXd x_off = chol.solve(rhs0 + rho * to_off(target));
    const Eigen::MatrixXd x = to_mat(x_off);
    const Eigen::MatrixXd w_next = detail::clip_psd(x + lambda);
    lambda += x - w_next;
    const double primal = (x - w_next).norm();
    const double dual = rho * (w_next - w).norm();
    w = w_next;
    const double eps_primal = opt.tolerance * (1.0 + std::max(x.norm(), w.norm()));
    const double eps_dual =
        opt.tolerance * (1.0 + std::max({rho * lambda.norm(), (gram * x_off).norm(), rhs0.norm()}));
    if (primal <= eps_primal && dual <= eps_dual) {
      converged = true;
      ++it;
      break;
    }
    if (it % 10 == 9) {
      double factor = 1.0;
      if (primal > 10.0 * dual * eps_primal / eps_dual) factor = 2.0;
      if (dual > 10.0 * primal * eps_dual / eps_primal) factor = 0.5;
      if (factor != 1.0) {
        rho *= factor;
        lambda /= factor;
        chol.compute(gram + rho * Eigen::MatrixXd::Identity(off, off));
      }
    }
  }
  if (!converged) {
    throw Error(ErrorCode::NonConvergence, "PSD fit did not converge in " + std::to_string(opt.max_iterations) +
                                               " iterations");
  }
  const Eigen::MatrixXd f = detail::polish_feasible(w, diag_targets);
  return detail::finish(design, q, vec_fim(f), FimMethod::PsdConstrained, it);
}

}  // namespace fimest
