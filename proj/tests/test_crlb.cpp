#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fimest/crlb.hpp"
#include "oracles.hpp"

namespace fimest {
namespace {

Eigen::VectorXd eigenvalues(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues();
}

CrlbMatrix crlb_of(const Eigen::MatrixXd& c) {
  CrlbMatrix out;
  out.c_mat = c;
  return out;
}

TEST(Regularize, Examples) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_LT((regularize_fim(id, 0.1) - 1.1 * id).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((regularize_fim(Eigen::MatrixXd::Zero(3, 3), 0.1) - 0.1 * id).cwiseAbs().maxCoeff(), 1e-15);
  // Non-positive trace falls back to a plain eps shift.
  Eigen::MatrixXd neg(2, 2);
  neg << -1, 0, 0, 0.5;
  EXPECT_EQ(regularize_fim(neg, 0.1).diagonal(), Eigen::Vector2d(-0.9, 0.6));
}

TEST(Regularize, ShiftsEverySpectrumByLoading) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 6;
    const auto f = testing::random_symmetric(rng, d);
    const double eps = 0.05 * (1 + trial % 4);
    const double shift = loading_amount(f, eps);
    const Eigen::VectorXd diff = eigenvalues(regularize_fim(f, eps)) - eigenvalues(f);
    EXPECT_LT((diff.array() - shift).abs().maxCoeff(), 1e-12 * (1 + f.norm()));
  }
}

TEST(Regularize, MonotoneInEpsilon) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 6;
    const auto f = testing::random_psd(rng, d);
    double prev_eps = 1e-4;
    Eigen::VectorXd prev = eigenvalues(invert_to_crlb(f, prev_eps).c_mat);
    for (double eps : {1e-3, 1e-2, 0.1, 1.0}) {
      const Eigen::VectorXd reg_lo = eigenvalues(regularize_fim(f, prev_eps));
      const Eigen::VectorXd reg_hi = eigenvalues(regularize_fim(f, eps));
      EXPECT_TRUE((reg_hi.array() >= reg_lo.array()).all());
      const Eigen::VectorXd cur = eigenvalues(invert_to_crlb(f, eps).c_mat);
      EXPECT_TRUE((cur.array() <= prev.array() * (1 + 1e-12)).all());
      prev = cur;
      prev_eps = eps;
    }
  }
}

TEST(Regularize, Preconditions) {
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 0.5, 0.4, 1;
  EXPECT_THROW(regularize_fim(asym, 0.1), Error);
  EXPECT_THROW(regularize_fim(Eigen::MatrixXd::Identity(2, 2), 0.0), Error);
  EXPECT_THROW(regularize_fim(Eigen::MatrixXd::Identity(2, 2), -1.0), Error);
}

TEST(InvertToCrlb, Examples) {
  const auto c = invert_to_crlb(2.0 * Eigen::MatrixXd::Identity(3, 3), 1e-12);
  EXPECT_LT((c.c_mat - 0.5 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  const auto c2 = invert_to_crlb(Eigen::MatrixXd(Eigen::Vector2d(1, 4).asDiagonal()), 1e-12);
  EXPECT_NEAR(c2.c_mat(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(c2.c_mat(1, 1), 0.25, 1e-10);
  EXPECT_EQ(c2.c_mat(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(c2.loading_used, 1e-12 * 2.5);
  EXPECT_LT((c2.standard_deviations() - Eigen::Vector2d(1, 0.5)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(InvertToCrlb, RoundTripOnRandomSpd) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 8;
    const auto f = testing::random_spd(rng, d);
    const auto c = invert_to_crlb(f);
    const Eigen::MatrixXd reg = regularize_fim(f);
    EXPECT_LT((c.c_mat * reg - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-8);
    const Eigen::MatrixXd back = c.c_mat.inverse();
    EXPECT_LT((back - reg).norm() / reg.norm(), 1e-6);
    EXPECT_EQ(c.c_mat, c.c_mat.transpose());
    EXPECT_GT(eigenvalues(c.c_mat)(0), 0.0);
  }
}

TEST(InvertToCrlb, IndefiniteBeyondLoadingFails) {
  Eigen::MatrixXd f(2, 2);
  f << 1, 0, 0, -5;
  try {
    invert_to_crlb(f, 1e-3);
    FAIL() << "expected NumericalFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericalFailure);
  }
}

TEST(InvertToCrlb, SingularFimIsRescuedByLoading) {
  Eigen::MatrixXd f(2, 2);
  f << 1, 1, 1, 1;
  const auto c = invert_to_crlb(f, 1e-3);
  EXPECT_TRUE(c.c_mat.allFinite());
  EXPECT_NEAR(eigenvalues(c.c_mat).maxCoeff(), 1.0 / 1e-3, 1e-6);
}

TEST(WeightedVolume, Examples) {
  const WeightMatrix unit{Eigen::VectorXd::Ones(2)};
  EXPECT_EQ(weighted_volume(crlb_of(Eigen::MatrixXd::Identity(2, 2)), unit), 0.0);
  EXPECT_NEAR(weighted_volume(crlb_of(Eigen::MatrixXd(Eigen::Vector2d(2, 3).asDiagonal())), unit), std::log(6.0),
              1e-14);
  const WeightMatrix e{Eigen::VectorXd::Constant(3, std::exp(1.0))};
  EXPECT_NEAR(weighted_volume(crlb_of(Eigen::MatrixXd::Identity(3, 3)), e), 3.0, 1e-14);
}

TEST(WeightedVolume, MatchesDirectDeterminant) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> wdist(0.1, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 7;
    const auto c = testing::random_spd(rng, d);
    Eigen::VectorXd w(d);
    for (Eigen::Index i = 0; i < d; ++i) w(i) = wdist(rng);
    const double vol = weighted_volume(crlb_of(c), WeightMatrix{w});

    // Direct: build V D W V^T densely and take a partial-pivot LU determinant.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    const Eigen::MatrixXd vdwv =
        eig.eigenvectors() * eig.eigenvalues().asDiagonal() * w.asDiagonal() * eig.eigenvectors().transpose();
    const double direct = std::log(vdwv.partialPivLu().determinant());
    EXPECT_LE(std::abs(vol - direct), 1e-8 * std::max(1.0, std::abs(direct))) << "trial " << trial;

    const double plain = weighted_volume(crlb_of(c), WeightMatrix{Eigen::VectorXd::Ones(d)});
    EXPECT_NEAR(vol - plain, w.array().log().sum(), 1e-10);
  }
}

TEST(WeightedVolume, RejectsBadWeights) {
  const auto c = crlb_of(Eigen::MatrixXd::Identity(2, 2));
  for (const Eigen::Vector2d& w : {Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 1), Eigen::Vector2d(NAN, 1)}) {
    try {
      weighted_volume(c, WeightMatrix{w});
      FAIL() << "expected SingularWeight";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SingularWeight);
    }
  }
  try {
    weighted_volume(c, WeightMatrix{Eigen::VectorXd::Ones(3)});
    FAIL() << "expected ShapeError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeError);
  }
}

TEST(Crlb, GaussianMeanBoundNearOne) {
  const GaussianMeanModel model(3);
  const std::vector<double> theta(3, 0.0);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto design = sample_perturbations(3, 60, PerturbationLaw::ball(0.6), derive_seed(700, seed, 0));
    const auto q = estimate_q(model, theta, design, 1000, 1000, derive_seed(700, seed, 1));
    mean += invert_to_crlb(ls_fim(design, q)).c_mat.diagonal() / 5.0;
  }
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(mean(i), 1.0, 0.4) << "parameter " << i;
}

}  // namespace
}  // namespace fimest
