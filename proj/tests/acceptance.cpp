// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Tolerances and budgets are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "fimest/fimest.hpp"
#include "oracles.hpp"

namespace {

using namespace fimest;
using Clock = std::chrono::steady_clock;

// Frozen quadrature value of D_1/2(N(0,1), N(1,1)).
constexpr double kDHalfUnitShift = 0.20405426563350;

struct Outcome {
  bool pass = false;
  std::string detail;
};

char buf[512];

template <class... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

QVector q_of(const Eigen::VectorXd& v) {
  QVector q;
  q.values = v;
  q.provenance.resize(static_cast<std::size_t>(v.size()));
  return q;
}

double min_eig(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

Outcome emst_exactness() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> n_dist(2, 7);
  std::uniform_int_distribution<int> k_dist(1, 3);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = testing::random_points(rng, n_dist(rng), k_dist(rng));
    const auto brute = testing::brute_force_mst(pts);
    if (build_emst(PointCloud(pts)).total_weight() != brute.total) ++mismatches;
  }
  return {mismatches == 0, fmt("%d/200 instances differ from exhaustive minimum", mismatches)};
}

Outcome henze_penrose_limit() {
  const GaussianMeanModel model(1);
  const std::vector<double> zero{0.0};
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PointCloud xp(model.sample(zero, 2000, derive_seed(202, seed, 0)));
    const PointCloud xq(model.sample(zero, 2000, derive_seed(202, seed, 1)));
    ratios.push_back(static_cast<double>(fr_statistic(xp, xq).c) / 4000.0);
  }
  double mean = 0.0;
  for (double r : ratios) mean += r / 20.0;
  double ss = 0.0;
  for (double r : ratios) ss += (r - mean) * (r - mean);
  const double se = std::sqrt(ss / 19.0) / std::sqrt(20.0);
  return {std::abs(mean - 0.5) <= 3.0 * se, fmt("mean C/(n_p+n_q) = %.5f, |mean-0.5| = %.5f, 3 SE = %.5f", mean,
                                               std::abs(mean - 0.5), 3.0 * se)};
}

Outcome divergence_regression() {
  const GaussianMeanModel model(1);
  const std::vector<double> zero{0.0};
  const std::vector<double> one{1.0};
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PointCloud xp(model.sample(zero, 2000, derive_seed(303, seed, 0)));
    const PointCloud xq(model.sample(one, 2000, derive_seed(303, seed, 1)));
    mean += estimate_divergence(xp, xq).d_hat / 20.0;
  }
  const double quad = divergence_quadrature(gaussian_pair(0, 1, 1, 1), 0.5);
  const bool oracle_ok = std::abs(quad - kDHalfUnitShift) <= 1e-10;
  return {std::abs(mean - kDHalfUnitShift) <= 0.03 && oracle_ok,
          fmt("mean d_hat = %.5f vs oracle %.5f (|diff| %.5f <= 0.03); quadrature %.14f", mean, kDHalfUnitShift,
              std::abs(mean - kDHalfUnitShift), quad)};
}

Outcome noiseless_fidelity() {
  std::mt19937_64 rng(404);
  double worst_ls = 0.0;
  double worst_psd = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 5;
    const auto p = static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d)));
    const auto design = PerturbationDesign::from_directions(testing::random_normal_matrix(rng, 2 * p, d));
    const auto f = testing::random_psd(rng, d);
    const auto q = quadratic_q(design, f);
    worst_ls = std::max(worst_ls, (ls_fim(design, q).f_mat - f).cwiseAbs().maxCoeff());
    worst_psd = std::max(worst_psd, (psd_constrained_fim(design, q, f.diagonal()).f_mat - f).cwiseAbs().maxCoeff());
  }
  return {worst_ls <= 1e-8 && worst_psd <= 1e-6,
          fmt("max abs error: plain LS %.2e (<= 1e-8), PSD %.2e (<= 1e-6)", worst_ls, worst_psd)};
}

Outcome grid_oracle() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> diag(0.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto design = PerturbationDesign::from_directions(testing::random_normal_matrix(rng, 3 + trial % 6, 2));
    const Eigen::VectorXd q = testing::random_normal_matrix(rng, design.design.rows(), 1).col(0);
    const double t1 = diag(rng);
    const double t2 = diag(rng);
    const auto psd = psd_constrained_fim(design, q_of(q), Eigen::Vector2d(t1, t2));
    const double grid = testing::grid_search_2x2(design.design, q, t1, t2, 1000000);
    worst = std::max(worst, std::abs(ls_objective(design, q, psd.f_vec) - grid));
  }
  return {worst <= 1e-6, fmt("max |objective - grid search| = %.2e (<= 1e-6)", worst)};
}

Outcome psd_guarantee() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> diag(0.0, 3.0);
  double worst_eig = 0.0;
  double worst_diag = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::Index d = 1 + trial % 6;
    const auto p = static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d)));
    const auto design = PerturbationDesign::from_directions(
        testing::random_normal_matrix(rng, p + trial % (2 * p + 1), d) * (trial % 4 == 0 ? 0.05 : 1.0));
    const Eigen::Index m = design.design.rows();
    Eigen::VectorXd q;
    switch (trial % 5) {
      case 0:
        q = testing::random_normal_matrix(rng, m, 1).col(0);
        break;
      case 1:
        q = -5.0 * testing::random_normal_matrix(rng, m, 1).col(0).cwiseAbs();
        break;
      case 2:
        q = quadratic_q(design, 3.0 * testing::random_symmetric(rng, d)).values;
        break;
      case 3:
        q = quadratic_q(design, testing::random_psd(rng, d)).values;
        q(0) -= 1e3;
        break;
      default:
        q = quadratic_q(design, testing::random_psd(rng, d)).values + 0.1 * testing::random_normal_matrix(rng, m, 1).col(0);
    }
    Eigen::VectorXd targets(d);
    for (Eigen::Index i = 0; i < d; ++i) targets(i) = trial % 7 == 0 && i == 0 ? 0.0 : diag(rng);
    const auto est = psd_constrained_fim(design, q_of(q), targets);
    worst_eig = std::min(worst_eig, min_eig(est.f_mat));
    worst_diag = std::max(worst_diag, (est.f_mat.diagonal() - targets).cwiseAbs().maxCoeff());
  }
  return {worst_eig >= -1e-8 && worst_diag <= 1e-8,
          fmt("min eigenvalue %.2e (>= -1e-8), max diagonal error %.2e (<= 1e-8)", worst_eig, worst_diag)};
}

std::string cells_text(const std::vector<CellSummary>& cells) {
  std::string out;
  for (const auto& c : cells) {
    if (!out.empty()) out += ", ";
    out += fmt("%zu: %.4f +- %.4f", c.key, c.mean, c.std_error);
  }
  return out;
}

Outcome fig1a_trend() {
  ExperimentConfig cfg;
  cfg.dims = {4, 6, 8};
  cfg.n_samples = {500};
  cfg.sigma_u2 = 0.05;
  cfg.m_factor = 10;
  cfg.runs = 10;
  const auto records = run_gaussian_mse_vs_dim(cfg);
  const auto key = [](const MseRecord& r) { return r.k; };
  const auto dhalf = summarize(records, key, [](const MseRecord& r) { return r.mse_dhalf; });
  const auto sample = summarize(records, key, [](const MseRecord& r) { return r.mse_sample; });
  return {non_increasing_within_se(dhalf),
          "mean mse_dhalf by K {" + cells_text(dhalf) + "}; mse_sample {" + cells_text(sample) + "}"};
}

Outcome fig1b_trend() {
  ExperimentConfig cfg;
  cfg.dims = {8};
  cfg.n_samples = {250, 500, 1000, 2000};
  cfg.sigma_u2 = 0.05;
  cfg.m_factor = 10;
  cfg.runs = 10;
  const auto records = run_gaussian_gap_vs_n(cfg);
  const auto gap = summarize(records, [](const MseRecord& r) { return r.n; }, [](const MseRecord& r) { return r.gap(); });
  std::size_t nonneg = 0;
  for (const auto& c : gap) nonneg += c.mean >= 0.0 ? 1 : 0;
  const bool dominance = 5 * nonneg >= 4 * gap.size();
  const bool trend = non_increasing_within_se(gap);
  return {dominance && trend, fmt("gap >= 0 in %zu/%zu cells; non-increasing within SE: %s; ", nonneg, gap.size(),
                                  trend ? "yes" : "no") +
                                  "mean gap by n {" + cells_text(gap) + "}"};
}

Outcome crlb_round_trip() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> wdist(0.1, 5.0);
  double worst_round = 0.0;
  double worst_det = 0.0;
  double worst_decomp = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 8;
    const auto f = testing::random_spd(rng, d);
    const auto c = invert_to_crlb(f);
    const Eigen::MatrixXd reg = regularize_fim(f);
    worst_round = std::max(worst_round, (c.c_mat.inverse() - reg).norm() / reg.norm());

    Eigen::VectorXd w(d);
    for (Eigen::Index i = 0; i < d; ++i) w(i) = wdist(rng);
    const double vol = weighted_volume(c, WeightMatrix{w});
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.c_mat);
    const Eigen::MatrixXd vdwv =
        eig.eigenvectors() * eig.eigenvalues().asDiagonal() * w.asDiagonal() * eig.eigenvectors().transpose();
    const double direct = std::log(vdwv.partialPivLu().determinant());
    worst_det = std::max(worst_det, std::abs(vol - direct) / std::max(1.0, std::abs(direct)));
    const double plain = weighted_volume(c, WeightMatrix{Eigen::VectorXd::Ones(d)});
    worst_decomp = std::max(worst_decomp, std::abs(vol - plain - w.array().log().sum()));
  }
  return {worst_round <= 1e-6 && worst_det <= 1e-8 && worst_decomp <= 1e-10,
          fmt("round trip %.2e (<= 1e-6), volume vs determinant %.2e (<= 1e-8), decomposition %.2e (<= 1e-10)",
              worst_round, worst_det, worst_decomp)};
}

Outcome adapter_equivalence() {
  const std::string script = std::string(FIMEST_SOURCE_DIR) + "/tools/gaussian_model.py";
  const GaussianMeanModel builtin(3);
  const ExternalModel external({"python3", script}, 3, 3);
  const std::vector<double> theta{0.2, -0.1, 0.4};
  const auto design = sample_perturbations(3, 12, PerturbationLaw::gaussian(std::sqrt(0.05)), 1010);
  const auto mags = sample_axis_magnitudes(3, 4, PerturbationLaw::gaussian(std::sqrt(0.15)), 1011);

  auto pipeline = [&](const GenerativeModel& model) {
    const auto q = estimate_q(model, theta, design, 300, 300, 1012);
    const auto diag = diagonal_fim(model, theta, mags, 300, 300, 1013);
    return std::make_pair(ls_fim(design, q), psd_constrained_fim(design, q, diag.diagonal));
  };
  const auto a = pipeline(builtin);
  const auto b = pipeline(external);
  const bool ls_same = a.first.f_vec == b.first.f_vec;
  const bool psd_same = a.second.f_vec == b.second.f_vec;
  return {ls_same && psd_same, fmt("plain LS bit-identical: %s; PSD bit-identical: %s", ls_same ? "yes" : "no",
                                   psd_same ? "yes" : "no")};
}

Outcome reproducibility() {
  auto csv = [](const std::vector<MseRecord>& records) {
    std::ostringstream os;
    write_csv(os, records);
    return os.str();
  };
  ExperimentConfig dim_cfg;
  dim_cfg.dims = {2, 3, 4};
  dim_cfg.n_samples = {200};
  dim_cfg.m_factor = 5;
  dim_cfg.runs = 4;
  ExperimentConfig gap_cfg = dim_cfg;
  gap_cfg.dims = {3};
  gap_cfg.n_samples = {100, 200, 400};

  int identical = 0;
  int compared = 0;
  for (const auto& [name, cfg] : {std::pair{"mse-vs-dim", dim_cfg}, std::pair{"gap-vs-n", gap_cfg}}) {
    auto run = [&, cfg_copy = cfg, by_dim = std::string(name) == "mse-vs-dim"](std::size_t workers) {
      auto c = cfg_copy;
      c.workers = workers;
      return csv(by_dim ? run_gaussian_mse_vs_dim(c) : run_gaussian_gap_vs_n(c));
    };
    const std::string reference = run(1);
    for (std::size_t workers : {1u, 2u, 8u}) {
      ++compared;
      identical += run(workers) == reference ? 1 : 0;
    }
  }
  return {identical == compared, fmt("%d/%d reruns byte-identical (workers 1, 2, 8)", identical, compared)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> check;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "EMST exactness", 60, emst_exactness},
      {2, "Henze-Penrose limit", 60, henze_penrose_limit},
      {3, "divergence regression", 120, divergence_regression},
      {4, "noiseless solver fidelity", 60, noiseless_fidelity},
      {5, "PSD fit vs grid search", 60, grid_oracle},
      {6, "PSD guarantee", 0, psd_guarantee},
      {7, "MSE trend in K", 900, fig1a_trend},
      {8, "gap trend in n", 1200, fig1b_trend},
      {9, "CRLB round trip", 0, crlb_round_trip},
      {10, "adapter equivalence", 0, adapter_equivalence},
      {11, "reproducibility", 0, reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome out;
    try {
      out = c.check();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_budget = c.budget_s == 0 || secs <= c.budget_s;
    const bool pass = out.pass && in_budget;
    failures += pass ? 0 : 1;
    std::string timing = fmt("%.1fs", secs);
    if (c.budget_s > 0) timing += fmt(" (budget %.0fs)", c.budget_s);
    std::printf("[%s] %2d %s: %s [%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
