#pragma once

// Monte Carlo replication of the Gaussian-mean FIM experiment: squared
// Frobenius error of the divergence-based estimate and of the inverse sample
// covariance, swept over dimension or sample size.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fimest/error.hpp"
#include "fimest/fim.hpp"
#include "fimest/models.hpp"
#include "fimest/parallel.hpp"
#include "fimest/random.hpp"

namespace fimest {

struct ExperimentConfig {
  std::vector<std::size_t> dims{4, 6, 8, 10, 12, 14};
  std::vector<std::size_t> n_samples{1000};
  double sigma_u2 = 0.05;  // per-component perturbation variance
  std::size_t m_factor = 50;
  std::size_t runs = 25;
  std::uint64_t master_seed = 20140901;
  double sigma = 1.0;  // model standard deviation
  std::size_t workers = default_workers();

  void validate() const {
    if (dims.empty() || n_samples.empty()) throw Error(ErrorCode::ConfigError, "dims and n_samples must be nonempty");
    for (auto k : dims) {
      if (k == 0) throw Error(ErrorCode::ConfigError, "dims must be positive");
    }
    for (auto n : n_samples) {
      if (n < 2) throw Error(ErrorCode::ConfigError, "n_samples must be >= 2");
    }
    if (!(sigma_u2 > 0.0) || !std::isfinite(sigma_u2)) throw Error(ErrorCode::ConfigError, "sigma_u2 must be positive");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::ConfigError, "sigma must be positive");
    if (m_factor == 0 || runs == 0) throw Error(ErrorCode::ConfigError, "m_factor and runs must be positive");
  }
};

struct MseRecord {
  std::size_t k = 0;
  std::size_t n = 0;
  std::size_t run = 0;
  double mse_dhalf = 0.0;
  double mse_sample = 0.0;

  double gap() const { return mse_dhalf - mse_sample; }
};

/// One Monte Carlo cell. Streams are keyed by (master_seed, K, run), so the
/// perturbation draw is shared across sample sizes of the same run.
inline MseRecord run_gaussian_cell(const ExperimentConfig& cfg, std::size_t k, std::size_t n, std::size_t run) {
  const std::uint64_t run_seed = derive_seed(cfg.master_seed, k, run);
  const GaussianMeanModel model(k, cfg.sigma);
  const std::vector<double> theta(k, 0.0);
  const Eigen::MatrixXd truth = model.true_fim();

  const auto design = sample_perturbations(k, cfg.m_factor * packed_size(k),
                                           PerturbationLaw::gaussian(std::sqrt(cfg.sigma_u2)), derive_seed(run_seed, 0));
  QOptions opts;
  opts.workers = cfg.workers;
  const auto q = estimate_q(model, theta, design, n, n, derive_seed(run_seed, 1), opts);
  const auto est = ls_fim(design, q);

  const RowMatrix x = model.sample(theta, n, derive_seed(run_seed, 2));
  const Eigen::MatrixXd oracle = sample_fim_oracle(x);

  return {k, n, run, (est.f_mat - truth).squaredNorm(), (oracle - truth).squaredNorm()};
}

using RecordSink = std::function<void(const MseRecord&)>;

namespace detail {

inline std::vector<MseRecord> run_grid(const ExperimentConfig& cfg, const RecordSink& sink) {
  cfg.validate();
  std::vector<MseRecord> out;
  for (auto k : cfg.dims) {
    for (auto n : cfg.n_samples) {
      for (std::size_t run = 0; run < cfg.runs; ++run) {
        try {
          out.push_back(run_gaussian_cell(cfg, k, n, run));
        } catch (const Error& e) {
          throw Error(e.code(), "K=" + std::to_string(k) + " n=" + std::to_string(n) + " run=" +
                                    std::to_string(run) + ": " + e.what());
        }
        if (sink) sink(out.back());
      }
    }
  }
  return out;
}

}  // namespace detail

/// Error vs dimension: every K in cfg.dims at the sample size(s) in
/// cfg.n_samples. Records are ordered by (K, n, run).
inline std::vector<MseRecord> run_gaussian_mse_vs_dim(const ExperimentConfig& cfg, const RecordSink& sink = {}) {
  return detail::run_grid(cfg, sink);
}

/// Estimator gap vs sample size at a single dimension.
inline std::vector<MseRecord> run_gaussian_gap_vs_n(const ExperimentConfig& cfg, const RecordSink& sink = {}) {
  if (cfg.dims.size() != 1) throw Error(ErrorCode::ConfigError, "gap-vs-n sweeps n at a single dimension");
  return detail::run_grid(cfg, sink);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const std::vector<MseRecord>& records) {
  os << "K,n,run,mse_dhalf,mse_sample\n";
  for (const auto& r : records) {
    os << r.k << ',' << r.n << ',' << r.run << ',' << format_double(r.mse_dhalf) << ','
       << format_double(r.mse_sample) << '\n';
  }
}

struct CellSummary {
  std::size_t key = 0;  // K or n
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  double std_error = 0.0;
};

/// Groups records by key (ascending) and summarizes value(record).
inline std::vector<CellSummary> summarize(const std::vector<MseRecord>& records,
                                          const std::function<std::size_t(const MseRecord&)>& key,
                                          const std::function<double(const MseRecord&)>& value) {
  std::map<std::size_t, std::vector<double>> groups;
  for (const auto& r : records) groups[key(r)].push_back(value(r));
  std::vector<CellSummary> out;
  for (const auto& [k, vals] : groups) {
    CellSummary s;
    s.key = k;
    s.count = vals.size();
    double sum = 0.0;
    for (double v : vals) sum += v;
    s.mean = sum / static_cast<double>(vals.size());
    if (vals.size() > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - s.mean) * (v - s.mean);
      s.stddev = std::sqrt(ss / static_cast<double>(vals.size() - 1));
      s.std_error = s.stddev / std::sqrt(static_cast<double>(vals.size()));
    }
    out.push_back(s);
  }
  return out;
}

inline double pooled_std_error(const CellSummary& a, const CellSummary& b) {
  return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
}

/// True when every consecutive pair satisfies mean[i+1] <= mean[i] + pooled SE.
inline bool non_increasing_within_se(const std::vector<CellSummary>& cells) {
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (cells[i].mean > cells[i - 1].mean + pooled_std_error(cells[i - 1], cells[i])) return false;
  }
  return true;
}

}  // namespace fimest
