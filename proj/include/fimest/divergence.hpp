#pragma once

// Empirical D_alpha divergence from the Friedman-Rafsky statistic, plus
// quadrature references for the population quantities.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fimest/emst.hpp"
#include "fimest/error.hpp"

namespace fimest {

struct DivergenceEstimate {
  double d_hat = 0.0;
  std::size_t c = 0;
  std::size_t n_p = 0;
  std::size_t n_q = 0;
  double alpha = 0.5;  // n_p / (n_p + n_q)
};

/// d_hat = 1 - C (n_p + n_q) / (2 n_p n_q). Raw value: may be negative.
inline DivergenceEstimate divergence_from_count(std::size_t c, std::size_t n_p, std::size_t n_q) {
  if (n_p == 0 || n_q == 0) throw Error(ErrorCode::ShapeError, "both samples must be nonempty");
  const double np = static_cast<double>(n_p);
  const double nq = static_cast<double>(n_q);
  return {1.0 - static_cast<double>(c) * (np + nq) / (2.0 * np * nq), c, n_p, n_q, np / (np + nq)};
}

inline DivergenceEstimate estimate_divergence(const PointCloud& xp, const PointCloud& xq) {
  const auto fr = fr_statistic(xp, xq);
  return divergence_from_count(fr.c, fr.n_p, fr.n_q);
}

/// Floors d_hat at 0 for standalone reporting. FIM fitting uses raw values.
inline DivergenceEstimate clamped(DivergenceEstimate est) {
  est.d_hat = std::clamp(est.d_hat, 0.0, 1.0);
  return est;
}

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::DomainError, "alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

}  // namespace detail

/// Generator of D_alpha as an f-divergence:
/// f(t) = [(a t - (1-a))^2 / (a t + (1-a)) - (2a - 1)^2] / (4 a (1-a)).
inline double f_weight(double t, double alpha) {
  detail::check_alpha(alpha);
  if (!(t > 0.0)) throw Error(ErrorCode::DomainError, "f is defined for t > 0, got " + std::to_string(t));
  const double a = alpha;
  const double b = 1.0 - alpha;
  const double num = a * t - b;
  const double skew = 2.0 * a - 1.0;
  return (num * num / (a * t + b) - skew * skew) / (4.0 * a * b);
}

/// Two densities on a bounded interval, used as quadrature references.
struct DensityPair1D {
  std::function<double(double)> p;
  std::function<double(double)> q;
  double lo = 0.0;
  double hi = 0.0;
};

inline double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// N(mu_p, sd_p^2) vs N(mu_q, sd_q^2) on an interval spanning `width` standard
/// deviations of both densities on each side.
inline DensityPair1D gaussian_pair(double mu_p, double sd_p, double mu_q, double sd_q, double width = 10.0) {
  return {[=](double x) { return normal_pdf(x, mu_p, sd_p); },
          [=](double x) { return normal_pdf(x, mu_q, sd_q); },
          std::min(mu_p - width * sd_p, mu_q - width * sd_q),
          std::max(mu_p + width * sd_p, mu_q + width * sd_q)};
}

namespace detail {

inline constexpr double kQuadratureTolerance = 1e-6;

template <class F>
double integrate(F&& f, double lo, double hi) {
  double err = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 20, 1e-13, &err);
  if (!std::isfinite(value) || !(err <= kQuadratureTolerance)) {
    throw Error(ErrorCode::QuadratureFailure, "error estimate " + std::to_string(err) + " above tolerance");
  }
  return value;
}

inline void check_pair(const DensityPair1D& pair) {
  if (!pair.p || !pair.q || !(pair.hi > pair.lo)) {
    throw Error(ErrorCode::DomainError, "density pair needs two functions and lo < hi");
  }
  constexpr int kProbe = 2001;
  for (int i = 0; i < kProbe; ++i) {
    const double x = pair.lo + (pair.hi - pair.lo) * i / (kProbe - 1);
    if (pair.p(x) < 0.0 || pair.q(x) < 0.0) {
      throw Error(ErrorCode::DomainError, "negative density at x = " + std::to_string(x));
    }
  }
  for (const auto* fn : {&pair.p, &pair.q}) {
    const double mass = integrate(*fn, pair.lo, pair.hi);
    if (std::abs(mass - 1.0) > kQuadratureTolerance) {
      throw Error(ErrorCode::DomainError, "density integrates to " + std::to_string(mass));
    }
  }
}

}  // namespace detail

/// D_alpha(p, q) by direct quadrature of the mixture-weighted chi-square form.
inline double divergence_quadrature(const DensityPair1D& pair, double alpha) {
  detail::check_alpha(alpha);
  detail::check_pair(pair);
  const double a = alpha;
  const double b = 1.0 - alpha;
  const double integral = detail::integrate(
      [&](double x) {
        const double px = pair.p(x);
        const double qx = pair.q(x);
        const double mix = a * px + b * qx;
        if (mix <= 0.0) return 0.0;
        const double diff = a * px - b * qx;
        return diff * diff / mix;
      },
      pair.lo, pair.hi);
  const double skew = 2.0 * a - 1.0;
  return (integral - skew * skew) / (4.0 * a * b);
}

/// D_alpha(p, q) as the f-divergence integral of f(p/q) q.
inline double f_divergence_quadrature(const DensityPair1D& pair, double alpha) {
  detail::check_alpha(alpha);
  detail::check_pair(pair);
  return detail::integrate(
      [&](double x) {
        const double px = pair.p(x);
        const double qx = pair.q(x);
        if (qx <= 0.0) return px / (4.0 * (1.0 - alpha));  // limit of f(t) q as q -> 0
        if (px <= 0.0) {  // f(0) q
          const double skew = 2.0 * alpha - 1.0;
          return qx * ((1.0 - alpha) - skew * skew) / (4.0 * alpha * (1.0 - alpha));
        }
        return f_weight(px / qx, alpha) * qx;
      },
      pair.lo, pair.hi);
}

/// Henze-Penrose limit of C / (n_p + n_q):
/// A_alpha = 2 a (1-a) * integral of p q / (a p + (1-a) q).
inline double a_alpha_quadrature(const DensityPair1D& pair, double alpha) {
  detail::check_alpha(alpha);
  detail::check_pair(pair);
  const double a = alpha;
  const double b = 1.0 - alpha;
  const double integral = detail::integrate(
      [&](double x) {
        const double px = pair.p(x);
        const double qx = pair.q(x);
        const double mix = a * px + b * qx;
        return mix > 0.0 ? px * qx / mix : 0.0;
      },
      pair.lo, pair.hi);
  return 2.0 * a * b * integral;
}

}  // namespace fimest
