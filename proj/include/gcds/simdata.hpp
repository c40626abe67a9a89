#pragma once

// Simulation models M1-M4 and the 2-D conditional helix, with ground-truth
// conditional functionals.

#include "gcds/common.hpp"
#include "gcds/dataio.hpp"

#include <boost/math/distributions/normal.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace gcds::sim {

enum class ModelId { m1, m2, m3, m4, helix };

inline std::string to_string(ModelId id) {
  switch (id) {
    case ModelId::m1: return "M1";
    case ModelId::m2: return "M2";
    case ModelId::m3: return "M3";
    case ModelId::m4: return "M4";
    case ModelId::helix: return "Helix";
  }
  return "?";
}

inline ModelId parse_model(const std::string& s) {
  if (s == "M1") return ModelId::m1;
  if (s == "M2") return ModelId::m2;
  if (s == "M3") return ModelId::m3;
  if (s == "M4") return ModelId::m4;
  if (s == "Helix" || s == "helix") return ModelId::helix;
  fail(ErrorKind::invalid_input, "unknown model id '" + s + "'");
}

struct SimModel {
  ModelId id = ModelId::m1;
  int d = 5;
  int q = 1;
  double noise_sigma = 0.4;  // helix only

  std::string name() const { return to_string(id); }
};

inline SimModel make_model(ModelId id, double helix_sigma = 0.4) {
  switch (id) {
    case ModelId::m1: return {id, 5, 1, 0.0};
    case ModelId::m2: return {id, 5, 1, 0.0};
    case ModelId::m3: return {id, 30, 1, 0.0};
    case ModelId::m4: return {id, 1, 1, 0.0};
    case ModelId::helix: return {id, 1, 2, helix_sigma};
  }
  return {};
}

inline SimModel make_model(const std::string& name, double helix_sigma = 0.4) {
  return make_model(parse_model(name), helix_sigma);
}

namespace detail {

// M3 error: eps ~ 1/2 N(-2,1) + 1/2 N(2,1); response multiplier exp(0.5 eps).
inline constexpr std::array<double, 2> kM3Centers{-2.0, 2.0};
inline constexpr double kM3ErrorSd = 1.0;
inline constexpr double kM3Exponent = 0.5;
// M4: Y ~ 1/2 N(-x1, 0.25^2) + 1/2 N(x1, 0.25^2).
inline constexpr double kM4Sd = 0.25;

inline double m3_scale(const Eigen::Ref<const Vector>& x) {
  return 5.0 + x[0] * x[0] / 3.0 + x[1] * x[1] + x[2] * x[2] + x[3] + x[4];
}

// E[exp(k * eps)] for the M3 error mixture: mean of lognormal MGFs.
inline double m3_error_mgf(double k) {
  double s = 0.0;
  for (double c : kM3Centers)
    s += std::exp(k * c + 0.5 * k * k * kM3ErrorSd * kM3ErrorSd);
  return s / static_cast<double>(kM3Centers.size());
}

inline double m12_location(const Eigen::Ref<const Vector>& x, ModelId id) {
  const double base = x[0] * x[0] + std::exp(x[1] + x[2] / 3.0);
  return id == ModelId::m1 ? base + std::sin(x[3] + x[4]) : base + x[3] - x[4];
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline void check_x(const SimModel& m, const Eigen::Ref<const Vector>& x) {
  require(x.size() == m.d, ErrorKind::invalid_input,
          m.name() + " expects x of length " + std::to_string(m.d));
}

inline void require_scalar(const SimModel& m) {
  if (m.q != 1)
    fail(ErrorKind::unsupported, m.name() + " has a vector response; scalar truths are undefined");
}

}  // namespace detail

// One draw of Y | X = x.
inline Vector draw_response(const SimModel& m, const Eigen::Ref<const Vector>& x, Rng& rng) {
  detail::check_x(m, x);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector y(m.q);
  switch (m.id) {
    case ModelId::m1:
      y[0] = detail::m12_location(x, m.id) + normal(rng);
      break;
    case ModelId::m2:
      y[0] = detail::m12_location(x, m.id) +
             (0.5 + x[1] * x[1] / 2.0 + x[4] * x[4] / 2.0) * normal(rng);
      break;
    case ModelId::m3: {
      const double center = uniform(rng) < 0.5 ? detail::kM3Centers[0] : detail::kM3Centers[1];
      const double eps = center + detail::kM3ErrorSd * normal(rng);
      y[0] = detail::m3_scale(x) * std::exp(detail::kM3Exponent * eps);
      break;
    }
    case ModelId::m4: {
      const double sign = uniform(rng) < 0.5 ? -1.0 : 1.0;
      y[0] = sign * x[0] + detail::kM4Sd * normal(rng);
      break;
    }
    case ModelId::helix: {
      const double u = 2.0 * std::numbers::pi * uniform(rng);
      const double e1 = m.noise_sigma * normal(rng);
      const double e2 = m.noise_sigma * normal(rng);
      y[0] = 2.0 * x[0] + u * std::sin(2.0 * u) + e1;
      y[1] = 2.0 * x[0] + u * std::cos(2.0 * u) + e2;
      break;
    }
  }
  return y;
}

// Covariates only (standard normal), as used for test points.
inline Matrix draw_covariates(const SimModel& m, Eigen::Index n, Rng& rng) {
  return standard_normal(n, m.d, rng);
}

inline std::string provenance_id(const SimModel& m, Eigen::Index n, std::uint64_t seed) {
  return "sim:" + m.name() + ":n=" + std::to_string(n) + ":seed=" + std::to_string(seed);
}

inline data::PairedDataset generate(const SimModel& m, Eigen::Index n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::invalid_input, "generate needs n >= 1");
  Rng rng(seed);
  data::PairedDataset ds;
  ds.x = draw_covariates(m, n, rng);
  ds.y.resize(n, m.q);
  for (Eigen::Index i = 0; i < n; ++i) ds.y.row(i) = draw_response(m, ds.x.row(i).transpose(), rng);
  ds.covariates = data::continuous_columns("x", m.d, data::ColumnRole::covariate);
  ds.responses = data::continuous_columns("y", m.q, data::ColumnRole::response);
  ds.provenance = provenance_id(m, n, seed);
  return ds;
}

// --- ground truth --------------------------------------------------------

inline double true_mean(const SimModel& m, const Eigen::Ref<const Vector>& x) {
  detail::require_scalar(m);
  detail::check_x(m, x);
  switch (m.id) {
    case ModelId::m1:
    case ModelId::m2: return detail::m12_location(x, m.id);
    case ModelId::m3: return detail::m3_scale(x) * detail::m3_error_mgf(detail::kM3Exponent);
    default: return 0.0;
  }
}

inline double true_sd(const SimModel& m, const Eigen::Ref<const Vector>& x) {
  detail::require_scalar(m);
  detail::check_x(m, x);
  switch (m.id) {
    case ModelId::m1: return 1.0;
    case ModelId::m2: return 0.5 + x[1] * x[1] / 2.0 + x[4] * x[4] / 2.0;
    case ModelId::m3: {
      const double m1 = detail::m3_error_mgf(detail::kM3Exponent);
      const double m2 = detail::m3_error_mgf(2.0 * detail::kM3Exponent);
      return std::abs(detail::m3_scale(x)) * std::sqrt(m2 - m1 * m1);
    }
    default: return std::sqrt(x[0] * x[0] + detail::kM4Sd * detail::kM4Sd);
  }
}

// P(Y <= y | X = x).
inline double true_cdf(const SimModel& m, const Eigen::Ref<const Vector>& x, double y) {
  detail::require_scalar(m);
  detail::check_x(m, x);
  using detail::normal_cdf;
  switch (m.id) {
    case ModelId::m1:
    case ModelId::m2: return normal_cdf((y - true_mean(m, x)) / true_sd(m, x));
    case ModelId::m3: {
      // Y = s * exp(k eps): P(Y <= y) = P(eps <= log(y/s)/k) when s > 0.
      const double s = detail::m3_scale(x);
      if (s == 0.0) return y >= 0.0 ? 1.0 : 0.0;
      const double r = y / s;
      double below = 0.0;  // P(exp(k eps) <= r)
      if (r > 0.0) {
        const double t = std::log(r) / detail::kM3Exponent;
        for (double c : detail::kM3Centers) below += 0.5 * normal_cdf((t - c) / detail::kM3ErrorSd);
      }
      return s > 0.0 ? below : 1.0 - below;
    }
    default: {
      const double mu = x[0];
      return 0.5 * normal_cdf((y + mu) / detail::kM4Sd) + 0.5 * normal_cdf((y - mu) / detail::kM4Sd);
    }
  }
}

inline double true_quantile(const SimModel& m, const Eigen::Ref<const Vector>& x, double tau) {
  detail::require_scalar(m);
  require(tau > 0.0 && tau < 1.0, ErrorKind::invalid_input, "tau must lie in (0, 1)");
  if (m.id == ModelId::m1 || m.id == ModelId::m2) {
    boost::math::normal_distribution<double> n01;
    return true_mean(m, x) + true_sd(m, x) * boost::math::quantile(n01, tau);
  }
  const double mu = true_mean(m, x);
  const double sd = true_sd(m, x);
  double lo = mu - 20.0 * sd;
  double hi = mu + 20.0 * sd;
  if (!(true_cdf(m, x, lo) <= tau && true_cdf(m, x, hi) >= tau))
    fail(ErrorKind::numeric, "quantile bisection bracket does not contain tau");
  while (hi - lo > 1e-12 * std::max(1.0, std::abs(mu) + sd)) {
    const double mid = 0.5 * (lo + hi);
    if (true_cdf(m, x, mid) < tau) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace gcds::sim
