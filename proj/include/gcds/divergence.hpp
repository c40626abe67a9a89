#pragma once

// Variational f-divergence objectives.
//
// The dual criterion is  E_fake[D] - E_real[f*(D)].  For KL the argument of
// the conjugate is shifted (D - 1 -> D), so the real term is exp(D) and the
// objective lower-bounds KL - 1; `kl_estimate` adds the constant back.

#include "gcds/common.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace gcds::divergence {

enum class DivergenceKind { kl, js, chi_squared };

inline std::string to_string(DivergenceKind k) {
  switch (k) {
    case DivergenceKind::kl: return "KL";
    case DivergenceKind::js: return "JS";
    case DivergenceKind::chi_squared: return "ChiSquared";
  }
  return "?";
}

inline DivergenceKind parse_kind(const std::string& s) {
  if (s == "KL" || s == "kl") return DivergenceKind::kl;
  if (s == "JS" || s == "js") return DivergenceKind::js;
  if (s == "ChiSquared" || s == "chi2" || s == "chi_squared") return DivergenceKind::chi_squared;
  fail(ErrorKind::invalid_input, "unknown divergence kind '" + s + "'");
}

// exp(D) is evaluated on min(D, kExpClip); beyond the clip the gradient is 0.
inline constexpr double kExpClip = 10.0;
// JS conjugate is only defined for t < log 2; D on real pairs is clipped here.
inline const double kJsClip = std::log(2.0) - 1e-3;

// Fenchel conjugate f*(t), unshifted.
inline double conjugate(DivergenceKind kind, double t) {
  switch (kind) {
    case DivergenceKind::kl:
      return std::exp(t - 1.0);
    case DivergenceKind::js:
      if (!(t < std::log(2.0)))
        fail(ErrorKind::domain, "JS conjugate requires t < log 2, got " + std::to_string(t));
      return -std::log(2.0 - std::exp(t));
    case DivergenceKind::chi_squared:
      return t + t * t / 4.0;
  }
  return 0.0;
}

// f'(r): the optimal dual variable for density ratio r = q/p
// (shifted by -1 for KL, matching the objective used here).
inline double optimal_discriminator(DivergenceKind kind, double ratio) {
  switch (kind) {
    case DivergenceKind::kl: return std::log(ratio);
    case DivergenceKind::js: return std::log(2.0 * ratio / (ratio + 1.0));
    case DivergenceKind::chi_squared: return 2.0 * (ratio - 1.0);
  }
  return 0.0;
}

namespace detail {

// Real-pair term as used in the objective, and its derivative.
inline double real_term(DivergenceKind kind, double d) {
  switch (kind) {
    case DivergenceKind::kl: return std::exp(std::min(d, kExpClip));
    case DivergenceKind::js: return -std::log(2.0 - std::exp(std::min(d, kJsClip)));
    case DivergenceKind::chi_squared: return d + d * d / 4.0;
  }
  return 0.0;
}

inline double real_term_derivative(DivergenceKind kind, double d) {
  switch (kind) {
    case DivergenceKind::kl: return d > kExpClip ? 0.0 : std::exp(d);
    case DivergenceKind::js: {
      if (d > kJsClip) return 0.0;
      const double e = std::exp(d);
      return e / (2.0 - e);
    }
    case DivergenceKind::chi_squared: return 1.0 + d / 2.0;
  }
  return 0.0;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

struct DualObjectiveValue {
  double value = 0.0;
  double fake_term = 0.0;  // mean D on generated pairs
  double real_term = 0.0;  // mean f*(D) on data pairs
};

inline DualObjectiveValue empirical_dual(DivergenceKind kind, std::span<const double> d_fake,
                                         std::span<const double> d_real) {
  require(!d_fake.empty() && !d_real.empty(), ErrorKind::contract,
          "empirical_dual needs non-empty fake and real vectors");
  DualObjectiveValue out;
  out.fake_term = detail::mean(d_fake);
  double s = 0.0;
  for (double d : d_real) s += detail::real_term(kind, d);
  out.real_term = s / static_cast<double>(d_real.size());
  out.value = out.fake_term - out.real_term;
  return out;
}

// Reported KL estimate: the objective plus the constant dropped by the shift.
inline double kl_estimate(const DualObjectiveValue& v) { return v.value + 1.0; }

struct DiscriminatorUpstream {
  std::vector<double> fake;
  std::vector<double> real;
};

// Partial derivatives of empirical_dual w.r.t. each discriminator output.
inline DiscriminatorUpstream discriminator_upstream(DivergenceKind kind,
                                                    std::span<const double> d_fake,
                                                    std::span<const double> d_real) {
  require(!d_fake.empty() && !d_real.empty(), ErrorKind::contract,
          "discriminator_upstream needs non-empty fake and real vectors");
  DiscriminatorUpstream g;
  const double nf = static_cast<double>(d_fake.size());
  const double nr = static_cast<double>(d_real.size());
  g.fake.assign(d_fake.size(), 1.0 / nf);
  g.real.reserve(d_real.size());
  for (double d : d_real) g.real.push_back(-detail::real_term_derivative(kind, d) / nr);
  return g;
}

// Derivative of mean(d_fake); the generator descends this.
inline std::vector<double> generator_upstream(DivergenceKind /*kind*/,
                                              std::span<const double> d_fake) {
  require(!d_fake.empty(), ErrorKind::contract, "generator_upstream needs a non-empty batch");
  return std::vector<double>(d_fake.size(), 1.0 / static_cast<double>(d_fake.size()));
}

// Population dual  E_q[D] - E_p[f*(D)]  by adaptive Gauss-Kronrod quadrature
// over the real line. D is evaluated exactly (no clipping).
template <class DensityQ, class DensityP, class Discriminator>
double population_dual(DivergenceKind kind, DensityQ q, DensityP p, Discriminator d,
                       double tol = 1e-12) {
  const double inf = std::numeric_limits<double>::infinity();
  auto shifted_conjugate = [kind](double t) {
    return kind == DivergenceKind::kl ? std::exp(t) : conjugate(kind, t);
  };
  auto integrand = [&](double z) {
    const double qz = q(z);
    const double pz = p(z);
    double val = 0.0;
    if (qz > 0.0) val += qz * d(z);
    if (pz > 0.0) val -= pz * shifted_conjugate(d(z));
    return val;
  };
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 61>::integrate(integrand, -inf, inf, 15, tol);
}

}  // namespace gcds::divergence
