#pragma once

// Conditional kernel density estimation baseline: ratio of product-Gaussian
// joint and marginal kernel estimates with rule-of-thumb bandwidths, plus
// trapezoid-integrated conditional moments and quantiles.

#include "gcds/common.hpp"
#include "gcds/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace gcds::ckde {

inline constexpr int kKernelOrder = 2;
inline constexpr int kSubdivisions = 1000;
inline constexpr double kTailMassWarning = 0.01;

// min(SD, IQR / 1.349); a zero IQR falls back to the SD.
inline double spread_rule(double sd, double iqr) {
  return iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
}

// SD uses n - 1; quartiles interpolate linearly between order statistics.
inline double robust_spread(std::vector<double> column) {
  require(column.size() >= 2, ErrorKind::invalid_input, "spread needs at least 2 values");
  std::sort(column.begin(), column.end());
  const auto n = static_cast<double>(column.size());
  const double mean = std::accumulate(column.begin(), column.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : column) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  auto quantile = [&](double p) {
    const double h = (n - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, column.size() - 1);
    return column[lo] + (h - std::floor(h)) * (column[hi] - column[lo]);
  };
  return spread_rule(sd, quantile(0.75) - quantile(0.25));
}

// h = 1.06 * sigma * n^(-1 / (2K + J)), written as a division so that
// exact roots such as 1024^(1/5) stay exact.
inline double rule_of_thumb(double sigma, double n, int kernel_order, int n_continuous) {
  return 1.06 * sigma / std::pow(n, 1.0 / (2.0 * kernel_order + n_continuous));
}

struct CkdeFit {
  Matrix x;  // rows sorted lexicographically by (x, y)
  Vector y;
  Vector hx;
  double hy = 0.0;
  int kernel_order = kKernelOrder;

  Eigen::Index size() const { return x.rows(); }
  double max_bandwidth() const { return std::max(hy, hx.size() ? hx.maxCoeff() : 0.0); }
};

inline CkdeFit fit(const data::PairedDataset& ds) {
  require(ds.response_dim() == 1, ErrorKind::unsupported, "CKDE baseline supports q = 1 only");
  require(!ds.has_categorical(), ErrorKind::unsupported,
          "CKDE baseline handles continuous columns only; one-hot encode categoricals first");
  require(ds.size() >= 2, ErrorKind::invalid_input, "CKDE needs at least 2 observations");
  const auto n = ds.size();
  const auto d = ds.covariate_dim();
  const int n_cont = static_cast<int>(d + 1);

  CkdeFit f;
  f.hx.resize(d);
  auto bandwidth = [&](const Eigen::Ref<const Vector>& col, const std::string& name) {
    const double sigma = robust_spread(std::vector<double>(col.data(), col.data() + col.size()));
    if (!(sigma > 0.0))
      fail(ErrorKind::numeric, "degenerate bandwidth: column '" + name + "' has zero spread");
    return rule_of_thumb(sigma, static_cast<double>(n), kKernelOrder, n_cont);
  };
  for (Eigen::Index j = 0; j < d; ++j)
    f.hx[j] = bandwidth(ds.x.col(j), ds.covariates.empty() ? "x" : ds.covariates[j].name);
  f.hy = bandwidth(ds.y.col(0), ds.responses.empty() ? "y" : ds.responses[0].name);

  // Canonical row order so sums do not depend on input order.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < d; ++j)
      if (ds.x(a, j) != ds.x(b, j)) return ds.x(a, j) < ds.x(b, j);
    return ds.y(a, 0) < ds.y(b, 0);
  });
  f.x.resize(n, d);
  f.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    f.x.row(i) = ds.x.row(order[static_cast<std::size_t>(i)]);
    f.y[i] = ds.y(order[static_cast<std::size_t>(i)], 0);
  }
  return f;
}

// Normalized kernel weights over training rows for covariate x.
struct ConditionalWeights {
  std::vector<double> weights;  // sum to 1
  double log_marginal = 0.0;    // log f_X(x)
};

inline ConditionalWeights conditional_weights(const CkdeFit& f, const Vector& x) {
  require(x.size() == f.x.cols(), ErrorKind::invalid_input,
          "covariate vector length does not match the CKDE fit");
  const auto n = f.size();
  std::vector<double> logw(static_cast<std::size_t>(n));
  double log_norm = 0.0;  // sum_j log(h_j sqrt(2 pi))
  for (Eigen::Index j = 0; j < f.x.cols(); ++j)
    log_norm += std::log(f.hx[j] * std::sqrt(2.0 * std::numbers::pi));
  double max_lw = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < f.x.cols(); ++j) {
      const double z = (x[j] - f.x(i, j)) / f.hx[j];
      s -= 0.5 * z * z;
    }
    logw[static_cast<std::size_t>(i)] = s;
    max_lw = std::max(max_lw, s);
  }
  double total = 0.0;
  for (double& lw : logw) {
    lw = std::exp(lw - max_lw);
    total += lw;
  }
  ConditionalWeights out;
  out.log_marginal = max_lw + std::log(total) - std::log(static_cast<double>(n)) - log_norm;
  if (out.log_marginal < std::log(1e-300))
    fail(ErrorKind::unsupported, "CKDE marginal density underflows at this covariate value");
  for (double& w : logw) w /= total;
  out.weights = std::move(logw);
  return out;
}

namespace detail {

inline double mixture_density(const CkdeFit& f, const std::vector<double>& w, double y) {
  const double norm = 1.0 / (f.hy * std::sqrt(2.0 * std::numbers::pi));
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double z = (y - f.y[static_cast<Eigen::Index>(i)]) / f.hy;
    acc += w[i] * std::exp(-0.5 * z * z);
  }
  return acc * norm;
}

}  // namespace detail

inline double cond_density(const CkdeFit& f, const Vector& x, double y) {
  return detail::mixture_density(f, conditional_weights(f, x).weights, y);
}

struct GridSpec {
  double lo = 0.0;
  double hi = 0.0;
  int subdivisions = kSubdivisions;
};

// [min y - 4 max h, max y + 4 max h] over the training responses.
inline GridSpec default_grid(const CkdeFit& f) {
  const double pad = 4.0 * f.max_bandwidth();
  return {f.y.minCoeff() - pad, f.y.maxCoeff() + pad, kSubdivisions};
}

// Conditional density tabulated on a uniform grid, with the running
// trapezoid CDF.
struct GridDensity {
  std::vector<double> nodes;
  std::vector<double> density;
  std::vector<double> cdf;

  double mass() const { return cdf.back(); }
};

inline GridDensity evaluate_on_grid(const CkdeFit& f, const Vector& x, const GridSpec& g) {
  require(g.hi > g.lo && g.subdivisions >= 1, ErrorKind::invalid_input, "invalid CKDE grid");
  const auto w = conditional_weights(f, x).weights;
  GridDensity out;
  const auto points = static_cast<std::size_t>(g.subdivisions) + 1;
  const double step = (g.hi - g.lo) / g.subdivisions;
  out.nodes.resize(points);
  out.density.resize(points);
  out.cdf.resize(points);
  for (std::size_t k = 0; k < points; ++k) {
    out.nodes[k] = g.lo + step * static_cast<double>(k);
    out.density[k] = detail::mixture_density(f, w, out.nodes[k]);
    out.cdf[k] = k == 0 ? 0.0 : out.cdf[k - 1] + 0.5 * step * (out.density[k - 1] + out.density[k]);
  }
  return out;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double mass = 0.0;
  bool tail_warning = false;  // more than 1% of the mass lies outside the grid
};

inline Moments moments_from_grid(const GridDensity& gd) {
  auto trapezoid = [&](auto&& fn) {
    double acc = 0.0;
    for (std::size_t k = 1; k < gd.nodes.size(); ++k)
      acc += 0.5 * (gd.nodes[k] - gd.nodes[k - 1]) *
             (fn(gd.nodes[k - 1]) * gd.density[k - 1] + fn(gd.nodes[k]) * gd.density[k]);
    return acc;
  };
  Moments m;
  m.mass = gd.mass();
  m.mean = trapezoid([](double y) { return y; });
  const double var = trapezoid([&](double y) { return (y - m.mean) * (y - m.mean); });
  m.sd = std::sqrt(std::max(var, 0.0));
  m.tail_warning = 1.0 - m.mass > kTailMassWarning;
  return m;
}

inline Moments cond_moments(const CkdeFit& f, const Vector& x, const GridSpec& g) {
  return moments_from_grid(evaluate_on_grid(f, x, g));
}

inline Moments cond_moments(const CkdeFit& f, const Vector& x) {
  return cond_moments(f, x, default_grid(f));
}

// Inverts the grid CDF with linear interpolation between nodes.
inline double quantile_from_grid(const GridDensity& gd, double tau) {
  require(tau > 0.0 && tau < 1.0, ErrorKind::invalid_input, "tau must lie in (0, 1)");
  if (tau > gd.cdf.back())
    fail(ErrorKind::numeric, "grid-coverage error: tau exceeds the CDF mass on the grid");
  const auto it = std::lower_bound(gd.cdf.begin(), gd.cdf.end(), tau);
  const auto k = static_cast<std::size_t>(it - gd.cdf.begin());
  if (k == 0) return gd.nodes.front();
  const double c0 = gd.cdf[k - 1];
  const double c1 = gd.cdf[k];
  const double frac = c1 > c0 ? (tau - c0) / (c1 - c0) : 0.0;
  return gd.nodes[k - 1] + frac * (gd.nodes[k] - gd.nodes[k - 1]);
}

inline double cond_quantile(const CkdeFit& f, const Vector& x, double tau, const GridSpec& g) {
  return quantile_from_grid(evaluate_on_grid(f, x, g), tau);
}

inline double cond_quantile(const CkdeFit& f, const Vector& x, double tau) {
  return cond_quantile(f, x, tau, default_grid(f));
}

}  // namespace gcds::ckde
