#pragma once

// Monte Carlo functionals of a learned conditional distribution.

#include "gcds/common.hpp"
#include "gcds/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace gcds::sampling {

inline constexpr Eigen::Index kDefaultDraws = 10000;

struct ConditionalSampleSet {
  Vector x;
  Matrix draws;  // J x q
  std::uint64_t seed = 0;

  Eigen::Index size() const { return draws.rows(); }
  Eigen::Index dim() const { return draws.cols(); }
};

inline ConditionalSampleSet sample_conditional(const train::TrainedGenerator& gen,
                                               const Vector& x, Eigen::Index draws,
                                               std::uint64_t seed) {
  require(draws >= 1, ErrorKind::invalid_input, "sample_conditional needs J >= 1");
  require(x.size() == gen.covariate_dim(), ErrorKind::invalid_input,
          "covariate vector length does not match the generator");
  Rng rng(seed);
  const Matrix noise = standard_normal(draws, gen.noise_dim, rng);
  const Matrix xs = x.transpose().replicate(draws, 1);
  return {x, gen.generate(xs, noise), seed};
}

struct MeanSd {
  Vector mean;
  Vector sd;
};

// Divisor J for the SD (plain Monte Carlo second moment about the mean).
inline MeanSd mc_mean_sd(const ConditionalSampleSet& s) {
  require(s.size() >= 2, ErrorKind::invalid_input, "mc_mean_sd needs at least 2 draws");
  MeanSd out;
  out.mean = s.draws.colwise().mean().transpose();
  out.sd = ((s.draws.rowwise() - out.mean.transpose()).array().square().colwise().sum() /
            static_cast<double>(s.size()))
               .sqrt()
               .transpose();
  return out;
}

namespace detail {

inline std::vector<double> sorted_column(const ConditionalSampleSet& s) {
  if (s.dim() != 1) fail(ErrorKind::unsupported, "quantiles need a scalar response (q = 1)");
  std::vector<double> v(s.draws.data(), s.draws.data() + s.size());
  std::sort(v.begin(), v.end());
  return v;
}

// Nearest rank: the ceil(tau * J)-th order statistic (1-based), at least 1.
inline double nearest_rank(const std::vector<double>& sorted, double tau) {
  require(tau > 0.0 && tau < 1.0, ErrorKind::invalid_input, "tau must lie in (0, 1)");
  const auto j = static_cast<double>(sorted.size());
  // Guard against tau*J landing a hair above an integer through rounding.
  auto rank = static_cast<std::size_t>(std::ceil(tau * j - 1e-9 * j * tau));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

}  // namespace detail

inline double mc_quantile(const ConditionalSampleSet& s, double tau) {
  return detail::nearest_rank(detail::sorted_column(s), tau);
}

inline std::vector<double> mc_quantiles(const ConditionalSampleSet& s,
                                        const std::vector<double>& taus) {
  const auto sorted = detail::sorted_column(s);
  std::vector<double> out;
  out.reserve(taus.size());
  for (double t : taus) out.push_back(detail::nearest_rank(sorted, t));
  return out;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline Interval prediction_interval(const ConditionalSampleSet& s, double level) {
  require(level > 0.0 && level < 1.0, ErrorKind::invalid_input, "level must lie in (0, 1)");
  const auto sorted = detail::sorted_column(s);
  return {detail::nearest_rank(sorted, (1.0 - level) / 2.0),
          detail::nearest_rank(sorted, (1.0 + level) / 2.0)};
}

struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> values;
  double bandwidth = 0.0;

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "y,density\n";
    for (std::size_t i = 0; i < grid.size(); ++i) out << grid[i] << ',' << values[i] << '\n';
    return out.str();
  }
};

// 1.06 * min(SD, IQR / 1.349) * J^(-1/5).
inline double silverman_bandwidth(const std::vector<double>& sorted) {
  const auto n = static_cast<double>(sorted.size());
  require(sorted.size() >= 2, ErrorKind::invalid_input, "bandwidth needs at least 2 points");
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  auto type7 = [&](double p) {
    const double h = (n - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = type7(0.75) - type7(0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
  return 1.06 * spread * std::pow(n, -0.2);
}

// A positive `bandwidth` is used as given; otherwise Silverman's rule.
inline DensityCurve kde_curve(const ConditionalSampleSet& s, std::vector<double> grid,
                              double bandwidth = 0.0) {
  require(!grid.empty(), ErrorKind::invalid_input, "kde_curve needs a non-empty grid");
  require(std::is_sorted(grid.begin(), grid.end()), ErrorKind::invalid_input,
          "kde_curve grid must be sorted");
  const auto sorted = detail::sorted_column(s);
  const double h = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(sorted);
  require(h > 0.0, ErrorKind::numeric, "kde bandwidth is zero (degenerate draws)");
  const double norm = 1.0 / (static_cast<double>(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  DensityCurve c;
  c.bandwidth = h;
  c.values.reserve(grid.size());
  for (double g : grid) {
    double acc = 0.0;
    for (double v : sorted) {
      const double z = (g - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    c.values.push_back(acc * norm);
  }
  c.grid = std::move(grid);
  return c;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t points) {
  require(points >= 2 && hi > lo, ErrorKind::invalid_input, "linspace needs hi > lo and >= 2 points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

// Grid from min - 4h to max + 4h of the draws.
inline std::vector<double> default_kde_grid(const ConditionalSampleSet& s, std::size_t points,
                                            double bandwidth = 0.0) {
  const auto sorted = detail::sorted_column(s);
  const double h = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(sorted);
  return linspace(sorted.front() - 4.0 * h, sorted.back() + 4.0 * h, points);
}

inline std::string samples_to_csv(const ConditionalSampleSet& s) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index j = 0; j < s.dim(); ++j) out << (j ? "," : "") << "y" << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    for (Eigen::Index j = 0; j < s.dim(); ++j) out << (j ? "," : "") << s.draws(i, j);
    out << '\n';
  }
  return out.str();
}

}  // namespace gcds::sampling
