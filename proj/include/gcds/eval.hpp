#pragma once

// Metrics and the replication harness for the simulation benchmarks.

#include "gcds/ckde.hpp"
#include "gcds/common.hpp"
#include "gcds/sampler.hpp"
#include "gcds/simdata.hpp"
#include "gcds/trainer.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <future>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gcds::eval {

inline double mse_functional(const std::vector<double>& estimates, const std::vector<double>& truths) {
  require(estimates.size() == truths.size(), ErrorKind::invalid_input,
          "mse_functional: estimates and truths differ in length");
  require(!estimates.empty(), ErrorKind::invalid_input, "mse_functional needs k >= 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double e = estimates[i] - truths[i];
    acc += e * e;
  }
  return acc / static_cast<double>(estimates.size());
}

// Fraction of actuals inside the closed interval [lo, hi].
inline double coverage(const std::vector<sampling::Interval>& intervals,
                       const std::vector<double>& actuals) {
  require(intervals.size() == actuals.size(), ErrorKind::invalid_input,
          "coverage: intervals and actuals differ in length");
  require(!intervals.empty(), ErrorKind::invalid_input, "coverage needs at least one case");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (intervals[i].lo > intervals[i].hi)
      fail(ErrorKind::invalid_input, "malformed interval at row " + std::to_string(i));
    if (intervals[i].lo <= actuals[i] && actuals[i] <= intervals[i].hi) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

// Conditional functionals estimated at each test covariate.
struct Estimates {
  std::string provenance;  // provenance id of the test set they were computed on
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::vector<double>> quantiles;  // [tau index][test point]
};

class Method {
 public:
  virtual ~Method() = default;
  virtual std::string name() const = 0;
  virtual Estimates run(const sim::SimModel& model, const data::PairedDataset& train,
                        const data::PairedDataset& test, const std::vector<double>& taus,
                        std::uint64_t seed) = 0;
};

class GcdsMethod : public Method {
 public:
  GcdsMethod(train::TrainConfig cfg, Eigen::Index draws) : cfg_(cfg), draws_(draws) {}

  std::string name() const override { return "GCDS"; }

  Estimates run(const sim::SimModel& model, const data::PairedDataset& train_set,
                const data::PairedDataset& test, const std::vector<double>& taus,
                std::uint64_t seed) override {
    const auto specs = train::default_net_specs(model);
    auto cfg = cfg_;
    cfg.seed = child_seed(seed, 0);
    cfg.noise_dim = specs.noise_dim;
    const auto result = train::train(train_set, specs.generator, specs.discriminator, cfg);

    Estimates est;
    est.provenance = test.provenance;
    est.quantiles.assign(taus.size(), {});
    for (Eigen::Index i = 0; i < test.size(); ++i) {
      const auto s = sampling::sample_conditional(result.generator, test.x.row(i).transpose(),
                                                  draws_, child_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
      const auto ms = sampling::mc_mean_sd(s);
      est.mean.push_back(ms.mean[0]);
      est.sd.push_back(ms.sd[0]);
      if (!taus.empty()) {
        const auto qs = sampling::mc_quantiles(s, taus);
        for (std::size_t t = 0; t < taus.size(); ++t) est.quantiles[t].push_back(qs[t]);
      }
    }
    return est;
  }

 private:
  train::TrainConfig cfg_;
  Eigen::Index draws_;
};

class CkdeMethod : public Method {
 public:
  explicit CkdeMethod(double budget_seconds = 0.0) : budget_seconds_(budget_seconds) {}

  std::string name() const override { return "CKDE"; }

  Estimates run(const sim::SimModel&, const data::PairedDataset& train_set,
                const data::PairedDataset& test, const std::vector<double>& taus,
                std::uint64_t) override {
    const auto start = std::chrono::steady_clock::now();
    const auto fit = ckde::fit(train_set);
    const auto grid = ckde::default_grid(fit);
    Estimates est;
    est.provenance = test.provenance;
    est.quantiles.assign(taus.size(), {});
    for (Eigen::Index i = 0; i < test.size(); ++i) {
      const auto gd = ckde::evaluate_on_grid(fit, test.x.row(i).transpose(), grid);
      const auto m = ckde::moments_from_grid(gd);
      est.mean.push_back(m.mean);
      est.sd.push_back(m.sd);
      for (std::size_t t = 0; t < taus.size(); ++t)
        est.quantiles[t].push_back(ckde::quantile_from_grid(gd, taus[t]));
      if (budget_seconds_ > 0.0 &&
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >
              budget_seconds_)
        throw BudgetExceeded("CKDE exceeded its runtime budget of " +
                             std::to_string(budget_seconds_) + " s");
    }
    return est;
  }

  class BudgetExceeded : public Error {
   public:
    explicit BudgetExceeded(const std::string& what) : Error(ErrorKind::unsupported, what) {}
  };

 private:
  double budget_seconds_;
};

struct MetricRow {
  std::string model;
  std::string method;
  std::string metric;  // mean | sd | quantile
  std::optional<double> tau;
  double mean = 0.0;
  double se = 0.0;
  std::size_t n_reps = 0;
};

struct RunIssue {
  std::size_t rep = 0;
  std::string method;
  std::string kind;  // failure | skipped
  std::string message;
};

struct MetricTable {
  std::vector<MetricRow> rows;
  std::vector<RunIssue> issues;
  nlohmann::json metadata = nlohmann::json::object();

  bool has_failures() const {
    for (const auto& i : issues)
      if (i.kind == "failure") return true;
    return false;
  }

  const MetricRow* find(const std::string& method, const std::string& metric,
                        std::optional<double> tau = std::nullopt) const {
    for (const auto& r : rows)
      if (r.method == method && r.metric == metric && r.tau == tau) return &r;
    return nullptr;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    const bool failure_col = !issues.empty();
    out << "model,method,metric,tau,mean,se,n_reps" << (failure_col ? ",failed_reps" : "") << '\n';
    for (const auto& r : rows) {
      out << r.model << ',' << r.method << ',' << r.metric << ',';
      if (r.tau) out << *r.tau;
      out << ',' << r.mean << ',' << r.se << ',' << r.n_reps;
      if (failure_col) {
        std::size_t failed = 0;
        for (const auto& i : issues)
          if (i.method == r.method) ++failed;
        out << ',' << failed;
      }
      out << '\n';
    }
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
      rows_j.push_back({{"model", r.model},
                        {"method", r.method},
                        {"metric", r.metric},
                        {"tau", r.tau ? nlohmann::json(*r.tau) : nlohmann::json(nullptr)},
                        {"mean", r.mean},
                        {"se", r.se},
                        {"n_reps", r.n_reps}});
    nlohmann::json issues_j = nlohmann::json::array();
    for (const auto& i : issues)
      issues_j.push_back({{"rep", i.rep}, {"method", i.method}, {"kind", i.kind}, {"message", i.message}});
    return {{"rows", rows_j}, {"issues", issues_j}, {"metadata", metadata}};
  }
};

// Mean over replications and SE = sample SD / sqrt(n); SE is 0 for n = 1.
inline std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  require(!v.empty(), ErrorKind::invalid_input, "mean_and_se needs n >= 1");
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

struct ExperimentSpec {
  sim::SimModel model;
  Eigen::Index n_train = 5000;
  Eigen::Index k_test = 200;
  std::vector<double> taus;
  std::size_t n_reps = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

// Per-replication metric values for one method.
struct RepMetrics {
  double mse_mean = 0.0;
  double mse_sd = 0.0;
  std::vector<double> mse_tau;
};

struct Truths {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::vector<double>> quantiles;
};

inline Truths compute_truths(const sim::SimModel& model, const data::PairedDataset& test,
                             const std::vector<double>& taus) {
  Truths t;
  t.quantiles.assign(taus.size(), {});
  for (Eigen::Index i = 0; i < test.size(); ++i) {
    const Vector x = test.x.row(i).transpose();
    t.mean.push_back(sim::true_mean(model, x));
    t.sd.push_back(sim::true_sd(model, x));
    for (std::size_t k = 0; k < taus.size(); ++k)
      t.quantiles[k].push_back(sim::true_quantile(model, x, taus[k]));
  }
  return t;
}

inline RepMetrics score(const Estimates& est, const Truths& truth, const std::string& test_provenance) {
  require(est.provenance == test_provenance, ErrorKind::contract,
          "estimates were computed on a different test set (" + est.provenance + " vs " +
              test_provenance + ")");
  RepMetrics m;
  m.mse_mean = mse_functional(est.mean, truth.mean);
  m.mse_sd = mse_functional(est.sd, truth.sd);
  require(est.quantiles.size() == truth.quantiles.size(), ErrorKind::contract,
          "estimates carry the wrong number of quantile levels");
  for (std::size_t k = 0; k < truth.quantiles.size(); ++k)
    m.mse_tau.push_back(mse_functional(est.quantiles[k], truth.quantiles[k]));
  return m;
}

inline MetricTable run_experiment(const ExperimentSpec& spec,
                                  const std::vector<std::shared_ptr<Method>>& methods) {
  require(!methods.empty(), ErrorKind::invalid_input, "run_experiment needs at least one method");
  require(spec.n_reps >= 1, ErrorKind::invalid_input, "run_experiment needs n_reps >= 1");
  require(spec.model.q == 1, ErrorKind::unsupported, "metric tables need a scalar-response model");

  struct RepOutcome {
    std::vector<std::optional<RepMetrics>> per_method;
    std::vector<RunIssue> issues;
  };

  auto run_rep = [&](std::size_t rep) {
    RepOutcome out;
    const auto rep_seed = child_seed(spec.seed, rep);
    const auto train_set = sim::generate(spec.model, spec.n_train, child_seed(rep_seed, 0));
    const auto test = sim::generate(spec.model, spec.k_test, child_seed(rep_seed, 1));
    const auto truth = compute_truths(spec.model, test, spec.taus);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      try {
        const auto est = methods[mi]->run(spec.model, train_set, test, spec.taus,
                                          child_seed(rep_seed, 2 + mi));
        out.per_method.emplace_back(score(est, truth, test.provenance));
      } catch (const CkdeMethod::BudgetExceeded& e) {
        out.per_method.emplace_back(std::nullopt);
        out.issues.push_back({rep, methods[mi]->name(), "skipped", e.what()});
      } catch (const TrainingDiverged& e) {
        out.per_method.emplace_back(std::nullopt);
        out.issues.push_back({rep, methods[mi]->name(), "failure",
                              "replication " + std::to_string(rep) + ": " + e.what()});
      }
    }
    return out;
  };

  std::vector<RepOutcome> outcomes(spec.n_reps);
  const std::size_t workers = std::max<std::size_t>(1, spec.workers);
  if (workers == 1) {
    for (std::size_t r = 0; r < spec.n_reps; ++r) outcomes[r] = run_rep(r);
  } else {
    for (std::size_t start = 0; start < spec.n_reps; start += workers) {
      std::vector<std::future<RepOutcome>> futures;
      for (std::size_t r = start; r < std::min(spec.n_reps, start + workers); ++r)
        futures.push_back(std::async(std::launch::async, run_rep, r));
      for (std::size_t i = 0; i < futures.size(); ++i) outcomes[start + i] = futures[i].get();
    }
  }

  MetricTable table;
  for (const auto& o : outcomes) table.issues.insert(table.issues.end(), o.issues.begin(), o.issues.end());
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    std::vector<RepMetrics> ok;
    for (const auto& o : outcomes)
      if (o.per_method[mi]) ok.push_back(*o.per_method[mi]);
    if (ok.empty()) continue;
    auto add = [&](const std::string& metric, std::optional<double> tau, auto&& get) {
      std::vector<double> vals;
      for (const auto& r : ok) vals.push_back(get(r));
      const auto [mean, se] = mean_and_se(vals);
      table.rows.push_back({spec.model.name(), methods[mi]->name(), metric, tau, mean, se, ok.size()});
    };
    add("mean", std::nullopt, [](const RepMetrics& r) { return r.mse_mean; });
    add("sd", std::nullopt, [](const RepMetrics& r) { return r.mse_sd; });
    for (std::size_t k = 0; k < spec.taus.size(); ++k)
      add("quantile", spec.taus[k], [k](const RepMetrics& r) { return r.mse_tau[k]; });
  }
  table.metadata = {{"model", spec.model.name()},
                    {"n_train", spec.n_train},
                    {"k_test", spec.k_test},
                    {"n_reps", spec.n_reps},
                    {"seed", spec.seed},
                    {"test_points_redrawn_per_replication", true},
                    {"scale_vs_reference", {{"k_test", static_cast<double>(spec.k_test) / 2000.0},
                                            {"n_reps", static_cast<double>(spec.n_reps) / 10.0}}}};
  return table;
}

inline std::shared_ptr<Method> make_method(const std::string& name, const train::TrainConfig& cfg,
                                           Eigen::Index draws, double ckde_budget_seconds = 0.0) {
  if (name == "gcds" || name == "GCDS") return std::make_shared<GcdsMethod>(cfg, draws);
  if (name == "ckde" || name == "CKDE") return std::make_shared<CkdeMethod>(ckde_budget_seconds);
  fail(ErrorKind::invalid_input, "unknown method '" + name + "'");
}

}  // namespace gcds::eval
