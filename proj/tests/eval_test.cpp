#include "gcds/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace gcds::eval {
namespace {

TEST(Mse, Examples) {
  EXPECT_EQ(mse_functional({1.0, -2.0, 3.5}, {1.0, -2.0, 3.5}), 0.0);
  EXPECT_EQ(mse_functional({1.0, 2.0, 3.0}, {0.0, 1.0, 2.0}), 1.0);
  EXPECT_EQ(mse_functional({1.0, 2.0}, {0.0, 0.0}), 2.5);
  EXPECT_THROW(mse_functional({1.0}, {1.0, 2.0}), Error);
  EXPECT_THROW(mse_functional({}, {}), Error);
}

TEST(Mse, PermutationInvariant) {
  Rng rng(1);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> e(30), g(30);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = n01(rng), g[i] = n01(rng);
    std::vector<std::size_t> p(e.size());
    std::iota(p.begin(), p.end(), 0u);
    std::shuffle(p.begin(), p.end(), rng);
    std::vector<double> ep, gp;
    for (auto i : p) ep.push_back(e[i]), gp.push_back(g[i]);
    EXPECT_NEAR(mse_functional(ep, gp), mse_functional(e, g), 1e-14);
  }
}

TEST(Coverage, Examples) {
  EXPECT_EQ(coverage({{0, 1}, {-1, 1}}, {0.5, 0.0}), 1.0);
  EXPECT_EQ(coverage({{0, 1}, {-1, 1}}, {2.0, -3.0}), 0.0);
  EXPECT_EQ(coverage({{0, 1}}, {1.0}), 1.0);
  EXPECT_EQ(coverage({{0, 1}, {0, 1}, {0, 1}, {0, 1}}, {0.0, 0.5, 1.5, 1.0}), 0.75);
  EXPECT_THROW(coverage({{1, 0}}, {0.5}), Error);
  EXPECT_THROW(coverage({{0, 1}}, {0.5, 0.2}), Error);
}

TEST(MeanAndSe, DegenerateReplications) {
  EXPECT_EQ(mean_and_se({0.3}).second, 0.0);
  const auto [m, se] = mean_and_se({0.3, 0.3, 0.3});
  EXPECT_EQ(m, 0.3);
  EXPECT_EQ(se, 0.0);
  EXPECT_NEAR(mean_and_se({1.0, 2.0, 3.0}).second, 1.0 / std::sqrt(3.0), 1e-15);
}

// Returns the true functionals, so every MSE must be exactly zero.
class OracleMethod : public Method {
 public:
  std::string name() const override { return "Oracle"; }
  Estimates run(const sim::SimModel& model, const data::PairedDataset&, const data::PairedDataset& test,
                const std::vector<double>& taus, std::uint64_t) override {
    const auto t = compute_truths(model, test, taus);
    return {test.provenance, t.mean, t.sd, t.quantiles};
  }
};

// Adds seed-dependent noise so replications differ.
class NoisyMethod : public Method {
 public:
  std::string name() const override { return "Noisy"; }
  Estimates run(const sim::SimModel& model, const data::PairedDataset&, const data::PairedDataset& test,
                const std::vector<double>& taus, std::uint64_t seed) override {
    auto t = compute_truths(model, test, taus);
    Rng rng(seed);
    std::normal_distribution<double> n01;
    for (double& v : t.mean) v += n01(rng);
    for (auto& q : t.quantiles)
      for (double& v : q) v += n01(rng);
    return {test.provenance, t.mean, t.sd, t.quantiles};
  }
};

class DivergesOnRepOne : public Method {
 public:
  std::string name() const override { return "Fragile"; }
  Estimates run(const sim::SimModel& model, const data::PairedDataset& train, const data::PairedDataset& test,
                const std::vector<double>& taus, std::uint64_t seed) override {
    if (++calls_ == 2) throw TrainingDiverged(17, "non-finite loss at iteration 17");
    return OracleMethod().run(model, train, test, taus, seed);
  }

 private:
  int calls_ = 0;
};

class WrongTestSet : public Method {
 public:
  std::string name() const override { return "Wrong"; }
  Estimates run(const sim::SimModel& model, const data::PairedDataset& train, const data::PairedDataset& test,
                const std::vector<double>& taus, std::uint64_t seed) override {
    auto e = OracleMethod().run(model, train, test, taus, seed);
    e.provenance = train.provenance;
    return e;
  }
};

ExperimentSpec small_spec(std::size_t reps = 3) {
  ExperimentSpec s;
  s.model = sim::make_model(sim::ModelId::m1);
  s.n_train = 300;
  s.k_test = 12;
  s.taus = {0.05, 0.25, 0.5, 0.75, 0.95};
  s.n_reps = reps;
  s.seed = 42;
  return s;
}

TEST(RunExperiment, OracleScoresZero) {
  const auto table = run_experiment(small_spec(1), {std::make_shared<OracleMethod>()});
  ASSERT_EQ(table.rows.size(), 7u);
  for (const auto& r : table.rows) {
    EXPECT_EQ(r.mean, 0.0) << r.metric;
    EXPECT_EQ(r.se, 0.0);
    EXPECT_EQ(r.n_reps, 1u);
  }
  EXPECT_NE(table.find("Oracle", "quantile", 0.5), nullptr);
}

TEST(RunExperiment, DeterministicAndWorkerInvariant) {
  const std::vector<std::shared_ptr<Method>> methods{std::make_shared<NoisyMethod>(),
                                                     std::make_shared<CkdeMethod>()};
  auto spec = small_spec();
  const auto a = run_experiment(spec, methods);
  const auto b = run_experiment(spec, methods);
  spec.workers = 3;
  const auto c = run_experiment(spec, methods);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.to_csv(), c.to_csv());
  EXPECT_GT(a.find("Noisy", "mean")->mean, 0.0);
  EXPECT_GT(a.find("Noisy", "mean")->se, 0.0);
  EXPECT_EQ(a.find("CKDE", "sd")->n_reps, 3u);
}

TEST(RunExperiment, CsvColumns) {
  const auto table = run_experiment(small_spec(1), {std::make_shared<OracleMethod>()});
  const auto csv = table.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,method,metric,tau,mean,se,n_reps");
  EXPECT_NE(csv.find("M1,Oracle,mean,,0,0,1\n"), std::string::npos) << csv;
  EXPECT_EQ(table.metadata.at("scale_vs_reference").at("k_test"), 12.0 / 2000.0);
}

TEST(RunExperiment, DivergenceRecordedWithReplication) {
  const auto table = run_experiment(small_spec(3), {std::make_shared<DivergesOnRepOne>()});
  ASSERT_EQ(table.issues.size(), 1u);
  EXPECT_EQ(table.issues[0].rep, 1u);
  EXPECT_EQ(table.issues[0].kind, "failure");
  EXPECT_NE(table.issues[0].message.find("replication 1"), std::string::npos);
  EXPECT_TRUE(table.has_failures());
  EXPECT_EQ(table.find("Fragile", "mean")->n_reps, 2u);
  const auto csv = table.to_csv();
  EXPECT_NE(csv.find(",failed_reps\n"), std::string::npos);
}

TEST(RunExperiment, CkdeBudgetSkipIsRecorded) {
  auto spec = small_spec(1);
  const auto table = run_experiment(spec, {std::make_shared<OracleMethod>(), std::make_shared<CkdeMethod>(1e-9)});
  ASSERT_EQ(table.issues.size(), 1u);
  EXPECT_EQ(table.issues[0].kind, "skipped");
  EXPECT_EQ(table.issues[0].method, "CKDE");
  EXPECT_FALSE(table.has_failures());
  EXPECT_EQ(table.find("CKDE", "mean"), nullptr);
}

TEST(RunExperiment, ProvenanceMismatchIsRejected) {
  EXPECT_THROW(run_experiment(small_spec(1), {std::make_shared<WrongTestSet>()}), Error);
}

TEST(RunExperiment, NeedsMethodsAndScalarModel) {
  EXPECT_THROW(run_experiment(small_spec(1), {}), Error);
  auto spec = small_spec(1);
  spec.model = sim::make_model(sim::ModelId::helix);
  EXPECT_THROW(run_experiment(spec, {std::make_shared<OracleMethod>()}), Error);
}

TEST(MakeMethod, Names) {
  EXPECT_EQ(make_method("gcds", {}, 100)->name(), "GCDS");
  EXPECT_EQ(make_method("CKDE", {}, 100)->name(), "CKDE");
  EXPECT_THROW(make_method("svm", {}, 100), Error);
}

}  // namespace
}  // namespace gcds::eval
