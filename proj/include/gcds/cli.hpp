#pragma once

// Config-driven experiment runner behind the `gcds` command line tool.
//
// Every run writes `resolved_config.json` (all values actually used) and
// `meta.json` (timestamp, host) into the output directory; result files never
// contain timestamps so reruns can be compared byte for byte.

#include "gcds/ckde.hpp"
#include "gcds/dataio.hpp"
#include "gcds/eval.hpp"
#include "gcds/sampler.hpp"
#include "gcds/simdata.hpp"
#include "gcds/trainer.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

namespace gcds::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string> kCommands{"simulate", "train",   "evaluate",
                                                "table",    "density", "coverage"};

enum ExitCode : int { kOk = 0, kInternal = 1, kConfigError = 2, kDiverged = 3, kIoError = 4 };

struct ExperimentConfig {
  std::string command = "table";
  std::string model = "M1";
  double helix_sigma = 0.4;
  std::vector<std::string> methods{"gcds", "ckde"};
  std::uint64_t seed = 1;
  std::string out = "out";
  long n_train = 5000;
  long k_test = 200;
  long reps = 3;
  long iters = 20000;
  long batch = 256;
  long j_draws = 10000;
  std::vector<double> tau;
  std::vector<double> x;
  std::optional<int> noise_dim;  // default comes from the model
  double g_lr = 3e-4;
  double d_lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  long d_steps = 1;
  long history_every = 100;
  std::string divergence = "kl";
  bool standardize = true;
  std::string data;
  std::string schema;
  std::string checkpoint;
  double train_fraction = 0.9;
  double level = 0.9;
  long coverage_test_pairs = 500;
  long grid_points = 512;
  long workers = 1;
  double ckde_budget_seconds = 0.0;
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"command", c.command},
          {"model", c.model},
          {"helix_sigma", c.helix_sigma},
          {"methods", c.methods},
          {"seed", c.seed},
          {"out", c.out},
          {"n_train", c.n_train},
          {"k_test", c.k_test},
          {"reps", c.reps},
          {"iters", c.iters},
          {"batch", c.batch},
          {"j_draws", c.j_draws},
          {"tau", c.tau},
          {"x", c.x},
          {"noise_dim", c.noise_dim ? nlohmann::json(*c.noise_dim) : nlohmann::json(nullptr)},
          {"g_lr", c.g_lr},
          {"d_lr", c.d_lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"d_steps", c.d_steps},
          {"history_every", c.history_every},
          {"divergence", c.divergence},
          {"standardize", c.standardize},
          {"data", c.data},
          {"schema", c.schema},
          {"checkpoint", c.checkpoint},
          {"train_fraction", c.train_fraction},
          {"level", c.level},
          {"coverage_test_pairs", c.coverage_test_pairs},
          {"grid_points", c.grid_points},
          {"workers", c.workers},
          {"ckde_budget_seconds", c.ckde_budget_seconds}};
}

// Overlays `j` onto `c`; unknown keys are a config error.
inline void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  require(j.is_object(), ErrorKind::config, "config must be a JSON object");
  const auto known = to_json(c);
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) fail(ErrorKind::config, "unknown config key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("command", c.command);
    get("model", c.model);
    get("helix_sigma", c.helix_sigma);
    get("methods", c.methods);
    get("seed", c.seed);
    get("out", c.out);
    get("n_train", c.n_train);
    get("k_test", c.k_test);
    get("reps", c.reps);
    get("iters", c.iters);
    get("batch", c.batch);
    get("j_draws", c.j_draws);
    get("tau", c.tau);
    get("x", c.x);
    if (j.contains("noise_dim"))
      c.noise_dim = j.at("noise_dim").is_null() ? std::nullopt
                                                : std::optional<int>(j.at("noise_dim").get<int>());
    get("g_lr", c.g_lr);
    get("d_lr", c.d_lr);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("eps", c.eps);
    get("d_steps", c.d_steps);
    get("history_every", c.history_every);
    get("divergence", c.divergence);
    get("standardize", c.standardize);
    get("data", c.data);
    get("schema", c.schema);
    get("checkpoint", c.checkpoint);
    get("train_fraction", c.train_fraction);
    get("level", c.level);
    get("coverage_test_pairs", c.coverage_test_pairs);
    get("grid_points", c.grid_points);
    get("workers", c.workers);
    get("ckde_budget_seconds", c.ckde_budget_seconds);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("config value has the wrong type: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file '" + path + "'");
  ExperimentConfig c;
  try {
    apply_json(c, nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::config, "config file '" + path + "' is not valid JSON: " + e.what());
  }
  return c;
}

inline std::optional<sim::SimModel> model_of(const ExperimentConfig& c) {
  try {
    return sim::make_model(c.model, c.helix_sigma);
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline bool uses_dataset(const ExperimentConfig& c) { return !c.data.empty(); }

inline train::TrainConfig train_config(const ExperimentConfig& c, int default_noise_dim) {
  train::TrainConfig t;
  t.noise_dim = c.noise_dim.value_or(default_noise_dim);
  t.batch_size = static_cast<int>(c.batch);
  t.total_iterations = static_cast<std::uint64_t>(std::max(0L, c.iters));
  t.d_steps_per_g_step = static_cast<int>(c.d_steps);
  t.g_adam = {c.g_lr, c.beta1, c.beta2, c.eps};
  t.d_adam = {c.d_lr, c.beta1, c.beta2, c.eps};
  t.history_every = static_cast<std::uint64_t>(std::max(1L, c.history_every));
  t.divergence = divergence::parse_kind(c.divergence);
  t.standardize = c.standardize;
  return t;
}

// Empty iff `run` would pass every downstream precondition check.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> v;
  if (std::find(kCommands.begin(), kCommands.end(), c.command) == kCommands.end())
    v.push_back("unknown command '" + c.command + "'");
  const auto model = model_of(c);
  if (!model) v.push_back("unknown model id '" + c.model + "' (expected M1, M2, M3, M4 or Helix)");
  if (c.out.empty()) v.push_back("output directory must be set");
  if (c.batch < 2 || c.batch % 2 != 0)
    v.push_back("batch must be even (B even: B/2 real and B/2 generated pairs), got " +
                std::to_string(c.batch));
  if (c.n_train < std::max(2L, c.batch)) v.push_back("n_train must be at least the batch size");
  if (c.k_test < 1) v.push_back("k_test must be >= 1");
  if (c.reps < 1) v.push_back("reps must be >= 1");
  if (c.iters < 1) v.push_back("iters must be >= 1");
  if (c.j_draws < 2) v.push_back("j_draws must be >= 2");
  if (c.d_steps < 1) v.push_back("d_steps must be >= 1");
  if (c.history_every < 1) v.push_back("history_every must be >= 1");
  try {
    divergence::parse_kind(c.divergence);
  } catch (const Error&) {
    v.push_back("unknown divergence '" + c.divergence + "' (expected kl, js or chi2)");
  }
  if (c.noise_dim && *c.noise_dim < 1) v.push_back("noise_dim must be >= 1");
  if (!(c.g_lr >= 0.0) || !(c.d_lr >= 0.0)) v.push_back("learning rates must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    v.push_back("beta1 and beta2 must lie in [0, 1)");
  if (!(c.eps > 0.0)) v.push_back("eps must be > 0");
  for (double t : c.tau)
    if (!(t > 0.0 && t < 1.0)) v.push_back("tau values must lie in (0, 1)");
  if (!(c.level > 0.0 && c.level < 1.0)) v.push_back("level must lie in (0, 1)");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    v.push_back("train_fraction must lie in (0, 1)");
  if (c.coverage_test_pairs < 1) v.push_back("coverage_test_pairs must be >= 1");
  if (c.grid_points < 2) v.push_back("grid_points must be >= 2");
  if (c.workers < 1) v.push_back("workers must be >= 1");
  if (!(c.helix_sigma > 0.0)) v.push_back("helix_sigma must be > 0");
  if (uses_dataset(c) && c.schema.empty()) v.push_back("data requires a schema sidecar");
  if (c.command == "table") {
    if (c.methods.empty()) v.push_back("methods must not be empty");
    for (const auto& m : c.methods)
      if (m != "gcds" && m != "ckde" && m != "GCDS" && m != "CKDE")
        v.push_back("unknown method '" + m + "' (expected gcds or ckde)");
  }
  if (model) {
    const bool scalar_needed = c.command == "table" || c.command == "evaluate" ||
                               (c.command == "coverage" && !uses_dataset(c));
    if (scalar_needed && model->q != 1)
      v.push_back("command '" + c.command + "' needs a scalar-response model, not " + c.model);
    if (c.command == "density" && !c.x.empty() && static_cast<int>(c.x.size()) != model->d)
      v.push_back("x must have " + std::to_string(model->d) + " entries for model " + c.model);
  }
  return v;
}

// --- artifact writing ---------------------------------------------------

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  // temp + rename so readers never see a partial file
  void write(const std::string& name, const std::string& content) const {
    const fs::path final_path = dir_ / name;
    const fs::path tmp = dir_ / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) fail(ErrorKind::io, "cannot write '" + tmp.string() + "'");
      out << content;
      if (!out) fail(ErrorKind::io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, final_path, ec);
    if (ec) fail(ErrorKind::io, "cannot move '" + tmp.string() + "' into place: " + ec.message());
  }

  void write_json(const std::string& name, const nlohmann::json& j) const {
    write(name, j.dump(2) + "\n");
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
};

namespace detail {

inline std::string hostname() {
  char buf[256] = {};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

inline nlohmann::json run_metadata() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[64];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return {{"timestamp_utc", stamp}, {"host", hostname()}};
}

struct LoadedData {
  data::PairedDataset dataset;
  nn::NetworkSpec gen_spec;
  nn::NetworkSpec disc_spec;
  int noise_dim = 3;
};

inline LoadedData load_training_data(const ExperimentConfig& c, const sim::SimModel& model,
                                     std::uint64_t seed) {
  LoadedData out;
  if (uses_dataset(c)) {
    auto ds = data::load_csv(c.data, data::load_schema(c.schema));
    if (ds.has_categorical()) ds = data::one_hot(ds);
    out.dataset = std::move(ds);
  } else {
    out.dataset = sim::generate(model, c.n_train, seed);
  }
  // Real data reuses the one-hidden-layer generator configuration.
  const auto id = uses_dataset(c) ? sim::ModelId::m1 : model.id;
  const auto specs = train::default_net_specs(id, static_cast<int>(out.dataset.covariate_dim()),
                                              static_cast<int>(out.dataset.response_dim()));
  out.noise_dim = c.noise_dim.value_or(specs.noise_dim);
  out.gen_spec = nn::NetworkSpec(out.noise_dim + static_cast<int>(out.dataset.covariate_dim()),
                                 specs.generator.hidden_widths,
                                 static_cast<int>(out.dataset.response_dim()));
  out.disc_spec = specs.discriminator;
  return out;
}

inline train::TrainResult train_on(const ExperimentConfig& c, const LoadedData& d, std::uint64_t seed) {
  auto cfg = train_config(c, d.noise_dim);
  cfg.seed = seed;
  return train::train(d.dataset, d.gen_spec, d.disc_spec, cfg);
}

inline train::TrainedGenerator load_generator(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint '" + path + "'");
  try {
    return train::generator_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_input, "malformed checkpoint '" + path + "': " + e.what());
  }
}

// Trains on the configured data unless a checkpoint is given.
inline train::TrainedGenerator obtain_generator(const ExperimentConfig& c, const sim::SimModel& model,
                                                const ArtifactWriter& w) {
  if (!c.checkpoint.empty()) return load_generator(c.checkpoint);
  const auto d = load_training_data(c, model, child_seed(c.seed, 0));
  auto result = train_on(c, d, child_seed(c.seed, 1));
  w.write("history.csv", result.history.to_csv());
  w.write_json("generator.json", train::to_json(result.generator, child_seed(c.seed, 1),
                                                static_cast<std::uint64_t>(c.iters)));
  return std::move(result.generator);
}

inline int cmd_simulate(const ExperimentConfig& c, const sim::SimModel& model, const ArtifactWriter& w) {
  const auto ds = sim::generate(model, c.n_train, child_seed(c.seed, 0));
  w.write("data.csv", data::to_csv(ds));
  w.write_json("schema.json", data::schema_to_json(ds));
  return kOk;
}

inline int cmd_train(const ExperimentConfig& c, const sim::SimModel& model, const ArtifactWriter& w) {
  const auto d = load_training_data(c, model, child_seed(c.seed, 0));
  const auto train_seed = child_seed(c.seed, 1);
  const auto result = train_on(c, d, train_seed);
  w.write("history.csv", result.history.to_csv());
  w.write_json("generator.json",
               train::to_json(result.generator, train_seed, static_cast<std::uint64_t>(c.iters)));
  w.write_json("discriminator.json",
               nn::checkpoint_to_json(result.discriminator, train_seed, static_cast<std::uint64_t>(c.iters)));
  return kOk;
}

inline int cmd_evaluate(const ExperimentConfig& c, const sim::SimModel& model, const ArtifactWriter& w) {
  const auto gen = obtain_generator(c, model, w);
  const auto test = sim::generate(model, c.k_test, child_seed(c.seed, 3));
  const auto truth = eval::compute_truths(model, test, c.tau);
  eval::Estimates est;
  est.provenance = test.provenance;
  est.quantiles.assign(c.tau.size(), {});
  for (Eigen::Index i = 0; i < test.size(); ++i) {
    const auto s = sampling::sample_conditional(gen, test.x.row(i).transpose(), c.j_draws,
                                                child_seed(c.seed, 1000 + static_cast<std::uint64_t>(i)));
    const auto ms = sampling::mc_mean_sd(s);
    est.mean.push_back(ms.mean[0]);
    est.sd.push_back(ms.sd[0]);
    const auto qs = sampling::mc_quantiles(s, c.tau);
    for (std::size_t t = 0; t < c.tau.size(); ++t) est.quantiles[t].push_back(qs[t]);
  }
  const auto m = eval::score(est, truth, test.provenance);
  eval::MetricTable table;
  table.rows.push_back({model.name(), "GCDS", "mean", std::nullopt, m.mse_mean, 0.0, 1});
  table.rows.push_back({model.name(), "GCDS", "sd", std::nullopt, m.mse_sd, 0.0, 1});
  for (std::size_t t = 0; t < c.tau.size(); ++t)
    table.rows.push_back({model.name(), "GCDS", "quantile", c.tau[t], m.mse_tau[t], 0.0, 1});
  table.metadata = {{"model", model.name()}, {"k_test", c.k_test}, {"j_draws", c.j_draws}};
  w.write("metrics.csv", table.to_csv());
  w.write_json("metrics.json", table.to_json());
  return kOk;
}

inline int cmd_table(const ExperimentConfig& c, const sim::SimModel& model, const ArtifactWriter& w) {
  eval::ExperimentSpec spec;
  spec.model = model;
  spec.n_train = c.n_train;
  spec.k_test = c.k_test;
  spec.taus = c.tau;
  spec.n_reps = static_cast<std::size_t>(c.reps);
  spec.seed = c.seed;
  spec.workers = static_cast<std::size_t>(c.workers);
  const auto cfg = train_config(c, train::default_net_specs(model).noise_dim);
  std::vector<std::shared_ptr<eval::Method>> methods;
  for (const auto& name : c.methods)
    methods.push_back(eval::make_method(name, cfg, c.j_draws, c.ckde_budget_seconds));
  auto table = eval::run_experiment(spec, methods);
  table.metadata["kl_constant_note"] =
      "discriminator objectives omit the KL dual constant +1; add 1 for a KL estimate";
  table.metadata["ckde_bandwidth_J"] = "d + q continuous variables";
  w.write("metrics.csv", table.to_csv());
  w.write_json("metrics.json", table.to_json());
  return table.has_failures() ? kDiverged : kOk;
}

inline int cmd_density(const ExperimentConfig& c, const sim::SimModel& model, const ArtifactWriter& w) {
  const auto gen = obtain_generator(c, model, w);
  Vector x = Vector::Zero(gen.covariate_dim());
  if (!c.x.empty()) {
    require(static_cast<Eigen::Index>(c.x.size()) == x.size(), ErrorKind::config,
            "x has the wrong length for this generator");
    x = Eigen::Map<const Vector>(c.x.data(), x.size());
  }
  const auto s = sampling::sample_conditional(gen, x, c.j_draws, child_seed(c.seed, 2));
  w.write("samples.csv", sampling::samples_to_csv(s));
  if (s.dim() == 1) {
    const auto grid = sampling::default_kde_grid(s, static_cast<std::size_t>(c.grid_points));
    w.write("density.csv", sampling::kde_curve(s, grid).to_csv());
  }
  return kOk;
}

inline int cmd_coverage(const ExperimentConfig& c, const sim::SimModel& model, const ArtifactWriter& w) {
  data::PairedDataset train_set, test_set;
  detail::LoadedData loaded;
  if (uses_dataset(c)) {
    loaded = load_training_data(c, model, 0);
    auto parts = data::split(loaded.dataset, c.train_fraction, child_seed(c.seed, 0));
    train_set = std::move(parts.train);
    test_set = std::move(parts.test);
  } else {
    loaded = load_training_data(c, model, child_seed(c.seed, 0));
    train_set = loaded.dataset;
    test_set = sim::generate(model, c.coverage_test_pairs, child_seed(c.seed, 3));
  }
  require(test_set.response_dim() == 1, ErrorKind::unsupported, "coverage needs a scalar response");
  loaded.dataset = train_set;
  const auto result = train_on(c, loaded, child_seed(c.seed, 1));
  w.write("history.csv", result.history.to_csv());

  std::vector<sampling::Interval> intervals;
  std::vector<double> actual;
  std::ostringstream rows;
  rows.precision(17);
  rows << "lo,hi,actual,covered\n";
  for (Eigen::Index i = 0; i < test_set.size(); ++i) {
    const auto s = sampling::sample_conditional(result.generator, test_set.x.row(i).transpose(), c.j_draws,
                                                child_seed(c.seed, 1000 + static_cast<std::uint64_t>(i)));
    intervals.push_back(sampling::prediction_interval(s, c.level));
    actual.push_back(test_set.y(i, 0));
    const bool hit = intervals.back().lo <= actual.back() && actual.back() <= intervals.back().hi;
    rows << intervals.back().lo << ',' << intervals.back().hi << ',' << actual.back() << ',' << hit << '\n';
  }
  const double cov = eval::coverage(intervals, actual);
  w.write("intervals.csv", rows.str());
  w.write_json("coverage.json", {{"dataset", uses_dataset(c) ? c.data : model.name()},
                                 {"n_train", train_set.size()},
                                 {"n_test", test_set.size()},
                                 {"level", c.level},
                                 {"coverage", cov}});
  return kOk;
}

}  // namespace detail

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_input: return kConfigError;
    case ErrorKind::diverged:
    case ErrorKind::optimizer: return kDiverged;
    case ErrorKind::io: return kIoError;
    default: return kInternal;
  }
}

// Runs one command; errors become an exit code plus `error.json`.
inline int run(const ExperimentConfig& c, std::ostream& err = std::cerr) {
  auto report = [&](int code, const std::string& kind, const std::string& message) {
    const nlohmann::json record = {{"error", kind}, {"message", message}, {"exit_code", code}};
    err << record.dump() << '\n';
    try {
      if (!c.out.empty()) ArtifactWriter(c.out).write_json("error.json", record);
    } catch (...) {
    }
    return code;
  };

  const auto violations = validate(c);
  if (!violations.empty()) {
    std::string msg;
    for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v;
    return report(kConfigError, "config_error", msg);
  }

  try {
    const ArtifactWriter w(c.out);
    w.write_json("resolved_config.json", to_json(c));
    w.write_json("meta.json", detail::run_metadata());
    const auto model = *model_of(c);
    if (c.command == "simulate") return detail::cmd_simulate(c, model, w);
    if (c.command == "train") return detail::cmd_train(c, model, w);
    if (c.command == "evaluate") return detail::cmd_evaluate(c, model, w);
    if (c.command == "table") return detail::cmd_table(c, model, w);
    if (c.command == "density") return detail::cmd_density(c, model, w);
    return detail::cmd_coverage(c, model, w);
  } catch (const Error& e) {
    return report(exit_code_for(e.kind()), to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report(kInternal, "internal_error", e.what());
  }
}

}  // namespace gcds::cli
