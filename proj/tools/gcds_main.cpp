#include "gcds/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using gcds::cli::ExitCode;
  CLI::App app{"Generative conditional distribution sampling experiments"};
  app.set_help_flag("-h,--help");

  std::string command, config_path;
  app.add_option("command", command, "simulate | train | evaluate | table | density | coverage")->required();
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  // Each flag maps onto the config key of the same name (dashes become underscores).
  nlohmann::json overrides = nlohmann::json::object();
  std::string model, out, data, schema, checkpoint, divergence;
  std::vector<std::string> methods;
  std::uint64_t seed = 0;
  long n_train = 0, k_test = 0, reps = 0, iters = 0, batch = 0, j_draws = 0, workers = 0;
  std::vector<double> tau, x;
  double level = 0.0, g_lr = 0.0, d_lr = 0.0, ckde_budget = 0.0;
  int noise_dim = 0;

  app.add_option("--model", model, "M1, M2, M3, M4 or Helix");
  app.add_option("--methods", methods, "comma-separated: gcds,ckde")->delimiter(',');
  app.add_option("--seed", seed);
  app.add_option("--out", out, "output directory");
  app.add_option("--n-train", n_train);
  app.add_option("--k-test", k_test);
  app.add_option("--reps", reps);
  app.add_option("--iters", iters);
  app.add_option("--batch", batch);
  app.add_option("--j-draws", j_draws);
  app.add_option("--tau", tau, "comma-separated quantile levels")->delimiter(',');
  app.add_option("--x", x, "comma-separated covariate vector")->delimiter(',');
  app.add_option("--level", level, "prediction interval level");
  app.add_option("--noise-dim", noise_dim);
  app.add_option("--g-lr", g_lr);
  app.add_option("--d-lr", d_lr);
  app.add_option("--divergence", divergence, "kl, js or chi2");
  app.add_option("--workers", workers);
  app.add_option("--ckde-budget-seconds", ckde_budget);
  app.add_option("--data", data, "CSV file with a schema sidecar");
  app.add_option("--schema", schema);
  app.add_option("--checkpoint", checkpoint, "trained generator JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ExitCode::kConfigError;
  }

  auto take = [&](const char* flag, const char* key, const auto& value) {
    if (app.count(flag) > 0) overrides[key] = value;
  };
  take("--model", "model", model);
  take("--methods", "methods", methods);
  take("--seed", "seed", seed);
  take("--out", "out", out);
  take("--n-train", "n_train", n_train);
  take("--k-test", "k_test", k_test);
  take("--reps", "reps", reps);
  take("--iters", "iters", iters);
  take("--batch", "batch", batch);
  take("--j-draws", "j_draws", j_draws);
  take("--tau", "tau", tau);
  take("--x", "x", x);
  take("--level", "level", level);
  take("--noise-dim", "noise_dim", noise_dim);
  take("--g-lr", "g_lr", g_lr);
  take("--d-lr", "d_lr", d_lr);
  take("--divergence", "divergence", divergence);
  take("--workers", "workers", workers);
  take("--ckde-budget-seconds", "ckde_budget_seconds", ckde_budget);
  take("--data", "data", data);
  take("--schema", "schema", schema);
  take("--checkpoint", "checkpoint", checkpoint);

  gcds::cli::ExperimentConfig config;
  try {
    if (!config_path.empty()) config = gcds::cli::load_config(config_path);
    gcds::cli::apply_json(config, overrides);
  } catch (const gcds::Error& e) {
    std::cerr << nlohmann::json{{"error", gcds::to_string(e.kind())}, {"message", e.what()}}.dump() << '\n';
    return gcds::cli::exit_code_for(e.kind());
  }
  config.command = command;
  return gcds::cli::run(config);
}
