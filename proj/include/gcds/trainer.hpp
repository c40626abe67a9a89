#pragma once

// Alternating discriminator-ascent / generator-descent training of a
// conditional generator G(eta, x) against a log-density-ratio discriminator
// D(x, y).

#include "gcds/common.hpp"
#include "gcds/dataio.hpp"
#include "gcds/divergence.hpp"
#include "gcds/nn.hpp"
#include "gcds/simdata.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace gcds::train {

using divergence::DivergenceKind;

struct TrainConfig {
  int noise_dim = 3;
  int batch_size = 256;
  std::uint64_t total_iterations = 20000;
  int d_steps_per_g_step = 1;
  nn::AdamConfig g_adam{};
  nn::AdamConfig d_adam{};
  std::uint64_t seed = 0;
  DivergenceKind divergence = DivergenceKind::kl;
  std::uint64_t history_every = 100;
  bool standardize = true;
};

inline std::vector<std::string> validate(const TrainConfig& c) {
  std::vector<std::string> v;
  if (c.noise_dim < 1) v.push_back("noise_dim m must be >= 1");
  if (c.batch_size < 2 || c.batch_size % 2 != 0)
    v.push_back("batch_size B must be even and >= 2 (B even: B/2 real and B/2 generated pairs)");
  if (c.total_iterations < 1) v.push_back("total_iterations must be >= 1");
  if (c.d_steps_per_g_step < 1) v.push_back("d_steps_per_g_step must be >= 1");
  if (c.history_every < 1) v.push_back("history_every must be >= 1");
  for (const auto* a : {&c.g_adam, &c.d_adam}) {
    if (!(a->lr >= 0.0)) v.push_back("adam lr must be >= 0");
    if (!(a->beta1 >= 0.0 && a->beta1 < 1.0) || !(a->beta2 >= 0.0 && a->beta2 < 1.0))
      v.push_back("adam betas must lie in [0, 1)");
    if (!(a->eps > 0.0)) v.push_back("adam eps must be > 0");
  }
  return v;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json g, d;
  nn::to_json(g, c.g_adam);
  nn::to_json(d, c.d_adam);
  return {{"noise_dim", c.noise_dim},
          {"batch_size", c.batch_size},
          {"total_iterations", c.total_iterations},
          {"d_steps_per_g_step", c.d_steps_per_g_step},
          {"g_adam", g},
          {"d_adam", d},
          {"seed", c.seed},
          {"divergence", divergence::to_string(c.divergence)},
          {"history_every", c.history_every},
          {"standardize", c.standardize}};
}

struct HistoryEntry {
  std::uint64_t iteration = 0;
  double d_objective = 0.0;
  double g_term = 0.0;
};

struct TrainHistory {
  std::vector<HistoryEntry> entries;

  std::string to_csv() const {
    std::ostringstream out;
    out << "iteration,d_objective,g_term\n";
    out.precision(17);
    for (const auto& e : entries) out << e.iteration << ',' << e.d_objective << ',' << e.g_term << '\n';
    return out.str();
  }
};

// Generator network plus the standardization it was trained under.
// Input layout is [eta, x_standardized]; output is y_standardized.
struct TrainedGenerator {
  nn::DenseNet net;
  int noise_dim = 1;
  data::ColumnScaler x_scaler;
  data::ColumnScaler y_scaler;

  int covariate_dim() const { return net.spec().input_dim - noise_dim; }
  int response_dim() const { return net.spec().output_dim; }

  // Row i of the result is G(noise_i, x_i) on the original response scale.
  Matrix generate(const Matrix& x, const Matrix& noise) const {
    require(x.rows() == noise.rows() && x.cols() == covariate_dim() && noise.cols() == noise_dim,
            ErrorKind::invalid_input, "generator input shapes do not match");
    Matrix input(x.rows(), noise_dim + covariate_dim());
    input << noise, x_scaler.apply(x);
    return y_scaler.invert(nn::predict(net, input));
  }

  bool operator==(const TrainedGenerator& o) const {
    return net == o.net && noise_dim == o.noise_dim && x_scaler.mean == o.x_scaler.mean &&
           x_scaler.scale == o.x_scaler.scale && y_scaler.mean == o.y_scaler.mean &&
           y_scaler.scale == o.y_scaler.scale;
  }
};

inline nlohmann::json to_json(const TrainedGenerator& g, std::uint64_t seed, std::uint64_t step) {
  return {{"network", nn::checkpoint_to_json(g.net, seed, step)},
          {"noise_dim", g.noise_dim},
          {"x_scaler", data::scaler_to_json(g.x_scaler)},
          {"y_scaler", data::scaler_to_json(g.y_scaler)}};
}

inline TrainedGenerator generator_from_json(const nlohmann::json& j) {
  TrainedGenerator g;
  g.net = nn::checkpoint_from_json(j.at("network")).net;
  g.noise_dim = j.at("noise_dim").get<int>();
  g.x_scaler = data::scaler_from_json(j.at("x_scaler"));
  g.y_scaler = data::scaler_from_json(j.at("y_scaler"));
  require(g.covariate_dim() >= 0 && g.x_scaler.mean.size() == g.covariate_dim() &&
              g.y_scaler.mean.size() == g.response_dim(),
          ErrorKind::invalid_input, "generator checkpoint dimensions are inconsistent");
  return g;
}

struct NetSpecs {
  nn::NetworkSpec generator;
  nn::NetworkSpec discriminator;
  int noise_dim = 3;
};

// Widths used for the simulation models; Helix reuses the M4 generator.
inline NetSpecs default_net_specs(sim::ModelId id, int d, int q) {
  const bool two_layer_gen = id == sim::ModelId::m4 || id == sim::ModelId::helix;
  const int m = two_layer_gen ? 4 : 3;
  const std::vector<int> gen_hidden = two_layer_gen ? std::vector<int>{40, 15} : std::vector<int>{50};
  return {nn::NetworkSpec(m + d, gen_hidden, q), nn::NetworkSpec(d + q, {50, 25}, 1), m};
}

inline NetSpecs default_net_specs(const sim::SimModel& model) {
  return default_net_specs(model.id, model.d, model.q);
}

// What the discriminator saw in one ascent step (before its update).
struct DiscriminatorBatch {
  std::uint64_t iteration = 0;
  Matrix real_inputs;  // rows [x, y]
  Matrix fake_inputs;  // rows [x, G(eta, x)]
  const nn::DenseNet* discriminator = nullptr;
  divergence::DualObjectiveValue objective;
};

struct TrainResult {
  TrainedGenerator generator;
  nn::DenseNet discriminator;
  TrainHistory history;
};

class GcdsTrainer {
 public:
  using Observer = std::function<void(const DiscriminatorBatch&)>;

  GcdsTrainer(const data::PairedDataset& data, const nn::NetworkSpec& gen_spec,
              const nn::NetworkSpec& disc_spec, TrainConfig cfg)
      : cfg_(cfg) {
    const auto violations = validate(cfg_);
    if (!violations.empty()) fail(ErrorKind::config, violations.front());
    d_ = static_cast<int>(data.covariate_dim());
    q_ = static_cast<int>(data.response_dim());
    require(gen_spec.input_dim == cfg_.noise_dim + d_ && gen_spec.output_dim == q_,
            ErrorKind::config, "generator spec must map (m + d) -> q");
    require(disc_spec.input_dim == d_ + q_ && disc_spec.output_dim == 1, ErrorKind::config,
            "discriminator spec must map (d + q) -> 1");
    require(data.size() >= cfg_.batch_size, ErrorKind::config,
            "dataset has fewer rows than the batch size");
    require(data.x.allFinite() && data.y.allFinite(), ErrorKind::invalid_input,
            "training data contains non-finite values");

    if (cfg_.standardize) {
      gen_.x_scaler = data::ColumnScaler::fit(data.x);
      gen_.y_scaler = data::ColumnScaler::fit(data.y);
    } else {
      gen_.x_scaler = data::ColumnScaler::identity(d_);
      gen_.y_scaler = data::ColumnScaler::identity(q_);
    }
    x_ = gen_.x_scaler.apply(data.x);
    y_ = gen_.y_scaler.apply(data.y);
    gen_.noise_dim = cfg_.noise_dim;
    gen_.net = nn::init_network(gen_spec, child_seed(cfg_.seed, 1));
    disc_ = nn::init_network(disc_spec, child_seed(cfg_.seed, 2));
    rng_.seed(child_seed(cfg_.seed, 3));
    g_opt_ = nn::AdamState(gen_.net.parameter_count(), cfg_.g_adam);
    d_opt_ = nn::AdamState(disc_.parameter_count(), cfg_.d_adam);
    real_perm_.resize(static_cast<std::size_t>(data.size()));
    std::iota(real_perm_.begin(), real_perm_.end(), Eigen::Index{0});
    fake_perm_ = real_perm_;
    gen_perm_ = real_perm_;
  }

  void set_observer(Observer obs) { observer_ = std::move(obs); }

  // One ascent step on D using B/2 real pairs and B/2 freshly generated pairs.
  divergence::DualObjectiveValue discriminator_step() {
    const Eigen::Index half = cfg_.batch_size / 2;
    const auto real_idx = draw_without_replacement(real_perm_, half);
    const auto fake_idx = draw_without_replacement(fake_perm_, half);
    const Matrix noise = standard_normal(half, cfg_.noise_dim, rng_);

    Matrix fake_x = rows(x_, fake_idx);
    Matrix g_in(half, cfg_.noise_dim + d_);
    g_in << noise, fake_x;
    const Matrix fake_y = nn::predict(gen_.net, g_in);

    Matrix d_in(2 * half, d_ + q_);
    d_in.topRows(half) << rows(x_, real_idx), rows(y_, real_idx);
    d_in.bottomRows(half) << fake_x, fake_y;

    auto fwd = nn::forward(disc_, d_in);
    const std::vector<double> d_real(fwd.output.data(), fwd.output.data() + half);
    const std::vector<double> d_fake(fwd.output.data() + half, fwd.output.data() + 2 * half);
    const auto objective = divergence::empirical_dual(cfg_.divergence, d_fake, d_real);
    if (!std::isfinite(objective.value))
      throw TrainingDiverged(iteration_, "discriminator objective is non-finite at iteration " +
                                             std::to_string(iteration_));
    if (observer_)
      observer_({iteration_, d_in.topRows(half), d_in.bottomRows(half), &disc_, objective});

    const auto up = divergence::discriminator_upstream(cfg_.divergence, d_fake, d_real);
    Matrix upstream(2 * half, 1);
    for (Eigen::Index i = 0; i < half; ++i) {
      upstream(i, 0) = up.real[static_cast<std::size_t>(i)];
      upstream(half + i, 0) = up.fake[static_cast<std::size_t>(i)];
    }
    auto grads = nn::backward(disc_, fwd.cache, upstream);
    grads *= -1.0;  // ascent
    apply(d_opt_, disc_, grads);
    return objective;
  }

  // One descent step on G through D(x, G(eta, x)) over B fresh pairs.
  double generator_step() {
    const Eigen::Index b = cfg_.batch_size;
    const auto idx = draw_without_replacement(gen_perm_, b);
    const Matrix noise = standard_normal(b, cfg_.noise_dim, rng_);
    const Matrix x = rows(x_, idx);
    Matrix g_in(b, cfg_.noise_dim + d_);
    g_in << noise, x;
    auto g_fwd = nn::forward(gen_.net, g_in);

    Matrix d_in(b, d_ + q_);
    d_in << x, g_fwd.output;
    auto d_fwd = nn::forward(disc_, d_in);
    const std::vector<double> d_fake(d_fwd.output.data(), d_fwd.output.data() + b);
    double g_term = 0.0;
    for (double v : d_fake) g_term += v;
    g_term /= static_cast<double>(b);
    if (!std::isfinite(g_term))
      throw TrainingDiverged(iteration_, "generator term is non-finite at iteration " +
                                             std::to_string(iteration_));

    const auto up = divergence::generator_upstream(cfg_.divergence, d_fake);
    const Matrix d_up = Eigen::Map<const Matrix>(up.data(), b, 1);
    const auto d_grads = nn::backward(disc_, d_fwd.cache, d_up);
    const Matrix g_up = d_grads.d_input.rightCols(q_);
    const auto g_grads = nn::backward(gen_.net, g_fwd.cache, g_up);
    apply(g_opt_, gen_.net, g_grads);
    return g_term;
  }

  // D ascends (d_steps_per_g_step times) before G descends.
  HistoryEntry round() {
    ++iteration_;
    HistoryEntry e;
    e.iteration = iteration_;
    for (int k = 0; k < cfg_.d_steps_per_g_step; ++k) e.d_objective = discriminator_step().value;
    e.g_term = generator_step();
    return e;
  }

  TrainResult run() {
    TrainHistory history;
    while (iteration_ < cfg_.total_iterations) {
      const auto e = round();
      if (e.iteration % cfg_.history_every == 0 || e.iteration == cfg_.total_iterations)
        history.entries.push_back(e);
    }
    return {gen_, disc_, std::move(history)};
  }

  const TrainedGenerator& generator() const { return gen_; }
  const nn::DenseNet& discriminator() const { return disc_; }
  std::uint64_t iteration() const { return iteration_; }

 private:
  std::vector<Eigen::Index> draw_without_replacement(std::vector<Eigen::Index>& perm,
                                                     Eigen::Index k) {
    const auto n = perm.size();
    std::vector<Eigen::Index> out(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(perm[i], perm[pick(rng_)]);
      out[i] = perm[i];
    }
    return out;
  }

  static Matrix rows(const Matrix& m, const std::vector<Eigen::Index>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
  }

  void apply(nn::AdamState& opt, nn::DenseNet& net, const nn::GradientBundle& grads) {
    try {
      nn::adam_step(opt, net, grads);
    } catch (const OptimizerError& e) {
      throw TrainingDiverged(iteration_, std::string(e.what()) + " (training iteration " +
                                             std::to_string(iteration_) + ")");
    }
  }

  TrainConfig cfg_;
  int d_ = 0;
  int q_ = 0;
  Matrix x_;
  Matrix y_;
  TrainedGenerator gen_;
  nn::DenseNet disc_;
  nn::AdamState g_opt_;
  nn::AdamState d_opt_;
  Rng rng_;
  std::vector<Eigen::Index> real_perm_, fake_perm_, gen_perm_;
  std::uint64_t iteration_ = 0;
  Observer observer_;
};

inline TrainResult train(const data::PairedDataset& data, const nn::NetworkSpec& gen_spec,
                         const nn::NetworkSpec& disc_spec, const TrainConfig& cfg) {
  return GcdsTrainer(data, gen_spec, disc_spec, cfg).run();
}

}  // namespace gcds::train
