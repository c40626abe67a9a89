#pragma once

// Dense feed-forward ReLU networks with exact reverse-mode gradients and Adam.

#include "gcds/common.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gcds::nn {

struct NetworkSpec {
  int input_dim = 1;
  std::vector<int> hidden_widths;
  int output_dim = 1;

  NetworkSpec() = default;
  NetworkSpec(int in, std::vector<int> hidden, int out)
      : input_dim(in), hidden_widths(std::move(hidden)), output_dim(out) {
    validate();
  }

  void validate() const {
    require(input_dim >= 1 && output_dim >= 1, ErrorKind::invalid_input,
            "network dimensions must be >= 1");
    for (int w : hidden_widths)
      require(w >= 1, ErrorKind::invalid_input, "hidden widths must be >= 1");
  }

  // (w_0, w_1, ..., w_L): input, hidden widths, output.
  std::vector<int> layer_widths() const {
    std::vector<int> w;
    w.reserve(hidden_widths.size() + 2);
    w.push_back(input_dim);
    w.insert(w.end(), hidden_widths.begin(), hidden_widths.end());
    w.push_back(output_dim);
    return w;
  }

  std::size_t num_layers() const { return hidden_widths.size() + 1; }

  // Closed-form size: sum over consecutive widths of (w_i + 1) * w_{i+1}.
  std::size_t parameter_count() const {
    const auto w = layer_widths();
    std::size_t total = 0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
      total += static_cast<std::size_t>(w[i] + 1) * static_cast<std::size_t>(w[i + 1]);
    return total;
  }

  int depth() const { return static_cast<int>(hidden_widths.size()); }

  int max_width() const {
    int m = 0;
    for (int w : hidden_widths) m = std::max(m, w);
    return m;
  }

  bool operator==(const NetworkSpec&) const = default;
};

class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const auto w = spec_.layer_widths();
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      weights_.push_back(Matrix::Zero(w[i + 1], w[i]));
      biases_.push_back(Vector::Zero(w[i + 1]));
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return weights_.size(); }

  Matrix& weight(std::size_t layer) { return weights_.at(layer); }
  const Matrix& weight(std::size_t layer) const { return weights_.at(layer); }
  Vector& bias(std::size_t layer) { return biases_.at(layer); }
  const Vector& bias(std::size_t layer) const { return biases_.at(layer); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
      n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
  }

  // Layer order; within a layer the weight matrix row-major, then the bias.
  Vector flatten() const {
    Vector flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const Matrix& W = weights_[l];
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) flat[k++] = W(r, c);
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) flat[k++] = biases_[l][r];
    }
    return flat;
  }

  void assign(const Vector& flat) {
    require(static_cast<std::size_t>(flat.size()) == parameter_count(),
            ErrorKind::invalid_input, "flat parameter vector has wrong length");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix& W = weights_[l];
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = flat[k++];
      for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l][r] = flat[k++];
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    return true;
  }

  bool operator==(const DenseNet& other) const {
    if (!(spec_ == other.spec_)) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l]) return false;
    return true;
  }

 private:
  NetworkSpec spec_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

// He-normal weights N(0, 2/fan_in), zero biases.
inline DenseNet init_network(const NetworkSpec& spec, std::uint64_t seed) {
  DenseNet net(spec);
  Rng rng(seed);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Matrix& W = net.weight(l);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(W.cols())));
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = normal(rng);
  }
  return net;
}

// pre[l] = a[l] W_l^T + b_l, a[l+1] = relu(pre[l]) (identity on the last layer).
struct ForwardCache {
  std::vector<Matrix> activations;  // activations[0] is the input batch
  std::vector<Matrix> pre_activations;
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

namespace detail {

inline void check_batch(const DenseNet& net, const Matrix& batch) {
  if (batch.cols() != net.spec().input_dim)
    fail(ErrorKind::invalid_input,
         "batch has " + std::to_string(batch.cols()) + " columns, network expects " +
             std::to_string(net.spec().input_dim));
}

inline Matrix affine(const Matrix& a, const Matrix& W, const Vector& b) {
  Matrix z = a * W.transpose();
  z.rowwise() += b.transpose();
  return z;
}

}  // namespace detail

inline ForwardResult forward(const DenseNet& net, const Matrix& batch) {
  detail::check_batch(net, batch);
  ForwardResult result;
  auto& cache = result.cache;
  cache.activations.reserve(net.num_layers() + 1);
  cache.pre_activations.reserve(net.num_layers());
  cache.activations.push_back(batch);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    cache.pre_activations.push_back(
        detail::affine(cache.activations.back(), net.weight(l), net.bias(l)));
    if (l + 1 < net.num_layers())
      cache.activations.push_back(cache.pre_activations.back().cwiseMax(0.0));
  }
  result.output = cache.pre_activations.back();
  return result;
}

// Forward pass without keeping the cache.
inline Matrix predict(const DenseNet& net, const Matrix& batch) {
  detail::check_batch(net, batch);
  Matrix a = batch;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Matrix z = detail::affine(a, net.weight(l), net.bias(l));
    a = (l + 1 < net.num_layers()) ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return a;
}

struct GradientBundle {
  std::vector<Matrix> d_weights;
  std::vector<Vector> d_biases;
  Matrix d_input;

  GradientBundle& operator*=(double s) {
    for (auto& w : d_weights) w *= s;
    for (auto& b : d_biases) b *= s;
    d_input *= s;
    return *this;
  }

  Vector flatten() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < d_weights.size(); ++l)
      n += static_cast<std::size_t>(d_weights[l].size() + d_biases[l].size());
    Vector flat(static_cast<Eigen::Index>(n));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < d_weights.size(); ++l) {
      const Matrix& W = d_weights[l];
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) flat[k++] = W(r, c);
      for (Eigen::Index r = 0; r < d_biases[l].size(); ++r) flat[k++] = d_biases[l][r];
    }
    return flat;
  }
};

// Gradient of sum_rows <upstream, output> w.r.t. parameters and input.
// The ReLU subgradient at exactly 0 is taken as 0.
inline GradientBundle backward(const DenseNet& net, const ForwardCache& cache,
                               const Matrix& upstream) {
  const std::size_t L = net.num_layers();
  require(cache.pre_activations.size() == L && cache.activations.size() == L,
          ErrorKind::contract, "forward cache does not match network depth");
  for (std::size_t l = 0; l < L; ++l)
    require(cache.activations[l].cols() == net.weight(l).cols() &&
                cache.pre_activations[l].cols() == net.weight(l).rows(),
            ErrorKind::contract, "forward cache shapes do not match network");
  require(upstream.rows() == cache.pre_activations.back().rows() &&
              upstream.cols() == net.spec().output_dim,
          ErrorKind::contract, "upstream gradient shape does not match output");

  GradientBundle g;
  g.d_weights.resize(L);
  g.d_biases.resize(L);
  Matrix delta = upstream;
  for (std::size_t li = L; li-- > 0;) {
    g.d_weights[li] = delta.transpose() * cache.activations[li];
    g.d_biases[li] = delta.colwise().sum().transpose();
    Matrix d_act = delta * net.weight(li);
    if (li == 0) {
      g.d_input = std::move(d_act);
    } else {
      const Matrix& z = cache.pre_activations[li - 1];
      delta = (z.array() > 0.0).select(d_act, 0.0);
    }
  }
  return g;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

inline void from_json(const nlohmann::json& j, AdamConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
}

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t t = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(std::size_t n_params, AdamConfig cfg)
      : m(Vector::Zero(static_cast<Eigen::Index>(n_params))),
        v(Vector::Zero(static_cast<Eigen::Index>(n_params))),
        config(cfg) {}
};

// One bias-corrected Adam descent step on `net` using `grads`.
inline void adam_step(AdamState& state, DenseNet& net, const GradientBundle& grads) {
  const Vector g = grads.flatten();
  require(g.size() == state.m.size() &&
              static_cast<std::size_t>(g.size()) == net.parameter_count(),
          ErrorKind::contract, "gradient/optimizer shapes do not match network");
  const std::uint64_t step = state.t + 1;
  if (!g.allFinite())
    throw OptimizerError(step, "non-finite gradient at optimizer step " + std::to_string(step));

  const auto& c = state.config;
  state.t = step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * g;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));

  Vector params = net.flatten();
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
  net.assign(params);
}

// --- checkpoint format ----------------------------------------------------

inline nlohmann::json spec_to_json(const NetworkSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_widths", s.hidden_widths},
          {"output_dim", s.output_dim},
          {"output_activation", "identity"}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  if (j.value("output_activation", std::string("identity")) != "identity")
    fail(ErrorKind::invalid_input, "only identity output activation is supported");
  return NetworkSpec(j.at("input_dim").get<int>(),
                     j.at("hidden_widths").get<std::vector<int>>(),
                     j.at("output_dim").get<int>());
}

struct Checkpoint {
  DenseNet net;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

inline nlohmann::json checkpoint_to_json(const DenseNet& net, std::uint64_t seed,
                                         std::uint64_t step) {
  const Vector flat = net.flatten();
  return {{"spec", spec_to_json(net.spec())},
          {"parameters", std::vector<double>(flat.data(), flat.data() + flat.size())},
          {"seed", seed},
          {"step", step}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint c;
  c.net = DenseNet(spec_from_json(j.at("spec")));
  const auto params = j.at("parameters").get<std::vector<double>>();
  c.net.assign(Eigen::Map<const Vector>(params.data(), static_cast<Eigen::Index>(params.size())));
  require(c.net.all_finite(), ErrorKind::invalid_input, "checkpoint has non-finite parameters");
  c.seed = j.value("seed", std::uint64_t{0});
  c.step = j.value("step", std::uint64_t{0});
  return c;
}

}  // namespace gcds::nn
