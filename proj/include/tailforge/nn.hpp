#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tailforge/error.hpp"
#include "tailforge/ops.hpp"
#include "tailforge/rng.hpp"

namespace tailforge {

template <typename T = double>
struct Linear {
  Var<T> weight;  // in x out
  Var<T> bias;    // 1 x out

  std::size_t in_features() const { return weight->value().rows(); }
  std::size_t out_features() const { return weight->value().cols(); }
};

// Weights uniform in +-1/sqrt(fan_in), zero bias. This is also the scheme
// used when the classifier is reset between training stages.
template <typename T = double>
Linear<T> init_linear(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ValidationError("linear layer needs positive dimensions");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix<T> w(in, out);
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return {parameter(std::move(w)), parameter(Matrix<T>(1, out))};
}

enum class Activation { relu, identity };

// Applies each layer as x W + b. The activation follows every layer except,
// when activate_last is false, the final one.
template <typename T>
Var<T> mlp_forward(const Var<T>& x, std::span<const Linear<T>> layers,
                   Activation activation = Activation::relu, bool activate_last = false) {
  Var<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (h->value().cols() != layers[i].in_features()) {
      throw DimensionError("layer " + std::to_string(i) + " expects " +
                           std::to_string(layers[i].in_features()) + " inputs, got " +
                           h->value().shape());
    }
    h = add_row(matmul(h, layers[i].weight), layers[i].bias);
    const bool last = i + 1 == layers.size();
    if (activation == Activation::relu && (!last || activate_last)) h = relu(h);
  }
  return h;
}

template <typename T>
Var<T> mlp_forward(const Matrix<T>& x, std::span<const Linear<T>> layers,
                   Activation activation = Activation::relu, bool activate_last = false) {
  return mlp_forward(constant(x), layers, activation, activate_last);
}

template <typename T>
std::vector<Var<T>> parameters_of(std::span<const Linear<T>> layers) {
  std::vector<Var<T>> out;
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.0;  // sgd only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// SGD (optional heavy-ball momentum) or Adam. State is kept per parameter in
// the order the parameters are passed to step().
template <typename T = double>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  }

  const OptimizerConfig& config() const noexcept { return config_; }

  void set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
    config_.learning_rate = lr;
  }

  // Applies one update from the accumulated gradients, then clears them.
  // Throws DivergenceError if any gradient is non-finite.
  void step(std::span<const Var<T>> params, long long step_index) {
    for (const auto& p : params) {
      if (p->has_grad() && !p->grad().all_finite()) {
        throw DivergenceError("non-finite gradient", step_index);
      }
    }
    if (first_moment_.empty()) {
      for (const auto& p : params) {
        first_moment_.emplace_back(p->value().rows(), p->value().cols());
        second_moment_.emplace_back(p->value().rows(), p->value().cols());
      }
    }
    if (first_moment_.size() != params.size()) {
      throw ValidationError("optimizer parameter list changed between steps");
    }
    ++t_;
    const double lr = config_.learning_rate;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      if (!p.has_grad()) continue;
      auto value = p.mutable_value().data();
      auto grad = p.grad().data();
      auto m = first_moment_[k].data();
      auto v = second_moment_[k].data();
      for (std::size_t i = 0; i < value.size(); ++i) {
        double g = static_cast<double>(grad[i]) +
                   config_.weight_decay * static_cast<double>(value[i]);
        if (config_.kind == OptimizerKind::sgd) {
          if (config_.momentum > 0.0) {
            m[i] = static_cast<T>(config_.momentum * m[i] + g);
            g = m[i];
          }
          value[i] = static_cast<T>(value[i] - lr * g);
        } else {
          m[i] = static_cast<T>(config_.beta1 * m[i] + (1.0 - config_.beta1) * g);
          v[i] = static_cast<T>(config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g);
          const double m_hat = m[i] / (1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
          const double v_hat = v[i] / (1.0 - std::pow(config_.beta2, static_cast<double>(t_)));
          value[i] = static_cast<T>(value[i] - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon));
        }
      }
      p.zero_grad();
    }
  }

 private:
  OptimizerConfig config_;
  std::vector<Matrix<T>> first_moment_;
  std::vector<Matrix<T>> second_moment_;
  long long t_ = 0;
};

}  // namespace tailforge
