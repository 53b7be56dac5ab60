#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fimvar/linalg.hpp"

namespace fimvar {

/// Hidden-layer activation. The output layer is always linear.
enum class Activation { Sigmoid, SoftPlus, LogSigmoid, Tanh, Identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Pointwise activation value and first derivative (training code uses
/// these; the full second-order evaluation stays internal to derivatives()).
double activation_value(Activation a, double t);
double activation_derivative(Activation a, double t);

/// One flat-parameter index range per layer (weights then bias of that layer).
struct ParamGroup {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

/// Forward map, Jacobian rows and diagonal-Hessian rows at one input:
/// jac(i, a) = d h^a / d theta_i, dhess(i, a) = d^2 h^a / d theta_i^2.
/// Rows for last-layer parameters of dhess are exactly zero.
struct DerivativeBundle {
  Vec h;      // T
  Mat jac;    // P x T
  Mat dhess;  // P x T
};

/// Fully connected feedforward network x -> h with twice-differentiable
/// hidden activations and a linear output layer.
///
/// Parameter layout: layers in order, each layer contributing its weight
/// matrix in row-major order (out x in) followed by its bias vector. The
/// per-layer groups are named "layer_1" ... "layer_L".
class MlpNetwork {
 public:
  MlpNetwork(std::vector<std::size_t> layer_dims, Activation activation);

  /// Weights and biases drawn uniformly from (-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static MlpNetwork random_init(std::vector<std::size_t> layer_dims,
                                Activation activation, std::uint64_t seed);

  std::size_t input_dim() const { return layer_dims_.front(); }
  std::size_t output_dim() const { return layer_dims_.back(); }
  std::size_t param_count() const { return theta_.size(); }
  std::size_t layer_count() const { return layer_dims_.size() - 1; }
  const std::vector<std::size_t>& layer_dims() const { return layer_dims_; }
  Activation activation() const { return activation_; }
  std::uint64_t init_seed() const { return init_seed_; }

  const Vec& theta() const { return theta_; }
  void set_theta(Vec theta);
  void set_param(std::size_t i, double value);
  const std::vector<ParamGroup>& param_groups() const { return groups_; }

  Vec forward(const Vec& x) const;
  DerivativeBundle derivatives(const Vec& x) const;

  /// JSON checkpoint {layer_dims, activation, theta, seed}; doubles are
  /// serialized in shortest round-trip form so reload is bit-exact.
  void save_checkpoint(const std::string& path) const;
  static MlpNetwork load_checkpoint(const std::string& path);

 private:
  std::vector<std::size_t> layer_dims_;
  Activation activation_;
  Vec theta_;
  std::vector<ParamGroup> groups_;
  std::uint64_t init_seed_ = 0;

  std::size_t weight_offset(std::size_t layer) const;  // layer is 1-based
  std::size_t bias_offset(std::size_t layer) const;
};

}  // namespace fimvar
