#include "fimvar/network.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fimvar/rng.hpp"

namespace fimvar {

namespace {

double stable_sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double stable_softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

struct ActEval {
  double value;
  double d1;
  double d2;
};

ActEval act_eval(Activation act, double t) {
  switch (act) {
    case Activation::Sigmoid: {
      const double s = stable_sigmoid(t);
      const double d1 = s * (1.0 - s);
      return {s, d1, d1 * (1.0 - 2.0 * s)};
    }
    case Activation::SoftPlus: {
      const double s = stable_sigmoid(t);
      return {stable_softplus(t), s, s * (1.0 - s)};
    }
    case Activation::LogSigmoid: {
      const double sneg = stable_sigmoid(-t);
      return {-stable_softplus(-t), sneg, -sneg * (1.0 - sneg)};
    }
    case Activation::Tanh: {
      const double v = std::tanh(t);
      const double d1 = 1.0 - v * v;
      return {v, d1, -2.0 * v * d1};
    }
    case Activation::Identity:
      return {t, 1.0, 0.0};
  }
  throw std::logic_error("unknown activation");
}

}  // namespace

double activation_value(Activation a, double t) { return act_eval(a, t).value; }

double activation_derivative(Activation a, double t) { return act_eval(a, t).d1; }

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Sigmoid: return "sigmoid";
    case Activation::SoftPlus: return "softplus";
    case Activation::LogSigmoid: return "log_sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  throw std::logic_error("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "softplus") return Activation::SoftPlus;
  if (name == "log_sigmoid") return Activation::LogSigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation name: " + name);
}

MlpNetwork::MlpNetwork(std::vector<std::size_t> layer_dims, Activation activation)
    : layer_dims_(std::move(layer_dims)), activation_(activation) {
  if (layer_dims_.size() < 2)
    throw std::invalid_argument("network needs at least input and output dims");
  for (std::size_t d : layer_dims_)
    if (d == 0) throw std::invalid_argument("layer dimensions must be positive");

  std::size_t param_count = 0;
  groups_.reserve(layer_count());
  for (std::size_t l = 1; l < layer_dims_.size(); ++l) {
    const std::size_t begin = param_count;
    param_count += layer_dims_[l] * layer_dims_[l - 1] + layer_dims_[l];
    groups_.push_back({"layer_" + std::to_string(l), begin, param_count});
  }
  theta_.assign(param_count, 0.0);
}

MlpNetwork MlpNetwork::random_init(std::vector<std::size_t> layer_dims,
                                   Activation activation, std::uint64_t seed) {
  MlpNetwork net(std::move(layer_dims), activation);
  Rng rng(seed);
  for (std::size_t l = 1; l < net.layer_dims_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_dims_[l - 1]));
    const auto& g = net.groups_[l - 1];
    for (std::size_t i = g.begin; i < g.end; ++i)
      net.theta_[i] = rng.uniform(-bound, bound);
  }
  net.init_seed_ = seed;
  return net;
}

void MlpNetwork::set_theta(Vec theta) {
  if (theta.size() != theta_.size())
    throw std::invalid_argument("theta has wrong length");
  theta_ = std::move(theta);
}

void MlpNetwork::set_param(std::size_t i, double value) {
  if (i >= theta_.size()) throw std::invalid_argument("parameter index out of range");
  theta_[i] = value;
}

std::size_t MlpNetwork::weight_offset(std::size_t layer) const {
  return groups_[layer - 1].begin;
}

std::size_t MlpNetwork::bias_offset(std::size_t layer) const {
  return groups_[layer - 1].begin + layer_dims_[layer] * layer_dims_[layer - 1];
}

Vec MlpNetwork::forward(const Vec& x) const {
  if (x.size() != input_dim())
    throw std::invalid_argument("input has wrong dimension");
  const std::size_t depth = layer_count();
  Vec a = x;
  for (std::size_t l = 1; l <= depth; ++l) {
    const std::size_t din = layer_dims_[l - 1];
    const std::size_t dout = layer_dims_[l];
    const double* w = &theta_[weight_offset(l)];
    const double* b = &theta_[bias_offset(l)];
    Vec z(dout);
    for (std::size_t p = 0; p < dout; ++p) {
      double s = b[p];
      const double* row = w + p * din;
      for (std::size_t q = 0; q < din; ++q) s += row[q] * a[q];
      z[p] = s;
    }
    if (l < depth)
      for (auto& v : z) v = act_eval(activation_, v).value;
    a = std::move(z);
  }
  return a;
}

DerivativeBundle MlpNetwork::derivatives(const Vec& x) const {
  if (x.size() != input_dim())
    throw std::invalid_argument("input has wrong dimension");
  const std::size_t depth = layer_count();
  const std::size_t t_dim = output_dim();

  // Forward pass, caching pre-activations and activations of every layer.
  std::vector<Vec> acts(depth + 1);   // acts[l] = a_l, acts[0] = x
  std::vector<Vec> pre(depth + 1);    // pre[l] = z_l, l >= 1
  acts[0] = x;
  for (std::size_t l = 1; l <= depth; ++l) {
    const std::size_t din = layer_dims_[l - 1];
    const std::size_t dout = layer_dims_[l];
    const double* w = &theta_[weight_offset(l)];
    const double* b = &theta_[bias_offset(l)];
    Vec z(dout);
    for (std::size_t p = 0; p < dout; ++p) {
      double s = b[p];
      const double* row = w + p * din;
      for (std::size_t q = 0; q < din; ++q) s += row[q] * acts[l - 1][q];
      z[p] = s;
    }
    pre[l] = z;
    if (l < depth)
      for (auto& v : z) v = act_eval(activation_, v).value;
    acts[l] = std::move(z);
  }

  DerivativeBundle out;
  out.h = acts[depth];
  out.jac = Mat(param_count(), t_dim, 0.0);
  out.dhess = Mat(param_count(), t_dim, 0.0);

  // Last layer is linear in its own parameters: the Jacobian rows are the
  // previous activations (or 1 for biases) and the diagonal Hessian vanishes.
  {
    const std::size_t din = layer_dims_[depth - 1];
    const std::size_t woff = weight_offset(depth);
    const std::size_t boff = bias_offset(depth);
    for (std::size_t p = 0; p < t_dim; ++p) {
      for (std::size_t q = 0; q < din; ++q)
        out.jac(woff + p * din + q, p) = acts[depth - 1][q];
      out.jac(boff + p, p) = 1.0;
    }
  }

  // Hidden layers: a parameter of layer l moves exactly one pre-activation
  // coordinate z_{l,p}, linearly. Propagating the unit first-order response
  // U and its second-order companion Q of that coordinate once per neuron
  // gives every row of the layer by scaling:
  //   jac   = (phi'(z_lp) * c) * U_final
  //   dhess = c^2 * (phi'(z_lp)^2 * Q_final + phi''(z_lp) * U_final)
  // with c the incoming activation (1 for the bias). Q picks up the
  // curvature of every downstream activation:
  //   U_m = phi'(z_m) o (W_m U_{m-1})
  //   Q_m = phi''(z_m) o (W_m U_{m-1})^2 + phi'(z_m) o (W_m Q_{m-1})
  // and the final linear layer applies W_L to both.
  for (std::size_t l = 1; l < depth; ++l) {
    const std::size_t dl = layer_dims_[l];
    const std::size_t din = layer_dims_[l - 1];
    const std::size_t woff = weight_offset(l);
    const std::size_t boff = bias_offset(l);
    for (std::size_t p = 0; p < dl; ++p) {
      Vec u(dl, 0.0), q_resp(dl, 0.0);
      u[p] = 1.0;
      for (std::size_t m = l + 1; m <= depth; ++m) {
        const std::size_t mdin = layer_dims_[m - 1];
        const std::size_t mdout = layer_dims_[m];
        const double* w = &theta_[weight_offset(m)];
        Vec wu(mdout, 0.0), wq(mdout, 0.0);
        for (std::size_t r = 0; r < mdout; ++r) {
          const double* row = w + r * mdin;
          double su = 0.0, sq = 0.0;
          for (std::size_t s = 0; s < mdin; ++s) {
            su += row[s] * u[s];
            sq += row[s] * q_resp[s];
          }
          wu[r] = su;
          wq[r] = sq;
        }
        if (m < depth) {
          for (std::size_t r = 0; r < mdout; ++r) {
            const ActEval e = act_eval(activation_, pre[m][r]);
            wq[r] = e.d2 * wu[r] * wu[r] + e.d1 * wq[r];
            wu[r] *= e.d1;
          }
        }
        u = std::move(wu);
        q_resp = std::move(wq);
      }

      const ActEval own = act_eval(activation_, pre[l][p]);
      const double a1 = own.d1;
      const double a2 = own.d2;
      for (std::size_t q = 0; q <= din; ++q) {
        const bool is_bias = (q == din);
        const double c = is_bias ? 1.0 : acts[l - 1][q];
        const std::size_t i = is_bias ? boff + p : woff + p * din + q;
        if (c == 0.0) continue;
        const double jf = a1 * c;
        const double hf1 = c * c * a1 * a1;
        const double hf2 = c * c * a2;
        for (std::size_t a = 0; a < t_dim; ++a) {
          out.jac(i, a) = jf * u[a];
          out.dhess(i, a) = hf1 * q_resp[a] + hf2 * u[a];
        }
      }
    }
  }
  return out;
}

void MlpNetwork::save_checkpoint(const std::string& path) const {
  nlohmann::json doc;
  doc["layer_dims"] = layer_dims_;
  doc["activation"] = activation_name(activation_);
  doc["theta"] = theta_;
  doc["seed"] = init_seed_;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

MlpNetwork MlpNetwork::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  try {
    nlohmann::json doc;
    in >> doc;
    MlpNetwork net(doc.at("layer_dims").get<std::vector<std::size_t>>(),
                   activation_from_name(doc.at("activation").get<std::string>()));
    net.set_theta(doc.at("theta").get<Vec>());
    net.init_seed_ = doc.at("seed").get<std::uint64_t>();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("checkpoint " + path + " is malformed: " + e.what());
  }
}

}  // namespace fimvar
