#include "fimvar/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace fimvar {

namespace {

void check_n(std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample count must be at least 1");
}

}  // namespace

DiagFimSample estimate_one_conditional(const MlpNetwork& net,
                                       const NaturalParamHead& head,
                                       const Vec& x, std::size_t n,
                                       std::uint64_t seed) {
  check_n(n);
  const DerivativeBundle deriv = net.derivatives(x);
  const Vec eta = mean_params(head, deriv.h);
  const auto draws = sample(head, deriv.h, n, seed);
  const std::size_t p_dim = net.param_count();
  const std::size_t t_dim = head.dim_t;

  DiagFimSample out;
  out.estimator = EstimatorKind::One;
  out.n_samples = n;
  out.values.assign(p_dim, 0.0);
  Vec residual(t_dim);
  for (const Vec& t : draws) {
    for (std::size_t a = 0; a < t_dim; ++a) residual[a] = eta[a] - t[a];
    for (std::size_t i = 0; i < p_dim; ++i) {
      double s = 0.0;
      for (std::size_t a = 0; a < t_dim; ++a) s += deriv.jac(i, a) * residual[a];
      out.values[i] += s * s;
    }
  }
  for (auto& v : out.values) v /= static_cast<double>(n);
  return out;
}

DiagFimSample estimate_two_conditional(const MlpNetwork& net,
                                       const NaturalParamHead& head,
                                       const Vec& x, std::size_t n,
                                       std::uint64_t seed) {
  check_n(n);
  const DerivativeBundle deriv = net.derivatives(x);
  const Vec eta = mean_params(head, deriv.h);
  const Mat fisher = fisher_of_h(head, deriv.h);
  const auto draws = sample(head, deriv.h, n, seed);
  const std::size_t p_dim = net.param_count();
  const std::size_t t_dim = head.dim_t;

  // The per-parameter quadratic form jac_i^T I jac_i is sample independent.
  // Evaluated exactly like exact_conditional's fim_diag so that last-layer
  // values (where dhess vanishes) reproduce it bit for bit.
  Vec base(p_dim);
  Vec g(t_dim);
  for (std::size_t i = 0; i < p_dim; ++i) {
    for (std::size_t a = 0; a < t_dim; ++a) g[a] = deriv.jac(i, a);
    base[i] = quadratic_form(fisher, g);
  }

  DiagFimSample out;
  out.estimator = EstimatorKind::Two;
  out.n_samples = n;
  out.values.assign(p_dim, 0.0);
  Vec residual(t_dim);
  for (const Vec& t : draws) {
    for (std::size_t a = 0; a < t_dim; ++a) residual[a] = eta[a] - t[a];
    for (std::size_t i = 0; i < p_dim; ++i) {
      double s = base[i];
      for (std::size_t a = 0; a < t_dim; ++a) s += deriv.dhess(i, a) * residual[a];
      out.values[i] += s;
    }
  }
  for (auto& v : out.values) v /= static_cast<double>(n);
  return out;
}

ExactConditionalReport exact_conditional(const MlpNetwork& net,
                                         const NaturalParamHead& head,
                                         const Vec& x, std::size_t n) {
  check_n(n);
  const DerivativeBundle deriv = net.derivatives(x);
  const MomentSet mom = moments(head, deriv.h);
  const std::size_t p_dim = net.param_count();
  const std::size_t t_dim = head.dim_t;
  const double inv_n = 1.0 / static_cast<double>(n);

  ExactConditionalReport out;
  out.n_samples = n;
  out.fim_diag.assign(p_dim, 0.0);
  out.var1.assign(p_dim, 0.0);
  out.var2.assign(p_dim, 0.0);

  Vec g(t_dim), d(t_dim), w(t_dim * t_dim);
  for (std::size_t i = 0; i < p_dim; ++i) {
    for (std::size_t a = 0; a < t_dim; ++a) {
      g[a] = deriv.jac(i, a);
      d[a] = deriv.dhess(i, a);
    }
    const double fim = quadratic_form(mom.fisher_h, g);
    out.fim_diag[i] = fim;

    // Quartic contraction of K against g (x) g, then remove the squared
    // quadratic term.
    for (std::size_t a = 0; a < t_dim; ++a)
      for (std::size_t b = 0; b < t_dim; ++b) w[a * t_dim + b] = g[a] * g[b];
    double quart = 0.0;
    const double* k = mom.k4.data.data();
    const std::size_t tt = t_dim * t_dim;
    for (std::size_t ab = 0; ab < tt; ++ab) {
      const double wab = w[ab];
      if (wab == 0.0) continue;
      const double* krow = k + ab * tt;
      double s = 0.0;
      for (std::size_t cd = 0; cd < tt; ++cd) s += krow[cd] * w[cd];
      quart += wab * s;
    }
    out.var1[i] = (quart - fim * fim) * inv_n;
    out.var2[i] = quadratic_form(mom.fisher_h, d) * inv_n;
  }
  return out;
}

JointVarianceReport joint_variance(const MlpNetwork& net,
                                   const NaturalParamHead& head,
                                   const std::vector<Vec>& dataset,
                                   std::size_t n_y) {
  if (dataset.empty()) throw std::invalid_argument("joint_variance: empty dataset");
  check_n(n_y);
  const std::size_t p_dim = net.param_count();
  const double m = static_cast<double>(dataset.size());

  Vec fim_sum(p_dim, 0.0), fim_sq_sum(p_dim, 0.0);
  Vec var1_sum(p_dim, 0.0), var2_sum(p_dim, 0.0);
  for (const Vec& x : dataset) {
    const ExactConditionalReport rep = exact_conditional(net, head, x, n_y);
    for (std::size_t i = 0; i < p_dim; ++i) {
      fim_sum[i] += rep.fim_diag[i];
      fim_sq_sum[i] += rep.fim_diag[i] * rep.fim_diag[i];
      var1_sum[i] += rep.var1[i];
      var2_sum[i] += rep.var2[i];
    }
  }

  JointVarianceReport out;
  out.var1.assign(p_dim, 0.0);
  out.var2.assign(p_dim, 0.0);
  for (std::size_t i = 0; i < p_dim; ++i) {
    const double mean_fim = fim_sum[i] / m;
    const double var_fim = fim_sq_sum[i] / m - mean_fim * mean_fim;  // population
    const double input_term = var_fim / static_cast<double>(n_y);
    out.var1[i] = input_term + var1_sum[i] / m;
    out.var2[i] = input_term + var2_sum[i] / m;
  }
  return out;
}

Vec empirical_fisher_diag(const MlpNetwork& net, const NaturalParamHead& head,
                          const std::vector<std::pair<Vec, Vec>>& labeled) {
  if (labeled.empty()) throw std::invalid_argument("empirical_fisher_diag: empty dataset");
  const std::size_t p_dim = net.param_count();
  const std::size_t t_dim = head.dim_t;
  Vec out(p_dim, 0.0);
  Vec residual(t_dim);
  for (const auto& [x, t] : labeled) {
    if (t.size() != t_dim)
      throw std::invalid_argument("empirical_fisher_diag: label has wrong dimension");
    const DerivativeBundle deriv = net.derivatives(x);
    const Vec eta = mean_params(head, deriv.h);
    for (std::size_t a = 0; a < t_dim; ++a) residual[a] = t[a] - eta[a];
    for (std::size_t i = 0; i < p_dim; ++i) {
      double s = 0.0;
      for (std::size_t a = 0; a < t_dim; ++a) s += deriv.jac(i, a) * residual[a];
      out[i] += s * s;
    }
  }
  for (auto& v : out) v /= static_cast<double>(labeled.size());
  return out;
}

CovarianceGap empfim_covariance_gap(const NaturalParamHead& head, const Vec& h,
                                    const Vec& eta_hat) {
  if (eta_hat.size() != head.dim_t)
    throw std::invalid_argument("eta_hat has wrong dimension");
  const std::size_t t_dim = head.dim_t;
  if (head.family == Family::Categorical) {
    double sum = 0.0;
    for (double v : eta_hat) {
      if (v < -1e-12) throw std::invalid_argument("eta_hat is not in the simplex");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("eta_hat does not sum to 1");
  }

  const Vec eta = mean_params(head, h);
  Vec gap(t_dim);
  for (std::size_t a = 0; a < t_dim; ++a) gap[a] = eta[a] - eta_hat[a];

  CovarianceGap out;
  out.delta_h = outer(gap, gap);
  if (head.family == Family::IsotropicGaussian) {
    out.cov_q = Mat::identity(t_dim);
  } else {
    out.cov_q = Mat(t_dim, t_dim);
    for (std::size_t a = 0; a < t_dim; ++a)
      for (std::size_t b = 0; b < t_dim; ++b)
        out.cov_q(a, b) = (a == b ? eta_hat[a] : 0.0) - eta_hat[a] * eta_hat[b];
  }
  out.i_data = Mat(t_dim, t_dim);
  for (std::size_t k = 0; k < t_dim * t_dim; ++k)
    out.i_data.data[k] = out.cov_q.data[k] + out.delta_h.data[k];
  return out;
}

}  // namespace fimvar
