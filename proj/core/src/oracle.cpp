#include "fimvar/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "fimvar/rng.hpp"

namespace fimvar::oracle {

namespace {

void check_step(double step) {
  if (!(step >= 1e-6 && step <= 1e-3))
    throw std::invalid_argument("finite-difference step must lie in [1e-6, 1e-3]");
}

}  // namespace

Mat fd_jacobian(const MlpNetwork& net, const Vec& x, double step) {
  check_step(step);
  const std::size_t p_dim = net.param_count();
  const std::size_t t_dim = net.output_dim();
  Mat jac(p_dim, t_dim);
  MlpNetwork probe = net;
  for (std::size_t i = 0; i < p_dim; ++i) {
    const double theta_i = net.theta()[i];
    probe.set_param(i, theta_i + step);
    const Vec plus = probe.forward(x);
    probe.set_param(i, theta_i - step);
    const Vec minus = probe.forward(x);
    probe.set_param(i, theta_i);
    for (std::size_t a = 0; a < t_dim; ++a)
      jac(i, a) = (plus[a] - minus[a]) / (2.0 * step);
  }
  return jac;
}

Mat fd_diag_hessian(const MlpNetwork& net, const Vec& x, double step) {
  check_step(step);
  const std::size_t p_dim = net.param_count();
  const std::size_t t_dim = net.output_dim();
  const Vec center = net.forward(x);
  Mat dhess(p_dim, t_dim);
  MlpNetwork probe = net;
  for (std::size_t i = 0; i < p_dim; ++i) {
    const double theta_i = net.theta()[i];
    probe.set_param(i, theta_i + step);
    const Vec plus = probe.forward(x);
    probe.set_param(i, theta_i - step);
    const Vec minus = probe.forward(x);
    probe.set_param(i, theta_i);
    for (std::size_t a = 0; a < t_dim; ++a)
      dhess(i, a) = (plus[a] - 2.0 * center[a] + minus[a]) / (step * step);
  }
  return dhess;
}

ExactConditionalReport enumerate_categorical_statistics(const MlpNetwork& net,
                                                        const NaturalParamHead& head,
                                                        const Vec& x,
                                                        std::size_t n) {
  if (head.family != Family::Categorical)
    throw std::domain_error("outcome enumeration requires a categorical head");
  if (head.dim_t > 32)
    throw std::domain_error("outcome enumeration is limited to 32 classes");
  if (n == 0) throw std::invalid_argument("sample count must be at least 1");

  const DerivativeBundle deriv = net.derivatives(x);
  const std::size_t c_dim = head.dim_t;
  const std::size_t p_dim = net.param_count();

  // Independent recomputation of the class probabilities and the second
  // moment; this path must not depend on the moment-tensor routines it is
  // used to check.
  double h_max = deriv.h[0];
  for (double v : deriv.h) h_max = std::max(h_max, v);
  Vec sigma(c_dim);
  double z = 0.0;
  for (std::size_t y = 0; y < c_dim; ++y) {
    sigma[y] = std::exp(deriv.h[y] - h_max);
    z += sigma[y];
  }
  for (auto& v : sigma) v /= z;

  ExactConditionalReport out;
  out.n_samples = n;
  out.fim_diag.assign(p_dim, 0.0);
  out.var1.assign(p_dim, 0.0);
  out.var2.assign(p_dim, 0.0);

  Vec residual(c_dim);
  Vec s1(c_dim), s2(c_dim);
  for (std::size_t i = 0; i < p_dim; ++i) {
    // jac_i^T Cov jac_i by outcome summation, used inside the second
    // estimator's integrand.
    double quad = 0.0;
    for (std::size_t y = 0; y < c_dim; ++y) {
      double s = 0.0;
      for (std::size_t a = 0; a < c_dim; ++a)
        s += deriv.jac(i, a) * ((a == y ? 1.0 : 0.0) - sigma[a]);
      quad += sigma[y] * s * s;
    }
    for (std::size_t y = 0; y < c_dim; ++y) {
      for (std::size_t a = 0; a < c_dim; ++a)
        residual[a] = sigma[a] - (a == y ? 1.0 : 0.0);
      double grad_dot = 0.0, hess_dot = 0.0;
      for (std::size_t a = 0; a < c_dim; ++a) {
        grad_dot += deriv.jac(i, a) * residual[a];
        hess_dot += deriv.dhess(i, a) * residual[a];
      }
      s1[y] = grad_dot * grad_dot;
      s2[y] = hess_dot + quad;
    }
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t y = 0; y < c_dim; ++y) {
      e1 += sigma[y] * s1[y];
      e2 += sigma[y] * s2[y];
    }
    // Centered second pass; the uncentered form loses all precision when
    // the integrand is nearly constant across outcomes.
    double v1 = 0.0, v2 = 0.0;
    for (std::size_t y = 0; y < c_dim; ++y) {
      v1 += sigma[y] * (s1[y] - e1) * (s1[y] - e1);
      v2 += sigma[y] * (s2[y] - e2) * (s2[y] - e2);
    }
    out.fim_diag[i] = e1;
    out.var1[i] = v1 / static_cast<double>(n);
    out.var2[i] = v2 / static_cast<double>(n);
  }
  return out;
}

McEstimatorStats mc_estimator_stats(const MlpNetwork& net,
                                    const NaturalParamHead& head, const Vec& x,
                                    std::size_t n_per_run, std::size_t runs,
                                    std::uint64_t seed) {
  if (runs < 2) throw std::invalid_argument("at least 2 runs are required");
  const std::size_t p_dim = net.param_count();

  auto summarize = [&](EstimatorKind kind) {
    McSummary s;
    s.runs = runs;
    s.seed = seed;
    s.mean.assign(p_dim, 0.0);
    s.variance.assign(p_dim, 0.0);
    s.std_error_mean.assign(p_dim, 0.0);
    // Welford accumulation across runs.
    for (std::size_t r = 0; r < runs; ++r) {
      const std::uint64_t run_seed =
          Rng::derive(seed, 2 * r + (kind == EstimatorKind::Two ? 1 : 0));
      const DiagFimSample est =
          kind == EstimatorKind::One
              ? estimate_one_conditional(net, head, x, n_per_run, run_seed)
              : estimate_two_conditional(net, head, x, n_per_run, run_seed);
      const double count = static_cast<double>(r + 1);
      for (std::size_t i = 0; i < p_dim; ++i) {
        const double delta = est.values[i] - s.mean[i];
        s.mean[i] += delta / count;
        s.variance[i] += delta * (est.values[i] - s.mean[i]);
      }
    }
    for (std::size_t i = 0; i < p_dim; ++i) {
      s.variance[i] /= static_cast<double>(runs - 1);
      s.std_error_mean[i] = std::sqrt(s.variance[i] / static_cast<double>(runs));
    }
    return s;
  };

  McEstimatorStats out;
  out.one = summarize(EstimatorKind::One);
  out.two = summarize(EstimatorKind::Two);
  return out;
}

}  // namespace fimvar::oracle
