#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "fimvar/oracle.hpp"
#include "fimvar/rng.hpp"

using namespace fimvar;

namespace {

Vec random_input(std::size_t dim, Rng& rng) {
  Vec x(dim);
  for (auto& v : x) v = rng.normal();
  return x;
}

double max_rel_jac_err(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.data.size(); ++k)
    worst = std::max(worst, std::abs(a.data[k] - b.data[k]) /
                                std::max(1.0, std::abs(b.data[k])));
  return worst;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("finite differences are exact for linear networks") {
  Rng rng(601);
  const MlpNetwork net = MlpNetwork::random_init({3, 2}, Activation::Identity, 71);
  const Vec x = random_input(3, rng);
  const Mat fd = oracle::fd_jacobian(net, x, 1e-4);
  const DerivativeBundle d = net.derivatives(x);
  for (std::size_t k = 0; k < fd.data.size(); ++k)
    CHECK(std::abs(fd.data[k] - d.jac.data[k]) <= 1e-10);
}

TEST_CASE("finite-difference jacobian tracks the analytic one") {
  Rng rng(611);
  const MlpNetwork net = MlpNetwork::random_init({2, 6, 3}, Activation::Sigmoid, 73);
  const Vec x = random_input(2, rng);
  const Mat fd = oracle::fd_jacobian(net, x, 1e-4);
  const DerivativeBundle d = net.derivatives(x);
  CHECK(max_rel_jac_err(d.jac, fd) <= 1e-5);
}

TEST_CASE("step sweep: error decreases then hits the roundoff plateau") {
  Rng rng(621);
  const MlpNetwork net = MlpNetwork::random_init({2, 8, 2}, Activation::Sigmoid, 79);
  const Vec x = random_input(2, rng);
  const DerivativeBundle d = net.derivatives(x);
  const double e3 = max_rel_jac_err(oracle::fd_jacobian(net, x, 1e-3), d.jac);
  const double e4 = max_rel_jac_err(oracle::fd_jacobian(net, x, 1e-4), d.jac);
  const double e5 = max_rel_jac_err(oracle::fd_jacobian(net, x, 1e-5), d.jac);
  CHECK(e4 < e3);            // quadratic truncation shrinks
  CHECK(e5 < e3);
  CHECK(e5 > e4 / 100.0);    // but roundoff stops the quadratic gain
  CHECK_THROWS_AS(oracle::fd_jacobian(net, x, 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(oracle::fd_jacobian(net, x, 1e-7), std::invalid_argument);
}

TEST_CASE("finite-difference hessian: linear output rows vanish") {
  Rng rng(631);
  const MlpNetwork net = MlpNetwork::random_init({2, 4, 2}, Activation::Sigmoid, 83);
  const Vec x = random_input(2, rng);
  // Linear rows have no truncation error, so the largest allowed step keeps
  // the stencil's roundoff far below the tolerance.
  const Mat fd = oracle::fd_diag_hessian(net, x, 1e-3);
  const auto& last = net.param_groups().back();
  for (std::size_t i = last.begin; i < last.end; ++i)
    for (std::size_t a = 0; a < 2; ++a) CHECK(std::abs(fd(i, a)) <= 1e-8);
}

TEST_CASE("finite-difference hessian tracks the analytic one where it matters") {
  Rng rng(641);
  const MlpNetwork net = MlpNetwork::random_init({2, 5, 2}, Activation::Sigmoid, 89);
  const Vec x = random_input(2, rng);
  const Mat fd = oracle::fd_diag_hessian(net, x, 1e-4);
  const DerivativeBundle d = net.derivatives(x);
  // The stencil carries an absolute roundoff floor of roughly eps/step^2,
  // so the relative tolerance needs the matching absolute allowance.
  for (std::size_t k = 0; k < fd.data.size(); ++k)
    if (std::abs(d.dhess.data[k]) > 1e-6)
      CHECK(std::abs(fd.data[k] - d.dhess.data[k]) <=
            1e-4 * std::abs(d.dhess.data[k]) + 1e-7);
}

TEST_CASE("identity activations make the whole network linear") {
  Rng rng(651);
  const MlpNetwork net = MlpNetwork::random_init({2, 4, 3}, Activation::Identity, 97);
  const Vec x = random_input(2, rng);
  const Mat fd = oracle::fd_diag_hessian(net, x, 1e-3);
  const DerivativeBundle d = net.derivatives(x);
  for (std::size_t k = 0; k < fd.data.size(); ++k) {
    CHECK(std::abs(fd.data[k]) <= 1e-8);
    CHECK(d.dhess.data[k] == 0.0);
  }
}

TEST_CASE("enumeration rejects the wrong family and saturates to zero variance") {
  const MlpNetwork net({1, 2}, Activation::Identity);
  const NaturalParamHead gauss(Family::IsotropicGaussian, 2);
  CHECK_THROWS_AS(oracle::enumerate_categorical_statistics(net, gauss, {0.5}, 1),
                  std::domain_error);

  MlpNetwork saturated({1, 3}, Activation::Identity);
  saturated.set_param(3, 50.0);  // bias of logit 0
  const NaturalParamHead head(Family::Categorical, 3);
  const auto rep =
      oracle::enumerate_categorical_statistics(saturated, head, {0.0}, 1);
  for (std::size_t i = 0; i < rep.var1.size(); ++i) {
    CHECK(std::abs(rep.var1[i]) <= 1e-15);
    CHECK(std::abs(rep.var2[i]) <= 1e-15);
  }
}

TEST_CASE("enumeration two-term sums on a hand-built two-class model") {
  // h = (w1 x + b1, w2 x + b2) at x = 1. For the w1 row the gradient is
  // (1, 0), so the first estimator's integrand takes the two values
  // sigma1^2 and sigma0^2 with weights sigma0 and sigma1.
  MlpNetwork net({1, 2}, Activation::Identity);
  net.set_param(0, 0.2);    // w1
  net.set_param(1, -0.1);   // w2
  net.set_param(2, 0.05);   // b1
  net.set_param(3, 0.0);    // b2
  const NaturalParamHead head(Family::Categorical, 2);
  const auto rep = oracle::enumerate_categorical_statistics(net, head, {1.0}, 1);

  const double h0 = 0.25, h1 = -0.1;
  const double z = std::exp(h0) + std::exp(h1);
  const double s0 = std::exp(h0) / z, s1 = std::exp(h1) / z;
  const double fim_w1 = s0 * s1 * s1 + s1 * s0 * s0;  // = s0 s1
  const double var_w1 = s0 * s1 * s1 * s1 * s1 + s1 * s0 * s0 * s0 * s0 -
                        fim_w1 * fim_w1;
  CHECK(rep.fim_diag[0] == doctest::Approx(fim_w1).epsilon(1e-12));
  CHECK(rep.var1[0] == doctest::Approx(var_w1).epsilon(1e-10));
}

TEST_CASE("monte carlo spread of estimator one matches the gaussian closed form") {
  Rng rng(661);
  const MlpNetwork net = MlpNetwork::random_init({2, 3, 2}, Activation::Sigmoid, 101);
  const NaturalParamHead head(Family::IsotropicGaussian, 2);
  const Vec x = random_input(2, rng);
  const DerivativeBundle d = net.derivatives(x);
  const auto stats = oracle::mc_estimator_stats(net, head, x, 1, 500, 12);
  for (std::size_t i = 0; i < stats.one.variance.size(); ++i) {
    double g2 = 0.0;
    for (std::size_t a = 0; a < 2; ++a) g2 += d.jac(i, a) * d.jac(i, a);
    const double closed = 2.0 * g2 * g2;
    if (closed > 1e-8)
      CHECK(std::abs(stats.one.variance[i] - closed) <= 0.10 * closed);
  }
}

TEST_CASE("monte carlo spread of estimator two vanishes on the last layer") {
  Rng rng(671);
  const MlpNetwork net = MlpNetwork::random_init({2, 3, 2}, Activation::Sigmoid, 103);
  const NaturalParamHead head(Family::Categorical, 2);
  const Vec x = random_input(2, rng);
  const auto stats = oracle::mc_estimator_stats(net, head, x, 3, 10, 87);
  const auto& last = net.param_groups().back();
  for (std::size_t i = last.begin; i < last.end; ++i) {
    CHECK(stats.two.variance[i] == 0.0);
    CHECK(stats.two.std_error_mean[i] == 0.0);
  }
  CHECK(stats.one.runs == 10);
  CHECK(stats.one.seed == 87);
  CHECK_THROWS_AS(oracle::mc_estimator_stats(net, head, x, 1, 1, 1),
                  std::invalid_argument);
}

TEST_CASE("doubling the per-run sample count halves the spread") {
  Rng rng(681);
  const MlpNetwork net = MlpNetwork::random_init({2, 4, 2}, Activation::Sigmoid, 107);
  const NaturalParamHead head(Family::IsotropicGaussian, 2);
  const Vec x = random_input(2, rng);
  const auto at_one = oracle::mc_estimator_stats(net, head, x, 1, 2000, 1);
  const auto at_two = oracle::mc_estimator_stats(net, head, x, 2, 2000, 1);
  for (std::size_t i = 0; i < at_one.two.variance.size(); ++i) {
    if (at_one.two.variance[i] > 1e-8) {
      const double ratio = at_one.two.variance[i] / at_two.two.variance[i];
      CHECK(std::abs(ratio - 2.0) <= 0.30);  // 15% on each variance estimate
    }
  }
}

}  // TEST_SUITE
