#include "fimvar/expfam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fimvar/rng.hpp"

namespace fimvar {

namespace {

constexpr std::size_t kMaxCategoricalClasses = 32;

void check_input(const NaturalParamHead& head, const Vec& h) {
  if (h.size() != head.dim_t)
    throw std::invalid_argument("natural parameter has wrong dimension");
  for (double v : h)
    if (!std::isfinite(v)) throw std::domain_error("natural parameter is not finite");
}

}  // namespace

NaturalParamHead::NaturalParamHead(Family f, std::size_t t) : family(f), dim_t(t) {
  if (t == 0) throw std::invalid_argument("head dimension must be at least 1");
}

Vec softmax(const Vec& h) {
  const double m = *std::max_element(h.begin(), h.end());
  Vec out(h.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    out[i] = std::exp(h[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double log_partition(const NaturalParamHead& head, const Vec& h) {
  check_input(head, h);
  if (head.family == Family::IsotropicGaussian) {
    return 0.5 * dot(h, h);
  }
  const double m = *std::max_element(h.begin(), h.end());
  double sum = 0.0;
  for (double v : h) sum += std::exp(v - m);
  return m + std::log(sum);
}

Vec mean_params(const NaturalParamHead& head, const Vec& h) {
  check_input(head, h);
  if (head.family == Family::IsotropicGaussian) return h;
  return softmax(h);
}

Mat fisher_of_h(const NaturalParamHead& head, const Vec& h) {
  check_input(head, h);
  const std::size_t t = head.dim_t;
  if (head.family == Family::IsotropicGaussian) return Mat::identity(t);
  const Vec sigma = softmax(h);
  Mat fisher(t, t);
  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t b = 0; b < t; ++b)
      fisher(a, b) = (a == b ? sigma[a] : 0.0) - sigma[a] * sigma[b];
  return fisher;
}

MomentSet moments(const NaturalParamHead& head, const Vec& h) {
  check_input(head, h);
  const std::size_t t = head.dim_t;
  MomentSet out;
  out.eta = mean_params(head, h);
  out.fisher_h = fisher_of_h(head, h);
  out.k4 = Tensor4(t);

  if (head.family == Family::IsotropicGaussian) {
    // Fourth central moment of a standard normal: the Isserlis pairing sum.
    for (std::size_t a = 0; a < t; ++a)
      for (std::size_t b = 0; b < t; ++b)
        for (std::size_t c = 0; c < t; ++c)
          for (std::size_t d = 0; d < t; ++d)
            out.k4.at(a, b, c, d) = (a == b && c == d ? 1.0 : 0.0) +
                                    (a == c && b == d ? 1.0 : 0.0) +
                                    (a == d && b == c ? 1.0 : 0.0);
    return out;
  }

  if (t > kMaxCategoricalClasses)
    throw std::domain_error("categorical moment enumeration is limited to 32 classes");

  // Exact enumeration over outcomes: each class contributes sigma_y times the
  // fourth power of its centered one-hot statistic. Each sorted index
  // multiset is evaluated once and written to all of its permutations, so
  // supersymmetry holds bit for bit.
  const Vec& sigma = out.eta;
  std::vector<Vec> centered(t, Vec(t));
  for (std::size_t y = 0; y < t; ++y)
    for (std::size_t a = 0; a < t; ++a)
      centered[y][a] = (a == y ? 1.0 : 0.0) - sigma[a];
  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t b = a; b < t; ++b)
      for (std::size_t c = b; c < t; ++c)
        for (std::size_t d = c; d < t; ++d) {
          double val = 0.0;
          for (std::size_t y = 0; y < t; ++y) {
            const Vec& v = centered[y];
            val += sigma[y] * v[a] * v[b] * v[c] * v[d];
          }
          std::size_t idx[4] = {a, b, c, d};
          do {
            out.k4.at(idx[0], idx[1], idx[2], idx[3]) = val;
          } while (std::next_permutation(idx, idx + 4));
        }
  return out;
}

std::vector<Vec> sample(const NaturalParamHead& head, const Vec& h,
                        std::size_t n, std::uint64_t seed) {
  check_input(head, h);
  if (n == 0) throw std::invalid_argument("sample count must be at least 1");
  Rng rng(seed);
  std::vector<Vec> out;
  out.reserve(n);
  if (head.family == Family::IsotropicGaussian) {
    for (std::size_t k = 0; k < n; ++k) {
      Vec y(head.dim_t);
      for (std::size_t a = 0; a < head.dim_t; ++a) y[a] = h[a] + rng.normal();
      out.push_back(std::move(y));
    }
    return out;
  }
  const Vec sigma = softmax(h);
  for (std::size_t k = 0; k < n; ++k) {
    Vec onehot(head.dim_t, 0.0);
    onehot[rng.categorical(sigma)] = 1.0;
    out.push_back(std::move(onehot));
  }
  return out;
}

}  // namespace fimvar
