#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fimvar/linalg.hpp"

namespace fimvar {

enum class Family { IsotropicGaussian, Categorical };

/// Exponential-family output distribution over the sufficient statistic t(y),
/// parameterized by the natural parameter vector h of dimension dim_t.
///
/// IsotropicGaussian: t(y) = y, unit covariance, log-partition 0.5*||h||^2.
/// Categorical: dim_t classes, t(y) one-hot, log-partition log-sum-exp(h).
struct NaturalParamHead {
  Family family = Family::IsotropicGaussian;
  std::size_t dim_t = 1;

  NaturalParamHead(Family f, std::size_t t);
};

/// Dense T x T x T x T tensor, row-major over (a, b, c, d).
struct Tensor4 {
  std::size_t dims = 0;
  std::vector<double> data;

  Tensor4() = default;
  explicit Tensor4(std::size_t t, double fill = 0.0)
      : dims(t), data(t * t * t * t, fill) {}

  std::size_t index(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return ((a * dims + b) * dims + c) * dims + d;
  }
  double& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data[index(a, b, c, d)];
  }
  double at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data[index(a, b, c, d)];
  }
};

/// Central moments of t(y) at a fixed natural parameter: the mean parameters,
/// the second central moment (the Fisher information of h), and the fourth
/// central moment tensor.
struct MomentSet {
  Vec eta;       // T
  Mat fisher_h;  // T x T
  Tensor4 k4;    // T^4
};

/// Log-partition function F(h). Throws std::domain_error on non-finite input.
double log_partition(const NaturalParamHead& head, const Vec& h);

/// Mean parameters dF/dh: h for Gaussian, softmax(h) for categorical.
Vec mean_params(const NaturalParamHead& head, const Vec& h);

/// Second central moment of t(y): identity for Gaussian,
/// diag(sigma) - sigma sigma^T for categorical.
Mat fisher_of_h(const NaturalParamHead& head, const Vec& h);

/// Full moment set. The categorical fourth moment is built by exact outcome
/// enumeration, O(C^5); heads with more than 32 classes are rejected.
MomentSet moments(const NaturalParamHead& head, const Vec& h);

/// n i.i.d. draws of the sufficient statistic t(y) under p(y | h).
/// Deterministic given the seed.
std::vector<Vec> sample(const NaturalParamHead& head, const Vec& h,
                        std::size_t n, std::uint64_t seed);

/// Numerically stable softmax (max subtraction).
Vec softmax(const Vec& h);

}  // namespace fimvar
