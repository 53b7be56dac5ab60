#pragma once

#include <cstddef>
#include <cstdint>

#include "fimvar/estimators.hpp"
#include "fimvar/expfam.hpp"
#include "fimvar/network.hpp"

namespace fimvar::oracle {

/// Per-parameter statistics of repeated estimator runs.
struct McSummary {
  Vec mean;
  Vec variance;        // unbiased across runs
  Vec std_error_mean;  // sqrt(variance / runs)
  std::size_t runs = 0;
  std::uint64_t seed = 0;
};

struct McEstimatorStats {
  McSummary one;
  McSummary two;
};

/// Central-difference Jacobian of theta -> h, one network evaluation pair
/// per parameter. step must lie in [1e-6, 1e-3].
Mat fd_jacobian(const MlpNetwork& net, const Vec& x, double step);

/// Second-order central stencil for the per-parameter diagonal Hessian.
Mat fd_diag_hessian(const MlpNetwork& net, const Vec& x, double step);

/// Exact conditional report for a categorical head computed by summing the
/// single-sample estimator integrands over all outcomes. Deliberately avoids
/// the moment-tensor code path so it can serve as an independent check of
/// the closed forms.
ExactConditionalReport enumerate_categorical_statistics(const MlpNetwork& net,
                                                        const NaturalParamHead& head,
                                                        const Vec& x,
                                                        std::size_t n);

/// Repeats both conditional estimators with independent derived seeds and
/// summarizes the per-parameter spread. runs must be at least 2.
McEstimatorStats mc_estimator_stats(const MlpNetwork& net,
                                    const NaturalParamHead& head, const Vec& x,
                                    std::size_t n_per_run, std::size_t runs,
                                    std::uint64_t seed);

}  // namespace fimvar::oracle
