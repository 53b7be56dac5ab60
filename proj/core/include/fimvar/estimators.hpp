#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "fimvar/expfam.hpp"
#include "fimvar/network.hpp"

namespace fimvar {

enum class EstimatorKind { One, Two, Empirical };
enum class InputMode { Conditional, Joint };

/// One realized diagonal-FIM estimate. Estimator One and the empirical
/// variant are entrywise non-negative; estimator Two may go negative.
struct DiagFimSample {
  EstimatorKind estimator = EstimatorKind::One;
  Vec values;  // P
  std::size_t n_samples = 0;
  InputMode input_mode = InputMode::Conditional;
};

/// Exact conditional FIM diagonal and the exact per-parameter variances of
/// both estimators at sample count n_samples (the variances carry the 1/N).
struct ExactConditionalReport {
  Vec fim_diag;  // P
  Vec var1;      // P
  Vec var2;      // P, exactly zero on last-layer indices
  std::size_t n_samples = 0;
};

/// Total per-parameter variances of the joint estimators over a finite input
/// set: input-randomness term plus expected conditional variance.
struct JointVarianceReport {
  Vec var1;  // P
  Vec var2;  // P
};

/// Second-moment decomposition of a mismatched-label distribution:
/// i_data = cov_q + delta_h with delta_h the outer product of the mean gap.
struct CovarianceGap {
  Mat i_data;
  Mat cov_q;
  Mat delta_h;
};

/// Gradient-outer-product estimator of the conditional FIM diagonal from n
/// head samples at fixed input x.
DiagFimSample estimate_one_conditional(const MlpNetwork& net,
                                       const NaturalParamHead& head,
                                       const Vec& x, std::size_t n,
                                       std::uint64_t seed);

/// Negative-Hessian estimator, evaluated in residual form:
/// (eta - t) . dhess_i + jac_i^T I(h|x) jac_i per sample.
DiagFimSample estimate_two_conditional(const MlpNetwork& net,
                                       const NaturalParamHead& head,
                                       const Vec& x, std::size_t n,
                                       std::uint64_t seed);

/// Closed-form conditional FIM diagonal and both estimator variances:
///   fim_diag_i = g_i^T I g_i
///   var1_i     = (1/N) g_i (x4) [K - I (x) I]
///   var2_i     = (1/N) d_i^T I d_i
/// with g_i, d_i the Jacobian and diagonal-Hessian rows.
ExactConditionalReport exact_conditional(const MlpNetwork& net,
                                         const NaturalParamHead& head,
                                         const Vec& x, std::size_t n);

/// Law-of-total-variance combination over a uniform empirical input
/// distribution: (1/N) Var_x(fim_diag) + mean_x(var_j), with N = n_y.
JointVarianceReport joint_variance(const MlpNetwork& net,
                                   const NaturalParamHead& head,
                                   const std::vector<Vec>& dataset,
                                   std::size_t n_y);

/// Deterministic empirical-Fisher diagonal over labeled pairs (x, t(y)).
Vec empirical_fisher_diag(const MlpNetwork& net, const NaturalParamHead& head,
                          const std::vector<std::pair<Vec, Vec>>& labeled);

/// Builds the data second moment implied by a label distribution of the same
/// family with mean eta_hat and returns it with its covariance/mean-gap split.
CovarianceGap empfim_covariance_gap(const NaturalParamHead& head, const Vec& h,
                                    const Vec& eta_hat);

}  // namespace fimvar
