#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "fimvar/estimators.hpp"
#include "fimvar/expfam.hpp"
#include "fimvar/network.hpp"

namespace fimvar {

enum class BoundKind {
  FimDiag,
  Var1,
  Var2,
  TraceFim,
  TraceVar1,
  TraceVar2,
  JointFirstTerm,
};

struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;
  BoundKind kind = BoundKind::FimDiag;
};

/// Extreme value of the quartic form u^(x4) . T over the unit sphere, found
/// by shifted symmetric higher-order power iteration with restarts. The
/// value is a stationary point certified by its residual, not a global
/// optimality certificate.
struct ZEigResult {
  double value = 0.0;
  Vec unit_vector;
  std::size_t restarts_used = 0;
  bool converged = false;
};

struct ZEigPair {
  ZEigResult min;
  ZEigResult max;
};

struct ZEigOptions {
  std::size_t restarts = 16;  // random unit starts beyond the deterministic one
  double tol = 1e-10;
  std::size_t max_iters = 5000;
};

/// Average of a tensor over all 24 index permutations. The quartic form is
/// invariant under this, so extreme Z-eigenvalues are unchanged.
Tensor4 symmetrize(const Tensor4& t);

double quartic_form(const Tensor4& t, const Vec& u);

/// T^2 x T^2 matrix view of a tensor: row index (a,b) row-major, column
/// index (c,d).
Mat reshape_square(const Tensor4& t);
Tensor4 tensor_from_square(const Mat& m);

/// Minimal and maximal Z-eigenvalues of a tensor with dims <= 32. The input
/// is symmetrized first; non-finite entries are rejected.
ZEigPair z_eig_extremes(const Tensor4& t, std::size_t restarts, double tol);
ZEigPair z_eig_extremes(const Tensor4& t, const ZEigOptions& opts = {});

/// Everything input-dependent that the per-parameter conditional bounds
/// need, computed once per (net, head, x, n).
struct ConditionalBoundContext {
  DerivativeBundle deriv;
  double fisher_min = 0.0;  // extreme eigenvalues of I(h|x)
  double fisher_max = 0.0;
  ZEigResult m_min;         // extreme Z-eigenvalues of M = K - I (x) I
  ZEigResult m_max;
  std::size_t n_samples = 0;
};

ConditionalBoundContext make_conditional_bound_context(
    const MlpNetwork& net, const NaturalParamHead& head, const Vec& x,
    std::size_t n, const ZEigOptions& opts = {});

struct ConditionalBounds {
  BoundPair fim;
  BoundPair var1;
  BoundPair var2;
};

/// Sandwich bounds for one parameter:
///   ||g_i||^2 lam(I)        around the FIM diagonal entry,
///   (1/N) ||g_i||^4 lam~(M) around var1,
///   (1/N) ||d_i||^2 lam(I)  around var2.
ConditionalBounds conditional_bounds_at(const ConditionalBoundContext& ctx,
                                        std::size_t param_index);
ConditionalBounds conditional_bounds(const MlpNetwork& net,
                                     const NaturalParamHead& head, const Vec& x,
                                     std::size_t n, std::size_t param_index,
                                     const ZEigOptions& opts = {});

/// Weaker pair for lam~(M when M = K - I (x) I) computable from the
/// Z-eigenvalues of K and the matrix eigenvalues of I:
///   lower = max{0, lam~min(K) - lam_max(I)^2},
///   upper = lam~max(K) - lam_min(I)^2.
BoundPair z_eig_relaxed_bounds(const Tensor4& k4, const Mat& fisher_h,
                               const ZEigOptions& opts = {});

/// B * lam_max(I(h|x)) with B = 2, the norm bound of centered one-hot
/// statistics. Throws std::domain_error for unbounded families.
double bounded_statistic_bound(const NaturalParamHead& head, const Vec& h);

/// m(x) = min(sigma_max, 1 - ||sigma||^2), an upper bound on lam_max(I(h|x))
/// for categorical heads. Input must lie on the simplex.
double classification_spectrum_bound(const Vec& sigma);

/// 2 m(x), the matching bound for the fourth-moment side.
double classification_k_bound(const Vec& sigma);

/// Frobenius-norm upper bounds on the traces of the FIM diagonal and both
/// estimator variance vectors (lower sides are the trivial 0). Both
/// arguments of each min are kept for diagnostics.
struct FrobeniusTraceBounds {
  BoundPair trace_fim;
  BoundPair trace_var1;
  BoundPair trace_var2;
  double fim_arg_trace = 0.0;
  double fim_arg_spectral = 0.0;
  double var1_arg_moment = 0.0;
  double var1_arg_spectral = 0.0;
  double var2_arg_trace = 0.0;
  double var2_arg_spectral = 0.0;
};

FrobeniusTraceBounds trace_variance_bounds_frobenius(const MlpNetwork& net,
                                                     const NaturalParamHead& head,
                                                     const Vec& x, std::size_t n,
                                                     const ZEigOptions& opts = {});

/// Two-sided trace bounds from pairing the full Gram spectra of the network
/// derivative matrices against the full spectra of I(h|x) and the reshaped
/// M, ordered per the trace inequality for symmetric matrices. Requires
/// T <= 32.
struct SpectrumTraceBounds {
  BoundPair trace_fim;
  BoundPair trace_var1;
  BoundPair trace_var2;
};

SpectrumTraceBounds trace_variance_bounds_spectrum(const MlpNetwork& net,
                                                   const NaturalParamHead& head,
                                                   const Vec& x, std::size_t n);

/// Upper bound on the input-randomness variance term of the joint
/// decomposition: mean over the dataset of ||g_i||^4 lam_max(I(h|x))^2.
struct JointFirstTermBound {
  Vec per_param;
  double total = 0.0;
};

JointFirstTermBound joint_first_term_bound(const MlpNetwork& net,
                                           const NaturalParamHead& head,
                                           const std::vector<Vec>& dataset);

}  // namespace fimvar
