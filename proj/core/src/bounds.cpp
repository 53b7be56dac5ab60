#include "fimvar/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fimvar/rng.hpp"

namespace fimvar {

namespace {

// All 24 orderings of four index positions.
constexpr int kPerms[24][4] = {
    {0, 1, 2, 3}, {0, 1, 3, 2}, {0, 2, 1, 3}, {0, 2, 3, 1}, {0, 3, 1, 2},
    {0, 3, 2, 1}, {1, 0, 2, 3}, {1, 0, 3, 2}, {1, 2, 0, 3}, {1, 2, 3, 0},
    {1, 3, 0, 2}, {1, 3, 2, 0}, {2, 0, 1, 3}, {2, 0, 3, 1}, {2, 1, 0, 3},
    {2, 1, 3, 0}, {2, 3, 0, 1}, {2, 3, 1, 0}, {3, 0, 1, 2}, {3, 0, 2, 1},
    {3, 1, 0, 2}, {3, 1, 2, 0}, {3, 2, 0, 1}, {3, 2, 1, 0}};

constexpr std::size_t kMaxTensorDims = 32;
constexpr std::uint64_t kRestartSeed = 0x5EEDCAFEF00DULL;

void check_tensor(const Tensor4& t) {
  if (t.dims == 0) throw std::invalid_argument("tensor has zero dimension");
  if (t.dims > kMaxTensorDims)
    throw std::domain_error("tensor dimension exceeds the supported limit of 32");
  for (double v : t.data)
    if (!std::isfinite(v)) throw std::domain_error("tensor has non-finite entries");
}

Vec normalized(Vec v) {
  const double n = norm2(v);
  if (n <= 0.0) throw std::invalid_argument("cannot normalize zero vector");
  for (auto& e : v) e /= n;
  return v;
}

// M(u)_ab = sum_cd S_abcd u_c u_d.
Mat contract_two(const Tensor4& s, const Vec& u) {
  const std::size_t t = s.dims;
  const std::size_t tt = t * t;
  Vec uu(tt);
  for (std::size_t c = 0; c < t; ++c)
    for (std::size_t d = 0; d < t; ++d) uu[c * t + d] = u[c] * u[d];
  Mat m(t, t);
  for (std::size_t ab = 0; ab < tt; ++ab) {
    const double* row = s.data.data() + ab * tt;
    double acc = 0.0;
    for (std::size_t cd = 0; cd < tt; ++cd) acc += row[cd] * uu[cd];
    m.data[ab] = acc;
  }
  return m;
}

struct StationaryPoint {
  double value = 0.0;
  Vec u;
  bool converged = false;
};

// Shifted symmetric higher-order power iteration for maximizing the quartic
// form of a supersymmetric tensor over the unit sphere. The shift is chosen
// each step so the shifted objective is locally convex, which makes the
// iteration monotone. Falls back to projected gradient ascent with
// backtracking if the fixed-point iteration stalls.
StationaryPoint maximize_quartic(const Tensor4& s, Vec start, double tol,
                                 std::size_t max_iters, double scale) {
  Vec u = normalized(std::move(start));
  const double slack = 1e-6 * (1.0 + scale);
  double f = 0.0;
  double f_prev = -std::numeric_limits<double>::infinity();
  std::size_t stalled = 0;

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    const Mat m = contract_two(s, u);
    const Vec su3 = mat_vec(m, u);
    f = dot(u, su3);
    double resid = 0.0;
    for (std::size_t a = 0; a < u.size(); ++a) {
      const double r = su3[a] - f * u[a];
      resid += r * r;
    }
    resid = std::sqrt(resid);
    if (resid <= tol * std::max(1.0, std::abs(f))) return {f, u, true};

    // The shifted iteration ascends monotonically; once the value stops
    // moving, hand over to the gradient polish below instead of spinning.
    if (std::abs(f - f_prev) <= 1e-15 * std::max(1.0, std::abs(f))) {
      if (++stalled >= 10) break;
    } else {
      stalled = 0;
    }
    f_prev = f;

    const double lam_min = sym_eig_extremes(m).first;
    const double alpha = std::max(0.0, -3.0 * lam_min) + slack;
    Vec v(u.size());
    for (std::size_t a = 0; a < u.size(); ++a) v[a] = su3[a] + alpha * u[a];
    const double nv = norm2(v);
    if (nv < 1e-300) break;
    for (std::size_t a = 0; a < u.size(); ++a) u[a] = v[a] / nv;
  }

  // Projected gradient ascent from the last iterate.
  double step = 1.0 / (1.0 + scale);
  for (std::size_t iter = 0; iter < 2000; ++iter) {
    const Mat m = contract_two(s, u);
    const Vec su3 = mat_vec(m, u);
    f = dot(u, su3);
    Vec grad(u.size());
    double resid = 0.0;
    for (std::size_t a = 0; a < u.size(); ++a) {
      grad[a] = su3[a] - f * u[a];
      resid += grad[a] * grad[a];
    }
    resid = std::sqrt(resid);
    if (resid <= tol * std::max(1.0, std::abs(f))) return {f, u, true};

    bool advanced = false;
    while (step > 1e-18) {
      Vec trial(u.size());
      for (std::size_t a = 0; a < u.size(); ++a) trial[a] = u[a] + step * grad[a];
      trial = normalized(std::move(trial));
      const double f_trial = quartic_form(s, trial);
      if (f_trial > f) {
        u = std::move(trial);
        advanced = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!advanced) break;
  }

  const Mat m = contract_two(s, u);
  const Vec su3 = mat_vec(m, u);
  f = dot(u, su3);
  double resid = 0.0;
  for (std::size_t a = 0; a < u.size(); ++a) {
    const double r = su3[a] - f * u[a];
    resid += r * r;
  }
  return {f, u, std::sqrt(resid) <= tol * std::max(1.0, std::abs(f))};
}

ZEigResult best_over_starts(const Tensor4& s, std::size_t restarts, double tol,
                            std::size_t max_iters) {
  const std::size_t t = s.dims;
  double scale = 0.0;
  for (double v : s.data) scale += v * v;
  scale = std::sqrt(scale);

  Rng rng(kRestartSeed);
  ZEigResult best;
  best.value = -std::numeric_limits<double>::infinity();

  const std::size_t total = restarts + 1;
  for (std::size_t k = 0; k < total; ++k) {
    Vec start(t);
    if (k == 0) {
      std::fill(start.begin(), start.end(), 1.0);
    } else {
      for (auto& v : start) v = rng.normal();
      if (norm2(start) == 0.0) start[0] = 1.0;
    }
    const StationaryPoint sp = maximize_quartic(s, std::move(start), tol,
                                                max_iters, scale);
    if (sp.value > best.value) {
      best.value = sp.value;
      best.unit_vector = sp.u;
      best.converged = sp.converged;
    }
  }
  best.restarts_used = total;
  return best;
}

Tensor4 negated(const Tensor4& t) {
  Tensor4 out = t;
  for (auto& v : out.data) v = -v;
  return out;
}

// M = K - I (x) I, the variance kernel of the gradient-outer-product
// estimator.
Tensor4 variance_kernel(const MomentSet& mom) {
  const std::size_t t = mom.fisher_h.rows;
  Tensor4 m = mom.k4;
  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t c = 0; c < t; ++c)
        for (std::size_t d = 0; d < t; ++d)
          m.at(a, b, c, d) -= mom.fisher_h(a, b) * mom.fisher_h(c, d);
  return m;
}

void check_simplex(const Vec& sigma) {
  if (sigma.empty()) throw std::invalid_argument("empty probability vector");
  double sum = 0.0;
  for (double v : sigma) {
    if (v < -1e-12) throw std::invalid_argument("probability vector has negative entries");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("probability vector does not sum to 1");
}

}  // namespace

Tensor4 symmetrize(const Tensor4& t) {
  const std::size_t n = t.dims;
  Tensor4 out(n);
  std::size_t idx[4];
  for (idx[0] = 0; idx[0] < n; ++idx[0])
    for (idx[1] = 0; idx[1] < n; ++idx[1])
      for (idx[2] = 0; idx[2] < n; ++idx[2])
        for (idx[3] = 0; idx[3] < n; ++idx[3]) {
          double acc = 0.0;
          for (const auto& p : kPerms)
            acc += t.at(idx[p[0]], idx[p[1]], idx[p[2]], idx[p[3]]);
          out.at(idx[0], idx[1], idx[2], idx[3]) = acc / 24.0;
        }
  return out;
}

double quartic_form(const Tensor4& t, const Vec& u) {
  if (u.size() != t.dims) throw std::invalid_argument("quartic_form: dimension mismatch");
  const Mat m = contract_two(t, u);
  return quadratic_form(m, u);
}

Mat reshape_square(const Tensor4& t) {
  const std::size_t tt = t.dims * t.dims;
  Mat m(tt, tt);
  m.data = t.data;
  return m;
}

Tensor4 tensor_from_square(const Mat& m) {
  const auto t = static_cast<std::size_t>(std::llround(std::sqrt(double(m.rows))));
  if (t * t != m.rows || m.rows != m.cols)
    throw std::invalid_argument("matrix is not a reshaped fourth-order tensor");
  Tensor4 out(t);
  out.data = m.data;
  return out;
}

ZEigPair z_eig_extremes(const Tensor4& t, std::size_t restarts, double tol) {
  check_tensor(t);
  const Tensor4 s = symmetrize(t);
  const std::size_t max_iters = ZEigOptions{}.max_iters;

  ZEigPair pair;
  pair.max = best_over_starts(s, restarts, tol, max_iters);
  ZEigResult neg = best_over_starts(negated(s), restarts, tol, max_iters);
  pair.min.value = -neg.value;
  pair.min.unit_vector = std::move(neg.unit_vector);
  pair.min.restarts_used = neg.restarts_used;
  pair.min.converged = neg.converged;
  return pair;
}

ZEigPair z_eig_extremes(const Tensor4& t, const ZEigOptions& opts) {
  return z_eig_extremes(t, opts.restarts, opts.tol);
}

ConditionalBoundContext make_conditional_bound_context(
    const MlpNetwork& net, const NaturalParamHead& head, const Vec& x,
    std::size_t n, const ZEigOptions& opts) {
  if (n == 0) throw std::invalid_argument("sample count must be at least 1");
  ConditionalBoundContext ctx;
  ctx.deriv = net.derivatives(x);
  const MomentSet mom = moments(head, ctx.deriv.h);
  const auto fisher_extremes = sym_eig_extremes(mom.fisher_h);
  ctx.fisher_min = fisher_extremes.first;
  ctx.fisher_max = fisher_extremes.second;
  const ZEigPair m_extremes = z_eig_extremes(variance_kernel(mom), opts);
  ctx.m_min = m_extremes.min;
  ctx.m_max = m_extremes.max;
  ctx.n_samples = n;
  return ctx;
}

ConditionalBounds conditional_bounds_at(const ConditionalBoundContext& ctx,
                                        std::size_t param_index) {
  const std::size_t p_dim = ctx.deriv.jac.rows;
  if (param_index >= p_dim)
    throw std::invalid_argument("parameter index out of range");
  const std::size_t t_dim = ctx.deriv.jac.cols;
  double g2 = 0.0, d2 = 0.0;
  for (std::size_t a = 0; a < t_dim; ++a) {
    g2 += ctx.deriv.jac(param_index, a) * ctx.deriv.jac(param_index, a);
    d2 += ctx.deriv.dhess(param_index, a) * ctx.deriv.dhess(param_index, a);
  }
  const double inv_n = 1.0 / static_cast<double>(ctx.n_samples);

  ConditionalBounds out;
  out.fim = {g2 * ctx.fisher_min, g2 * ctx.fisher_max, BoundKind::FimDiag};
  out.var1 = {inv_n * g2 * g2 * ctx.m_min.value,
              inv_n * g2 * g2 * ctx.m_max.value, BoundKind::Var1};
  out.var2 = {inv_n * d2 * ctx.fisher_min, inv_n * d2 * ctx.fisher_max,
              BoundKind::Var2};
  return out;
}

ConditionalBounds conditional_bounds(const MlpNetwork& net,
                                     const NaturalParamHead& head, const Vec& x,
                                     std::size_t n, std::size_t param_index,
                                     const ZEigOptions& opts) {
  return conditional_bounds_at(make_conditional_bound_context(net, head, x, n, opts),
                               param_index);
}

BoundPair z_eig_relaxed_bounds(const Tensor4& k4, const Mat& fisher_h,
                               const ZEigOptions& opts) {
  if (k4.dims != fisher_h.rows || fisher_h.rows != fisher_h.cols)
    throw std::invalid_argument("tensor and matrix shapes disagree");
  const ZEigPair zk = z_eig_extremes(k4, opts);
  const auto [fmin, fmax] = sym_eig_extremes(fisher_h);
  BoundPair out;
  out.kind = BoundKind::Var1;
  out.lower = std::max(0.0, zk.min.value - fmax * fmax);
  out.upper = zk.max.value - fmin * fmin;
  return out;
}

double bounded_statistic_bound(const NaturalParamHead& head, const Vec& h) {
  if (head.family != Family::Categorical)
    throw std::domain_error(
        "bounded-statistic bound requires a bounded sufficient statistic");
  // Centered one-hot statistics satisfy ||t(y) - eta||^2 <= 2.
  const double b = 2.0;
  return b * sym_eig_extremes(fisher_of_h(head, h)).second;
}

double classification_spectrum_bound(const Vec& sigma) {
  check_simplex(sigma);
  double sig_max = 0.0, sq = 0.0;
  for (double v : sigma) {
    sig_max = std::max(sig_max, v);
    sq += v * v;
  }
  return std::min(sig_max, std::max(0.0, 1.0 - sq));
}

double classification_k_bound(const Vec& sigma) {
  return 2.0 * classification_spectrum_bound(sigma);
}

FrobeniusTraceBounds trace_variance_bounds_frobenius(const MlpNetwork& net,
                                                     const NaturalParamHead& head,
                                                     const Vec& x, std::size_t n,
                                                     const ZEigOptions& opts) {
  if (n == 0) throw std::invalid_argument("sample count must be at least 1");
  const DerivativeBundle deriv = net.derivatives(x);
  const MomentSet mom = moments(head, deriv.h);
  const std::size_t t_dim = head.dim_t;
  const std::size_t p_dim = net.param_count();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Each trace is tr(A B) for the PSD Gram matrix A of a derivative block
  // and a PSD moment matrix B (for var1, the reshaped variance kernel). Two
  // cheap upper bounds apply: ||A||_F tr(B), since lam_max(A) <= ||A||_F,
  // and tr(A) lam_max(B). The min keeps whichever side is smaller.
  const double jac_f = frobenius_norm(deriv.jac);
  const double dhess_f = frobenius_norm(deriv.dhess);
  const double gram_jac_f = frobenius_norm(gram(deriv.jac));
  const double gram_dhess_f = frobenius_norm(gram(deriv.dhess));
  const double tr_fisher = trace(mom.fisher_h);
  const double fisher_max = sym_eig_extremes(mom.fisher_h).second;
  const double m_max = z_eig_extremes(variance_kernel(mom), opts).max.value;

  // tr of the reshaped variance kernel and the summed quartic row norms,
  // the var1 analogues of tr(B) and tr(A).
  double k_ttuu = 0.0;
  for (std::size_t t = 0; t < t_dim; ++t)
    for (std::size_t u = 0; u < t_dim; ++u) k_ttuu += mom.k4.at(t, t, u, u);
  const double fisher_sq = frobenius_norm(mom.fisher_h) *
                           frobenius_norm(mom.fisher_h);
  double quartic_rows = 0.0;
  for (std::size_t i = 0; i < p_dim; ++i) {
    double g2 = 0.0;
    for (std::size_t a = 0; a < t_dim; ++a) g2 += deriv.jac(i, a) * deriv.jac(i, a);
    quartic_rows += g2 * g2;
  }

  FrobeniusTraceBounds out;
  out.fim_arg_trace = gram_jac_f * tr_fisher;
  out.fim_arg_spectral = jac_f * jac_f * fisher_max;
  out.trace_fim = {0.0, std::min(out.fim_arg_trace, out.fim_arg_spectral),
                   BoundKind::TraceFim};

  out.var1_arg_moment = quartic_rows * (k_ttuu - fisher_sq);
  out.var1_arg_spectral = jac_f * jac_f * jac_f * jac_f * m_max;
  out.trace_var1 = {0.0,
                    inv_n * std::min(out.var1_arg_moment, out.var1_arg_spectral),
                    BoundKind::TraceVar1};

  out.var2_arg_trace = gram_dhess_f * tr_fisher;
  out.var2_arg_spectral = dhess_f * dhess_f * fisher_max;
  out.trace_var2 = {0.0,
                    inv_n * std::min(out.var2_arg_trace, out.var2_arg_spectral),
                    BoundKind::TraceVar2};
  return out;
}

SpectrumTraceBounds trace_variance_bounds_spectrum(const MlpNetwork& net,
                                                   const NaturalParamHead& head,
                                                   const Vec& x, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample count must be at least 1");
  if (head.dim_t > kMaxTensorDims)
    throw std::domain_error("spectrum trace bounds are limited to T <= 32");
  const DerivativeBundle deriv = net.derivatives(x);
  const MomentSet mom = moments(head, deriv.h);
  const std::size_t t_dim = head.dim_t;
  const std::size_t p_dim = net.param_count();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Gram spectra of the derivative matrices pair against the moment spectra;
  // descending-vs-ascending gives the lower side, aligned the upper side.
  const auto paired = [](const std::vector<double>& s,
                         const std::vector<double>& lam) {
    double lo = 0.0, hi = 0.0;
    const std::size_t n_terms = s.size();
    for (std::size_t t = 0; t < n_terms; ++t) {
      lo += s[t] * lam[n_terms - 1 - t];
      hi += s[t] * lam[t];
    }
    return std::pair<double, double>{lo, hi};
  };

  const std::vector<double> spec_fisher = sym_eigenvalues(mom.fisher_h);
  const std::vector<double> spec_jac = sym_eigenvalues(gram(deriv.jac));
  const std::vector<double> spec_dhess = sym_eigenvalues(gram(deriv.dhess));

  // Gram of the vectorized gradient outer products, T^2 x T^2.
  const std::size_t tt = t_dim * t_dim;
  Mat gram_vjac(tt, tt, 0.0);
  Vec w(tt);
  for (std::size_t i = 0; i < p_dim; ++i) {
    for (std::size_t a = 0; a < t_dim; ++a)
      for (std::size_t b = 0; b < t_dim; ++b)
        w[a * t_dim + b] = deriv.jac(i, a) * deriv.jac(i, b);
    for (std::size_t j = 0; j < tt; ++j) {
      const double wj = w[j];
      if (wj == 0.0) continue;
      for (std::size_t k = 0; k < tt; ++k) gram_vjac(j, k) += wj * w[k];
    }
  }
  const std::vector<double> spec_vjac = sym_eigenvalues(gram_vjac);
  const std::vector<double> spec_mbar =
      sym_eigenvalues(reshape_square(variance_kernel(mom)));

  SpectrumTraceBounds out;
  const auto fim = paired(spec_jac, spec_fisher);
  out.trace_fim = {fim.first, fim.second, BoundKind::TraceFim};
  const auto var1 = paired(spec_vjac, spec_mbar);
  out.trace_var1 = {inv_n * var1.first, inv_n * var1.second, BoundKind::TraceVar1};
  const auto var2 = paired(spec_dhess, spec_fisher);
  out.trace_var2 = {inv_n * var2.first, inv_n * var2.second, BoundKind::TraceVar2};
  return out;
}

JointFirstTermBound joint_first_term_bound(const MlpNetwork& net,
                                           const NaturalParamHead& head,
                                           const std::vector<Vec>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("joint_first_term_bound: empty dataset");
  const std::size_t p_dim = net.param_count();
  JointFirstTermBound out;
  out.per_param.assign(p_dim, 0.0);
  for (const Vec& x : dataset) {
    const DerivativeBundle deriv = net.derivatives(x);
    const double fisher_max =
        sym_eig_extremes(fisher_of_h(head, deriv.h)).second;
    const double fmax_sq = fisher_max * fisher_max;
    for (std::size_t i = 0; i < p_dim; ++i) {
      double g2 = 0.0;
      for (std::size_t a = 0; a < head.dim_t; ++a)
        g2 += deriv.jac(i, a) * deriv.jac(i, a);
      out.per_param[i] += g2 * g2 * fmax_sq;
    }
  }
  const double m = static_cast<double>(dataset.size());
  for (auto& v : out.per_param) {
    v /= m;
    out.total += v;
  }
  return out;
}

}  // namespace fimvar
