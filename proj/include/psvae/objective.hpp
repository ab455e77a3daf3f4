#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "psvae/model.hpp"
#include "psvae/tape.hpp"

namespace psvae {

struct ObjectiveWeights {
  double alpha = 0.0;  // mutual-information weight
  double beta = 0.0;   // total-correlation weight
  double gamma = 0.1;  // dimension-wise KL weight
};

// Per-batch loss components (nats). Group order: p1, p2, s.
struct LossBreakdown {
  double recon[2] = {0, 0};
  double recon_const = 0;  // dropped Gaussian constant, reported not optimized
  double mi[3] = {0, 0, 0};
  double tc[3] = {0, 0, 0};
  double dkl[3] = {0, 0, 0};
  double kl[3] = {0, 0, 0};
  double total = 0;

  bool finite() const {
    double s = total + recon[0] + recon[1];
    for (int g = 0; g < 3; ++g) s += mi[g] + tc[g] + dkl[g] + kl[g];
    return std::isfinite(s);
  }
};

inline constexpr double kLog2PiD = 1.83787706640934548356;

// Unit-variance Gaussian negative log-likelihood, additive constant dropped:
// 0.5 * sum((x - xhat)^2) over every element.
template <class T>
Var<T> recon_nll(Var<T> x, Var<T> xhat) {
  if (x.val().shape != xhat.val().shape) {
    throw std::invalid_argument("recon_nll: shape mismatch " + shape_str(x.val().shape) + " vs " +
                                shape_str(xhat.val().shape));
  }
  return scale(sum_all(square(sub(x, xhat))), T(0.5));
}

// Closed-form KL(q || N(0,I)) per batch row: 0.5 * sum_k(mu^2 + var - 1 - logvar).
template <class T>
Var<T> kl_analytic_rows(const GaussVar<T>& q) {
  Var<T> term = sub(add(square(q.mean), exp_v(q.log_var)), add_const(q.log_var, T(1)));
  return scale(sum_last(term), T(0.5));
}

// log q(z_i | x_i) for each row of a diagonal-Gaussian batch.
template <class T>
Var<T> gauss_logpdf_rows(Var<T> z, const GaussVar<T>& q) {
  Var<T> delta2 = square(sub(z, q.mean));
  Var<T> quad = mul(delta2, exp_v(neg(q.log_var)));
  return scale(sum_last(add_const(add(quad, q.log_var), T(kLog2PiD))), T(-0.5));
}

// log p(z) under the standard-normal prior, per row.
template <class T>
Var<T> prior_logpdf_rows(Var<T> z) {
  return scale(sum_last(add_const(square(z), T(kLog2PiD))), T(-0.5));
}

template <class T>
struct GroupTerms {
  Var<T> mi, tc, dkl, kl;
};

// Minibatch-weighted-sampling decomposition of the KL for one latent group:
//   log q(z_i)        ~= logsumexp_j log q(z_i|x_j)       - log(M * N_data)
//   log prod_k q(z_ik) ~= sum_k [logsumexp_j log q(z_ik|x_jk) - log(M * N_data)]
//   mi  = E[log q(z|x) - log q(z)]
//   tc  = E[log q(z)   - log prod_k q(z_k)]
//   dkl = E[log prod_k q(z_k) - log p(z)]
// For d == 1 the two marginal estimates coincide bitwise, so tc is exactly 0.
template <class T>
GroupTerms<T> decomposed_kl(const GaussVar<T>& q, Var<T> z, int64_t n_data) {
  const auto& sh = z.val().shape;
  if (sh.size() != 2) throw std::invalid_argument("decomposed_kl: z must be [M,D]");
  const int m = sh[0];
  const int d = sh[1];
  if (m < 2) throw std::invalid_argument("decomposed_kl: estimator needs batch size >= 2, got " + std::to_string(m));
  if (n_data < 1) throw std::invalid_argument("decomposed_kl: n_data must be >= 1");

  Var<T> log_qzx = gauss_logpdf_rows(z, q);               // [M]
  Var<T> cross = cross_gauss_logpdf(z, q.mean, q.log_var);  // [M,M,D]

  const T log_mn = static_cast<T>(std::log(static_cast<double>(m)) + std::log(static_cast<double>(n_data)));
  Var<T> joint = reshape(sum_last(cross), {m, m, 1});
  Var<T> log_qz = add_const(reshape(logsumexp_mid(joint), {m}), -log_mn);  // [M]
  Var<T> log_prod = add_const(sum_last(logsumexp_mid(cross)), static_cast<T>(-static_cast<double>(d)) * log_mn);  // [M]
  Var<T> log_pz = prior_logpdf_rows(z);  // [M]

  GroupTerms<T> out;
  out.mi = mean_all(sub(log_qzx, log_qz));
  out.tc = mean_all(sub(log_qz, log_prod));
  out.dkl = mean_all(sub(log_prod, log_pz));
  out.kl = mean_all(kl_analytic_rows(q));
  return out;
}

// One fully assembled negative-ELBO graph for a pair batch.
template <class T>
struct ElboGraph {
  Var<T> total;
  Var<T> recon[2];
  GroupTerms<T> groups[3];  // p1, p2, s
  LossBreakdown values;     // captured before backward frees the tape
};

struct ElboOptions {
  ObjectiveWeights weights;
  int64_t n_data = 1;
  // Eq-structure default: the shared-latent KL appears once per view. The
  // alternative counts it once per pair.
  bool shared_kl_per_view = true;
};

// total = sum_i [recon_i + alpha*mi_pi + beta*tc_pi + gamma*dkl_pi]
//       + w_s * [alpha*mi_s + beta*tc_s + gamma*dkl_s],  w_s = 2 or 1.
// Reconstruction and KL terms are batch means.
template <class T>
ElboGraph<T> elbo_loss(Var<T> x1, Var<T> xhat1, Var<T> x2, Var<T> xhat2,
                       const GaussVar<T>& q_p1, Var<T> z_p1, const GaussVar<T>& q_p2, Var<T> z_p2,
                       const GaussVar<T>& q_s, Var<T> z_s, const ElboOptions& opt) {
  const int batch = x1.val().shape.at(0);
  ElboGraph<T> g;
  g.recon[0] = scale(recon_nll(x1, xhat1), T(1) / static_cast<T>(batch));
  g.recon[1] = scale(recon_nll(x2, xhat2), T(1) / static_cast<T>(batch));
  g.groups[0] = decomposed_kl(q_p1, z_p1, opt.n_data);
  g.groups[1] = decomposed_kl(q_p2, z_p2, opt.n_data);
  g.groups[2] = decomposed_kl(q_s, z_s, opt.n_data);

  const T alpha = static_cast<T>(opt.weights.alpha);
  const T beta = static_cast<T>(opt.weights.beta);
  const T gamma = static_cast<T>(opt.weights.gamma);
  const T ws = opt.shared_kl_per_view ? T(2) : T(1);

  Var<T> total = add(g.recon[0], g.recon[1]);
  const T gw[3] = {T(1), T(1), ws};
  for (int i = 0; i < 3; ++i) {
    if (opt.weights.alpha != 0.0) total = add(total, scale(g.groups[i].mi, gw[i] * alpha));
    if (opt.weights.beta != 0.0) total = add(total, scale(g.groups[i].tc, gw[i] * beta));
    if (opt.weights.gamma != 0.0) total = add(total, scale(g.groups[i].dkl, gw[i] * gamma));
  }
  g.total = total;

  LossBreakdown& v = g.values;
  v.recon[0] = static_cast<double>(g.recon[0].scalar_value());
  v.recon[1] = static_cast<double>(g.recon[1].scalar_value());
  v.recon_const = 0.5 * kLog2PiD * static_cast<double>(x1.size() / batch);
  for (int i = 0; i < 3; ++i) {
    v.mi[i] = static_cast<double>(g.groups[i].mi.scalar_value());
    v.tc[i] = static_cast<double>(g.groups[i].tc.scalar_value());
    v.dkl[i] = static_cast<double>(g.groups[i].dkl.scalar_value());
    v.kl[i] = static_cast<double>(g.groups[i].kl.scalar_value());
  }
  v.total = static_cast<double>(g.total.scalar_value());
  if (!v.finite()) {
    static const char* kGroup[3] = {"p1", "p2", "s"};
    std::string bad;
    for (int i = 0; i < 2 && bad.empty(); ++i)
      if (!std::isfinite(v.recon[i])) bad = "recon_" + std::to_string(i + 1);
    for (int i = 0; i < 3 && bad.empty(); ++i) {
      if (!std::isfinite(v.mi[i])) bad = std::string("mi_") + kGroup[i];
      else if (!std::isfinite(v.tc[i])) bad = std::string("tc_") + kGroup[i];
      else if (!std::isfinite(v.dkl[i])) bad = std::string("dkl_") + kGroup[i];
      else if (!std::isfinite(v.kl[i])) bad = std::string("kl_") + kGroup[i];
    }
    if (bad.empty()) bad = "total";
    throw NonFiniteError("elbo_loss: non-finite component '" + bad + "'");
  }
  return g;
}

}  // namespace psvae
