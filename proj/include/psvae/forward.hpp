#pragma once

// Assembles the full two-view graph: shared encoder on both views, PoE
// fusion of the shared experts (prior included), reparameterized samples,
// shared decoder, and the weighted negative-ELBO.

#include "psvae/corpus.hpp"
#include "psvae/model.hpp"
#include "psvae/objective.hpp"

namespace psvae {

template <class T>
struct BatchNoise {
  Tensor<T> eps_p1, eps_p2, eps_s;
};

// Draw order is fixed (p1, p2, s; row-major within each) so runs are
// reproducible from the seed.
template <class T>
BatchNoise<T> draw_noise(Rng& rng, int batch, const LatentConfig& lc) {
  BatchNoise<T> n;
  n.eps_p1 = Tensor<T>({batch, lc.d_p});
  n.eps_p2 = Tensor<T>({batch, lc.d_p});
  n.eps_s = Tensor<T>({batch, lc.d_s});
  for (auto& v : n.eps_p1.data) v = static_cast<T>(rng.normal());
  for (auto& v : n.eps_p2.data) v = static_cast<T>(rng.normal());
  for (auto& v : n.eps_s.data) v = static_cast<T>(rng.normal());
  return n;
}

template <class T>
ElboGraph<T> build_elbo_graph(Tape<T>& tp, const TapeParams<T>& P, Tensor<T> x1, Tensor<T> x2,
                              const BatchNoise<T>& noise, const LatentConfig& lc,
                              const ElboOptions& opt) {
  Var<T> vx1 = make_const(tp, std::move(x1));
  Var<T> vx2 = make_const(tp, std::move(x2));

  EncodeOut<T> e1 = encode(P, vx1, lc);
  EncodeOut<T> e2 = encode(P, vx2, lc);
  GaussVar<T> qs = poe_fuse(tp, {e1.shared_expert, e2.shared_expert}, /*include_prior=*/true);

  Var<T> z_p1 = reparameterize(e1.priv, make_const(tp, noise.eps_p1));
  Var<T> z_p2 = reparameterize(e2.priv, make_const(tp, noise.eps_p2));
  Var<T> z_s = reparameterize(qs, make_const(tp, noise.eps_s));

  Var<T> xhat1 = decode(P, concat_cols(z_p1, z_s), lc);
  Var<T> xhat2 = decode(P, concat_cols(z_p2, z_s), lc);

  return elbo_loss(vx1, xhat1, vx2, xhat2, e1.priv, z_p1, e2.priv, z_p2, qs, z_s, opt);
}

// Copies pair batches out of a corpus into [B,1,H,W] tensors.
template <class T>
void fill_pair_batch(const Corpus& corpus, const std::vector<std::pair<int, int>>& pairs,
                     const std::vector<int>& order, int begin, int count, Tensor<T>& x1,
                     Tensor<T>& x2) {
  const int elems = corpus.sample_elems();
  const int mels = corpus.manifest.spec.n_mels;
  const int frames = corpus.manifest.spec.target_frames;
  x1 = Tensor<T>({count, 1, mels, frames});
  x2 = Tensor<T>({count, 1, mels, frames});
  for (int b = 0; b < count; ++b) {
    const auto& pr = pairs[static_cast<size_t>(order[static_cast<size_t>(begin + b)])];
    const float* s1 = corpus.sample(pr.first);
    const float* s2 = corpus.sample(pr.second);
    for (int e = 0; e < elems; ++e) {
      x1.data[static_cast<size_t>(b) * elems + e] = static_cast<T>(s1[e]);
      x2.data[static_cast<size_t>(b) * elems + e] = static_cast<T>(s2[e]);
    }
  }
}

}  // namespace psvae
