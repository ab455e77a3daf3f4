#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "psvae/adam.hpp"
#include "psvae/nn_ops.hpp"
#include "psvae/rng.hpp"
#include "psvae/tape.hpp"

namespace psvae {

struct LatentConfig {
  int d_p = 8;
  int d_s = 8;
};

// Fixed architecture: four stride-2 4x4 convs (1->32->64->128->256) over
// 64x64 inputs, mirrored transposed-conv decoder with a logistic output.
inline constexpr int kInputSize = 64;
inline constexpr int kKernel = 4;
inline constexpr int kStride = 2;
inline constexpr int kPad = 1;
inline constexpr int kEncChannels[5] = {1, 32, 64, 128, 256};
inline constexpr int kBottomSpatial = 4;  // 64 / 2^4
inline constexpr int kFlat = 256 * kBottomSpatial * kBottomSpatial;
inline constexpr double kLogVarClamp = 10.0;

// Head layout: [mean_p | mean_s | logvar_p | logvar_s], private block first.
inline int head_width(const LatentConfig& lc) { return 2 * (lc.d_p + lc.d_s); }

template <class T>
Tensor<T> uniform_init(const std::vector<int>& shape, double limit, Rng& rng) {
  Tensor<T> t(shape);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

// Parameters in fixed creation order; draws come sequentially from one
// seeded stream so initialization is reproducible.
template <class T>
void init_model_params(ParameterStore<T>& ps, const LatentConfig& lc, uint64_t seed) {
  if (lc.d_p < 1 || lc.d_s < 1) throw std::invalid_argument("init_model_params: latent dims must be >= 1");
  Rng rng = Rng::stream(seed, 0x696e6974);
  const auto he = [](int fan_in) { return std::sqrt(6.0 / fan_in); };
  const auto xavier = [](int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); };

  for (int l = 0; l < 4; ++l) {
    const int cin = kEncChannels[l], cout = kEncChannels[l + 1];
    ps.add("enc.conv" + std::to_string(l + 1) + ".w",
           uniform_init<T>({cout, cin, kKernel, kKernel}, he(cin * kKernel * kKernel), rng));
    ps.add("enc.conv" + std::to_string(l + 1) + ".b", Tensor<T>({cout}));
  }
  const int hw = head_width(lc);
  ps.add("enc.head.w", uniform_init<T>({hw, kFlat}, xavier(kFlat, hw), rng));
  ps.add("enc.head.b", Tensor<T>({hw}));

  const int zdim = lc.d_p + lc.d_s;
  ps.add("dec.fc.w", uniform_init<T>({kFlat, zdim}, he(zdim), rng));
  ps.add("dec.fc.b", Tensor<T>({kFlat}));
  for (int l = 0; l < 3; ++l) {
    const int cin = kEncChannels[4 - l], cout = kEncChannels[3 - l];
    ps.add("dec.tconv" + std::to_string(l + 1) + ".w",
           uniform_init<T>({cin, cout, kKernel, kKernel}, he(cin * kKernel * kKernel), rng));
    ps.add("dec.tconv" + std::to_string(l + 1) + ".b", Tensor<T>({cout}));
  }
  ps.add("dec.out.w",
         uniform_init<T>({kEncChannels[1], 1, kKernel, kKernel},
                         xavier(kEncChannels[1] * kKernel * kKernel, kKernel * kKernel), rng));
  ps.add("dec.out.b", Tensor<T>({1}));
}

// Parameter leaves staged on a tape for one step.
template <class T>
struct TapeParams {
  std::map<std::string, Var<T>> vars;

  Var<T> at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::invalid_argument("TapeParams: unknown parameter " + name);
    return it->second;
  }
};

template <class T>
TapeParams<T> stage_params(Tape<T>& tp, const ParameterStore<T>& ps, bool needs_grad = true) {
  TapeParams<T> out;
  for (const auto& name : ps.names()) out.vars.emplace(name, make_leaf(tp, ps.at(name).value, needs_grad));
  return out;
}

// Adds the staged leaves' gradients into the store (call after backward).
template <class T>
void collect_grads(Tape<T>& tp, const TapeParams<T>& staged, ParameterStore<T>& ps) {
  for (const auto& [name, var] : staged.vars) {
    const Tensor<T>& g = tp.grad(var.id);
    if (!g.allocated()) continue;  // parameter unused by this graph
    auto& dst = ps.at(name).grad;
    for (int64_t i = 0; i < dst.size(); ++i) dst.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
  }
}

template <class T>
struct GaussVar {
  Var<T> mean;
  Var<T> log_var;
};

template <class T>
struct EncodeOut {
  GaussVar<T> priv;
  GaussVar<T> shared_expert;
};

// Shared encoder: x [N,1,64,64] -> private and shared-expert Gaussians.
// log-variance heads are clamped to +/- kLogVarClamp.
template <class T>
EncodeOut<T> encode(const TapeParams<T>& P, Var<T> x, const LatentConfig& lc) {
  const auto& sh = x.val().shape;
  if (sh.size() != 4 || sh[1] != 1 || sh[2] != kInputSize || sh[3] != kInputSize) {
    throw std::invalid_argument("encode: expected [N,1,64,64], got " + shape_str(sh));
  }
  Var<T> h = x;
  for (int l = 1; l <= 4; ++l) {
    h = relu(conv2d(h, P.at("enc.conv" + std::to_string(l) + ".w"),
                    P.at("enc.conv" + std::to_string(l) + ".b"), kStride, kPad));
  }
  h = reshape(h, {sh[0], kFlat});
  Var<T> head = dense(h, P.at("enc.head.w"), P.at("enc.head.b"));

  const int dp = lc.d_p, ds = lc.d_s, zd = dp + ds;
  EncodeOut<T> out;
  out.priv.mean = slice_cols(head, 0, dp);
  out.shared_expert.mean = slice_cols(head, dp, zd);
  out.priv.log_var = clamp(slice_cols(head, zd, zd + dp), T(-kLogVarClamp), T(kLogVarClamp));
  out.shared_expert.log_var = clamp(slice_cols(head, zd + dp, 2 * zd), T(-kLogVarClamp), T(kLogVarClamp));
  return out;
}

// Product-of-experts fusion of diagonal Gaussians: precisions add (plus the
// standard-normal prior expert when included), means are precision-weighted.
// Experts are summed in list order with the prior folded in last, so a swap
// of two experts is bitwise neutral.
template <class T>
GaussVar<T> poe_fuse(Tape<T>& tp, const std::vector<GaussVar<T>>& experts, bool include_prior = true) {
  if (experts.empty()) {
    if (!include_prior) throw std::invalid_argument("poe_fuse: empty expert list and prior excluded");
    throw std::invalid_argument("poe_fuse: empty expert list (prior alone has no shape)");
  }
  (void)tp;
  const auto& shape = experts[0].mean.val().shape;
  for (const auto& e : experts) {
    if (e.mean.val().shape != shape || e.log_var.val().shape != shape) {
      throw std::invalid_argument("poe_fuse: expert shape mismatch");
    }
  }
  Var<T> prec_sum, weighted_sum;
  for (size_t i = 0; i < experts.size(); ++i) {
    Var<T> prec = exp_v(neg(experts[i].log_var));
    Var<T> w = mul(prec, experts[i].mean);
    prec_sum = i == 0 ? prec : add(prec_sum, prec);
    weighted_sum = i == 0 ? w : add(weighted_sum, w);
  }
  if (include_prior) prec_sum = add_const(prec_sum, T(1));  // prior: mu=0, var=1
  GaussVar<T> fused;
  fused.mean = div(weighted_sum, prec_sum);
  fused.log_var = neg(log_v(prec_sum));
  return fused;
}

// z = mean + exp(log_var / 2) * noise
template <class T>
Var<T> reparameterize(const GaussVar<T>& g, Var<T> noise) {
  if (noise.val().shape != g.mean.val().shape) {
    throw std::invalid_argument("reparameterize: noise shape " + shape_str(noise.val().shape) +
                                " != parameter shape " + shape_str(g.mean.val().shape));
  }
  return add(g.mean, mul(exp_v(scale(g.log_var, T(0.5))), noise));
}

// Shared decoder: z [N, d_p + d_s] -> x_hat [N,1,64,64] in (0,1).
template <class T>
Var<T> decode(const TapeParams<T>& P, Var<T> z, const LatentConfig& lc) {
  const auto& sh = z.val().shape;
  if (sh.size() != 2 || sh[1] != lc.d_p + lc.d_s) {
    throw std::invalid_argument("decode: expected [N," + std::to_string(lc.d_p + lc.d_s) + "], got " +
                                shape_str(sh));
  }
  Var<T> h = relu(dense(z, P.at("dec.fc.w"), P.at("dec.fc.b")));
  h = reshape(h, {sh[0], kEncChannels[4], kBottomSpatial, kBottomSpatial});
  for (int l = 1; l <= 3; ++l) {
    h = relu(tconv2d(h, P.at("dec.tconv" + std::to_string(l) + ".w"),
                     P.at("dec.tconv" + std::to_string(l) + ".b"), kStride, kPad));
  }
  h = tconv2d(h, P.at("dec.out.w"), P.at("dec.out.b"), kStride, kPad);
  return sigmoid(h);
}

}  // namespace psvae
