#include "psvae/verify_suite.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "psvae/forward.hpp"
#include "psvae/grad_check.hpp"
#include "psvae/objective.hpp"
#include "psvae/spectrogram.hpp"
#include "psvae/synthesis.hpp"

namespace psvae {

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

CheckResult near(const std::string& name, double got, double want, double tol) {
  CheckResult r;
  r.name = name;
  r.pass = std::abs(got - want) <= tol;
  r.detail = "got " + fmt(got) + ", want " + fmt(want) + " +/- " + fmt(tol);
  return r;
}

double kl_closed_form(double mu, double var) { return 0.5 * (mu * mu + var - 1.0 - std::log(var)); }

GaussVar<double> make_gauss(Tape<double>& tp, std::vector<double> mu, std::vector<double> var) {
  const int d = static_cast<int>(mu.size());
  Tensor<double> m({1, d}), lv({1, d});
  for (int i = 0; i < d; ++i) {
    m.data[static_cast<size_t>(i)] = mu[static_cast<size_t>(i)];
    lv.data[static_cast<size_t>(i)] = std::log(var[static_cast<size_t>(i)]);
  }
  return {make_leaf(tp, m, true), make_leaf(tp, lv, true)};
}

}  // namespace

std::vector<CheckResult> verify_unit_oracles() {
  std::vector<CheckResult> out;

  // Closed-form KL examples.
  {
    Tape<double> tp;
    auto q = make_gauss(tp, {0.0}, {1.0});
    out.push_back(near("kl: mu=0 var=1 -> 0", kl_analytic_rows(q).scalar_value(), 0.0, 1e-9));
  }
  {
    Tape<double> tp;
    auto q = make_gauss(tp, {1.0}, {1.0});
    out.push_back(near("kl: mu=1 var=1 -> 0.5", kl_analytic_rows(q).scalar_value(), 0.5, 1e-9));
  }
  {
    Tape<double> tp;
    auto q = make_gauss(tp, {0.0}, {std::exp(1.0)});
    out.push_back(near("kl: mu=0 var=e -> (e-2)/2", kl_analytic_rows(q).scalar_value(),
                       0.5 * (std::exp(1.0) - 2.0), 1e-9));
    // cross-check against the closed form evaluated independently
    out.push_back(near("kl: closed-form helper agrees", kl_analytic_rows(q).scalar_value(),
                       kl_closed_form(0.0, std::exp(1.0)), 1e-12));
  }

  // PoE fusion examples (prior expert included).
  {
    Tape<double> tp;
    auto e1 = make_gauss(tp, {1.0}, {1.0});
    auto e2 = make_gauss(tp, {-1.0}, {1.0});
    GaussVar<double> f = poe_fuse(tp, {e1, e2}, true);
    out.push_back(near("poe: symmetric experts cancel (mean)", f.mean.scalar_value(), 0.0, 1e-9));
    out.push_back(near("poe: symmetric experts (var=1/3)", std::exp(f.log_var.scalar_value()),
                       1.0 / 3.0, 1e-9));
  }
  {
    Tape<double> tp;
    auto e1 = make_gauss(tp, {2.0}, {1.0});
    GaussVar<double> f = poe_fuse(tp, {e1}, true);
    out.push_back(near("poe: single expert + prior (mean)", f.mean.scalar_value(), 1.0, 1e-9));
    out.push_back(near("poe: single expert + prior (var)", std::exp(f.log_var.scalar_value()), 0.5, 1e-9));
  }
  {
    Tape<double> tp;
    auto sharp = make_gauss(tp, {3.0}, {1e-6});
    auto broad = make_gauss(tp, {-5.0}, {1.0});
    GaussVar<double> f = poe_fuse(tp, {sharp, broad}, true);
    out.push_back(near("poe: near-delta expert dominates", f.mean.scalar_value(), 3.0, 1e-4));
  }

  // Mel formula.
  out.push_back(near("mel(0) = 0", hz_to_mel(0.0), 0.0, 1e-12));
  out.push_back(near("mel(700) = 781.17", hz_to_mel(700.0), 781.17, 0.01));
  out.push_back(near("mel(700) = 2595*log10(2)", hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9));

  // Quantizer boundaries, with a linear-scan oracle for the interior case.
  {
    const auto edges = make_bin_edges(220.0, 2200.0, 21);
    CheckResult r;
    r.name = "quantize: boundaries and interior";
    const int lo = quantize_frequency(220.0, edges);
    const int hi = quantize_frequency(2200.0, edges);
    const int mid = quantize_frequency(1210.0, edges);
    int scan = -1;
    for (int k = 0; k < 21; ++k) {
      if (1210.0 >= edges[static_cast<size_t>(k)] && 1210.0 < edges[static_cast<size_t>(k) + 1]) scan = k;
    }
    r.pass = lo == 0 && hi == 20 && mid == 10 && scan == mid;
    r.detail = "f_min->" + std::to_string(lo) + " f_max->" + std::to_string(hi) + " 1210->" +
               std::to_string(mid) + " scan->" + std::to_string(scan);
    out.push_back(r);
  }
  return out;
}

namespace {

// Wraps a graph builder into the grad_check loss interface.
double eval_graph(ParameterStore<double>& ps, bool fill_grads,
                  const std::function<Var<double>(Tape<double>&, const TapeParams<double>&)>& build) {
  Tape<double> tp;
  TapeParams<double> staged = stage_params(tp, ps, true);
  Var<double> loss = build(tp, staged);
  const double value = loss.scalar_value();
  if (fill_grads) {
    ps.zero_grad();
    tp.backward(loss.id);
    collect_grads(tp, staged, ps);
  }
  return value;
}

CheckResult layer_check(const std::string& name, ParameterStore<double>& ps,
                        const std::function<Var<double>(Tape<double>&, const TapeParams<double>&)>& build,
                        double eps = 1e-5, int coords = 6, uint64_t seed = 11) {
  const auto loss = [&](ParameterStore<double>& p, bool g) { return eval_graph(p, g, build); };
  GradCheckReport rep = grad_check(loss, ps, eps, coords, seed);
  CheckResult r;
  r.name = name;
  r.pass = rep.max_rel_err <= 1e-4;
  r.detail = "max rel err " + fmt(rep.max_rel_err) + " over " + std::to_string(rep.coords_checked) +
             " coords (worst: " + rep.worst_param + ")";
  return r;
}

Tensor<double> random_tensor(const std::vector<int>& shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

}  // namespace

std::vector<CheckResult> verify_layer_gradients() {
  std::vector<CheckResult> out;
  Rng rng(20240711);

  {
    ParameterStore<double> ps;
    ps.add("w", random_tensor({3, 5}, rng, 0.5));
    ps.add("b", random_tensor({3}, rng, 0.1));
    Tensor<double> x = random_tensor({4, 5}, rng);
    out.push_back(layer_check("grad: dense", ps, [x](Tape<double>& tp, const TapeParams<double>& P) {
      return sum_all(square(dense(make_const(tp, x), P.at("w"), P.at("b"))));
    }));
  }
  {
    ParameterStore<double> ps;
    ps.add("w", random_tensor({3, 2, 4, 4}, rng, 0.4));
    ps.add("b", random_tensor({3}, rng, 0.1));
    Tensor<double> x = random_tensor({2, 2, 8, 8}, rng);
    out.push_back(layer_check("grad: conv2d", ps, [x](Tape<double>& tp, const TapeParams<double>& P) {
      return sum_all(square(conv2d(make_const(tp, x), P.at("w"), P.at("b"), 2, 1)));
    }));
  }
  {
    // conv2d input gradient via a differentiable input leaf
    ParameterStore<double> ps;
    ps.add("x", random_tensor({2, 2, 8, 8}, rng, 0.7));
    Tensor<double> w = random_tensor({3, 2, 4, 4}, rng, 0.4);
    Tensor<double> b = random_tensor({3}, rng, 0.1);
    out.push_back(layer_check("grad: conv2d input", ps, [w, b](Tape<double>& tp, const TapeParams<double>& P) {
      return sum_all(square(conv2d(P.at("x"), make_const(tp, w), make_const(tp, b), 2, 1)));
    }));
  }
  {
    ParameterStore<double> ps;
    ps.add("w", random_tensor({3, 2, 4, 4}, rng, 0.4));
    ps.add("b", random_tensor({2}, rng, 0.1));
    ps.add("x", random_tensor({2, 3, 4, 4}, rng, 0.7));
    out.push_back(layer_check("grad: tconv2d", ps, [](Tape<double>& tp, const TapeParams<double>& P) {
      (void)tp;
      return sum_all(square(tconv2d(P.at("x"), P.at("w"), P.at("b"), 2, 1)));
    }));
  }
  {
    ParameterStore<double> ps;
    ps.add("x", random_tensor({4, 6}, rng));
    out.push_back(layer_check("grad: relu/sigmoid/exp/log chain", ps,
                              [](Tape<double>& tp, const TapeParams<double>& P) {
                                (void)tp;
                                Var<double> h = relu(P.at("x"));
                                h = sigmoid(h);
                                h = log_v(add_const(exp_v(h), 1.0));
                                return sum_all(mul(h, h));
                              }));
  }
  {
    ParameterStore<double> ps;
    ps.add("z", random_tensor({6, 3}, rng));
    ps.add("mu", random_tensor({6, 3}, rng));
    ps.add("lv", random_tensor({6, 3}, rng, 0.3));
    out.push_back(layer_check("grad: cross-gauss + logsumexp", ps,
                              [](Tape<double>& tp, const TapeParams<double>& P) {
                                (void)tp;
                                Var<double> cross = cross_gauss_logpdf(P.at("z"), P.at("mu"), P.at("lv"));
                                Var<double> lse = logsumexp_mid(cross);
                                return sum_all(square(lse));
                              }));
  }
  {
    ParameterStore<double> ps;
    ps.add("mu", random_tensor({5, 4}, rng));
    ps.add("lv", random_tensor({5, 4}, rng, 0.3));
    Rng nrng(7);
    Tensor<double> eps = random_tensor({5, 4}, nrng);
    out.push_back(layer_check("grad: poe + reparam + kl", ps,
                              [eps](Tape<double>& tp, const TapeParams<double>& P) {
                                GaussVar<double> e1{P.at("mu"), P.at("lv")};
                                GaussVar<double> e2{neg(P.at("mu")), scale(P.at("lv"), 0.5)};
                                GaussVar<double> f = poe_fuse(tp, {e1, e2}, true);
                                Var<double> z = reparameterize(f, make_const(tp, eps));
                                return add(sum_all(square(z)), sum_all(kl_analytic_rows(f)));
                              }));
  }
  return out;
}

void make_tiny_pair_batch(Tensor<double>& x1, Tensor<double>& x2) {
  SpectrogramConfig sc;
  const Tensor<double> fb = mel_filterbank(sc);
  const auto render = [&](int timbre, double freq) {
    WaveformSpec ws;
    ws.timbre_class = timbre;
    ws.frequency_hz = freq;
    const std::vector<float> wave = render_waveform(ws);
    return waveform_to_log_mel(wave.data(), static_cast<int64_t>(wave.size()), sc, fb);
  };
  const Tensor<double> views[4] = {render(0, 440.0), render(0, 880.0), render(1, 330.0),
                                   render(1, 1320.0)};
  NormalizationStats st{1e30, -1e30};
  for (const auto& v : views) {
    for (double d : v.data) {
      st.log_min = std::min(st.log_min, d);
      st.log_max = std::max(st.log_max, d);
    }
  }
  x1 = Tensor<double>({2, 1, 64, 64});
  x2 = Tensor<double>({2, 1, 64, 64});
  const int64_t elems = 64 * 64;
  for (int64_t e = 0; e < elems; ++e) {
    const auto norm = [&](const Tensor<double>& v) {
      return std::clamp((v.data[static_cast<size_t>(e)] - st.log_min) / (st.log_max - st.log_min), 0.0, 1.0);
    };
    x1.data[static_cast<size_t>(e)] = norm(views[0]);
    x2.data[static_cast<size_t>(e)] = norm(views[1]);
    x1.data[static_cast<size_t>(elems + e)] = norm(views[2]);
    x2.data[static_cast<size_t>(elems + e)] = norm(views[3]);
  }
}

std::vector<CheckResult> verify_full_elbo_gradient() {
  std::vector<CheckResult> out;
  Tensor<double> x1, x2;
  make_tiny_pair_batch(x1, x2);

  LatentConfig lc;
  Rng noise_rng(99);
  const BatchNoise<double> noise = draw_noise<double>(noise_rng, 2, lc);

  const ObjectiveWeights configs[2] = {{0.0, 0.0, 0.1}, {0.5, 0.5, 0.5}};
  const char* names[2] = {"grad: full ELBO (alpha=beta=0, gamma=0.1)",
                          "grad: full ELBO (alpha=beta=gamma=0.5)"};
  for (int c = 0; c < 2; ++c) {
    ParameterStore<double> ps;
    init_model_params(ps, lc, 4242);
    ElboOptions opt;
    opt.weights = configs[c];
    opt.n_data = 1000;
    const auto build = [&](Tape<double>& tp, const TapeParams<double>& P) {
      return build_elbo_graph(tp, P, x1, x2, noise, lc, opt).total;
    };
    const auto loss = [&](ParameterStore<double>& p, bool g) { return eval_graph(p, g, build); };
    GradCheckReport rep = grad_check(loss, ps, 1e-4, 8, 1234);
    CheckResult r;
    r.name = names[c];
    r.pass = rep.max_rel_err <= 1e-4;
    r.detail = "max rel err " + fmt(rep.max_rel_err) + " over " + std::to_string(rep.coords_checked) +
               " coords (worst: " + rep.worst_param + " ad=" + fmt(rep.worst_analytic) +
               " fd=" + fmt(rep.worst_numeric) + ")";
    out.push_back(r);
  }
  return out;
}

std::vector<CheckResult> verify_estimator_suite() {
  std::vector<CheckResult> out;

  // Decomposition identity: mean(mi + tc + dkl) vs mean analytic KL at
  // M = N_data = 256, 100 z-resamplings, three standard errors.
  {
    const int m = 256, d = 8;
    Rng rng(31337);
    Tensor<double> mu({m, d}), lv({m, d});
    for (auto& v : mu.data) v = rng.normal();
    for (auto& v : lv.data) v = rng.uniform(-1.0, 0.5);

    double analytic = 0.0;
    {
      Tape<double> tp;
      GaussVar<double> q{make_const(tp, mu), make_const(tp, lv)};
      analytic = mean_all(kl_analytic_rows(q)).scalar_value();
    }
    std::vector<double> estimates;
    for (int rep = 0; rep < 100; ++rep) {
      Tape<double> tp;
      GaussVar<double> q{make_const(tp, mu), make_const(tp, lv)};
      Tensor<double> z({m, d});
      for (int64_t i = 0; i < z.size(); ++i) {
        z.data[static_cast<size_t>(i)] = mu.data[static_cast<size_t>(i)] +
                                         std::exp(0.5 * lv.data[static_cast<size_t>(i)]) * rng.normal();
      }
      GroupTerms<double> t = decomposed_kl(q, make_const(tp, z), m);
      estimates.push_back(t.mi.scalar_value() + t.tc.scalar_value() + t.dkl.scalar_value());
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(estimates.size());
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= static_cast<double>(estimates.size() - 1);
    const double se = std::sqrt(var / static_cast<double>(estimates.size()));
    CheckResult r;
    r.name = "estimator: decomposition identity (M=N=256, 100 resamplings)";
    r.pass = std::abs(mean - analytic) <= 3.0 * se;
    r.detail = "|" + fmt(mean) + " - " + fmt(analytic) + "| = " + fmt(std::abs(mean - analytic)) +
               " vs 3*SE = " + fmt(3.0 * se);
    out.push_back(r);
  }

  // tc is exactly zero for one-dimensional latents.
  {
    const int m = 64;
    Rng rng(5);
    Tape<double> tp;
    Tensor<double> mu({m, 1}), lv({m, 1}), z({m, 1});
    for (auto& v : mu.data) v = rng.normal();
    for (auto& v : lv.data) v = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < m; ++i) {
      z.data[static_cast<size_t>(i)] =
          mu.data[static_cast<size_t>(i)] + std::exp(0.5 * lv.data[static_cast<size_t>(i)]) * rng.normal();
    }
    GaussVar<double> q{make_const(tp, mu), make_const(tp, lv)};
    GroupTerms<double> t = decomposed_kl(q, make_const(tp, z), 1000);
    CheckResult r;
    r.name = "estimator: tc == 0 exactly for D=1";
    r.pass = t.tc.scalar_value() == 0.0;
    r.detail = "tc = " + fmt(t.tc.scalar_value());
    out.push_back(r);
  }

  // Frozen-noise reparameterization: d z / d mu = 1, d z / d logvar = eps*sigma/2.
  {
    Tape<double> tp;
    Tensor<double> mu({1, 3}), lv({1, 3}), eps({1, 3});
    const double eps_vals[3] = {0.7, -1.3, 0.25};
    const double lv_vals[3] = {0.4, -0.8, 1.1};
    for (int i = 0; i < 3; ++i) {
      mu.data[static_cast<size_t>(i)] = 0.1 * i;
      lv.data[static_cast<size_t>(i)] = lv_vals[i];
      eps.data[static_cast<size_t>(i)] = eps_vals[i];
    }
    GaussVar<double> q{make_leaf(tp, mu, true), make_leaf(tp, lv, true)};
    Var<double> z = reparameterize(q, make_const(tp, eps));
    Var<double> s = sum_all(z);
    tp.backward(s.id);
    bool ok = true;
    std::string detail;
    const Tensor<double>& dmu = tp.grad(q.mean.id);
    const Tensor<double>& dlv = tp.grad(q.log_var.id);
    for (int i = 0; i < 3; ++i) {
      const double want_lv = eps_vals[i] * std::exp(0.5 * lv_vals[i]) / 2.0;
      ok = ok && std::abs(dmu.data[static_cast<size_t>(i)] - 1.0) < 1e-12 &&
           std::abs(dlv.data[static_cast<size_t>(i)] - want_lv) < 1e-12;
    }
    CheckResult r;
    r.name = "estimator: reparameterization coefficients (1 and eps*sigma/2)";
    r.pass = ok;
    r.detail = ok ? "exact" : "coefficient mismatch";
    out.push_back(r);
  }
  return out;
}

std::vector<CheckResult> verify_all() {
  std::vector<CheckResult> all;
  for (auto&& v : {verify_unit_oracles(), verify_layer_gradients(), verify_estimator_suite(),
                   verify_full_elbo_gradient()}) {
    all.insert(all.end(), v.begin(), v.end());
  }
  return all;
}

}  // namespace psvae
