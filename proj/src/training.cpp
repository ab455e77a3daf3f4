#include "psvae/training.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "psvae/checkpoint.hpp"
#include "psvae/evaluation.hpp"
#include "psvae/forward.hpp"

namespace psvae {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

template <class T>
TrainResult train_impl(const TrainConfig& cfg, const Corpus& corpus, const std::string& out_dir) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2 for the TC estimator");
  const auto& man = corpus.manifest;
  if (man.n_train_pairs < 1) throw std::invalid_argument("train: dataset has no training pairs");
  if (man.spec.n_mels != kInputSize || man.spec.target_frames != kInputSize) {
    throw std::invalid_argument("train: dataset spectrogram shape " + std::to_string(man.spec.n_mels) +
                                "x" + std::to_string(man.spec.target_frames) + " does not match the 64x64 model input");
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir + "/training_log.csv", std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot write training log in " + out_dir);
  log << training_log_header() << "\n";

  ParameterStore<T> params;
  init_model_params(params, cfg.latent, cfg.seed);
  AdamConfig adam{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  const std::vector<std::pair<int, int>> train_pairs(man.pair_index.begin(),
                                                     man.pair_index.begin() + man.n_train_pairs);
  std::vector<int> order(train_pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng = Rng::stream(cfg.seed, 0x747261696e);

  ElboOptions opt;
  opt.weights = cfg.weights;
  opt.n_data = man.n_train_pairs;
  opt.shared_kl_per_view = cfg.shared_kl_per_view;

  const auto save = [&](const std::string& name, int epoch) {
    CheckpointMeta meta;
    meta.config_hash = cfg.config_hash;
    meta.epoch = epoch;
    if constexpr (std::is_same_v<T, float>) {
      save_checkpoint(out_dir + "/" + name, params, meta);
    } else {
      ParameterStore<float> as_f32 = params.template cast<float>();
      save_checkpoint(out_dir + "/" + name, as_f32, meta);
    }
  };

  TrainResult result;
  const int n_pairs = static_cast<int>(train_pairs.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    LossBreakdown mean;
    int64_t seen = 0;
    for (int begin = 0; begin < n_pairs;) {
      int count = std::min(cfg.batch_size, n_pairs - begin);
      // The estimator needs at least two pairs; fold a trailing singleton in.
      if (n_pairs - begin - count == 1) count += 1;
      Tensor<T> x1, x2;
      fill_pair_batch(corpus, train_pairs, order, begin, count, x1, x2);
      BatchNoise<T> noise = draw_noise<T>(rng, count, cfg.latent);

      try {
        Tape<T> tape;
        TapeParams<T> staged = stage_params(tape, params);
        ElboGraph<T> graph =
            build_elbo_graph(tape, staged, std::move(x1), std::move(x2), noise, cfg.latent, opt);
        const LossBreakdown& b = graph.values;
        params.zero_grad();
        tape.backward(graph.total.id);
        collect_grads(tape, staged, params);
        params.adam_step(adam);

        mean.recon[0] += b.recon[0] * count;
        mean.recon[1] += b.recon[1] * count;
        mean.recon_const = b.recon_const;
        for (int g = 0; g < 3; ++g) {
          mean.mi[g] += b.mi[g] * count;
          mean.tc[g] += b.tc[g] * count;
          mean.dkl[g] += b.dkl[g] * count;
          mean.kl[g] += b.kl[g] * count;
        }
        mean.total += b.total * count;
        seen += count;
      } catch (const NonFiniteError& e) {
        result.halted_nonfinite = true;
        result.halt_reason = e.what();
        save("checkpoint_final.ckpt", epoch - 1);
        result.checkpoint_path = out_dir + "/checkpoint_final.ckpt";
        result.epochs_run = epoch - 1;
        log.flush();
        return result;
      }
      begin += count;
    }

    mean.recon[0] /= static_cast<double>(seen);
    mean.recon[1] /= static_cast<double>(seen);
    for (int g = 0; g < 3; ++g) {
      mean.mi[g] /= static_cast<double>(seen);
      mean.tc[g] /= static_cast<double>(seen);
      mean.dkl[g] /= static_cast<double>(seen);
      mean.kl[g] /= static_cast<double>(seen);
    }
    mean.total /= static_cast<double>(seen);
    log << training_log_row(epoch, mean) << "\n";
    result.epoch_means.push_back(mean);
    result.epochs_run = epoch;

    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.ckpt", epoch);
      save(name, epoch);
    }
  }
  save("checkpoint_final.ckpt", cfg.epochs);
  result.checkpoint_path = out_dir + "/checkpoint_final.ckpt";
  return result;
}

}  // namespace

std::string training_log_header() {
  return "epoch,recon1,recon2,mi_p1,tc_p1,dkl_p1,kl_p1,mi_p2,tc_p2,dkl_p2,kl_p2,"
         "mi_s,tc_s,dkl_s,kl_s,total";
}

std::string training_log_row(int epoch, const LossBreakdown& b) {
  std::string row = std::to_string(epoch);
  row += "," + fmt(b.recon[0]) + "," + fmt(b.recon[1]);
  for (int g = 0; g < 3; ++g) {
    row += "," + fmt(b.mi[g]) + "," + fmt(b.tc[g]) + "," + fmt(b.dkl[g]) + "," + fmt(b.kl[g]);
  }
  row += "," + fmt(b.total);
  return row;
}

TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const std::string& out_dir) {
  return cfg.use_double ? train_impl<double>(cfg, corpus, out_dir)
                        : train_impl<float>(cfg, corpus, out_dir);
}

std::vector<AblatePoint> ablate(const AblateConfig& cfg, const Corpus& corpus,
                                const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/ablation.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("ablate: cannot write ablation.csv in " + out_dir);
  csv << "alpha,beta,gamma,status,acc_private_timbre,acc_private_frequency,acc_shared_timbre,"
         "acc_shared_frequency,acc_both_timbre,acc_both_frequency,mi_shared_timbre,"
         "mi_private_timbre,mi_private_frequency,mi_shared_frequency,timbre_ratio,"
         "frequency_ratio,score\n";

  std::vector<AblatePoint> points;
  for (double a : cfg.alphas) {
    for (double b : cfg.betas) {
      for (double g : cfg.gammas) {
        AblatePoint pt;
        pt.weights = ObjectiveWeights{a, b, g};
        char sub[96];
        std::snprintf(sub, sizeof(sub), "run_a%g_b%g_g%g", a, b, g);
        try {
          TrainConfig tc = cfg.base;
          tc.weights = pt.weights;
          TrainResult tr = train(tc, corpus, out_dir + "/" + sub);
          if (tr.halted_nonfinite) throw std::runtime_error("training halted: " + tr.halt_reason);

          ParameterStore<float> params;
          init_model_params(params, tc.latent, tc.seed);
          load_checkpoint(tr.checkpoint_path, params);
          LatentTable table = extract_latents(params, tc.latent, corpus);
          MIMatrix mi = mi_matrix(table, cfg.mi_bins);
          ProbeReport pr = full_probe_report(table, cfg.probe_seed);
          for (int s = 0; s < 3; ++s)
            for (int t = 0; t < 2; ++t) pt.acc[s][t] = pr.acc[s][t];
          pt.mi_shared_timbre = mi.sum_shared_timbre();
          pt.mi_private_timbre = mi.sum_private_timbre();
          pt.mi_private_freq = mi.sum_private_freq();
          pt.mi_shared_freq = mi.sum_shared_freq();
          pt.timbre_ratio = pt.mi_shared_timbre / std::max(1e-12, pt.mi_private_timbre);
          pt.freq_ratio = pt.mi_private_freq / std::max(1e-12, pt.mi_shared_freq);
          pt.score = pt.timbre_ratio * pt.freq_ratio;
          pt.ok = true;
        } catch (const std::exception& e) {
          pt.ok = false;
          pt.error = e.what();
        }
        csv << fmt(a) << "," << fmt(b) << "," << fmt(g) << "," << (pt.ok ? "ok" : "failed");
        for (int s = 0; s < 3; ++s)
          for (int t = 0; t < 2; ++t) csv << "," << fmt(pt.acc[s][t]);
        csv << "," << fmt(pt.mi_shared_timbre) << "," << fmt(pt.mi_private_timbre) << ","
            << fmt(pt.mi_private_freq) << "," << fmt(pt.mi_shared_freq) << ","
            << fmt(pt.timbre_ratio) << "," << fmt(pt.freq_ratio) << "," << fmt(pt.score) << "\n";
        csv.flush();
        points.push_back(std::move(pt));
      }
    }
  }
  return points;
}

}  // namespace psvae
