#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psvae/corpus.hpp"
#include "psvae/model.hpp"
#include "psvae/objective.hpp"

namespace psvae {

struct TrainConfig {
  int epochs = 100;
  double lr = 0.001;
  int batch_size = 256;  // pairs
  uint64_t seed = 0;
  ObjectiveWeights weights;
  bool shared_kl_per_view = true;
  LatentConfig latent;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int checkpoint_every = 25;  // epochs between periodic checkpoints; 0 = final only
  bool use_double = false;    // 64-bit mode for smoke checks
  std::string config_hash;
};

struct TrainResult {
  std::string checkpoint_path;
  int epochs_run = 0;
  bool halted_nonfinite = false;
  std::string halt_reason;
  std::vector<LossBreakdown> epoch_means;
};

// Deterministic training loop over the manifest's train pairs. Writes
// training_log.csv, periodic checkpoints, and checkpoint_final.ckpt under
// out_dir. A non-finite loss or gradient halts training and keeps the last
// good parameter state as the final checkpoint.
TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const std::string& out_dir);

// Columns of training_log.csv, fixed schema.
std::string training_log_header();
std::string training_log_row(int epoch, const LossBreakdown& b);

struct AblatePoint {
  ObjectiveWeights weights;
  bool ok = false;
  std::string error;
  double acc[3][2] = {{0, 0}, {0, 0}, {0, 0}};  // subspace x task
  double mi_shared_timbre = 0, mi_private_timbre = 0;
  double mi_private_freq = 0, mi_shared_freq = 0;
  double timbre_ratio = 0, freq_ratio = 0, score = 0;
};

struct AblateConfig {
  std::vector<double> alphas{0.0};
  std::vector<double> betas{0.0};
  std::vector<double> gammas{0.1};
  TrainConfig base;       // reduced-budget training settings
  uint64_t probe_seed = 0;
  int mi_bins = 20;
};

// Trains one model per (alpha, beta, gamma) grid point, evaluates probes and
// MI concentration, and writes ablation.csv. Individual failures are recorded
// and the sweep continues.
std::vector<AblatePoint> ablate(const AblateConfig& cfg, const Corpus& corpus,
                                const std::string& out_dir);

}  // namespace psvae
