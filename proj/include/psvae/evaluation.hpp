#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psvae/adam.hpp"
#include "psvae/corpus.hpp"
#include "psvae/model.hpp"

namespace psvae {

// One row per evaluated sample: private posterior mean from the sample's own
// view, fused shared posterior mean from its pair, and the ground truth.
struct LatentRow {
  std::vector<float> zp;
  std::vector<float> zs;
  FactorLabel label;
};

struct LatentTable {
  int d_p = 0;
  int d_s = 0;
  std::vector<LatentRow> rows;
  int skipped_orphans = 0;
};

// Deterministic feature extraction over the corpus's test pairs (posterior
// means, no sampling). Samples that appear in no pair are skipped and
// counted.
LatentTable extract_latents(const ParameterStore<float>& params, const LatentConfig& lc,
                            const Corpus& corpus);

// Rows: d_p private dims then d_s shared dims. Columns: timbre, frequency.
struct MIMatrix {
  int d_p = 0;
  int d_s = 0;
  std::vector<double> timbre_bits;  // size d_p + d_s
  std::vector<double> freq_bits;
  int constant_dims = 0;  // dims with zero spread; their MI is defined as 0

  double sum_private_timbre() const;
  double sum_shared_timbre() const;
  double sum_private_freq() const;
  double sum_shared_freq() const;
};

// Plug-in discrete MI in bits between each latent dimension (equal-frequency
// binned) and each factor.
MIMatrix mi_matrix(const LatentTable& table, int n_bins = 20);

enum class Subspace { kPrivate, kShared, kBoth };
enum class ProbeTask { kTimbre, kFrequency };

struct ProbeConfig {
  int steps = 500;
  double lr = 0.01;
  double train_fraction = 0.8;
};

// Multinomial logistic regression on the chosen latent columns; returns
// held-out accuracy. Deterministic given the seed.
double probe(const LatentTable& table, Subspace subspace, ProbeTask task, uint64_t seed,
             const ProbeConfig& cfg = {});

struct ProbeReport {
  // Row order: private, shared, both. Column order: timbre, frequency.
  double acc[3][2] = {{0, 0}, {0, 0}, {0, 0}};
};

ProbeReport full_probe_report(const LatentTable& table, uint64_t seed, const ProbeConfig& cfg = {});

// mi_matrix.csv, probe_report.csv, mi_heatmap.pgm (+ legend sidecar).
// Refuses to write anything for an empty table.
void emit_reports(const MIMatrix& mi, const ProbeReport& probes, const std::string& out_dir);

const char* subspace_name(Subspace s);
const char* task_name(ProbeTask t);

}  // namespace psvae
