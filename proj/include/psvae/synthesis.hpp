#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "psvae/rng.hpp"
#include "psvae/spectrogram.hpp"
#include "psvae/tensor.hpp"

namespace psvae {

inline constexpr int kNumTimbres = 4;  // sine, square, sawtooth, triangle

struct WaveformSpec {
  int timbre_class = 0;
  double frequency_hz = 440.0;
  double amplitude = 1.0;
  double duration_s = 1.0;
  int sample_rate_hz = 16000;
};

struct FactorLabel {
  int timbre_class = 0;
  double frequency_hz = 0.0;
  int frequency_bin = 0;
};

struct SynthConfig {
  int n_samples = 32000;
  uint64_t seed = 0;
  double f_min = 220.0;
  double f_max = 2200.0;
  int sample_rate_hz = 16000;
  double duration_s = 1.0;
  double amplitude = 1.0;
  int n_freq_bins = 21;
  double train_fraction = 0.9;
  SpectrogramConfig spec;
};

// Closed-form oscillator value at time t (seconds). Ideal (aliased) shapes:
// sine a*sin(2*pi*f*t); square a*sgn(sin(2*pi*f*t)) with sgn(0)=+1;
// sawtooth a*2*(f*t - floor(f*t + 1/2)); triangle a*(2/pi)*asin(sin(2*pi*f*t)).
double waveform_value(int timbre_class, double frequency_hz, double amplitude, double t);

// Samples the oscillator at t = i / sample_rate. Rejects frequencies at or
// above Nyquist.
std::vector<float> render_waveform(const WaveformSpec& spec);

// n_bins+1 equally spaced edges over [f_min, f_max].
std::vector<double> make_bin_edges(double f_min, double f_max, int n_bins);

// Bin k with edges[k] <= f < edges[k+1]; f == f_max maps to the last bin.
int quantize_frequency(double f, const std::vector<double>& edges);

struct PairingResult {
  std::vector<std::pair<int, int>> pairs;
  int n_orphans = 0;  // samples in classes with < 2 members in this subset
};

// Same-timbre, different-frequency-bin pairs over the given sample indices.
// Every pairable sample lands in at least one pair; classes where every
// member shares one frequency bin are an error.
PairingResult pair_samples(const std::vector<FactorLabel>& labels,
                           const std::vector<int>& indices, Rng& rng);

struct DatasetManifest {
  int version = 1;
  int n_samples = 0;
  uint64_t rng_seed = 0;
  int sample_rate_hz = 16000;
  double duration_s = 1.0;
  double f_min = 220.0;
  double f_max = 2200.0;
  double amplitude = 1.0;
  std::vector<double> bin_edges;
  NormalizationStats stats;
  int n_train_samples = 0;
  int n_train_pairs = 0;
  std::vector<std::pair<int, int>> pair_index;  // train pairs first, then test
  std::vector<FactorLabel> factors;
  SpectrogramConfig spec;
  std::string tensor_file = "spectrograms.f32";
  std::string config_hash;
};

// Renders the corpus, computes normalized log-mel spectrograms (stats from
// the train split only), forms within-split pairs, and persists everything
// under out_dir. Deterministic given the config.
DatasetManifest build_dataset(const SynthConfig& cfg, const std::string& out_dir,
                              const std::string& config_hash = "");

}  // namespace psvae
