#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "psvae/tensor.hpp"

namespace psvae {

struct SpectrogramConfig {
  int n_fft = 1024;  // power of two
  int hop = 251;
  int n_mels = 64;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-5;
  int target_frames = 64;
  int sample_rate_hz = 16000;
};

struct NormalizationStats {
  double log_min = 0.0;
  double log_max = 0.0;
};

// HTK mel scale.
double hz_to_mel(double f);
double mel_to_hz(double m);

// In-place iterative radix-2 FFT (forward). n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& x);

// |STFT|^2 with a periodic Hann window; frames hop-strided, trailing partial
// frame dropped. Output shape [n_fft/2 + 1, n_frames].
Tensor<double> stft_power(const float* samples, int64_t n, const SpectrogramConfig& cfg);

// Triangular mel filterbank, [n_mels, n_fft/2 + 1]. Throws if any filter
// covers no FFT bin.
Tensor<double> mel_filterbank(const SpectrogramConfig& cfg);

// log(mel_power + log_floor), shape [n_mels, n_frames].
Tensor<double> log_mel(const Tensor<double>& power, const Tensor<double>& filterbank,
                       double log_floor);

// Crop or edge-repeat-pad frames (columns) to cfg.target_frames.
Tensor<double> fit_frames(const Tensor<double>& log_mel_spec, int target_frames);

// Affine map of log values into [0,1] with clipping.
Tensor<float> normalize_log_mel(const Tensor<double>& log_mel_spec, const NormalizationStats& stats);

// Full pipeline up to the log domain: waveform -> [n_mels, target_frames].
Tensor<double> waveform_to_log_mel(const float* samples, int64_t n, const SpectrogramConfig& cfg,
                                   const Tensor<double>& filterbank);

}  // namespace psvae
