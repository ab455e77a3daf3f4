#include "psvae/spectrogram.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psvae {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }

double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

void fft_radix2(std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft_radix2: size must be a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

Tensor<double> stft_power(const float* samples, int64_t n, const SpectrogramConfig& cfg) {
  const int nfft = cfg.n_fft;
  if (nfft <= 0 || (nfft & (nfft - 1)) != 0) throw std::invalid_argument("stft_power: n_fft must be a power of two");
  if (cfg.hop <= 0 || cfg.hop > nfft) throw std::invalid_argument("stft_power: hop must be in (0, n_fft]");
  if (n < nfft) {
    throw std::invalid_argument("stft_power: signal shorter than one window (" + std::to_string(n) +
                                " < " + std::to_string(nfft) + ")");
  }
  const int n_frames = static_cast<int>((n - nfft) / cfg.hop) + 1;
  const int n_bins = nfft / 2 + 1;

  std::vector<double> window(static_cast<size_t>(nfft));
  for (int i = 0; i < nfft; ++i) window[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / nfft);

  Tensor<double> out({n_bins, n_frames});
  std::vector<std::complex<double>> buf(static_cast<size_t>(nfft));
  for (int t = 0; t < n_frames; ++t) {
    const int64_t off = static_cast<int64_t>(t) * cfg.hop;
    for (int i = 0; i < nfft; ++i) {
      buf[static_cast<size_t>(i)] = std::complex<double>(static_cast<double>(samples[off + i]) * window[static_cast<size_t>(i)], 0.0);
    }
    fft_radix2(buf);
    for (int k = 0; k < n_bins; ++k) {
      out.data[static_cast<size_t>(k) * n_frames + t] = std::norm(buf[static_cast<size_t>(k)]);
    }
  }
  return out;
}

Tensor<double> mel_filterbank(const SpectrogramConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double nyquist = cfg.sample_rate_hz / 2.0;
  if (!(cfg.fmin_hz < cfg.fmax_hz) || cfg.fmax_hz > nyquist) {
    throw std::invalid_argument("mel_filterbank: need fmin < fmax <= sample_rate/2");
  }
  if (cfg.n_mels < 1) throw std::invalid_argument("mel_filterbank: n_mels must be positive");

  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> pts(static_cast<size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    pts[static_cast<size_t>(i)] = mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1);
  }

  Tensor<double> fb({cfg.n_mels, n_bins});
  const double hz_per_bin = static_cast<double>(cfg.sample_rate_hz) / cfg.n_fft;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = pts[static_cast<size_t>(m)], center = pts[static_cast<size_t>(m) + 1], right = pts[static_cast<size_t>(m) + 2];
    bool nonempty = false;
    for (int k = 0; k < n_bins; ++k) {
      const double mel_k = hz_to_mel(k * hz_per_bin);
      double w = 0.0;
      if (mel_k > left && mel_k < right) {
        w = mel_k <= center ? (mel_k - left) / (center - left) : (right - mel_k) / (right - center);
      }
      if (w > 0.0) nonempty = true;
      fb.data[static_cast<size_t>(m) * n_bins + k] = w;
    }
    if (!nonempty) {
      throw std::invalid_argument("mel_filterbank: filter " + std::to_string(m) +
                                  " covers no FFT bin; lower n_mels or raise n_fft");
    }
  }
  return fb;
}

Tensor<double> log_mel(const Tensor<double>& power, const Tensor<double>& filterbank,
                       double log_floor) {
  if (log_floor <= 0.0) throw std::invalid_argument("log_mel: log_floor must be positive");
  const int n_bins = power.shape.at(0);
  const int n_frames = power.shape.at(1);
  const int n_mels = filterbank.shape.at(0);
  if (filterbank.shape.at(1) != n_bins) {
    throw std::invalid_argument("log_mel: filterbank/power bin mismatch");
  }
  Tensor<double> out({n_mels, n_frames});
  for (int m = 0; m < n_mels; ++m) {
    const double* row = filterbank.ptr() + static_cast<int64_t>(m) * n_bins;
    for (int t = 0; t < n_frames; ++t) {
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) acc += row[k] * power.data[static_cast<size_t>(k) * n_frames + t];
      out.data[static_cast<size_t>(m) * n_frames + t] = std::log(acc + log_floor);
    }
  }
  return out;
}

Tensor<double> fit_frames(const Tensor<double>& log_mel_spec, int target_frames) {
  const int n_mels = log_mel_spec.shape.at(0);
  const int n_frames = log_mel_spec.shape.at(1);
  if (n_frames == target_frames) return log_mel_spec;
  Tensor<double> out({n_mels, target_frames});
  for (int m = 0; m < n_mels; ++m) {
    for (int t = 0; t < target_frames; ++t) {
      const int src = std::min(t, n_frames - 1);  // crop, or repeat the last frame
      out.data[static_cast<size_t>(m) * target_frames + t] = log_mel_spec.data[static_cast<size_t>(m) * n_frames + src];
    }
  }
  return out;
}

Tensor<float> normalize_log_mel(const Tensor<double>& log_mel_spec, const NormalizationStats& stats) {
  if (!(stats.log_max > stats.log_min)) {
    throw std::invalid_argument("normalize_log_mel: degenerate stats (max <= min)");
  }
  const double range = stats.log_max - stats.log_min;
  Tensor<float> out;
  out.shape = log_mel_spec.shape;
  out.data.resize(log_mel_spec.data.size());
  for (size_t i = 0; i < log_mel_spec.data.size(); ++i) {
    const double v = (log_mel_spec.data[i] - stats.log_min) / range;
    out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

Tensor<double> waveform_to_log_mel(const float* samples, int64_t n, const SpectrogramConfig& cfg,
                                   const Tensor<double>& filterbank) {
  const Tensor<double> power = stft_power(samples, n, cfg);
  const Tensor<double> lm = log_mel(power, filterbank, cfg.log_floor);
  return fit_frames(lm, cfg.target_frames);
}

}  // namespace psvae
