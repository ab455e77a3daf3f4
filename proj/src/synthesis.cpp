#include "psvae/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "psvae/corpus.hpp"

namespace psvae {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double waveform_value(int timbre_class, double frequency_hz, double amplitude, double t) {
  const double phase = frequency_hz * t;
  switch (timbre_class) {
    case 0:
      return amplitude * std::sin(2.0 * kPi * phase);
    case 1: {
      const double s = std::sin(2.0 * kPi * phase);
      return amplitude * (s >= 0.0 ? 1.0 : -1.0);  // sgn(0) = +1
    }
    case 2:
      return amplitude * 2.0 * (phase - std::floor(phase + 0.5));
    case 3:
      return amplitude * (2.0 / kPi) * std::asin(std::sin(2.0 * kPi * phase));
    default:
      throw std::invalid_argument("waveform_value: unknown timbre class " + std::to_string(timbre_class));
  }
}

std::vector<float> render_waveform(const WaveformSpec& spec) {
  if (spec.frequency_hz <= 0.0 || spec.frequency_hz >= spec.sample_rate_hz / 2.0) {
    throw std::out_of_range("render_waveform: frequency " + std::to_string(spec.frequency_hz) +
                            " Hz outside (0, Nyquist=" + std::to_string(spec.sample_rate_hz / 2.0) + ")");
  }
  if (spec.duration_s <= 0.0) throw std::out_of_range("render_waveform: duration must be positive");
  if (spec.amplitude <= 0.0 || spec.amplitude > 1.0) {
    throw std::out_of_range("render_waveform: amplitude must be in (0, 1]");
  }
  const int64_t n = std::llround(spec.duration_s * spec.sample_rate_hz);
  std::vector<float> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.sample_rate_hz;
    out[static_cast<size_t>(i)] =
        static_cast<float>(waveform_value(spec.timbre_class, spec.frequency_hz, spec.amplitude, t));
  }
  return out;
}

std::vector<double> make_bin_edges(double f_min, double f_max, int n_bins) {
  if (!(f_min < f_max) || n_bins < 1) throw std::invalid_argument("make_bin_edges: bad range or bin count");
  std::vector<double> edges(static_cast<size_t>(n_bins) + 1);
  for (int k = 0; k <= n_bins; ++k) edges[static_cast<size_t>(k)] = f_min + (f_max - f_min) * k / n_bins;
  edges.front() = f_min;
  edges.back() = f_max;
  return edges;
}

int quantize_frequency(double f, const std::vector<double>& edges) {
  const int n_bins = static_cast<int>(edges.size()) - 1;
  if (f < edges.front() || f > edges.back()) {
    throw std::out_of_range("quantize_frequency: " + std::to_string(f) + " Hz outside [" +
                            std::to_string(edges.front()) + ", " + std::to_string(edges.back()) + "]");
  }
  if (f == edges.back()) return n_bins - 1;
  for (int k = 0; k < n_bins; ++k) {
    if (f >= edges[static_cast<size_t>(k)] && f < edges[static_cast<size_t>(k) + 1]) return k;
  }
  return n_bins - 1;  // unreachable for strictly increasing edges
}

PairingResult pair_samples(const std::vector<FactorLabel>& labels,
                           const std::vector<int>& indices, Rng& rng) {
  PairingResult result;
  for (int c = 0; c < kNumTimbres; ++c) {
    std::vector<int> members;
    for (int idx : indices) {
      if (labels.at(static_cast<size_t>(idx)).timbre_class == c) members.push_back(idx);
    }
    if (members.empty()) continue;
    if (members.size() < 2) {
      result.n_orphans += static_cast<int>(members.size());
      continue;
    }
    bool two_bins = false;
    for (size_t i = 1; i < members.size(); ++i) {
      if (labels[static_cast<size_t>(members[i])].frequency_bin !=
          labels[static_cast<size_t>(members[0])].frequency_bin) {
        two_bins = true;
        break;
      }
    }
    if (!two_bins) {
      throw std::runtime_error("pair_samples: timbre class " + std::to_string(c) + " has " +
                               std::to_string(members.size()) +
                               " samples but a single frequency bin; cannot pair");
    }
    rng.shuffle(members);
    std::vector<int> remaining = members;
    std::vector<std::pair<int, int>> class_pairs;
    while (!remaining.empty()) {
      const int a = remaining.front();
      const int bin_a = labels[static_cast<size_t>(a)].frequency_bin;
      size_t partner = 0;
      bool found = false;
      for (size_t j = 1; j < remaining.size(); ++j) {
        if (labels[static_cast<size_t>(remaining[j])].frequency_bin != bin_a) {
          partner = j;
          found = true;
          break;
        }
      }
      if (found) {
        class_pairs.emplace_back(a, remaining[partner]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(partner));
        remaining.erase(remaining.begin());
      } else {
        // Everything left shares a's bin: attach each to an earlier partner
        // from a different bin so no sample is orphaned.
        for (int leftover : remaining) {
          const int bin_l = labels[static_cast<size_t>(leftover)].frequency_bin;
          bool attached = false;
          for (const auto& p : class_pairs) {
            if (labels[static_cast<size_t>(p.first)].frequency_bin != bin_l) {
              class_pairs.emplace_back(leftover, p.first);
              attached = true;
              break;
            }
            if (labels[static_cast<size_t>(p.second)].frequency_bin != bin_l) {
              class_pairs.emplace_back(leftover, p.second);
              attached = true;
              break;
            }
          }
          if (!attached) {
            throw std::runtime_error("pair_samples: timbre class " + std::to_string(c) +
                                     " leftover sample has no valid partner");
          }
        }
        remaining.clear();
      }
    }
    result.pairs.insert(result.pairs.end(), class_pairs.begin(), class_pairs.end());
  }

  // Post-hoc exhaustive validation.
  for (const auto& p : result.pairs) {
    const auto& a = labels.at(static_cast<size_t>(p.first));
    const auto& b = labels.at(static_cast<size_t>(p.second));
    if (a.timbre_class != b.timbre_class || a.frequency_bin == b.frequency_bin) {
      throw std::logic_error("pair_samples: emitted invalid pair (" + std::to_string(p.first) + "," +
                             std::to_string(p.second) + ")");
    }
  }
  return result;
}

DatasetManifest build_dataset(const SynthConfig& cfg, const std::string& out_dir,
                              const std::string& config_hash) {
  if (cfg.n_samples < 2 * kNumTimbres) {
    throw std::invalid_argument("build_dataset: need at least " + std::to_string(2 * kNumTimbres) +
                                " samples to form pairs, got " + std::to_string(cfg.n_samples));
  }
  if (cfg.sample_rate_hz < 2.0 * cfg.f_max) {
    throw std::invalid_argument("build_dataset: sample rate below Nyquist for f_max");
  }

  DatasetManifest man;
  man.n_samples = cfg.n_samples;
  man.rng_seed = cfg.seed;
  man.sample_rate_hz = cfg.sample_rate_hz;
  man.duration_s = cfg.duration_s;
  man.f_min = cfg.f_min;
  man.f_max = cfg.f_max;
  man.amplitude = cfg.amplitude;
  man.bin_edges = make_bin_edges(cfg.f_min, cfg.f_max, cfg.n_freq_bins);
  man.spec = cfg.spec;
  man.spec.sample_rate_hz = cfg.sample_rate_hz;
  man.config_hash = config_hash;

  // Factor draws from per-sample streams; rendering itself is deterministic.
  man.factors.resize(static_cast<size_t>(cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i) {
    Rng r = Rng::stream(cfg.seed, static_cast<uint64_t>(i));
    FactorLabel lab;
    lab.timbre_class = r.uniform_int(kNumTimbres);
    lab.frequency_hz = r.uniform(cfg.f_min, cfg.f_max);
    lab.frequency_bin = quantize_frequency(lab.frequency_hz, man.bin_edges);
    man.factors[static_cast<size_t>(i)] = lab;
  }

  man.n_train_samples = static_cast<int>(std::floor(cfg.n_samples * cfg.train_fraction));

  // Pairs are formed within each split so evaluation never sees train data.
  std::vector<int> train_idx, test_idx;
  for (int i = 0; i < man.n_train_samples; ++i) train_idx.push_back(i);
  for (int i = man.n_train_samples; i < cfg.n_samples; ++i) test_idx.push_back(i);
  Rng pair_rng = Rng::stream(cfg.seed, 0x70616972);  // dedicated pairing stream
  PairingResult train_pairs = pair_samples(man.factors, train_idx, pair_rng);
  PairingResult test_pairs;
  if (!test_idx.empty()) test_pairs = pair_samples(man.factors, test_idx, pair_rng);
  man.n_train_pairs = static_cast<int>(train_pairs.pairs.size());
  man.pair_index = train_pairs.pairs;
  man.pair_index.insert(man.pair_index.end(), test_pairs.pairs.begin(), test_pairs.pairs.end());

  const Tensor<double> fb = mel_filterbank(man.spec);
  const auto render_log_mel = [&](int i) {
    WaveformSpec ws;
    ws.timbre_class = man.factors[static_cast<size_t>(i)].timbre_class;
    ws.frequency_hz = man.factors[static_cast<size_t>(i)].frequency_hz;
    ws.amplitude = cfg.amplitude;
    ws.duration_s = cfg.duration_s;
    ws.sample_rate_hz = cfg.sample_rate_hz;
    const std::vector<float> wave = render_waveform(ws);
    return waveform_to_log_mel(wave.data(), static_cast<int64_t>(wave.size()), man.spec, fb);
  };

  // Pass 1: normalization stats over the train split only. Min/max reductions
  // are order-independent, so the parallel loop stays deterministic.
  double gmin = std::numeric_limits<double>::infinity();
  double gmax = -std::numeric_limits<double>::infinity();
#pragma omp parallel for schedule(static) reduction(min : gmin) reduction(max : gmax)
  for (int i = 0; i < man.n_train_samples; ++i) {
    const Tensor<double> lm = render_log_mel(i);
    for (const double v : lm.data) {
      gmin = std::min(gmin, v);
      gmax = std::max(gmax, v);
    }
  }
  if (!(gmax > gmin)) {
    throw std::runtime_error("build_dataset: degenerate normalization stats (max <= min)");
  }
  man.stats.log_min = gmin;
  man.stats.log_max = gmax;

  // Pass 2: normalize with train stats and stream f32 blocks to disk.
  std::filesystem::create_directories(out_dir);
  const std::string tensor_path = out_dir + "/" + man.tensor_file;
  std::ofstream tf(tensor_path, std::ios::binary | std::ios::trunc);
  if (!tf) throw std::runtime_error("build_dataset: cannot write " + tensor_path);
  const int frame_elems = man.spec.n_mels * man.spec.target_frames;
  constexpr int kBatch = 256;
  std::vector<std::vector<float>> block(kBatch);
  for (int base = 0; base < cfg.n_samples; base += kBatch) {
    const int count = std::min(kBatch, cfg.n_samples - base);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < count; ++b) {
      const Tensor<double> lm = render_log_mel(base + b);
      const Tensor<float> norm = normalize_log_mel(lm, man.stats);
      block[static_cast<size_t>(b)] = norm.data;
    }
    for (int b = 0; b < count; ++b) {
      tf.write(reinterpret_cast<const char*>(block[static_cast<size_t>(b)].data()),
               static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(frame_elems)));
    }
  }
  tf.close();
  if (!tf) throw std::runtime_error("build_dataset: write failed for " + tensor_path);

  save_manifest(man, out_dir);
  return man;
}

}  // namespace psvae
