#pragma once

#include <string>

#include "psvae/synthesis.hpp"
#include "psvae/tensor.hpp"

namespace psvae {

// A loaded dataset: manifest plus the normalized spectrogram block
// [n_samples, n_mels, target_frames].
struct Corpus {
  DatasetManifest manifest;
  Tensor<float> spectrograms;

  const float* sample(int i) const {
    const int frame = manifest.spec.n_mels * manifest.spec.target_frames;
    return spectrograms.ptr() + static_cast<int64_t>(i) * frame;
  }
  int sample_elems() const { return manifest.spec.n_mels * manifest.spec.target_frames; }
};

void save_manifest(const DatasetManifest& man, const std::string& dir);
DatasetManifest load_manifest(const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace psvae
