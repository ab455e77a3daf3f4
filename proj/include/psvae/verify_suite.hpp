#pragma once

#include <string>
#include <vector>

#include "psvae/tensor.hpp"

namespace psvae {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Closed-form KL, PoE fusion, mel formula, and quantizer boundary oracles
// (64-bit, exact tolerances).
std::vector<CheckResult> verify_unit_oracles();

// Per-layer reverse-mode gradients against central finite differences on
// randomized small shapes, 64-bit, rel tol 1e-4.
std::vector<CheckResult> verify_layer_gradients();

// Full negative-ELBO gradient on a real 2-pair batch, 64-bit; runs the paper
// defaults and an all-terms weighting. Rel tol 1e-4.
std::vector<CheckResult> verify_full_elbo_gradient();

// KL-decomposition identity at M = N_data = 256 over 100 resamplings (3 SE),
// exact tc == 0 for one-dimensional latents, and reparameterization
// coefficient checks.
std::vector<CheckResult> verify_estimator_suite();

// Everything above, in order.
std::vector<CheckResult> verify_all();

// Builds a deterministic in-memory 2-pair spectrogram batch (two timbres,
// two frequencies each) for gradient checks; x1/x2 are [2,1,64,64].
void make_tiny_pair_batch(Tensor<double>& x1, Tensor<double>& x2);

}  // namespace psvae
