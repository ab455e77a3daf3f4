#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "psvae/evaluation.hpp"
#include "psvae/synthesis.hpp"
#include "psvae/training.hpp"

namespace psvae {

struct EvalConfig {
  int mi_bins = 20;
  uint64_t probe_seed = 0;
  ProbeConfig probe;
};

// Union of every module's settings; the single JSON document the CLI reads.
// Unknown keys are rejected.
struct RunConfig {
  SynthConfig synthesis;
  LatentConfig model;
  ObjectiveWeights objective;
  bool shared_kl_per_view = true;
  struct {
    int epochs = 100;
    double lr = 0.001;
    int batch_size = 256;
    uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int checkpoint_every = 25;
    bool use_double = false;
  } training;
  EvalConfig evaluation;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

// FNV-1a 64 over the canonical (key-sorted) serialization, as 16 hex chars.
std::string run_config_hash(const RunConfig& cfg);

// Writes config_snapshot.json (resolved config + hash) beside outputs.
void write_config_snapshot(const RunConfig& cfg, const std::string& out_dir);

TrainConfig make_train_config(const RunConfig& cfg);

}  // namespace psvae
