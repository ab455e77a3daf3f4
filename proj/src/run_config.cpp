#include "psvae/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace psvae {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw std::invalid_argument("config: unknown key '" + where + "." + it.key() + "'");
    }
  }
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  reject_unknown(j, {"synthesis", "features", "model", "objective", "training", "evaluation"}, "");

  if (j.contains("synthesis")) {
    const auto& s = j.at("synthesis");
    reject_unknown(s,
                   {"n_samples", "seed", "f_min", "f_max", "sample_rate_hz", "duration_s",
                    "amplitude", "n_freq_bins", "train_fraction"},
                   "synthesis");
    maybe(s, "n_samples", cfg.synthesis.n_samples);
    maybe(s, "seed", cfg.synthesis.seed);
    maybe(s, "f_min", cfg.synthesis.f_min);
    maybe(s, "f_max", cfg.synthesis.f_max);
    maybe(s, "sample_rate_hz", cfg.synthesis.sample_rate_hz);
    maybe(s, "duration_s", cfg.synthesis.duration_s);
    maybe(s, "amplitude", cfg.synthesis.amplitude);
    maybe(s, "n_freq_bins", cfg.synthesis.n_freq_bins);
    maybe(s, "train_fraction", cfg.synthesis.train_fraction);
  }
  if (j.contains("features")) {
    const auto& f = j.at("features");
    reject_unknown(f, {"n_fft", "hop", "n_mels", "fmin_hz", "fmax_hz", "log_floor", "target_frames"},
                   "features");
    maybe(f, "n_fft", cfg.synthesis.spec.n_fft);
    maybe(f, "hop", cfg.synthesis.spec.hop);
    maybe(f, "n_mels", cfg.synthesis.spec.n_mels);
    maybe(f, "fmin_hz", cfg.synthesis.spec.fmin_hz);
    maybe(f, "fmax_hz", cfg.synthesis.spec.fmax_hz);
    maybe(f, "log_floor", cfg.synthesis.spec.log_floor);
    maybe(f, "target_frames", cfg.synthesis.spec.target_frames);
  }
  cfg.synthesis.spec.sample_rate_hz = cfg.synthesis.sample_rate_hz;

  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"d_p", "d_s"}, "model");
    maybe(m, "d_p", cfg.model.d_p);
    maybe(m, "d_s", cfg.model.d_s);
  }
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    reject_unknown(o, {"alpha", "beta", "gamma", "shared_kl_per_view"}, "objective");
    maybe(o, "alpha", cfg.objective.alpha);
    maybe(o, "beta", cfg.objective.beta);
    maybe(o, "gamma", cfg.objective.gamma);
    maybe(o, "shared_kl_per_view", cfg.shared_kl_per_view);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    reject_unknown(t,
                   {"epochs", "lr", "batch_size", "seed", "adam_beta1", "adam_beta2", "adam_eps",
                    "checkpoint_every", "use_double"},
                   "training");
    maybe(t, "epochs", cfg.training.epochs);
    maybe(t, "lr", cfg.training.lr);
    maybe(t, "batch_size", cfg.training.batch_size);
    maybe(t, "seed", cfg.training.seed);
    maybe(t, "adam_beta1", cfg.training.adam_beta1);
    maybe(t, "adam_beta2", cfg.training.adam_beta2);
    maybe(t, "adam_eps", cfg.training.adam_eps);
    maybe(t, "checkpoint_every", cfg.training.checkpoint_every);
    maybe(t, "use_double", cfg.training.use_double);
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    reject_unknown(e, {"mi_bins", "probe_seed", "probe_steps", "probe_lr", "probe_train_fraction"},
                   "evaluation");
    maybe(e, "mi_bins", cfg.evaluation.mi_bins);
    maybe(e, "probe_seed", cfg.evaluation.probe_seed);
    maybe(e, "probe_steps", cfg.evaluation.probe.steps);
    maybe(e, "probe_lr", cfg.evaluation.probe.lr);
    maybe(e, "probe_train_fraction", cfg.evaluation.probe.train_fraction);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  f >> j;
  return parse_run_config(j);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["synthesis"] = {{"n_samples", cfg.synthesis.n_samples},
                    {"seed", cfg.synthesis.seed},
                    {"f_min", cfg.synthesis.f_min},
                    {"f_max", cfg.synthesis.f_max},
                    {"sample_rate_hz", cfg.synthesis.sample_rate_hz},
                    {"duration_s", cfg.synthesis.duration_s},
                    {"amplitude", cfg.synthesis.amplitude},
                    {"n_freq_bins", cfg.synthesis.n_freq_bins},
                    {"train_fraction", cfg.synthesis.train_fraction}};
  j["features"] = {{"n_fft", cfg.synthesis.spec.n_fft},
                   {"hop", cfg.synthesis.spec.hop},
                   {"n_mels", cfg.synthesis.spec.n_mels},
                   {"fmin_hz", cfg.synthesis.spec.fmin_hz},
                   {"fmax_hz", cfg.synthesis.spec.fmax_hz},
                   {"log_floor", cfg.synthesis.spec.log_floor},
                   {"target_frames", cfg.synthesis.spec.target_frames}};
  j["model"] = {{"d_p", cfg.model.d_p}, {"d_s", cfg.model.d_s}};
  j["objective"] = {{"alpha", cfg.objective.alpha},
                    {"beta", cfg.objective.beta},
                    {"gamma", cfg.objective.gamma},
                    {"shared_kl_per_view", cfg.shared_kl_per_view}};
  j["training"] = {{"epochs", cfg.training.epochs},
                   {"lr", cfg.training.lr},
                   {"batch_size", cfg.training.batch_size},
                   {"seed", cfg.training.seed},
                   {"adam_beta1", cfg.training.adam_beta1},
                   {"adam_beta2", cfg.training.adam_beta2},
                   {"adam_eps", cfg.training.adam_eps},
                   {"checkpoint_every", cfg.training.checkpoint_every},
                   {"use_double", cfg.training.use_double}};
  j["evaluation"] = {{"mi_bins", cfg.evaluation.mi_bins},
                     {"probe_seed", cfg.evaluation.probe_seed},
                     {"probe_steps", cfg.evaluation.probe.steps},
                     {"probe_lr", cfg.evaluation.probe.lr},
                     {"probe_train_fraction", cfg.evaluation.probe.train_fraction}};
  return j;
}

std::string run_config_hash(const RunConfig& cfg) {
  const std::string s = run_config_to_json(cfg).dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_config_snapshot(const RunConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json j = run_config_to_json(cfg);
  j["config_hash"] = run_config_hash(cfg);
  std::ofstream f(out_dir + "/config_snapshot.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write config snapshot in " + out_dir);
  f << j.dump(2) << "\n";
}

TrainConfig make_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.training.epochs;
  t.lr = cfg.training.lr;
  t.batch_size = cfg.training.batch_size;
  t.seed = cfg.training.seed;
  t.weights = cfg.objective;
  t.shared_kl_per_view = cfg.shared_kl_per_view;
  t.latent = cfg.model;
  t.adam_beta1 = cfg.training.adam_beta1;
  t.adam_beta2 = cfg.training.adam_beta2;
  t.adam_eps = cfg.training.adam_eps;
  t.checkpoint_every = cfg.training.checkpoint_every;
  t.use_double = cfg.training.use_double;
  t.config_hash = run_config_hash(cfg);
  return t;
}

}  // namespace psvae
