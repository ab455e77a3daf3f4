#include "psvae/corpus.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace psvae {

namespace {

nlohmann::json spec_to_json(const SpectrogramConfig& s) {
  return nlohmann::json{{"n_fft", s.n_fft},           {"hop", s.hop},
                        {"n_mels", s.n_mels},         {"fmin_hz", s.fmin_hz},
                        {"fmax_hz", s.fmax_hz},       {"log_floor", s.log_floor},
                        {"target_frames", s.target_frames}, {"sample_rate_hz", s.sample_rate_hz}};
}

SpectrogramConfig spec_from_json(const nlohmann::json& j) {
  SpectrogramConfig s;
  s.n_fft = j.at("n_fft").get<int>();
  s.hop = j.at("hop").get<int>();
  s.n_mels = j.at("n_mels").get<int>();
  s.fmin_hz = j.at("fmin_hz").get<double>();
  s.fmax_hz = j.at("fmax_hz").get<double>();
  s.log_floor = j.at("log_floor").get<double>();
  s.target_frames = j.at("target_frames").get<int>();
  s.sample_rate_hz = j.at("sample_rate_hz").get<int>();
  return s;
}

}  // namespace

void save_manifest(const DatasetManifest& man, const std::string& dir) {
  nlohmann::json j;
  j["version"] = man.version;
  j["n_samples"] = man.n_samples;
  j["rng_seed"] = man.rng_seed;
  j["sample_rate_hz"] = man.sample_rate_hz;
  j["duration_s"] = man.duration_s;
  j["f_min"] = man.f_min;
  j["f_max"] = man.f_max;
  j["amplitude"] = man.amplitude;
  j["bin_edges"] = man.bin_edges;
  j["normalization_stats"] = {{"log_min", man.stats.log_min}, {"log_max", man.stats.log_max}};
  j["n_train_samples"] = man.n_train_samples;
  j["n_train_pairs"] = man.n_train_pairs;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : man.pair_index) pairs.push_back({p.first, p.second});
  j["pair_index"] = std::move(pairs);
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& f : man.factors) factors.push_back({f.timbre_class, f.frequency_hz, f.frequency_bin});
  j["factors"] = std::move(factors);
  j["spectrogram"] = spec_to_json(man.spec);
  j["tensor"] = {{"file", man.tensor_file},
                 {"dtype", "f32"},
                 {"shape", {man.n_samples, man.spec.n_mels, man.spec.target_frames}}};
  j["config_hash"] = man.config_hash;

  std::ofstream f(dir + "/manifest.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest in " + dir);
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("manifest write failed in " + dir);
}

DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("cannot open manifest: " + dir + "/manifest.json");
  nlohmann::json j;
  f >> j;

  DatasetManifest man;
  man.version = j.at("version").get<int>();
  man.n_samples = j.at("n_samples").get<int>();
  man.rng_seed = j.at("rng_seed").get<uint64_t>();
  man.sample_rate_hz = j.at("sample_rate_hz").get<int>();
  man.duration_s = j.at("duration_s").get<double>();
  man.f_min = j.at("f_min").get<double>();
  man.f_max = j.at("f_max").get<double>();
  man.amplitude = j.at("amplitude").get<double>();
  man.bin_edges = j.at("bin_edges").get<std::vector<double>>();
  man.stats.log_min = j.at("normalization_stats").at("log_min").get<double>();
  man.stats.log_max = j.at("normalization_stats").at("log_max").get<double>();
  man.n_train_samples = j.at("n_train_samples").get<int>();
  man.n_train_pairs = j.at("n_train_pairs").get<int>();
  for (const auto& p : j.at("pair_index")) {
    man.pair_index.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  }
  for (const auto& fo : j.at("factors")) {
    FactorLabel lab;
    lab.timbre_class = fo.at(0).get<int>();
    lab.frequency_hz = fo.at(1).get<double>();
    lab.frequency_bin = fo.at(2).get<int>();
    man.factors.push_back(lab);
  }
  man.spec = spec_from_json(j.at("spectrogram"));
  man.tensor_file = j.at("tensor").at("file").get<std::string>();
  man.config_hash = j.value("config_hash", "");
  return man;
}

Corpus load_corpus(const std::string& dir) {
  Corpus c;
  c.manifest = load_manifest(dir);
  const int frame = c.manifest.spec.n_mels * c.manifest.spec.target_frames;
  c.spectrograms = Tensor<float>({c.manifest.n_samples, c.manifest.spec.n_mels, c.manifest.spec.target_frames});
  std::ifstream f(dir + "/" + c.manifest.tensor_file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open tensor block: " + dir + "/" + c.manifest.tensor_file);
  f.read(reinterpret_cast<char*>(c.spectrograms.ptr()),
         static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(frame) * static_cast<size_t>(c.manifest.n_samples)));
  if (!f) throw std::runtime_error("tensor block truncated: " + dir + "/" + c.manifest.tensor_file);
  return c;
}

}  // namespace psvae
