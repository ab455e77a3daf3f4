#include "psvae/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace psvae {

namespace {
constexpr char kMagic[8] = {'P', 'S', 'V', 'A', 'E', 'C', 'K', '1'};
}

void save_checkpoint(const std::string& path, const ParameterStore<float>& params,
                     const CheckpointMeta& meta) {
  nlohmann::json header;
  header["version"] = 1;
  header["config_hash"] = meta.config_hash;
  header["epoch"] = meta.epoch;
  header["step_count"] = params.step_count();
  nlohmann::json plist = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& name : params.names()) {
    const auto& e = params.at(name);
    nlohmann::json p;
    p["name"] = name;
    p["shape"] = e.value.shape;
    p["offset"] = offset;
    p["size"] = e.value.size();
    plist.push_back(p);
    offset += static_cast<uint64_t>(e.value.size());
  }
  header["params"] = plist;
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& name : params.names()) {
    const auto& e = params.at(name);
    f.write(reinterpret_cast<const char*>(e.value.ptr()),
            static_cast<std::streamsize>(e.value.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

namespace {

nlohmann::json read_header(std::ifstream& f, const std::string& path) {
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::string(magic, 8) != std::string(kMagic, 8)) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  return nlohmann::json::parse(hs);
}

}  // namespace

CheckpointMeta load_checkpoint(const std::string& path, ParameterStore<float>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  const nlohmann::json header = read_header(f, path);

  CheckpointMeta meta;
  meta.config_hash = header.at("config_hash").get<std::string>();
  meta.epoch = header.at("epoch").get<int>();
  params.set_step_count(header.value("step_count", int64_t{0}));
  for (const auto& p : header.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const std::vector<int> shape = p.at("shape").get<std::vector<int>>();
    Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
    if (params.has(name)) {
      auto& e = params.at(name);
      if (e.value.shape != shape) {
        throw std::runtime_error("checkpoint shape mismatch for '" + name + "': file " +
                                 shape_str(shape) + " vs model " + shape_str(e.value.shape));
      }
      e.value = std::move(t);
    } else {
      params.add(name, std::move(t));
    }
  }
  return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  const nlohmann::json header = read_header(f, path);
  CheckpointMeta meta;
  meta.config_hash = header.at("config_hash").get<std::string>();
  meta.epoch = header.at("epoch").get<int>();
  return meta;
}

}  // namespace psvae
