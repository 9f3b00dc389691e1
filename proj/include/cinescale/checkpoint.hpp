#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinescale/dit.hpp"
#include "cinescale/lora.hpp"
#include "cinescale/unet.hpp"

namespace cinescale {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[9] = "CSKT0001";

struct TensorRecord {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  bool operator==(const TensorRecord&) const = default;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  const TensorRecord& get(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw std::invalid_argument("checkpoint has no tensor '" + name + "'");
  }
};

/// Magic, u64 LE header length, JSON header, then LE f64 data.
inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["meta"] = ck.meta;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : ck.tensors) {
    std::size_t n = 1;
    for (auto s : t.shape) n *= s;
    if (n != t.data.size()) throw std::invalid_argument("checkpoint tensor '" + t.name + "' shape/data mismatch");
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += n * sizeof(double);
  }
  const std::string hdr = header.dump();
  std::string out(kCheckpointMagic, 8);
  const std::uint64_t len = hdr.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += hdr;
  for (const auto& t : ck.tensors)
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic) != 0)
    throw std::invalid_argument("not a checkpoint (bad magic)");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (len > bytes.size() - 16) throw std::invalid_argument("checkpoint header truncated");
  const auto header = nlohmann::json::parse(bytes.substr(16, len));
  const std::size_t base = 16 + len;
  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("tensors")) {
    TensorRecord t;
    t.name = e.at("name").get<std::string>();
    t.shape = e.at("shape").get<std::vector<std::size_t>>();
    const auto off = e.at("offset").get<std::size_t>();
    std::size_t n = 1;
    for (auto s : t.shape) n *= s;
    if (base + off + n * sizeof(double) > bytes.size())
      throw std::invalid_argument("checkpoint tensor '" + t.name + "' extends past end of file");
    t.data.resize(n);
    std::memcpy(t.data.data(), bytes.data() + base + off, n * sizeof(double));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }
inline Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

template <class W>
std::vector<TensorRecord> collect_params(W& w) {
  std::vector<TensorRecord> out;
  w.visit([&](const std::string& n, const std::vector<std::size_t>& s, std::vector<double>& d) {
    out.push_back({n, s, d});
  });
  return out;
}

template <class W>
void load_params(W& w, const Checkpoint& ck) {
  w.visit([&](const std::string& n, const std::vector<std::size_t>& s, std::vector<double>& d) {
    const auto& t = ck.get(n);
    if (t.shape != s) throw std::invalid_argument("checkpoint tensor '" + n + "' has the wrong shape");
    d = t.data;
  });
}

// ---------------------------------------------------------------------------
// Model configs <-> JSON

inline nlohmann::json to_json(const DitConfig& c) {
  return {{"latent_channels", c.latent_channels}, {"patch", c.patch}, {"hidden", c.hidden}, {"heads", c.heads},
          {"axis_dims", c.axis_dims}, {"mlp", c.mlp}, {"blocks", c.blocks}, {"cond_dim", c.cond_dim},
          {"time_dim", c.time_dim}, {"max_tokens", c.max_tokens}, {"rope_base", c.rope_base},
          {"train_extent", c.train_extent}};
}

inline DitConfig dit_config_from_json(const nlohmann::json& j) {
  DitConfig c;
  c.latent_channels = j.at("latent_channels");
  c.patch = j.at("patch");
  c.hidden = j.at("hidden");
  c.heads = j.at("heads");
  c.axis_dims = j.at("axis_dims");
  c.mlp = j.at("mlp");
  c.blocks = j.at("blocks");
  c.cond_dim = j.at("cond_dim");
  c.time_dim = j.at("time_dim");
  c.max_tokens = j.at("max_tokens");
  c.rope_base = j.at("rope_base");
  c.train_extent = j.at("train_extent");
  c.validate();
  return c;
}

inline nlohmann::json to_json(const UnetConfig& c) {
  return {{"latent_channels", c.latent_channels}, {"width0", c.width0}, {"width1", c.width1}, {"groups", c.groups},
          {"key_dim", c.key_dim}, {"cond_dim", c.cond_dim}, {"time_dim", c.time_dim}};
}

inline UnetConfig unet_config_from_json(const nlohmann::json& j) {
  UnetConfig c;
  c.latent_channels = j.at("latent_channels");
  c.width0 = j.at("width0");
  c.width1 = j.at("width1");
  c.groups = j.at("groups");
  c.key_dim = j.at("key_dim");
  c.cond_dim = j.at("cond_dim");
  c.time_dim = j.at("time_dim");
  return c;
}

inline Checkpoint dit_checkpoint(const DitWeights& w) {
  DitWeights copy = w;
  Checkpoint ck;
  ck.meta = {{"kind", "dit"}, {"config", to_json(w.config)}};
  ck.tensors = collect_params(copy);
  return ck;
}

inline DitWeights dit_from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.value("kind", "") != "dit") throw std::invalid_argument("checkpoint does not hold a DiT model");
  DitWeights w = DitWeights::zeros(dit_config_from_json(ck.meta.at("config")));
  load_params(w, ck);
  return w;
}

inline Checkpoint unet_checkpoint(const UnetWeights& w) {
  UnetWeights copy = w;
  Checkpoint ck;
  ck.meta = {{"kind", "unet"}, {"config", to_json(w.config)}};
  ck.tensors = collect_params(copy);
  return ck;
}

inline UnetWeights unet_from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.value("kind", "") != "unet") throw std::invalid_argument("checkpoint does not hold a UNet model");
  UnetWeights w = UnetWeights::zeros(unet_config_from_json(ck.meta.at("config")));
  load_params(w, ck);
  return w;
}

inline Checkpoint lora_checkpoint(const LoraSet& set) {
  Checkpoint ck;
  ck.meta = {{"kind", "lora"}, {"adapters", nlohmann::json::array()}};
  for (const auto& a : set.adapters) {
    ck.meta["adapters"].push_back({{"target", a.target}, {"rank", a.rank()}, {"scale", a.scale}});
    ck.tensors.push_back({a.target + ".down", {a.down.rows, a.down.cols}, a.down.data});
    ck.tensors.push_back({a.target + ".up", {a.up.rows, a.up.cols}, a.up.data});
  }
  return ck;
}

inline LoraSet lora_from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.value("kind", "") != "lora") throw std::invalid_argument("checkpoint does not hold LoRA adapters");
  LoraSet set;
  for (const auto& e : ck.meta.at("adapters")) {
    LoraAdapter a;
    a.target = e.at("target").get<std::string>();
    a.scale = e.at("scale").get<double>();
    const auto& d = ck.get(a.target + ".down");
    const auto& u = ck.get(a.target + ".up");
    if (d.shape.size() != 2 || u.shape.size() != 2) throw std::invalid_argument("LoRA tensors must be 2-D");
    a.down = Mat(d.shape[0], d.shape[1]);
    a.down.data = d.data;
    a.up = Mat(u.shape[0], u.shape[1]);
    a.up.data = u.data;
    set.adapters.push_back(std::move(a));
  }
  return set;
}

inline Checkpoint latent_checkpoint(const LatentTensor& z) {
  Checkpoint ck;
  ck.meta = {{"kind", "latent"}, {"level", z.level()}, {"temporal", z.temporal()}};
  std::vector<std::size_t> shape{z.channels()};
  if (z.temporal()) shape.push_back(z.frames());
  shape.push_back(z.height());
  shape.push_back(z.width());
  ck.tensors.push_back({"latent", shape, z.storage()});
  return ck;
}

}  // namespace cinescale
