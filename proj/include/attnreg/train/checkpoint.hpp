#pragma once

// Single-file training artifact: every named parameter array, a metadata
// record (phase, epoch, config, lineage, rng state), and optimizer moments.
// The byte layout is exact — save → load → save reproduces identical files —
// so SHA-256 digests of saved checkpoints can serve as lineage ids.

#include "attnreg/nn/module.hpp"
#include "attnreg/train/optimizer.hpp"
#include "attnreg/util/sha256.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <unordered_map>

namespace attnreg::train {

template <typename S>
struct Checkpoint {
  std::string phase;  // "phase1" | "phase2" | "full_mtl"
  int epoch = 0;
  std::string config_json;     // run configuration used to produce this artifact
  std::string parent_digest;   // file digest of the preceding phase ("" if none)
  std::string rng_state;       // trainer rng stream, serialized
  struct ParamEntry {
    std::string name;
    nn::Shape shape;
    nn::ArrayX<S> value;
  };
  std::vector<ParamEntry> params;
  std::vector<OptimizerSlot<S>> opt;

  std::string config_digest() const { return util::sha256_hex(config_json); }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_str(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out.append(s);
}
template <typename S>
void put_array(std::string& out, const nn::ArrayX<S>& a) {
  put_u64(out, std::uint64_t(a.size()));
  out.append(reinterpret_cast<const char*>(a.data()), std::size_t(a.size()) * sizeof(S));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
  template <typename S>
  nn::ArrayX<S> array() {
    const auto n = u64();
    need(n * sizeof(S));
    const auto count = Eigen::Index(n);
    nn::ArrayX<S> a(count);
    std::memcpy(a.data(), buf.data() + pos, n * sizeof(S));
    pos += n * sizeof(S);
    return a;
  }
};

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'A', 'R', 'D', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
std::string serialize_checkpoint(const Checkpoint<S>& c) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, std::uint32_t(sizeof(S)));

  nlohmann::json meta;
  meta["phase"] = c.phase;
  meta["epoch"] = c.epoch;
  meta["config_json"] = c.config_json;
  meta["config_digest"] = c.config_digest();
  meta["parent_digest"] = c.parent_digest;
  meta["rng_state"] = c.rng_state;
  detail::put_str(out, meta.dump());

  detail::put_u64(out, c.params.size());
  for (const auto& p : c.params) {
    detail::put_str(out, p.name);
    detail::put_u32(out, std::uint32_t(p.shape.size()));
    for (int d : p.shape) detail::put_u32(out, std::uint32_t(d));
    detail::put_array(out, p.value);
  }
  detail::put_u64(out, c.opt.size());
  for (const auto& s : c.opt) {
    detail::put_str(out, s.name);
    detail::put_u64(out, std::uint64_t(s.t));
    detail::put_array(out, s.m);
    detail::put_array(out, s.v);
  }
  return out;
}

template <typename S>
Checkpoint<S> deserialize_checkpoint(const std::string& bytes) {
  detail::Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  r.pos = 4;
  if (r.u32() != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  if (r.u32() != sizeof(S))
    throw std::runtime_error("checkpoint: scalar width does not match this build");

  Checkpoint<S> c;
  const auto meta = nlohmann::json::parse(r.str());
  c.phase = meta.at("phase").get<std::string>();
  c.epoch = meta.at("epoch").get<int>();
  c.config_json = meta.at("config_json").get<std::string>();
  c.parent_digest = meta.at("parent_digest").get<std::string>();
  c.rng_state = meta.at("rng_state").get<std::string>();

  const auto n_params = r.u64();
  c.params.reserve(n_params);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    typename Checkpoint<S>::ParamEntry p;
    p.name = r.str();
    const auto nd = r.u32();
    p.shape.resize(nd);
    for (auto& d : p.shape) d = int(r.u32());
    p.value = r.template array<S>();
    if (p.value.size() != nn::numel(p.shape))
      throw std::runtime_error("checkpoint: shape/value size mismatch for " + p.name);
    c.params.push_back(std::move(p));
  }
  const auto n_opt = r.u64();
  c.opt.reserve(n_opt);
  for (std::uint64_t i = 0; i < n_opt; ++i) {
    OptimizerSlot<S> s;
    s.name = r.str();
    s.t = std::int64_t(r.u64());
    s.m = r.template array<S>();
    s.v = r.template array<S>();
    c.opt.push_back(std::move(s));
  }
  return c;
}

// returns the SHA-256 digest of the written bytes (the checkpoint's identity)
template <typename S>
std::string save_checkpoint(const std::string& path, const Checkpoint<S>& c) {
  const std::string bytes = serialize_checkpoint(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
  return util::sha256_hex(bytes);
}

template <typename S>
struct LoadedCheckpoint {
  Checkpoint<S> ckpt;
  std::string digest;  // of the file bytes, matches save_checkpoint's return
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return {deserialize_checkpoint<S>(bytes), util::sha256_hex(bytes)};
}

// snapshot every registered parameter, in registration order
template <typename S>
std::vector<typename Checkpoint<S>::ParamEntry> capture_params(const nn::ParamRegistry<S>& reg) {
  std::vector<typename Checkpoint<S>::ParamEntry> out;
  out.reserve(reg.size());
  for (const auto& p : reg.items())
    out.push_back({p.name, p.tensor.shape(), p.tensor.value()});
  return out;
}

// copy checkpoint parameters into a registry; every registry entry must be
// covered with a matching shape
template <typename S>
void apply_params(const Checkpoint<S>& c, nn::ParamRegistry<S>& reg) {
  std::unordered_map<std::string, const typename Checkpoint<S>::ParamEntry*> by_name;
  for (const auto& p : c.params) by_name[p.name] = &p;
  for (const auto& item : reg.items()) {
    const auto it = by_name.find(item.name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing parameter " + item.name);
    if (it->second->shape != item.tensor.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + item.name);
    reg.at(item.name).value() = it->second->value;
  }
}

}  // namespace attnreg::train
