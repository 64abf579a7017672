#pragma once

// Versioned binary checkpoint container:
//   "PS4C" | u32 version | u64 config_len | config text (key = value lines)
//   u64 n_params
//   per param: u32 name_len | name | u32 ndim | u32 dims[] | f32 data[] (LE)
//   u8 has_optimizer
//   if set: u64 step_count | u64 skipped | per param f32 m[] | f32 v[]
//   u64 epoch | u64 rng_seed
// Round-trip save/load is bit-exact: weights are stored as raw f32 and the
// config text serialization is canonical.

#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "ps4pro/flownet.hpp"
#include "ps4pro/optim.hpp"

namespace ps4pro {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

struct Checkpoint {
  ModelWeights<float> weights;
  std::optional<AdamWState<float>> optimizer;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}
inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

inline void write_f32_array(std::ostream& out, const Tensor<float>& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
}
inline void read_f32_array(std::istream& in, Tensor<float>& t) {
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write("PS4C", 4);
  detail::write_u32(out, 1);

  KeyValues kv = ckpt.weights.config.to_key_values();
  kv.set("model.version", ckpt.weights.version);
  const std::string cfg = kv.serialize();
  detail::write_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  detail::write_u64(out, ckpt.weights.values.size());
  for (std::size_t i = 0; i < ckpt.weights.values.size(); ++i) {
    const std::string& name = ckpt.weights.names[i];
    detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Tensor<float>& t = *ckpt.weights.values[i];
    detail::write_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) detail::write_u32(out, static_cast<std::uint32_t>(t.dim(d)));
    detail::write_f32_array(out, t);
  }

  out.put(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    detail::write_u64(out, static_cast<std::uint64_t>(ckpt.optimizer->step_count));
    detail::write_u64(out, static_cast<std::uint64_t>(ckpt.optimizer->skipped_steps));
    for (const auto& t : ckpt.optimizer->m) detail::write_f32_array(out, t);
    for (const auto& t : ckpt.optimizer->v) detail::write_f32_array(out, t);
  }

  detail::write_u64(out, ckpt.epoch);
  detail::write_u64(out, ckpt.seed);
  if (!out) throw IoError("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PS4C", 4) != 0)
    throw FormatError("bad checkpoint magic: " + path);
  const std::uint32_t version = detail::read_u32(in);
  if (version != 1) throw FormatError("unsupported checkpoint version");

  const std::uint64_t cfg_len = detail::read_u64(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  KeyValues kv = KeyValues::parse(cfg);

  Checkpoint ckpt;
  ckpt.weights.config = NetConfig::from_key_values(kv);
  ckpt.weights.version = kv.get_or("model.version", "1");

  const std::uint64_t n = detail::read_u64(in);
  ckpt.weights.names.reserve(n);
  ckpt.weights.values.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = detail::read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t ndim = detail::read_u32(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(detail::read_u32(in));
    auto t = std::make_shared<Tensor<float>>(shape);
    detail::read_f32_array(in, *t);
    ckpt.weights.names.push_back(std::move(name));
    ckpt.weights.values.push_back(std::move(t));
  }

  char has_opt = 0;
  in.get(has_opt);
  if (has_opt) {
    AdamWState<float> state = AdamWState<float>::shaped_like(ckpt.weights.values);
    state.step_count = static_cast<long long>(detail::read_u64(in));
    state.skipped_steps = static_cast<long long>(detail::read_u64(in));
    for (auto& t : state.m) detail::read_f32_array(in, t);
    for (auto& t : state.v) detail::read_f32_array(in, t);
    ckpt.optimizer = std::move(state);
  }

  ckpt.epoch = detail::read_u64(in);
  ckpt.seed = detail::read_u64(in);
  if (!in) throw FormatError("truncated checkpoint: " + path);
  return ckpt;
}

}  // namespace ps4pro
