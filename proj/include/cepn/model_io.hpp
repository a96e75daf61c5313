#pragma once

#include <cstring>
#include <string>

#include "cepn/prognet.hpp"
#include "cepn/serialize.hpp"

namespace cepn {

inline constexpr char kCheckpointMagic[4] = {'C', 'E', 'P', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Checkpoint layout: magic, version, config block, then every state tensor
// (declaration order, running statistics included) as a shape header plus
// little-endian doubles.
inline void save_checkpoint(const Model& m, const std::string& path) {
  std::string buf;
  buf.append(kCheckpointMagic, 4);
  detail::put_u32_le(buf, kCheckpointVersion);
  const ModelConfig& c = m.config;
  detail::put_u32_le(buf, static_cast<std::uint32_t>(c.variant));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(c.encoder_width));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(c.hidden_ch));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(c.input_extent));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(c.phases));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(c.channels_per_phase));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(c.fusion_ch));
  detail::put_f64_le(buf, c.loss_weight_margin);
  detail::put_u32_le(buf, c.pool_states ? 1 : 0);
  for (const Tensor* t : state_tensors(m)) {
    detail::put_u32_le(buf, static_cast<std::uint32_t>(t->ndim()));
    for (std::size_t k = 0; k < t->ndim(); ++k)
      detail::put_u32_le(buf, static_cast<std::uint32_t>(t->shape()[k]));
    for (std::size_t i = 0; i < t->size(); ++i) detail::put_f64_le(buf, (*t)[i]);
  }
  detail::write_file_bytes(path, buf);
}

inline Model load_checkpoint(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path);
  const std::string magic = r.raw(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
    throw data_error(path + ": bad magic at offset 0 (expected CEPN)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw data_error(path + ": unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  const std::uint32_t variant = r.u32("variant");
  if (variant > static_cast<std::uint32_t>(Variant::margin_only_cnn))
    throw data_error(path + ": invalid variant id " + std::to_string(variant));
  c.variant = static_cast<Variant>(variant);
  c.encoder_width = r.u32("encoder_width");
  c.hidden_ch = r.u32("hidden_ch");
  c.input_extent = r.u32("input_extent");
  c.phases = r.u32("phases");
  c.channels_per_phase = r.u32("channels_per_phase");
  c.fusion_ch = r.u32("fusion_ch");
  c.loss_weight_margin = r.f64("loss_weight_margin");
  c.pool_states = r.u32("pool_states") != 0;

  Rng rng(0);  // structure only; every tensor is overwritten below
  Model m = make_model(c, rng);
  for (Tensor* t : state_tensors(m)) {
    const std::uint32_t ndim = r.u32("tensor rank");
    if (ndim != t->ndim())
      throw data_error(path + ": tensor rank " + std::to_string(ndim) + " != expected " +
                       std::to_string(t->ndim()) + " at offset " +
                       std::to_string(r.offset() - 4));
    for (std::size_t k = 0; k < t->ndim(); ++k) {
      const std::uint32_t e = r.u32("tensor extent");
      if (e != t->shape()[k])
        throw data_error(path + ": tensor extent " + std::to_string(e) + " != expected " +
                         std::to_string(t->shape()[k]) + " at offset " +
                         std::to_string(r.offset() - 4));
    }
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = r.f64("tensor data");
  }
  if (r.offset() != bytes.size())
    throw data_error(path + ": " + std::to_string(bytes.size() - r.offset()) +
                     " trailing bytes after checkpoint payload");
  return m;
}

}  // namespace cepn
