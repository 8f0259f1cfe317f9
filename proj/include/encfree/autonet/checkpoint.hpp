#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "encfree/autonet/network.hpp"
#include "encfree/data/binary.hpp"
#include "encfree/latents/latent_table.hpp"
#include "encfree/optimize/optimizers.hpp"

namespace encfree::autonet {

// Named networks, latent tables and optimizer states of one run. Byte
// layout: docs/FORMATS.md.
struct Checkpoint {
  std::map<std::string, Network> networks;
  std::map<std::string, latents::LatentTable> latents;
  std::map<std::string, optimize::Optimizer> optimizers;
};

inline constexpr char kCheckpointMagic[8] = {'E', 'N', 'C', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

enum EntryKind : std::uint8_t { kNetwork = 1, kLatents = 2, kOptimizer = 3 };

inline void write_layer(data::ByteWriter& w, const LayerSpec& spec) {
  w.u8(static_cast<std::uint8_t>(spec.index()));
  if (const auto* d = std::get_if<Dense>(&spec)) {
    w.u64(d->in_features);
    w.u64(d->out_features);
    w.u8(d->bias);
  } else if (const auto* md = std::get_if<MaskedDense>(&spec)) {
    w.u64(md->in_features);
    w.u64(md->out_features);
    w.u8(md->bias);
    w.tensor(md->mask);
  } else if (const auto* c = std::get_if<Conv2d>(&spec)) {
    for (std::size_t v : {c->in_channels, c->out_channels, c->kernel, c->stride, c->padding}) w.u64(v);
    w.u8(c->bias);
  } else if (const auto* t = std::get_if<ConvTranspose2d>(&spec)) {
    for (std::size_t v : {t->in_channels, t->out_channels, t->kernel, t->stride, t->padding}) w.u64(v);
    w.u8(t->bias);
  } else if (const auto* l = std::get_if<LeakyRelu>(&spec)) {
    w.f64(l->slope);
  } else if (const auto* r = std::get_if<Reshape>(&spec)) {
    w.shape(r->target);
  }
}

inline LayerSpec read_layer(data::ByteReader& r) {
  const std::uint8_t kind = r.u8();
  switch (kind) {
    case 0: {
      Dense d;
      d.in_features = r.u64();
      d.out_features = r.u64();
      d.bias = r.u8() != 0;
      return d;
    }
    case 1: {
      MaskedDense d;
      d.in_features = r.u64();
      d.out_features = r.u64();
      d.bias = r.u8() != 0;
      d.mask = r.tensor();
      return d;
    }
    case 2:
    case 3: {
      std::size_t f[5];
      for (auto& v : f) v = r.u64();
      const bool bias = r.u8() != 0;
      if (kind == 2) return Conv2d{f[0], f[1], f[2], f[3], f[4], bias};
      return ConvTranspose2d{f[0], f[1], f[2], f[3], f[4], bias};
    }
    case 4:
      return Relu{};
    case 5:
      return LeakyRelu{r.f64()};
    case 6:
      return Sigmoid{};
    case 7:
      return Reshape{r.shape()};
    default:
      throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind));
  }
}

inline void write_network(data::ByteWriter& w, const Network& net) {
  w.shape(net.input_shape());
  w.u32(static_cast<std::uint32_t>(net.layer_count()));
  for (const auto& layer : net.layers()) write_layer(w, layer);
  w.u32(static_cast<std::uint32_t>(net.params().size()));
  for (const auto& p : net.params()) {
    w.str(p.name);
    w.u8(p.trainable);
    w.u8(p.decay);
    w.tensor(p.value);
  }
}

inline Network read_network(data::ByteReader& r) {
  Shape input = r.shape();
  const std::uint32_t layer_count = r.u32();
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < layer_count; ++i) layers.push_back(read_layer(r));
  const std::uint32_t param_count = r.u32();
  std::vector<Parameter> params;
  for (std::uint32_t i = 0; i < param_count; ++i) {
    Parameter p;
    p.name = r.str();
    p.trainable = r.u8() != 0;
    p.decay = r.u8() != 0;
    p.value = r.tensor();
    params.push_back(std::move(p));
  }
  return Network(std::move(input), std::move(layers), std::move(params));
}

inline void write_latents(data::ByteWriter& w, const latents::LatentTable& t) {
  w.tensor(t.z);
  w.tensor(t.velocity);
  w.u32(static_cast<std::uint32_t>(t.sample_ids.size()));
  for (std::uint64_t id : t.sample_ids) w.u64(id);
  w.f64(t.lr);
  w.f64(t.momentum);
}

inline latents::LatentTable read_latents(data::ByteReader& r) {
  latents::LatentTable t;
  t.z = r.tensor();
  t.velocity = r.tensor();
  t.sample_ids.resize(r.u32());
  for (auto& id : t.sample_ids) id = r.u64();
  t.lr = r.f64();
  t.momentum = r.f64();
  if (t.velocity.shape() != t.z.shape() || t.sample_ids.size() != t.z.rows())
    throw FormatError("checkpoint: inconsistent latent table");
  return t;
}

inline void write_optimizer(data::ByteWriter& w, const optimize::Optimizer& opt) {
  const auto& h = opt.hyper();
  w.u8(static_cast<std::uint8_t>(h.rule));
  for (double v : {h.lr, h.momentum, h.beta1, h.beta2, h.eps, h.weight_decay}) w.f64(v);
  w.u32(static_cast<std::uint32_t>(opt.states().size()));
  for (const auto& s : opt.states()) {
    w.u64(s.step);
    w.tensor(s.first);
    w.tensor(s.second);
  }
}

inline optimize::Optimizer read_optimizer(data::ByteReader& r) {
  optimize::Hyper h;
  const std::uint8_t rule = r.u8();
  if (rule > 1) throw FormatError("checkpoint: unknown optimizer rule");
  h.rule = static_cast<optimize::Rule>(rule);
  h.lr = r.f64();
  h.momentum = r.f64();
  h.beta1 = r.f64();
  h.beta2 = r.f64();
  h.eps = r.f64();
  h.weight_decay = r.f64();
  std::vector<optimize::OptimState> states(r.u32());
  for (auto& s : states) {
    s.step = r.u64();
    s.first = r.tensor();
    s.second = r.tensor();
  }
  return optimize::Optimizer(h, std::move(states));
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  data::ByteWriter w;
  w.raw(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ck.networks.size() + ck.latents.size() + ck.optimizers.size()));
  w.u64(w.checksum());
  const std::size_t body = w.size();
  for (const auto& [name, net] : ck.networks) {
    w.u8(detail::kNetwork);
    w.str(name);
    detail::write_network(w, net);
  }
  for (const auto& [name, table] : ck.latents) {
    w.u8(detail::kLatents);
    w.str(name);
    detail::write_latents(w, table);
  }
  for (const auto& [name, opt] : ck.optimizers) {
    w.u8(detail::kOptimizer);
    w.str(name);
    detail::write_optimizer(w, opt);
  }
  w.u64(w.checksum(body));
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& what = "checkpoint") {
  data::ByteReader r(std::move(bytes), what);
  char magic[8];
  r.raw(magic, 8);
  if (!std::equal(magic, magic + 8, kCheckpointMagic)) throw FormatError(what + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw VersionError(what + ": unsupported version " + std::to_string(version));
  const std::uint32_t entries = r.u32();
  if (r.u64() != r.checksum(0, 16)) throw FormatError(what + ": header checksum mismatch");
  const std::size_t body = r.pos();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < entries; ++i) {
    const std::uint8_t kind = r.u8();
    std::string name = r.str();
    switch (kind) {
      case detail::kNetwork:
        ck.networks.emplace(std::move(name), detail::read_network(r));
        break;
      case detail::kLatents:
        ck.latents.emplace(std::move(name), detail::read_latents(r));
        break;
      case detail::kOptimizer:
        ck.optimizers.emplace(std::move(name), detail::read_optimizer(r));
        break;
      default:
        throw FormatError(what + ": unknown entry kind " + std::to_string(kind));
    }
  }
  const std::size_t end = r.pos();
  if (r.u64() != r.checksum(body, end)) throw FormatError(what + ": body checksum mismatch");
  if (!r.at_end()) throw FormatError(what + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  data::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(data::read_file(path), path);
}

}  // namespace encfree::autonet
