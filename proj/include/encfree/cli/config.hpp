#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "encfree/autonet/layers.hpp"
#include "encfree/data/binary.hpp"
#include "encfree/data/simulate.hpp"
#include "encfree/latents/inference.hpp"
#include "encfree/numkit/errors.hpp"
#include "encfree/trainers/trainers.hpp"

namespace encfree::cli {

using json = nlohmann::ordered_json;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate",
                                              "train-decoder",
                                              "train-autoencoder",
                                              "train-encoder-frozen",
                                              "train-denoising-encoder",
                                              "infer",
                                              "eval",
                                              "analyze-load"};
  return names;
}

// Every accepted key with its default. A user config is merged onto this
// tree; keys absent here are rejected. Layer lists are validated separately.
inline json default_config() {
  return json::parse(R"({
    "command": "",
    "seed": 0,
    "seeds": [],
    "parallel": false,
    "checkpoint": "",
    "test_every": 0,
    "data": {
      "train": "",
      "test": "",
      "images": "",
      "labels": "",
      "train_count": 0,
      "balanced": false,
      "test_count": 0,
      "split_seed": null
    },
    "simulate": {
      "n": 1000,
      "m": 100,
      "n_train": 100,
      "n_test": 100,
      "connectivity": 0.1,
      "noise_sd": 0.2,
      "gamma_shape": 2.0,
      "gamma_scale": 1.0,
      "weight_lo": -1.0,
      "weight_hi": 1.0
    },
    "decoder": {"input": [], "layers": []},
    "encoder": {"input": [], "layers": []},
    "train": {
      "epochs": 1,
      "batch_size": 32,
      "optimizer": "adam",
      "lr": 0.001,
      "momentum": 0.0,
      "beta1": 0.9,
      "beta2": 0.999,
      "eps": 1e-8,
      "weight_decay": 0.0,
      "latent_lr": 0.01,
      "latent_momentum": 0.9,
      "latent_init_scale": 0.1,
      "latent_reduction": "sample_sum",
      "loss": "mse",
      "noise_sd": 0.0,
      "clamp": null,
      "eval_every": 1,
      "record_time": false
    },
    "inference": {
      "steps": 500,
      "lr": 0.01,
      "momentum": 0.9,
      "init_scale": 0.1,
      "restarts": 1,
      "batch_size": 256,
      "reduction": "sample_sum"
    },
    "analyze": {"samples": []}
  })");
}

// Collects field-level problems so one run reports all of them.
class Diagnostics {
 public:
  void add(const std::string& path, const std::string& msg) { items_.push_back(path + ": " + msg); }
  bool empty() const { return items_.empty(); }
  void throw_if_any() const {
    if (items_.empty()) return;
    std::string all = "invalid config";
    for (const auto& s : items_) all += "\n  " + s;
    throw ConfigError(all);
  }

 private:
  std::vector<std::string> items_;
};

namespace detail {

inline bool is_open_slot(const json& def) { return def.is_null() || (def.is_array() && def.empty()); }

inline void merge(json& base, const json& user, const std::string& path, Diagnostics& diag) {
  if (!user.is_object()) {
    diag.add(path.empty() ? "<root>" : path, "expected an object");
    return;
  }
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) {
      diag.add(key, "unknown key");
      continue;
    }
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge(slot, it.value(), key, diag);
    } else if (slot.is_object()) {
      diag.add(key, "expected an object");
    } else if (!is_open_slot(slot) && !it->is_null() && slot.type() != it->type() &&
               !(slot.is_number() && it->is_number())) {
      diag.add(key, std::string("expected ") + slot.type_name() + ", got " + it->type_name());
    } else {
      slot = it.value();
    }
  }
}

}  // namespace detail

// `key.path=value`; the value is read as JSON when it parses, else as a string.
inline void apply_override(json& cfg, const std::string& assignment, Diagnostics& diag) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    diag.add(assignment, "override must look like key.path=value");
    return;
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &cfg;
  std::stringstream ss(path);
  std::string seg;
  std::vector<std::string> segs;
  while (std::getline(ss, seg, '.')) segs.push_back(seg);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const bool last = i + 1 == segs.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(segs[i]);
      } catch (...) {
        diag.add(path, "'" + segs[i] + "' is not an array index");
        return;
      }
      if (idx >= node->size()) {
        diag.add(path, "index " + segs[i] + " out of range");
        return;
      }
      node = &(*node)[idx];
    } else if (node->is_object() && node->contains(segs[i])) {
      node = &(*node)[segs[i]];
    } else if (node->is_object() && last && node->size() && node->begin()->is_primitive() &&
               node->contains("type")) {
      node = &(*node)[segs[i]];  // new field on a layer entry
    } else {
      diag.add(path, "unknown key");
      return;
    }
  }
  if (!detail::is_open_slot(*node) && !value.is_null() && node->type() != value.type() &&
      !(node->is_number() && value.is_number())) {
    diag.add(path, std::string("expected ") + node->type_name() + ", got " + value.type_name());
    return;
  }
  *node = value;
}

// Defaults + user file + overrides + seed flag. Problems go to `sink` when
// given, so they are reported together with the typed checks.
inline json resolve_config(const json& user, const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed, const std::string& command,
                           Diagnostics* sink = nullptr) {
  Diagnostics own;
  Diagnostics& diag = sink ? *sink : own;
  json cfg = default_config();
  detail::merge(cfg, user, "", diag);
  for (const auto& o : overrides) apply_override(cfg, o, diag);
  if (seed) cfg["seed"] = *seed;
  if (!command.empty()) cfg["command"] = command;
  own.throw_if_any();
  return cfg;
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingFileError("cannot open config " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---- typed views -------------------------------------------------------------

struct NetSpec {
  numkit::Shape input;
  std::vector<autonet::LayerSpec> layers;
  bool empty() const { return layers.empty(); }
};

struct DataSpec {
  std::string train, test, images, labels;
  std::size_t train_count = 0;
  bool balanced = false;
  std::size_t test_count = 0;
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  bool parallel = false;
  std::string checkpoint;
  std::size_t test_every = 0;
  DataSpec data;
  data::SimConfig sim;
  NetSpec decoder, encoder;
  trainers::TrainConfig train;
  bool clamp_to_data = false;
  latents::InferenceConfig inference;
  std::vector<std::size_t> analyze_samples;
  json resolved;  // the tree this was read from; echoed verbatim
};

namespace detail {

class Reader {
 public:
  Reader(const json& root, Diagnostics& diag) : root_(root), diag_(diag) {}

  const json* node(const std::string& path) const {
    const json* n = &root_;
    std::stringstream ss(path);
    std::string seg;
    while (std::getline(ss, seg, '.')) n = n->is_array() ? &(*n)[std::stoul(seg)] : &(*n)[seg];
    return n;
  }

  double number(const std::string& path) const {
    const json* n = node(path);
    if (!n->is_number()) {
      diag_.add(path, "expected a number");
      return 0.0;
    }
    return n->get<double>();
  }

  std::size_t count(const std::string& path) const {
    const json* n = node(path);
    if (!n->is_number_integer() || n->get<std::int64_t>() < 0) {
      diag_.add(path, "expected a non-negative integer");
      return 0;
    }
    return n->get<std::size_t>();
  }

  std::uint64_t u64(const std::string& path) const {
    const json* n = node(path);
    if (!n->is_number_unsigned() && !(n->is_number_integer() && n->get<std::int64_t>() >= 0)) {
      diag_.add(path, "expected an unsigned integer");
      return 0;
    }
    return n->get<std::uint64_t>();
  }

  bool flag(const std::string& path) const {
    const json* n = node(path);
    if (!n->is_boolean()) {
      diag_.add(path, "expected true or false");
      return false;
    }
    return n->get<bool>();
  }

  std::string text(const std::string& path) const {
    const json* n = node(path);
    if (!n->is_string()) {
      diag_.add(path, "expected a string");
      return {};
    }
    return n->get<std::string>();
  }

  template <class F>
  auto parsed(const std::string& path, F parse) const -> decltype(parse(std::string{})) {
    const std::string s = text(path);
    try {
      return parse(s);
    } catch (const Error& e) {
      diag_.add(path, e.what());
      return {};
    }
  }

 private:
  const json& root_;
  Diagnostics& diag_;
};

inline std::size_t layer_count(const json& l, const char* key, const std::string& path, Diagnostics& diag,
                               std::size_t fallback = 0, bool required = true) {
  if (!l.contains(key)) {
    if (required) diag.add(path + "." + key, "missing");
    return fallback;
  }
  if (!l[key].is_number_integer() || l[key].get<std::int64_t>() < 0) {
    diag.add(path + "." + key, "expected a non-negative integer");
    return fallback;
  }
  return l[key].get<std::size_t>();
}

inline numkit::Shape shape_of(const json& j, const std::string& path, Diagnostics& diag) {
  numkit::Shape s;
  if (!j.is_array()) {
    diag.add(path, "expected an array of dimensions");
    return s;
  }
  for (const auto& d : j) {
    if (!d.is_number_integer() || d.get<std::int64_t>() <= 0) {
      diag.add(path, "dimensions must be positive integers");
      return {};
    }
    s.push_back(d.get<std::size_t>());
  }
  return s;
}

// Masks are not part of the config: a masked_dense layer takes its mask from
// the training dataset's adjacency, attached later.
inline NetSpec net_spec(const json& j, const std::string& path, Diagnostics& diag) {
  NetSpec spec;
  spec.input = shape_of(j["input"], path + ".input", diag);
  if (!j["layers"].is_array()) {
    diag.add(path + ".layers", "expected an array");
    return spec;
  }
  const auto& layers = j["layers"];
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& l = layers[i];
    const std::string lp = path + ".layers." + std::to_string(i);
    if (!l.is_object() || !l.contains("type") || !l["type"].is_string()) {
      diag.add(lp, "each layer needs a string 'type'");
      continue;
    }
    const std::string type = l["type"].get<std::string>();
    auto allow = [&](std::initializer_list<const char*> keys) {
      for (auto it = l.begin(); it != l.end(); ++it) {
        bool ok = it.key() == "type";
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) diag.add(lp + "." + it.key(), "unknown key for layer type '" + type + "'");
      }
    };
    const bool bias = l.contains("bias") ? l["bias"].is_boolean() && l["bias"].get<bool>() : true;
    if (l.contains("bias") && !l["bias"].is_boolean()) diag.add(lp + ".bias", "expected true or false");
    if (type == "dense") {
      allow({"in", "out", "bias"});
      spec.layers.push_back(autonet::Dense{layer_count(l, "in", lp, diag), layer_count(l, "out", lp, diag), bias});
    } else if (type == "masked_dense") {
      allow({"in", "out", "bias", "mask"});
      if (l.contains("mask") && l["mask"] != "adjacency") diag.add(lp + ".mask", "only \"adjacency\" is supported");
      spec.layers.push_back(
          autonet::MaskedDense{layer_count(l, "in", lp, diag), layer_count(l, "out", lp, diag), {}, bias});
    } else if (type == "conv2d" || type == "conv_transpose2d") {
      allow({"in_channels", "out_channels", "kernel", "stride", "padding", "bias"});
      const std::size_t ic = layer_count(l, "in_channels", lp, diag), oc = layer_count(l, "out_channels", lp, diag);
      const std::size_t k = layer_count(l, "kernel", lp, diag), s = layer_count(l, "stride", lp, diag, 1, false);
      const std::size_t p = layer_count(l, "padding", lp, diag, 0, false);
      if (type == "conv2d") spec.layers.push_back(autonet::Conv2d{ic, oc, k, s, p, bias});
      else spec.layers.push_back(autonet::ConvTranspose2d{ic, oc, k, s, p, bias});
    } else if (type == "relu") {
      allow({});
      spec.layers.push_back(autonet::Relu{});
    } else if (type == "sigmoid") {
      allow({});
      spec.layers.push_back(autonet::Sigmoid{});
    } else if (type == "leaky_relu") {
      allow({"slope"});
      double slope = 0.01;
      if (l.contains("slope")) {
        if (l["slope"].is_number()) slope = l["slope"].get<double>();
        else diag.add(lp + ".slope", "expected a number");
      }
      spec.layers.push_back(autonet::LeakyRelu{slope});
    } else if (type == "reshape") {
      allow({"shape"});
      spec.layers.push_back(autonet::Reshape{shape_of(l.value("shape", json()), lp + ".shape", diag)});
    } else {
      diag.add(lp + ".type", "unknown layer type '" + type + "'");
    }
  }
  if (!spec.layers.empty() && spec.input.empty()) diag.add(path + ".input", "required when layers are given");
  return spec;
}

}  // namespace detail

inline RunConfig typed_config(const json& cfg, Diagnostics* sink = nullptr) {
  Diagnostics own;
  Diagnostics& diag = sink ? *sink : own;
  detail::Reader r(cfg, diag);
  RunConfig rc;
  rc.resolved = cfg;
  rc.command = r.text("command");
  bool known = false;
  for (const auto& c : command_names()) known = known || c == rc.command;
  if (!known) diag.add("command", "'" + rc.command + "' is not a command");
  rc.seed = r.u64("seed");
  if (!cfg["seeds"].is_array()) diag.add("seeds", "expected an array");
  else
    for (std::size_t i = 0; i < cfg["seeds"].size(); ++i) rc.seeds.push_back(r.u64("seeds." + std::to_string(i)));
  rc.parallel = r.flag("parallel");
  rc.checkpoint = r.text("checkpoint");
  rc.test_every = r.count("test_every");

  rc.data.train = r.text("data.train");
  rc.data.test = r.text("data.test");
  rc.data.images = r.text("data.images");
  rc.data.labels = r.text("data.labels");
  rc.data.train_count = r.count("data.train_count");
  rc.data.balanced = r.flag("data.balanced");
  rc.data.test_count = r.count("data.test_count");
  rc.data.split_seed = cfg["data"]["split_seed"].is_null() ? rc.seed : r.u64("data.split_seed");
  if (rc.data.images.empty() != rc.data.labels.empty()) {
    diag.add("data.images", "images and labels must be given together");
  }

  rc.sim.n = r.count("simulate.n");
  rc.sim.m = r.count("simulate.m");
  rc.sim.n_train = r.count("simulate.n_train");
  rc.sim.n_test = r.count("simulate.n_test");
  rc.sim.connectivity = r.number("simulate.connectivity");
  rc.sim.noise_sd = r.number("simulate.noise_sd");
  rc.sim.gamma_shape = r.number("simulate.gamma_shape");
  rc.sim.gamma_scale = r.number("simulate.gamma_scale");
  rc.sim.weight_lo = r.number("simulate.weight_lo");
  rc.sim.weight_hi = r.number("simulate.weight_hi");
  rc.sim.seed = rc.seed;

  rc.decoder = detail::net_spec(cfg["decoder"], "decoder", diag);
  rc.encoder = detail::net_spec(cfg["encoder"], "encoder", diag);

  auto& t = rc.train;
  t.epochs = r.count("train.epochs");
  t.batch_size = r.count("train.batch_size");
  t.weights.rule = r.parsed("train.optimizer", optimize::parse_rule);
  t.weights.lr = r.number("train.lr");
  t.weights.momentum = r.number("train.momentum");
  t.weights.beta1 = r.number("train.beta1");
  t.weights.beta2 = r.number("train.beta2");
  t.weights.eps = r.number("train.eps");
  t.weights.weight_decay = r.number("train.weight_decay");
  t.latent_lr = r.number("train.latent_lr");
  t.latent_momentum = r.number("train.latent_momentum");
  t.latent_init_scale = r.number("train.latent_init_scale");
  t.latent_reduction = r.parsed("train.latent_reduction", latents::parse_reduction);
  t.loss = r.parsed("train.loss", autonet::parse_loss_kind);
  t.noise_sd = r.number("train.noise_sd");
  const json& clamp = cfg["train"]["clamp"];
  if (clamp.is_string() && clamp == "data") {
    rc.clamp_to_data = true;
  } else if (clamp.is_array() && clamp.size() == 2 && clamp[0].is_number() && clamp[1].is_number()) {
    t.clamp = std::pair{clamp[0].get<double>(), clamp[1].get<double>()};
  } else if (!clamp.is_null()) {
    diag.add("train.clamp", "expected null, \"data\" or [lo, hi]");
  }
  t.eval_every = r.count("train.eval_every");
  t.record_time = r.flag("train.record_time");

  auto& inf = rc.inference;
  inf.loss = t.loss;
  inf.steps = r.count("inference.steps");
  inf.lr = r.number("inference.lr");
  inf.momentum = r.number("inference.momentum");
  inf.init_scale = r.number("inference.init_scale");
  inf.restarts = r.count("inference.restarts");
  inf.batch_size = r.count("inference.batch_size");
  inf.reduction = r.parsed("inference.reduction", latents::parse_reduction);

  if (!cfg["analyze"]["samples"].is_array()) diag.add("analyze.samples", "expected an array");
  else
    for (std::size_t i = 0; i < cfg["analyze"]["samples"].size(); ++i)
      rc.analyze_samples.push_back(r.count("analyze.samples." + std::to_string(i)));

  // Value checks owned by the library, reported against their section.
  auto check = [&](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      diag.add(section, e.what());
    }
  };
  check("train", [&] { trainers::validate(t); });
  if (rc.command == "simulate") check("simulate", [&] { data::validate(rc.sim); });
  if (inf.restarts == 0) diag.add("inference.restarts", "must be >= 1");
  if (inf.batch_size == 0) diag.add("inference.batch_size", "must be >= 1");
  if (!(inf.lr > 0.0)) diag.add("inference.lr", "must be > 0");
  if (!(inf.momentum >= 0.0 && inf.momentum < 1.0)) diag.add("inference.momentum", "must lie in [0, 1)");
  diag.throw_if_any();
  return rc;
}

inline std::string echo_text(const RunConfig& rc) { return rc.resolved.dump(2) + "\n"; }

inline std::string config_hash(const RunConfig& rc) {
  const std::string text = echo_text(rc);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(
                    data::fnv1a(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())));
  return buf;
}

}  // namespace encfree::cli
