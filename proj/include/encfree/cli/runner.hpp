#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "encfree/analysis/load.hpp"
#include "encfree/autonet/checkpoint.hpp"
#include "encfree/cli/config.hpp"
#include "encfree/data/dataset.hpp"
#include "encfree/data/idx.hpp"
#include "encfree/data/simulate.hpp"
#include "encfree/trainers/trainers.hpp"

namespace encfree::cli {

using autonet::Network;
using data::Dataset;
using numkit::Rng;
using numkit::Tensor;

// Files of one run, held in memory until the run has succeeded so a failed
// run leaves nothing behind.
struct Artifacts {
  std::map<std::string, std::string> files;
  json summary;
};

// Random streams of a run, all derived from the run seed.
struct Streams {
  explicit Streams(std::uint64_t seed) : root(seed) {}
  Rng root;
  Rng decoder_init() const { return root.derive(1); }
  Rng latent_init() const { return root.derive(2); }
  std::uint64_t shuffle_seed() const { return root.derive(3).next_u64(); }
  Rng inference(std::size_t epoch) const { return root.derive(4).derive(epoch); }
  Rng encoder_init() const { return root.derive(5); }
};

struct Splits {
  Dataset train;
  std::optional<Dataset> test;
};

namespace detail {

inline std::string bytes_to_string(const std::vector<std::uint8_t>& b) { return std::string(b.begin(), b.end()); }

inline Splits load_splits(const RunConfig& rc, bool need_train) {
  Splits s;
  const auto& d = rc.data;
  if (!d.images.empty()) {
    Dataset all = data::load_idx(d.images, d.labels);
    s.train = d.train_count ? data::subsample(all, d.train_count, d.split_seed, d.balanced) : all;
    if (d.test_count) {
      s.test = data::subsample(data::complement(all, s.train), d.test_count, d.split_seed + 1, false);
    }
  } else if (!d.train.empty()) {
    s.train = data::load_dataset(d.train);
    if (d.train_count) s.train = data::subsample(s.train, d.train_count, d.split_seed, d.balanced);
  } else if (need_train) {
    throw ConfigError("invalid config\n  data.train: required by '" + rc.command + "' (or data.images/labels)");
  }
  if (!d.test.empty()) {
    s.test = data::load_dataset(d.test);
    if (d.test_count && d.images.empty()) s.test = data::subsample(*s.test, d.test_count, d.split_seed + 1, false);
  }
  return s;
}

// Attaches the dataset adjacency to masked layers; the mask is [out, in].
inline std::vector<autonet::LayerSpec> with_masks(const NetSpec& spec, const Dataset* ds, const std::string& what) {
  std::vector<autonet::LayerSpec> layers = spec.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (auto* md = std::get_if<autonet::MaskedDense>(&layers[i])) {
      if (!ds || !ds->adjacency) {
        throw ConfigError("invalid config\n  " + what + ".layers." + std::to_string(i) +
                          ": masked_dense needs a training dataset with an adjacency matrix");
      }
      md->mask = *ds->adjacency;
    }
  }
  return layers;
}

inline Network build(const NetSpec& spec, const Dataset* ds, const std::string& what, Rng rng) {
  if (spec.empty()) throw ConfigError("invalid config\n  " + what + ".layers: required for this command");
  return Network(spec.input, with_masks(spec, ds, what), rng);
}

inline json score_json(const analysis::RepresentationScore& s) {
  std::size_t undefined = 0;
  for (bool u : s.undefined) undefined += u;
  return {{"pcc_mean", s.mean}, {"pcc_mean_abs", s.mean_abs}, {"undefined_dims", undefined}};
}

inline json eval_json(const trainers::EvalResult& r) {
  json j{{"loss", r.loss}, {"samples", r.per_sample_loss.size()}};
  if (r.score) j.update(score_json(*r.score));
  return j;
}

inline json load_json(const analysis::LoadReport& r) {
  json j{{"n", r.n}, {"m", r.m}, {"c_d", r.c_d}, {"samples", r.samples}, {"alpha_d", r.alpha_d}};
  if (r.c_e) {
    j["c_e"] = r.c_e;
    j["alpha_e"] = r.alpha_e;
  }
  return j;
}

inline const Tensor* z_of(const Dataset& ds) { return ds.z_true ? &*ds.z_true : nullptr; }

inline std::optional<double> score_of(const trainers::EvalResult& r) {
  if (!r.score) return std::nullopt;
  return r.score->mean_abs;
}

inline autonet::Checkpoint read_checkpoint(const RunConfig& rc) {
  if (rc.checkpoint.empty()) {
    throw ConfigError("invalid config\n  checkpoint: required by '" + rc.command + "'");
  }
  return autonet::load_checkpoint(rc.checkpoint);
}

inline Network take_network(autonet::Checkpoint& ck, const std::string& name, const RunConfig& rc) {
  auto it = ck.networks.find(name);
  if (it == ck.networks.end()) throw ConsistencyError(rc.checkpoint + ": no network named '" + name + "'");
  return it->second;
}

inline trainers::TrainConfig train_config(const RunConfig& rc, const Streams& st, const Dataset& train) {
  trainers::TrainConfig t = rc.train;
  t.shuffle_seed = st.shuffle_seed();
  if (rc.clamp_to_data) t.clamp = std::pair{train.value_lo, train.value_hi};
  return t;
}

inline bool test_due(const RunConfig& rc, std::size_t epoch) {
  return epoch == rc.train.epochs || (rc.test_every && epoch % rc.test_every == 0);
}

inline void common_files(Artifacts& a, const trainers::MetricsLog& log) { a.files["metrics.csv"] = log.to_csv(); }

// ---- commands -----------------------------------------------------------------

inline Artifacts run_simulate(const RunConfig& rc) {
  const data::SimSplit s = data::simulate(rc.sim);
  const Dataset train = data::to_dataset(s.train, 0);
  const Dataset test = data::to_dataset(s.test, rc.sim.n_train);
  Artifacts a;
  a.files["train.bin"] = bytes_to_string(data::encode_dataset(train));
  a.files["test.bin"] = bytes_to_string(data::encode_dataset(test));
  double ones = 0;
  for (double v : s.train.adjacency.values()) ones += v;
  double mean = 0, sq = 0;
  for (double v : s.train.x.values()) mean += v, sq += v * v;
  const double cnt = double(s.train.x.size());
  a.summary = {{"n", rc.sim.n},
               {"m", rc.sim.m},
               {"n_train", rc.sim.n_train},
               {"n_test", rc.sim.n_test},
               {"connectivity", ones / double(s.train.adjacency.size())},
               {"train_x_mean", mean / cnt},
               {"train_x_var", sq / cnt - (mean / cnt) * (mean / cnt)}};
  return a;
}

inline Artifacts run_train_decoder(const RunConfig& rc) {
  const Splits sp = load_splits(rc, true);
  const Streams st(rc.seed);
  Network dec = build(rc.decoder, &sp.train, "decoder", st.decoder_init());
  const trainers::TrainConfig tcfg = train_config(rc, st, sp.train);
  std::optional<trainers::EvalResult> last_test;
  auto hook = [&](std::size_t epoch, trainers::MetricsLog& log) {
    if (!sp.test || !test_due(rc, epoch)) return;
    Rng r = st.inference(epoch);
    last_test = trainers::evaluate_decoder(dec, sp.test->x, rc.inference, r, z_of(*sp.test));
    log.add({epoch, "test", last_test->loss, score_of(*last_test), 0.0});
  };
  Rng latent_rng = st.latent_init();
  trainers::DecoderTraining run = trainers::train_decoder(sp.train.x, dec, tcfg, latent_rng, hook);
  if (sp.test && !last_test) {
    Rng r = st.inference(0);
    last_test = trainers::evaluate_decoder(dec, sp.test->x, rc.inference, r, z_of(*sp.test));
  }

  Artifacts a;
  common_files(a, run.log);
  autonet::Checkpoint ck;
  ck.networks.emplace("decoder", dec);
  ck.latents.emplace("train", run.latents);
  ck.optimizers.emplace("decoder", run.optimizer);
  a.files["checkpoint.bin"] = bytes_to_string(autonet::encode_checkpoint(ck));
  a.files["latents.csv"] = data::matrix_csv(run.latents.z, sp.train.sample_ids, "z");
  json train{{"loss", trainers::full_pass_loss(dec, run.latents.z, sp.train.x, tcfg.loss)}};
  if (sp.train.z_true && sp.train.size() > 1) {
    train.update(score_json(analysis::representation_score(*sp.train.z_true, run.latents.z)));
  }
  a.summary["train"] = train;
  if (last_test) {
    a.summary["test"] = eval_json(*last_test);
    a.files["test_latents.csv"] = data::matrix_csv(last_test->representations, sp.test->sample_ids, "z");
  }
  a.summary["load"] = load_json(analysis::load_report(dec, nullptr, sp.train.size()));
  return a;
}

// Shared tail of the three encoder regimes.
inline Artifacts finish_encoder_run(const RunConfig& rc, const Splits& sp, const Network& enc, const Network& dec,
                                    const trainers::EncoderTraining& run,
                                    const std::optional<trainers::EvalResult>& last_test) {
  Artifacts a;
  common_files(a, run.log);
  autonet::Checkpoint ck;
  ck.networks.emplace("encoder", enc);
  ck.networks.emplace("decoder", dec);
  ck.optimizers.emplace("encoder", run.encoder_optimizer);
  if (run.decoder_optimizer) ck.optimizers.emplace("decoder", *run.decoder_optimizer);
  a.files["checkpoint.bin"] = bytes_to_string(autonet::encode_checkpoint(ck));
  const trainers::EvalResult tr = trainers::evaluate_autoencoder(enc, dec, sp.train.x, rc.train.loss,
                                                                 sp.train.size() > 1 ? z_of(sp.train) : nullptr);
  a.files["latents.csv"] = data::matrix_csv(tr.representations, sp.train.sample_ids, "z");
  a.summary["train"] = eval_json(tr);
  if (last_test) a.summary["test"] = eval_json(*last_test);
  a.summary["load"] = load_json(analysis::load_report(dec, &enc, sp.train.size()));
  return a;
}

inline std::function<void(std::size_t, trainers::MetricsLog&)> encoder_test_hook(
    const RunConfig& rc, const Splits& sp, const Network& enc, const Network& dec,
    std::optional<trainers::EvalResult>& last_test) {
  return [&rc, &sp, &enc, &dec, &last_test](std::size_t epoch, trainers::MetricsLog& log) {
    if (!sp.test || !test_due(rc, epoch)) return;
    last_test = trainers::evaluate_autoencoder(enc, dec, sp.test->x, rc.train.loss, z_of(*sp.test));
    log.add({epoch, "test", last_test->loss, score_of(*last_test), 0.0});
  };
}

inline void final_encoder_test(const RunConfig& rc, const Splits& sp, const Network& enc, const Network& dec,
                               std::optional<trainers::EvalResult>& last_test) {
  if (sp.test && !last_test) {
    last_test = trainers::evaluate_autoencoder(enc, dec, sp.test->x, rc.train.loss, z_of(*sp.test));
  }
}

inline Artifacts run_train_autoencoder(const RunConfig& rc) {
  const Splits sp = load_splits(rc, true);
  const Streams st(rc.seed);
  Network dec = build(rc.decoder, &sp.train, "decoder", st.decoder_init());
  Network enc = build(rc.encoder, &sp.train, "encoder", st.encoder_init());
  std::optional<trainers::EvalResult> last_test;
  const auto run = trainers::train_autoencoder(sp.train.x, enc, dec, train_config(rc, st, sp.train),
                                               encoder_test_hook(rc, sp, enc, dec, last_test));
  final_encoder_test(rc, sp, enc, dec, last_test);
  return finish_encoder_run(rc, sp, enc, dec, run, last_test);
}

inline Artifacts run_train_encoder_frozen(const RunConfig& rc, bool denoise) {
  const Splits sp = load_splits(rc, true);
  autonet::Checkpoint ck = read_checkpoint(rc);
  const Streams st(rc.seed);
  Network dec = take_network(ck, "decoder", rc);
  dec.freeze();
  Network enc = build(rc.encoder, &sp.train, "encoder", st.encoder_init());
  std::optional<trainers::EvalResult> last_test;
  const auto hook = encoder_test_hook(rc, sp, enc, dec, last_test);
  const trainers::TrainConfig tcfg = train_config(rc, st, sp.train);
  trainers::EncoderTraining run = [&] {
    if (denoise) return trainers::train_denoising_encoder(sp.train.x, enc, dec, tcfg, hook);
    auto it = ck.latents.find("train");
    if (it == ck.latents.end()) throw ConsistencyError(rc.checkpoint + ": no latent table named 'train'");
    return trainers::train_encoder_on_frozen_decoder(sp.train.x, it->second, enc, dec, tcfg, hook);
  }();
  final_encoder_test(rc, sp, enc, dec, last_test);
  Artifacts a = finish_encoder_run(rc, sp, enc, dec, run, last_test);
  if (!denoise && sp.train.size() > 1) {
    const auto& table = ck.latents.at("train");
    a.summary["train"]["pcc_vs_decoder_latents"] =
        analysis::representation_score(table.z, trainers::encode(enc, sp.train.x)).mean;
  }
  return a;
}

inline Artifacts run_infer(const RunConfig& rc) {
  const Splits sp = load_splits(rc, false);
  if (!sp.test && rc.data.train.empty() && rc.data.images.empty()) {
    throw ConfigError("invalid config\n  data.test: required by 'infer' (or data.train)");
  }
  const Dataset& target = sp.test ? *sp.test : sp.train;
  autonet::Checkpoint ck = read_checkpoint(rc);
  const Network dec = take_network(ck, "decoder", rc);
  const Streams st(rc.seed);
  Rng r = st.inference(0);
  const trainers::EvalResult ev = trainers::evaluate_decoder(dec, target.x, rc.inference, r, z_of(target));
  Artifacts a;
  trainers::MetricsLog log;
  log.add({0, sp.test ? "test" : "train", ev.loss, score_of(ev), 0.0});
  common_files(a, log);
  a.files["latents.csv"] = data::matrix_csv(ev.representations, target.sample_ids, "z");
  a.summary["result"] = eval_json(ev);
  return a;
}

inline Artifacts run_eval(const RunConfig& rc) {
  const Splits sp = load_splits(rc, false);
  autonet::Checkpoint ck = read_checkpoint(rc);
  const Network dec = take_network(ck, "decoder", rc);
  const bool with_encoder = ck.networks.count("encoder") > 0;
  const Streams st(rc.seed);
  trainers::MetricsLog log;
  Artifacts a;
  auto evaluate = [&](const Dataset& ds, const std::string& split) {
    if (ds.x.rows() == 0) return;
    Rng r = st.inference(0);
    const Tensor* z = ds.size() > 1 ? z_of(ds) : nullptr;
    const trainers::EvalResult ev =
        with_encoder ? trainers::evaluate_autoencoder(ck.networks.at("encoder"), dec, ds.x, rc.train.loss, z)
                     : trainers::evaluate_decoder(dec, ds.x, rc.inference, r, z);
    log.add({0, split, ev.loss, score_of(ev), 0.0});
    a.summary[split] = eval_json(ev);
    if (split == "test" || !sp.test) a.files["latents.csv"] = data::matrix_csv(ev.representations, ds.sample_ids, "z");
  };
  if (rc.data.train.empty() && rc.data.images.empty() && !sp.test) {
    throw ConfigError("invalid config\n  data.test: required by 'eval' (or data.train)");
  }
  evaluate(sp.train, "train");
  if (sp.test) evaluate(*sp.test, "test");
  common_files(a, log);
  a.summary["model"] = with_encoder ? "autoencoder" : "decoder";
  return a;
}

inline Artifacts run_analyze_load(const RunConfig& rc) {
  const Splits sp = load_splits(rc, false);
  const Dataset* ds = sp.train.x.rows() ? &sp.train : nullptr;
  const Streams st(rc.seed);
  const Network dec = build(rc.decoder, ds, "decoder", st.decoder_init());
  std::optional<Network> enc;
  if (!rc.encoder.empty()) enc = build(rc.encoder, ds, "encoder", st.encoder_init());
  std::vector<std::size_t> samples = rc.analyze_samples;
  if (samples.empty() && ds) samples.push_back(ds->size());
  if (samples.empty()) throw ConfigError("invalid config\n  analyze.samples: give sample counts or data.train");
  Artifacts a;
  a.summary["decoder_params"] = dec.param_count();
  if (enc) a.summary["encoder_params"] = enc->param_count();
  json reports = json::array();
  for (std::size_t n : samples) reports.push_back(load_json(analysis::load_report(dec, enc ? &*enc : nullptr, n)));
  a.summary["load"] = reports;
  return a;
}

inline void write_artifacts(const std::filesystem::path& out, const Artifacts& a) {
  std::filesystem::create_directories(out);
  for (const auto& [name, content] : a.files) data::write_text((out / name).string(), content);
  data::write_text((out / "summary.json").string(), a.summary.dump(2) + "\n");
}

}  // namespace detail

inline Artifacts execute(const RunConfig& rc) {
  const auto start = std::chrono::steady_clock::now();
  Artifacts a;
  if (rc.command == "simulate") a = detail::run_simulate(rc);
  else if (rc.command == "train-decoder") a = detail::run_train_decoder(rc);
  else if (rc.command == "train-autoencoder") a = detail::run_train_autoencoder(rc);
  else if (rc.command == "train-encoder-frozen") a = detail::run_train_encoder_frozen(rc, false);
  else if (rc.command == "train-denoising-encoder") a = detail::run_train_encoder_frozen(rc, true);
  else if (rc.command == "infer") a = detail::run_infer(rc);
  else if (rc.command == "eval") a = detail::run_eval(rc);
  else if (rc.command == "analyze-load") a = detail::run_analyze_load(rc);
  else throw ConfigError("invalid config\n  command: '" + rc.command + "' is not a command");
  a.files["config.echo"] = echo_text(rc);
  json head{{"command", rc.command}, {"seed", rc.seed}, {"config_hash", config_hash(rc)}};
  head.update(a.summary);
  head["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  a.summary = head;
  return a;
}

// Single run or seed sweep. A sweep writes one subdirectory per seed,
// `seed-<s>`, each a complete run whose echo carries that seed alone.
inline void run(const RunConfig& rc, const std::filesystem::path& out) {
  if (rc.seeds.empty()) {
    detail::write_artifacts(out, execute(rc));
    return;
  }
  std::vector<RunConfig> runs;
  for (std::uint64_t s : rc.seeds) {
    json j = rc.resolved;
    j["seed"] = s;
    j["seeds"] = json::array();
    j["parallel"] = false;
    runs.push_back(typed_config(j));
  }
  std::vector<Artifacts> results(runs.size());
  if (rc.parallel) {
    std::vector<std::future<Artifacts>> futures;
    for (const auto& r : runs) futures.push_back(std::async(std::launch::async, [&r] { return execute(r); }));
    for (std::size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < runs.size(); ++i) results[i] = execute(runs[i]);
  }
  for (std::size_t i = 0; i < runs.size(); ++i)
    detail::write_artifacts(out / ("seed-" + std::to_string(runs[i].seed)), results[i]);
  data::write_text((out / "config.echo").string(), echo_text(rc));
}

}  // namespace encfree::cli
