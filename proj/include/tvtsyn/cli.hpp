#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tvtsyn/metrics.hpp"
#include "tvtsyn/model.hpp"
#include "tvtsyn/streaming.hpp"
#include "tvtsyn/wav.hpp"
#include "tvtsyn/weights.hpp"

namespace tvtsyn::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kConfigError = 2, kInternalError = 3 };

inline ModelConfig load_config_arg(const std::string& arg) {
  if (arg == "full" || arg == "compact") return ModelConfig::preset(arg);
  const auto bytes = read_file(arg);
  return ModelConfig::from_text(std::string(bytes.begin(), bytes.end()));
}

inline std::vector<float> random_speaker(std::size_t dim, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<float> g(dim);
  for (float& v : g) v = static_cast<float>(rng.normal());
  return g;
}

inline std::vector<float> random_utterance(std::size_t samples, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<float> w(samples);
  for (float& v : w) v = static_cast<float>(0.1 * rng.normal());
  return w;
}

inline std::vector<float> trimmed(std::vector<float> v, std::size_t n) {
  v.resize(n, 0.0f);
  return v;
}

struct Options {
  std::uint64_t seed = 0;
  std::string config = "full";
  std::string weights, speaker, in, out, log, utterances;
  std::optional<std::size_t> lookahead;
  float f0_scale = 1.0f;
  std::optional<float> chunk_ms;
  float overlap_ms = 20.0f;
  std::optional<float> alpha;
  std::size_t synthetic = 110;
  float seconds = 3.0f;
  std::size_t warmup = 10, measured = 100, parallel = 1;
  std::size_t trials = 100, frames = 24;
  std::optional<std::size_t> offset;
  bool unmasked = false;
};

inline int init_weights(const Options& o, std::ostream& out) {
  const ModelConfig cfg = load_config_arg(o.config);
  const WeightStore store = Model::random_init(o.seed, cfg);
  save_weights(store, o.out);
  out << "wrote " << o.out << ": " << Model::encoder_parameters(store) << " encoder + "
      << Model::decoder_parameters(store) << " decoder parameters\n";
  return kOk;
}

struct Loaded {
  std::unique_ptr<Model> model;
  SpeakerContext speaker;
};

inline Loaded load_model(const Options& o, bool need_speaker) {
  Loaded l;
  l.model = std::make_unique<Model>(Model::from_store(load_weights(o.weights)));
  const std::size_t dim = l.model->config().tvt.global_dim;
  const std::vector<float> g = (!need_speaker && o.speaker.empty()) ? random_speaker(dim, o.seed)
                                                                     : read_f32_file(o.speaker, dim);
  l.speaker = l.model->prepare_speaker(g);
  return l;
}

inline StreamConfig stream_config(const Options& o, const Model& m) {
  StreamConfig sc;
  sc.chunk_ms = o.chunk_ms.value_or(60.0f);
  sc.overlap_ms = o.overlap_ms;
  sc.lookahead_frames = o.lookahead.value_or(m.config().encoder.lookahead_frames);
  sc.f0_scale = o.f0_scale;
  sc.validate();
  return sc;
}

inline int synth(const Options& o, std::ostream& out) {
  auto [model, spk] = load_model(o, true);
  const std::vector<float> wave = read_wav(o.in);
  SynthOptions so;
  if (o.chunk_ms) so = stream_config(o, *model).synth_options();
  so.lookahead_frames = o.lookahead.value_or(model->config().encoder.lookahead_frames);
  so.f0_scale = o.f0_scale;
  so.alpha_override = o.alpha;
  const SynthResult r = model->synthesize(wave, spk, so);
  write_wav(o.out, trimmed(r.wave, wave.size()));
  out << "synth: " << wave.size() << " samples, " << r.codes.size() << " frames -> " << o.out << "\n";
  return kOk;
}

inline int stream(const Options& o, std::ostream& out, std::ostream& err) {
  auto [model, spk] = load_model(o, true);
  const StreamConfig sc = stream_config(o, *model);
  const std::vector<float> wave = read_wav(o.in);
  auto session = StreamSession::open(*model, sc, spk.global);
  std::ofstream log_file;
  if (!o.log.empty()) {
    log_file.open(o.log);
    if (!log_file) throw InputError("cannot write '" + o.log + "'");
  }
  std::ostream& log = o.log.empty() ? err : log_file;
  const auto clock = steady_clock_ms();
  const std::size_t chunk = sc.chunk_samples();
  std::vector<float> result, buf(chunk);
  double total_ms = 0.0;
  std::size_t idx = 0;
  for (std::size_t off = 0; off < wave.size(); off += chunk, ++idx) {
    std::fill(buf.begin(), buf.end(), 0.0f);
    const std::size_t n = std::min(chunk, wave.size() - off);
    std::copy_n(wave.begin() + static_cast<std::ptrdiff_t>(off), n, buf.begin());
    const double t0 = clock();
    const std::vector<float> y = session.feed_chunk(buf);
    const double dt = clock() - t0;
    total_ms += dt;
    result.insert(result.end(), y.begin(), y.end());
    log << "chunk " << idx << " processing_ms " << std::fixed << std::setprecision(3) << dt << " rtf "
        << std::setprecision(4) << dt / sc.chunk_ms << "\n";
  }
  const std::vector<float> tail = session.flush();
  result.insert(result.end(), tail.begin(), tail.end());
  write_wav(o.out, trimmed(result, wave.size()));
  const double mean = idx > 0 ? total_ms / static_cast<double>(idx) : 0.0;
  out << "stream: " << idx << " chunks of " << sc.chunk_ms << " ms, mean processing " << std::fixed
      << std::setprecision(3) << mean << " ms, latency " << sc.chunk_ms + mean << " ms -> " << o.out << "\n";
  return kOk;
}

inline int bench(const Options& o, std::ostream& out) {
  auto [model, spk] = load_model(o, false);
  const StreamConfig sc = stream_config(o, *model);
  std::vector<std::vector<float>> utts;
  if (!o.utterances.empty()) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(o.utterances)) {
      if (e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) utts.push_back(read_wav(f));
    if (utts.empty()) throw InputError("no .wav files in '" + o.utterances + "'");
  } else {
    const auto n = static_cast<std::size_t>(o.seconds * kSampleRate);
    for (std::size_t i = 0; i < o.synthetic; ++i) utts.push_back(random_utterance(n, o.seed + 1 + i));
  }
  const Model& m = *model;
  const std::vector<float> g = spk.global;
  SessionFactory factory = [&m, &sc, g] {
    auto s = std::make_shared<StreamSession>(StreamSession::open(m, sc, g));
    return ChunkSink([s](std::span<const float> x) { s->feed_chunk(x); });
  };
  BenchConfig bc;
  bc.chunk_ms = sc.chunk_ms;
  bc.warmup = o.warmup;
  bc.measured = o.measured;
  bc.parallel_sessions = o.parallel;
  const LatencyReport rep = latency_bench(factory, utts, bc);
  const std::string text = rep.to_json().dump(2);
  if (o.out.empty()) {
    out << text << "\n";
  } else {
    write_file(o.out, std::span<const char>(text.data(), text.size()));
    out << "bench: latency " << rep.latency_ms_mean << " ms, rtf " << rep.rtf_mean << " -> " << o.out << "\n";
  }
  return kOk;
}

inline int probe(const Options& o, std::ostream& out) {
  auto [model, spk] = load_model(o, false);
  ProbeConfig pc;
  pc.lookahead_frames = o.lookahead.value_or(0);
  pc.trials = o.trials;
  pc.seed = o.seed;
  pc.frames = o.frames;
  if (o.offset) pc.perturb_offset = static_cast<std::int64_t>(*o.offset);
  pc.masked = !o.unmasked;
  const ProbeReport rep = causality_probe(*model, spk, pc);
  out << rep.to_json().dump(2) << "\n";
  return rep.violations.empty() ? kOk : kInternalError;
}

inline int dump_tvt(const Options& o, std::ostream& out) {
  auto [model, spk] = load_model(o, true);
  const std::vector<float> wave = read_wav(o.in);
  SynthOptions so;
  so.lookahead_frames = o.lookahead;
  so.alpha_override = o.alpha;
  const SynthResult r = model->synthesize(wave, spk, so);
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw InputError("cannot write '" + o.out + "'");
  }
  std::ostream& dst = o.out.empty() ? out : file;
  const TvtSequence& tv = r.timbre;
  for (std::size_t t = 0; t < tv.alpha.size(); ++t) {
    nlohmann::json j;
    j["frame"] = t;
    j["alpha"] = tv.alpha[t];
    j["top1"] = tv.top1[t];
    j["facet_weights"] = std::vector<float>(tv.facet_weights.row(t).begin(), tv.facet_weights.row(t).end());
    dst << j.dump() << "\n";
  }
  return kOk;
}

// Parses argv and runs one subcommand; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Streaming voice conversion engine"};
  app.require_subcommand(1);
  Options o;

  auto* init = app.add_subcommand("init-weights", "Write a seeded random weight file");
  init->add_option("--seed", o.seed, "RNG seed");
  init->add_option("--config", o.config, "Preset (full, compact) or key=value config file");
  init->add_option("--out", o.out, "Output TVTW file")->required();

  auto model_opts = [&o](CLI::App* c, bool speaker_required) {
    c->add_option("--weights", o.weights, "TVTW weight file")->required();
    auto* s = c->add_option("--speaker", o.speaker, "Raw little-endian f32 speaker vector");
    if (speaker_required) s->required();
  };

  auto* syn = app.add_subcommand("synth", "Convert a whole file");
  model_opts(syn, true);
  syn->add_option("--in", o.in, "Input WAV")->required();
  syn->add_option("--out", o.out, "Output WAV")->required();
  syn->add_option("--lookahead", o.lookahead, "Encoder lookahead frames (0-4)");
  syn->add_option("--f0-scale", o.f0_scale, "Multiplier on predicted F0");
  syn->add_option("--chunk-ms", o.chunk_ms, "Reproduce a stream with this chunk size");
  syn->add_option("--overlap-ms", o.overlap_ms, "Crossfade length with --chunk-ms");
  syn->add_option("--alpha", o.alpha, "Force the timbre gate to this value");

  auto* str = app.add_subcommand("stream", "Convert a file chunk by chunk");
  model_opts(str, true);
  str->add_option("--chunk-ms", o.chunk_ms, "Chunk size in ms (multiple of 20)");
  str->add_option("--in", o.in, "Input WAV")->required();
  str->add_option("--out", o.out, "Output WAV")->required();
  str->add_option("--lookahead", o.lookahead, "Encoder lookahead frames within a chunk (0-4)");
  str->add_option("--overlap-ms", o.overlap_ms, "Crossfade length");
  str->add_option("--f0-scale", o.f0_scale, "Multiplier on predicted F0");
  str->add_option("--log", o.log, "Per-chunk timing log (default: stderr)");

  auto* ben = app.add_subcommand("bench", "Latency and real-time factor report");
  model_opts(ben, false);
  ben->add_option("--chunk-ms", o.chunk_ms, "Chunk size in ms");
  ben->add_option("--utterances", o.utterances, "Directory of WAV files (default: synthetic)");
  ben->add_option("--synthetic", o.synthetic, "Number of synthetic utterances");
  ben->add_option("--seconds", o.seconds, "Length of each synthetic utterance");
  ben->add_option("--warmup", o.warmup, "Warm-up utterances");
  ben->add_option("--measured", o.measured, "Measured utterances");
  ben->add_option("--parallel", o.parallel, "Concurrent sessions");
  ben->add_option("--seed", o.seed, "Seed for synthetic data and speaker");
  ben->add_option("--lookahead", o.lookahead, "Encoder lookahead frames within a chunk");
  ben->add_option("--out", o.out, "Write the JSON report here instead of stdout");

  auto* prb = app.add_subcommand("probe", "Causality probe");
  model_opts(prb, false);
  prb->add_option("--lookahead", o.lookahead, "Encoder lookahead frames (0-4)");
  prb->add_option("--trials", o.trials, "Random trials");
  prb->add_option("--seed", o.seed, "Seed");
  prb->add_option("--frames", o.frames, "Frames per trial utterance");
  prb->add_option("--offset", o.offset, "Perturb after this many frames past the cut (default: lookahead)");
  prb->add_flag("--unmasked", o.unmasked, "Disable attention masks (mutation check)");

  auto* dmp = app.add_subcommand("dump-tvt", "Per-frame facet weights, top-1 slot and gate as JSON lines");
  model_opts(dmp, true);
  dmp->add_option("--in", o.in, "Input WAV")->required();
  dmp->add_option("--out", o.out, "Output JSON-lines file (default: stdout)");
  dmp->add_option("--lookahead", o.lookahead, "Encoder lookahead frames (0-4)");
  dmp->add_option("--alpha", o.alpha, "Force the timbre gate to this value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (init->parsed()) return init_weights(o, out);
    if (syn->parsed()) return synth(o, out);
    if (str->parsed()) return stream(o, out, err);
    if (ben->parsed()) return bench(o, out);
    if (prb->parsed()) return probe(o, out);
    if (dmp->parsed()) return dump_tvt(o, out);
    return kConfigError;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const StateError& e) {
    err << "state error: " << e.what() << "\n";
    return kInternalError;
  } catch (const InternalError& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace tvtsyn::cli
