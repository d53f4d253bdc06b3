#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "support.hpp"
#include "tvtsyn/cli.hpp"

using namespace tvtsyn;
using namespace tvtsyn::fixtures;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tvtsyn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Weights, speaker and a 3 s input shared by the CLI tests.
struct Workspace {
  std::filesystem::path dir, weights, speaker, wav;
  std::vector<float> input;

  Workspace() : dir(temp_dir("cli")) {
    weights = dir / "w.tvtw";
    speaker = dir / "spk.f32";
    wav = dir / "in.wav";
    const auto r = run({"init-weights", "--seed", "3", "--config", "compact", "--out", weights.string()});
    if (r.code != 0) throw std::runtime_error(r.err);
    const auto g = speaker_vector(4);
    write_file(speaker, std::span(reinterpret_cast<const char*>(g.data()), g.size() * 4));
    input = decode_wav(encode_wav(random_wave(48000, 5)));
    write_wav(wav, input);
  }

  static const Workspace& get() {
    static const Workspace w;
    return w;
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST(Wav, RoundTripOfWrittenFileIsBitIdentical) {
  const auto dir = temp_dir("cli_wav");
  std::vector<float> x = random_wave(12345, 1, 0.9f);
  x.push_back(1.5f);
  x.push_back(-2.0f);
  write_wav(dir / "a.wav", x);
  const auto y = read_wav(dir / "a.wav");
  ASSERT_EQ(y.size(), x.size());
  write_wav(dir / "b.wav", y);
  EXPECT_EQ(read_file(dir / "a.wav"), read_file(dir / "b.wav"));
  EXPECT_EQ(read_wav(dir / "b.wav"), y);
  EXPECT_EQ(y[x.size() - 2], 32767.0f / 32768.0f);
  EXPECT_EQ(y.back(), -1.0f);
}

TEST(Wav, PcmGridValuesAreExact) {
  std::vector<float> x;
  for (int s = -32768; s <= 32767; s += 97) x.push_back(static_cast<float>(s) / 32768.0f);
  EXPECT_EQ(decode_wav(encode_wav(x)), x);
}

TEST(Wav, HeaderLayout) {
  const auto b = encode_wav(std::vector<float>(10, 0.0f));
  ASSERT_EQ(b.size(), 44u + 20u);
  EXPECT_EQ(std::memcmp(b.data(), "RIFF", 4), 0);
  EXPECT_EQ(std::memcmp(b.data() + 8, "WAVEfmt ", 8), 0);
  EXPECT_EQ(std::memcmp(b.data() + 36, "data", 4), 0);
  EXPECT_EQ(detail::le32(b.data() + 24), 16000u);
  EXPECT_EQ(detail::le16(b.data() + 22), 1u);
  EXPECT_EQ(detail::le16(b.data() + 34), 16u);
}

TEST(Wav, RejectsUnsupportedFormats) {
  auto b = encode_wav(std::vector<float>(4, 0.1f));
  auto stereo = b;
  stereo[22] = 2;
  EXPECT_THROW(decode_wav(stereo), InputError);
  auto rate = b;
  rate[24] = 0x44;  // 44100 Hz
  rate[25] = static_cast<char>(0xAC);
  EXPECT_THROW(decode_wav(rate), InputError);
  auto bits = b;
  bits[34] = 8;
  EXPECT_THROW(decode_wav(bits), InputError);
  auto riff = b;
  riff[0] = 'X';
  EXPECT_THROW(decode_wav(riff), FormatError);
  EXPECT_THROW(decode_wav(std::span(b).first(30)), FormatError);
}

TEST(Cli, InitWeightsIsDeterministic) {
  const auto& ws = Workspace::get();
  ASSERT_EQ(run({"init-weights", "--seed", "3", "--config", "compact", "--out", ws.path("again.tvtw")}).code, 0);
  EXPECT_EQ(read_file(ws.weights), read_file(ws.path("again.tvtw")));
  ASSERT_EQ(run({"init-weights", "--seed", "4", "--config", "compact", "--out", ws.path("other.tvtw")}).code, 0);
  EXPECT_NE(read_file(ws.weights), read_file(ws.path("other.tvtw")));
}

TEST(Cli, SynthPreservesLength) {
  const auto& ws = Workspace::get();
  const auto odd = ws.path("odd.wav");
  write_wav(odd, std::span(ws.input).first(48000 - 123));
  const auto r = run({"synth", "--weights", ws.weights.string(), "--speaker", ws.speaker.string(), "--in", odd,
                      "--out", ws.path("odd_out.wav")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_wav(ws.path("odd_out.wav")).size(), 48000u - 123u);
  const auto r3 = run({"synth", "--weights", ws.weights.string(), "--speaker", ws.speaker.string(), "--in",
                       ws.wav.string(), "--out", ws.path("s3.wav")});
  ASSERT_EQ(r3.code, 0) << r3.err;
  EXPECT_EQ(read_wav(ws.path("s3.wav")).size(), 48000u);
}

TEST(Cli, SynthMatchesLibrary) {
  const auto& ws = Workspace::get();
  const auto r = run({"synth", "--weights", ws.weights.string(), "--speaker", ws.speaker.string(), "--in",
                      ws.wav.string(), "--out", ws.path("lib.wav")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Model m = Model::from_store(load_weights(ws.weights));
  const auto y = m.synthesize(ws.input, m.prepare_speaker(speaker_vector(4))).wave;
  EXPECT_EQ(read_wav(ws.path("lib.wav")), decode_wav(encode_wav(y)));
}

TEST(Cli, StreamMatchesChunkedSynth) {
  const auto& ws = Workspace::get();
  for (const char* ms : {"20", "60", "100"}) {
    const auto log = ws.path(std::string("log") + ms + ".txt");
    const auto s = run({"stream", "--chunk-ms", ms, "--weights", ws.weights.string(), "--speaker",
                        ws.speaker.string(), "--in", ws.wav.string(), "--out", ws.path("stream.wav"), "--log", log});
    ASSERT_EQ(s.code, 0) << s.err;
    const auto o = run({"synth", "--chunk-ms", ms, "--weights", ws.weights.string(), "--speaker",
                        ws.speaker.string(), "--in", ws.wav.string(), "--out", ws.path("offline.wav")});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto a = read_wav(ws.path("stream.wav"));
    const auto b = read_wav(ws.path("offline.wav"));
    ASSERT_EQ(a.size(), b.size());
    EXPECT_LE(max_abs_diff(a, b), 1e-4f) << ms;

    const auto text = read_file(log);
    const std::string lines(text.begin(), text.end());
    const auto chunks = static_cast<std::size_t>(std::count(lines.begin(), lines.end(), '\n'));
    EXPECT_EQ(chunks, 48000u / (16u * static_cast<std::size_t>(std::stoi(ms))));
    EXPECT_NE(lines.find("processing_ms"), std::string::npos);
  }
}

TEST(Cli, F0ScaleAndLookaheadChangeOutput) {
  const auto& ws = Workspace::get();
  auto synth = [&](std::vector<std::string> extra, const std::string& out) {
    std::vector<std::string> a{"synth", "--weights", ws.weights.string(), "--speaker", ws.speaker.string(),
                               "--in", ws.wav.string(), "--out", ws.path(out)};
    a.insert(a.end(), extra.begin(), extra.end());
    EXPECT_EQ(run(a).code, 0);
    return read_wav(ws.path(out));
  };
  const auto base = synth({}, "base.wav");
  EXPECT_NE(synth({"--f0-scale", "1.5"}, "f0.wav"), base);
  EXPECT_NE(synth({"--lookahead", "0"}, "la0.wav"), base);
  EXPECT_EQ(synth({"--lookahead", "4"}, "la4.wav"), base);
}

TEST(Cli, DumpTvtEmitsOneRecordPerFrame) {
  const auto& ws = Workspace::get();
  const auto r = run({"dump-tvt", "--weights", ws.weights.string(), "--speaker", ws.speaker.string(), "--in",
                      ws.wav.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream is(r.out);
  std::string line;
  std::size_t frames = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["frame"], frames);
    const auto w = j["facet_weights"].get<std::vector<float>>();
    ASSERT_EQ(w.size(), 48u);
    double sum = 0;
    for (float v : w) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-5);
    EXPECT_EQ(j["top1"].get<std::size_t>(),
              static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin()));
    const float a = j["alpha"];
    EXPECT_GE(a, 0.0f);
    EXPECT_LE(a, 1.0f);
    ++frames;
  }
  EXPECT_EQ(frames, 150u);

  const auto forced = run({"dump-tvt", "--weights", ws.weights.string(), "--speaker", ws.speaker.string(), "--in",
                           ws.wav.string(), "--alpha", "0", "--out", ws.path("tvt.jsonl")});
  ASSERT_EQ(forced.code, 0);
  const auto bytes = read_file(ws.path("tvt.jsonl"));
  std::istringstream fs(std::string(bytes.begin(), bytes.end()));
  while (std::getline(fs, line)) EXPECT_EQ(nlohmann::json::parse(line)["alpha"], 0.0f);
}

TEST(Cli, BenchReportsHundredMeasuredUtterances) {
  const auto& ws = Workspace::get();
  const auto r = run({"bench", "--weights", ws.weights.string(), "--chunk-ms", "60", "--seconds", "0.12"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["utterances"].size(), 100u);
  EXPECT_EQ(j["warmup_count"], 10u);
  EXPECT_EQ(j["chunk_ms"], 60.0f);
  EXPECT_FALSE(j["cyclic_reuse"].get<bool>());
  EXPECT_EQ(j["rtf_below_one"].get<bool>(), j["rtf_mean"].get<double>() < 1.0);
  for (const auto& u : j["utterances"]) EXPECT_GT(u["latency_ms"].get<double>(), 60.0);
}

TEST(Cli, BenchReadsUtteranceDirectory) {
  const auto& ws = Workspace::get();
  const auto dir = temp_dir("cli_bench_utts");
  for (int i = 0; i < 3; ++i) write_wav(dir / ("u" + std::to_string(i) + ".wav"), random_wave(3200, 40 + i));
  const auto r = run({"bench", "--weights", ws.weights.string(), "--chunk-ms", "100", "--utterances", dir.string(),
                      "--warmup", "1", "--measured", "4", "--out", ws.path("bench.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto bytes = read_file(ws.path("bench.json"));
  const auto j = nlohmann::json::parse(std::string(bytes.begin(), bytes.end()));
  EXPECT_EQ(j["utterances"].size(), 4u);
  EXPECT_TRUE(j["cyclic_reuse"].get<bool>());
  for (const auto& u : j["utterances"]) EXPECT_EQ(u["chunks"], 2u);
}

TEST(Cli, ProbeExitCodes) {
  const auto& ws = Workspace::get();
  for (const char* la : {"0", "4"}) {
    const auto ok = run({"probe", "--weights", ws.weights.string(), "--lookahead", la, "--trials", "20"});
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_EQ(nlohmann::json::parse(ok.out)["violation_count"], 0u);
  }
  const auto bad = run({"probe", "--weights", ws.weights.string(), "--lookahead", "4", "--trials", "30", "--unmasked"});
  EXPECT_EQ(bad.code, 3);
  EXPECT_GT(nlohmann::json::parse(bad.out)["violation_count"].get<std::size_t>(), 0u);
}

TEST(Cli, InputErrorsExitOne) {
  const auto& ws = Workspace::get();
  EXPECT_EQ(run({"synth", "--weights", ws.path("missing.tvtw"), "--speaker", ws.speaker.string(), "--in",
                 ws.wav.string(), "--out", ws.path("x.wav")})
                .code,
            1);
  write_file(ws.path("short.f32"), std::vector<char>(100, 0));
  const auto spk = run({"synth", "--weights", ws.weights.string(), "--speaker", ws.path("short.f32"), "--in",
                        ws.wav.string(), "--out", ws.path("x.wav")});
  EXPECT_EQ(spk.code, 1);
  EXPECT_NE(spk.err.find("704"), std::string::npos) << spk.err;

  auto corrupt = read_file(ws.weights);
  corrupt.resize(corrupt.size() - 7);
  write_file(ws.path("corrupt.tvtw"), corrupt);
  EXPECT_EQ(run({"synth", "--weights", ws.path("corrupt.tvtw"), "--speaker", ws.speaker.string(), "--in",
                 ws.wav.string(), "--out", ws.path("x.wav")})
                .code,
            1);

  auto wav = encode_wav(std::vector<float>(320, 0.0f));
  wav[24] = 0x22;
  wav[25] = 0x56;  // 22050 Hz
  write_file(ws.path("22k.wav"), wav);
  const auto rate = run({"synth", "--weights", ws.weights.string(), "--speaker", ws.speaker.string(), "--in",
                         ws.path("22k.wav"), "--out", ws.path("x.wav")});
  EXPECT_EQ(rate.code, 1);
  EXPECT_NE(rate.err.find("16000"), std::string::npos) << rate.err;
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto& ws = Workspace::get();
  const auto chunk = run({"stream", "--chunk-ms", "50", "--weights", ws.weights.string(), "--speaker",
                          ws.speaker.string(), "--in", ws.wav.string(), "--out", ws.path("x.wav")});
  EXPECT_EQ(chunk.code, 2);
  EXPECT_NE(chunk.err.find("40 ms or 60 ms"), std::string::npos) << chunk.err;
  EXPECT_EQ(run({"synth", "--weights", ws.weights.string(), "--speaker", ws.speaker.string(), "--in",
                 ws.wav.string(), "--out", ws.path("x.wav"), "--lookahead", "5"})
                .code,
            2);
  EXPECT_EQ(run({"synth", "--weights", ws.weights.string()}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"init-weights", "--config", "tiny", "--out", ws.path("t.tvtw")}).code, 1);
  write_file(ws.path("bad.cfg"), std::string_view("encoder.strides = 8,5,4\n"));
  EXPECT_EQ(run({"init-weights", "--config", ws.path("bad.cfg"), "--out", ws.path("t.tvtw")}).code, 2);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"init-weights", "synth", "stream", "bench", "probe", "dump-tvt"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}
