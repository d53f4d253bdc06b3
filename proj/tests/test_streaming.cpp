#include <gtest/gtest.h>

#include <thread>

#include "support.hpp"

using namespace tvtsyn;
using namespace tvtsyn::fixtures;

namespace {

StreamConfig stream_cfg(float chunk_ms, float overlap_ms = 20.0f) {
  StreamConfig c;
  c.chunk_ms = chunk_ms;
  c.overlap_ms = overlap_ms;
  return c;
}

std::vector<float> run_stream(StreamSession& s, const std::vector<float>& wave) {
  const std::size_t n = s.config().chunk_samples();
  std::vector<float> out;
  for (std::size_t off = 0; off + n <= wave.size(); off += n) {
    const auto y = s.feed_chunk(std::span(wave).subspan(off, n));
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

}  // namespace

TEST(StreamConfig, ChunkSizesInFrames) {
  EXPECT_EQ(stream_cfg(60).chunk_samples(), 960u);
  EXPECT_EQ(stream_cfg(60).chunk_frames(), 3u);
  EXPECT_EQ(stream_cfg(100).chunk_samples(), 1600u);
  EXPECT_EQ(stream_cfg(100).chunk_frames(), 5u);
  EXPECT_EQ(stream_cfg(20).chunk_frames(), 1u);
  EXPECT_EQ(stream_cfg(140).chunk_frames(), 7u);
  EXPECT_EQ(stream_cfg(60).overlap_samples(), 320u);
  for (float ms : {20.0f, 40.0f, 60.0f, 100.0f, 140.0f}) EXPECT_NO_THROW(stream_cfg(ms).validate());
}

TEST(StreamConfig, MisalignedChunkSuggestsNeighbours) {
  try {
    stream_cfg(50).validate();
    FAIL() << "50 ms accepted";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("40 ms or 60 ms"), std::string::npos) << msg;
    EXPECT_NE(msg.find("800"), std::string::npos) << msg;
  }
  EXPECT_THROW(stream_cfg(10).validate(), ConfigError);
  EXPECT_THROW(stream_cfg(0).validate(), ConfigError);
  EXPECT_THROW(stream_cfg(-20).validate(), ConfigError);
  EXPECT_THROW(stream_cfg(65).validate(), ConfigError);
}

TEST(StreamConfig, OverlapAndLookaheadLimits) {
  EXPECT_THROW(stream_cfg(20, 40).validate(), ConfigError);
  EXPECT_THROW(stream_cfg(60, -1).validate(), ConfigError);
  EXPECT_THROW(stream_cfg(60, 0.01f).validate(), ConfigError);
  StreamConfig c = stream_cfg(60);
  c.lookahead_frames = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(StreamSession, OpenRejectsBadConfigAndSpeaker) {
  const auto g = speaker_vector(1);
  EXPECT_THROW(StreamSession::open(compact_model(), stream_cfg(50), g), ConfigError);
  EXPECT_THROW(StreamSession::open(compact_model(), stream_cfg(60), std::vector<float>(10, 1.0f)), InputError);
}

TEST(StreamSession, MatchesOfflineForEveryChunkSize) {
  const Model& m = compact_model();
  const auto g = speaker_vector(2);
  const auto spk = m.prepare_speaker(g);
  for (float ms : {20.0f, 40.0f, 60.0f, 100.0f, 140.0f}) {
    for (std::uint64_t seed : {3u, 4u}) {
      const StreamConfig cfg = stream_cfg(ms);
      const std::size_t n = cfg.chunk_samples();
      auto wave = random_wave(48000, seed);
      wave.resize(wave.size() / n * n);
      auto session = StreamSession::open(m, cfg, g);
      const auto streamed = run_stream(session, wave);
      const auto offline = m.synthesize(wave, spk, cfg.synth_options()).wave;
      ASSERT_EQ(streamed.size(), offline.size());
      EXPECT_LE(max_abs_diff(streamed, offline), 1e-4f) << ms << " ms";
    }
  }
}

TEST(StreamSession, LookaheadNeverCrossesChunkBoundary) {
  // Changing the next chunk cannot alter what was already emitted.
  const Model& m = compact_model();
  const auto g = speaker_vector(5);
  const auto a = random_wave(960 * 6, 6);
  auto b = a;
  for (std::size_t i = 960 * 3; i < b.size(); ++i) b[i] = -b[i];
  auto s1 = StreamSession::open(m, stream_cfg(60), g);
  auto s2 = StreamSession::open(m, stream_cfg(60), g);
  const auto y1 = run_stream(s1, a);
  const auto y2 = run_stream(s2, b);
  for (std::size_t i = 0; i < 960 * 3; ++i) ASSERT_EQ(y1[i], y2[i]) << i;
}

TEST(StreamSession, IdenticalSessionsAreBitwiseEqual) {
  const auto g = speaker_vector(7);
  const auto wave = random_wave(960 * 20, 8);
  auto s1 = StreamSession::open(compact_model(), stream_cfg(60), g);
  auto s2 = StreamSession::open(compact_model(), stream_cfg(60), g);
  EXPECT_EQ(run_stream(s1, wave), run_stream(s2, wave));
  EXPECT_EQ(s1.flush(), s2.flush());
}

TEST(StreamSession, SilenceReachesSteadyState) {
  auto s = StreamSession::open(compact_model(), stream_cfg(60), speaker_vector(9));
  const std::vector<float> zeros(960, 0.0f);
  std::vector<std::vector<float>> out;
  for (int i = 0; i < 30; ++i) out.push_back(s.feed_chunk(zeros));
  for (int i = 11; i < 30; ++i) EXPECT_LE(max_abs_diff(out[i], out[10]), 1e-5f) << "chunk " << i;
  for (const auto& c : out)
    for (float v : c) ASSERT_LE(std::abs(v), 1.0f);
  // The response to silence is the same as offline.
  const auto offline =
      compact_model().synthesize(std::vector<float>(960 * 30, 0.0f), s.speaker(), stream_cfg(60).synth_options()).wave;
  std::vector<float> flat;
  for (const auto& c : out) flat.insert(flat.end(), c.begin(), c.end());
  EXPECT_LE(max_abs_diff(flat, offline), 1e-4f);
}

TEST(StreamSession, ResetReplaysLikeFreshSession) {
  const auto g = speaker_vector(10);
  const auto wave = random_wave(960 * 8, 11);
  auto fresh = StreamSession::open(compact_model(), stream_cfg(60), g);
  const auto ref = run_stream(fresh, wave);
  auto s = StreamSession::open(compact_model(), stream_cfg(60), g);
  run_stream(s, random_wave(960 * 5, 12));
  s.flush();
  s.reset();
  EXPECT_FALSE(s.closed());
  EXPECT_EQ(s.samples_in(), 0);
  EXPECT_EQ(run_stream(s, wave), ref);
}

TEST(StreamSession, FlushEmitsAtMostOverlap) {
  auto s = StreamSession::open(compact_model(), stream_cfg(60), speaker_vector(13));
  run_stream(s, random_wave(960 * 4, 14));
  const auto tail = s.flush();
  EXPECT_LE(tail.size(), 320u);
  EXPECT_EQ(s.samples_out(), 960 * 4 + static_cast<std::int64_t>(tail.size()));
  for (float v : tail) EXPECT_LE(std::abs(v), 1.0f);

  auto none = StreamSession::open(compact_model(), stream_cfg(60, 0), speaker_vector(13));
  run_stream(none, random_wave(960 * 2, 15));
  EXPECT_TRUE(none.flush().empty());
}

TEST(StreamSession, LifecycleErrors) {
  auto s = StreamSession::open(compact_model(), stream_cfg(60), speaker_vector(16));
  EXPECT_THROW(s.feed_chunk(std::vector<float>(959, 0.0f)), InputError);
  EXPECT_THROW(s.feed_chunk(std::vector<float>(1920, 0.0f)), InputError);
  s.feed_chunk(std::vector<float>(960, 0.1f));
  s.flush();
  EXPECT_TRUE(s.closed());
  EXPECT_THROW(s.flush(), StateError);
  EXPECT_THROW(s.feed_chunk(std::vector<float>(960, 0.0f)), StateError);
}

TEST(StreamSession, ClocksAdvancePerChunk) {
  auto s = StreamSession::open(compact_model(), stream_cfg(100), speaker_vector(17));
  for (int i = 1; i <= 7; ++i) {
    EXPECT_EQ(s.feed_chunk(random_wave(1600, 100 + i)).size(), 1600u);
    EXPECT_EQ(s.samples_in(), 1600 * i);
    EXPECT_EQ(s.samples_out(), 1600 * i);
    EXPECT_EQ(s.frames(), 5 * i);
  }
}

TEST(StreamSession, ConcurrentSessionsMatchSerial) {
  const Model& m = compact_model();
  constexpr int kSessions = 4;
  std::vector<std::vector<float>> inputs, serial(kSessions), parallel(kSessions);
  for (int i = 0; i < kSessions; ++i) inputs.push_back(random_wave(960 * 15, 200 + i));
  for (int i = 0; i < kSessions; ++i) {
    auto s = StreamSession::open(m, stream_cfg(60), speaker_vector(300 + i));
    serial[i] = run_stream(s, inputs[i]);
  }
  std::vector<std::thread> threads;
  for (int i = 0; i < kSessions; ++i) {
    threads.emplace_back([&, i] {
      auto s = StreamSession::open(m, stream_cfg(60), speaker_vector(300 + i));
      parallel[i] = run_stream(s, inputs[i]);
    });
  }
  for (auto& t : threads) t.join();
  for (int i = 0; i < kSessions; ++i) EXPECT_EQ(serial[i], parallel[i]) << "session " << i;
}

TEST(StreamSession, SessionMovesBetweenThreads) {
  const auto g = speaker_vector(18);
  const auto wave = random_wave(960 * 10, 19);
  auto ref_s = StreamSession::open(compact_model(), stream_cfg(60), g);
  const auto ref = run_stream(ref_s, wave);

  auto s = StreamSession::open(compact_model(), stream_cfg(60), g);
  std::vector<float> out;
  for (std::size_t k = 0; k < 10; ++k) {
    std::thread([&] {
      const auto y = s.feed_chunk(std::span(wave).subspan(k * 960, 960));
      out.insert(out.end(), y.begin(), y.end());
    }).join();
  }
  EXPECT_EQ(out, ref);
}

TEST(StreamSession, StateSizeIndependentOfStreamLength) {
  auto s = StreamSession::open(compact_model(), stream_cfg(60), speaker_vector(20));
  const std::size_t at_open = s.state_bytes();
  s.feed_chunk(random_wave(960, 21));
  EXPECT_EQ(s.state_bytes(), at_open);
  const std::vector<float> chunk = random_wave(960, 22);
  for (int i = 0; i < 150; ++i) s.feed_chunk(chunk);  // 9 s, past the 2 s cache
  EXPECT_EQ(s.state_bytes(), at_open);
}

TEST(StreamSession, RejectsLookaheadBeyondModel) {
  ModelConfig cfg = ModelConfig::compact();
  cfg.encoder.lookahead_frames = 2;
  const Model m = Model::from_store(Model::random_init(23, cfg));
  StreamConfig sc = stream_cfg(60);
  sc.lookahead_frames = 3;
  EXPECT_THROW(StreamSession::open(m, sc, speaker_vector(24)), ConfigError);
  sc.lookahead_frames = 2;
  EXPECT_NO_THROW(StreamSession::open(m, sc, speaker_vector(24)));
}
