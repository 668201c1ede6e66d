#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "gchoreo/audio.hpp"
#include "gchoreo/error.hpp"
#include "oracles.hpp"

using namespace gchoreo;

namespace {

AudioClip tone(double hz, double seconds, double sr = 8000.0) {
  AudioClip c;
  c.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  for (std::size_t i = 0; i < n; ++i) c.samples.push_back(0.5 * std::sin(2 * std::numbers::pi * hz * i / sr));
  return c;
}

// Short decaying noise bursts at `period` seconds, starting at `offset`.
AudioClip clicks(double period, double offset, double seconds, double sr = 8000.0) {
  AudioClip c;
  c.sample_rate = sr;
  c.samples.assign(static_cast<std::size_t>(seconds * sr), 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double t = offset; t < seconds; t += period) {
    const auto s = static_cast<std::size_t>(t * sr);
    for (std::size_t i = 0; i < 400 && s + i < c.samples.size(); ++i) c.samples[s + i] = 0.8 * u(rng) * std::exp(-static_cast<double>(i) / 80.0);
  }
  return c;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gchoreo_test_" + name);
}

}  // namespace

TEST_CASE("log-mel frames match a naive DFT") {
  AudioAnalysisConfig cfg;
  cfg.window = 256;
  cfg.hop = 128;
  cfg.bands = 12;
  const AudioClip clip = tone(440.0, 0.2);
  const AudioFrames fr = extract_audio_frames(clip, cfg);
  CHECK(fr.size() == static_cast<int>((clip.samples.size() - 256) / 128 + 1));
  const Matrix fb = mel_filterbank(12, 256, 8000.0);
  for (int t : {0, 3, fr.size() - 1}) {
    std::vector<double> frame(clip.samples.begin() + t * 128, clip.samples.begin() + t * 128 + 256);
    const auto p = oracle::hann_power_spectrum(frame);
    const Vector power = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
    const Vector e = fb * power;
    for (int b = 0; b < 12; ++b) CHECK(fr.log_mel(t, b) == doctest::Approx(std::log(std::max(e[b], 1e-10))).epsilon(1e-9));
    CHECK(fr.times[static_cast<std::size_t>(t)] == doctest::Approx((t * 128 + 128) / 8000.0));
  }
}

TEST_CASE("a pure tone peaks in the band around its frequency") {
  AudioAnalysisConfig cfg;
  cfg.window = 1024;
  cfg.hop = 512;
  cfg.bands = 24;
  const AudioFrames fr = extract_audio_frames(tone(1000.0, 0.5), cfg);
  Eigen::Index best = 0;
  fr.log_mel.row(2).maxCoeff(&best);
  const double lo = best == 0 ? 0.0 : mel_band_center(static_cast<int>(best) - 1, 24, 8000.0);
  const double hi = mel_band_center(static_cast<int>(best) + 1, 24, 8000.0);
  CHECK(lo < 1000.0);
  CHECK(hi > 1000.0);
}

TEST_CASE("mel filterbank shape") {
  const Matrix fb = mel_filterbank(10, 512, 16000.0);
  CHECK(fb.rows() == 10);
  CHECK(fb.cols() == 257);
  CHECK(fb.minCoeff() >= 0.0);
  CHECK(fb.maxCoeff() <= 1.0);
  for (int b = 0; b < 10; ++b) CHECK(fb.row(b).maxCoeff() > 0.5);
  // Adjacent triangles sum to one strictly between the first and last centers.
  for (int k = 0; k < 257; ++k) {
    const double f = 16000.0 * k / 512;
    if (f > mel_band_center(0, 10, 16000.0) && f < mel_band_center(9, 10, 16000.0))
      CHECK(fb.col(k).sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("silence hits the log floor") {
  AudioClip c;
  c.sample_rate = 8000;
  c.samples.assign(2048, 0.0);
  AudioAnalysisConfig cfg;
  cfg.log_floor = 1e-6;
  const auto fr = extract_audio_frames(c, cfg);
  CHECK(fr.log_mel.maxCoeff() == doctest::Approx(std::log(1e-6)));
  for (double o : fr.onset) CHECK(o == 0.0);
}

TEST_CASE("frame mean removal") {
  AudioAnalysisConfig cfg;
  cfg.remove_frame_mean = true;
  const auto fr = extract_audio_frames(tone(300, 0.5), cfg);
  CHECK(fr.log_mel.rowwise().mean().cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("audio input validation") {
  CHECK_THROWS_AS(extract_audio_frames(tone(440, 0.01)), ValidationError);
  AudioClip empty;
  CHECK_THROWS_AS(extract_audio_frames(empty), ValidationError);
  AudioClip nan = tone(440, 0.5);
  nan.samples[10] = std::nan("");
  CHECK_THROWS_AS(extract_audio_frames(nan), ValidationError);
  AudioAnalysisConfig bad;
  bad.hop = 2048;
  CHECK_THROWS_AS(extract_audio_frames(tone(440, 0.5), bad), ValidationError);
}

TEST_CASE("click-track beats are recovered") {
  AudioAnalysisConfig cfg;
  cfg.window = 256;
  cfg.hop = 64;
  const double period = 0.5, offset = 0.25;
  const auto beats = detect_beats(extract_audio_frames(clicks(period, offset, 6.0), cfg), 0.25);
  REQUIRE(beats.size() >= 10);
  const double tol = 256.0 / 8000.0;
  for (double b : beats) {
    const double k = std::round((b - offset) / period);
    CHECK(std::abs(b - (offset + k * period)) < tol);
  }
  for (std::size_t i = 1; i < beats.size(); ++i) CHECK(beats[i] - beats[i - 1] >= 0.25);
}

TEST_CASE("pick_peaks keeps the stronger peak within the gap") {
  const std::vector<double> s{0, 1, 0, 3, 0, 0, 2, 0};
  const std::vector<double> t{0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  const auto p = pick_peaks(s, t, 0.5, 0.25);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == 0.3);
  CHECK(p[1] == 0.6);
  CHECK(pick_peaks(s, t, 2.5, 0.0) == std::vector<double>{0.3});
}

TEST_CASE("audio codebook quantization") {
  std::mt19937_64 rng(3);
  AudioAnalysisConfig cfg;
  cfg.bands = 8;
  const std::vector<AudioFrames> frames{extract_audio_frames(tone(300, 1.0), cfg),
                                        extract_audio_frames(clicks(0.5, 0.1, 1.0), cfg)};
  const AudioCodebook cb = fit_audio_codebook(frames, 4, 10, rng);
  CHECK(cb.trained());
  CHECK(cb.book.size() == 4);
  const auto ids = quantize_audio(cb, frames[0]);
  CHECK(ids.size() == static_cast<std::size_t>(frames[0].size()));
  for (int i = 0; i < frames[0].size(); ++i)
    CHECK(ids[static_cast<std::size_t>(i)] == oracle::nearest(cb.book.entries, frames[0].log_mel.row(i)));
  AudioAnalysisConfig other;
  other.bands = 9;
  CHECK_THROWS_AS(quantize_audio(cb, extract_audio_frames(tone(300, 1.0), other)), ValidationError);
}

TEST_CASE("wav round trip within 16-bit quantization") {
  const AudioClip c = tone(440, 0.1, 22050);
  const auto path = temp_file("tone.wav");
  write_wav(path, c);
  const AudioClip back = read_wav(path);
  CHECK(back.sample_rate == 22050);
  REQUIRE(back.samples.size() == c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) CHECK(std::abs(back.samples[i] - c.samples[i]) <= 1.0 / 32767);
  std::filesystem::remove(path);
}

TEST_CASE("truncated wav is a format error") {
  const auto path = temp_file("bad.wav");
  {
    std::ofstream out(path, std::ios::binary);
    out.write("RIFF\x10\0\0\0WAVE", 12);
  }
  CHECK_THROWS_AS(read_wav(path), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("beats file round trip") {
  const std::vector<double> beats{0.5, 1.0, 1.4999999999};
  const auto path = temp_file("beats.txt");
  save_beats(path, beats);
  CHECK(load_beats(path) == beats);
  std::filesystem::remove(path);
}
