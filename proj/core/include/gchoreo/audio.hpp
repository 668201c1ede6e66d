#pragma once

// Stand-in audio tokenizer: log-mel frames quantized against a k-means
// codebook, plus spectral-flux onset strength and beat picking.

#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "gchoreo/linalg.hpp"
#include "gchoreo/rvq.hpp"

namespace gchoreo {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  double sample_rate = 22050.0;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  void validate() const;
};

struct AudioAnalysisConfig {
  int window = 1024;
  int hop = 512;
  int bands = 32;
  double log_floor = 1e-10;       // energies are clamped here before the log
  bool remove_frame_mean = false; // subtract each frame's mean log energy
};

struct AudioFeatureFrame {
  std::vector<double> mel_energies;  // log band energies
  double onset_strength = 0.0;
  double frame_time = 0.0;           // seconds, window center
};

struct AudioFrames {
  Matrix log_mel;               // frames x bands
  std::vector<double> onset;    // per frame, >= 0
  std::vector<double> times;    // per frame, seconds
  AudioAnalysisConfig config;
  double sample_rate = 0.0;

  int size() const { return static_cast<int>(log_mel.rows()); }
  AudioFeatureFrame frame(int i) const;
};

// Triangular mel filterbank (bands x (window/2+1)), peaks of height 1, band
// edges equally spaced on the mel scale from 0 Hz to Nyquist.
Matrix mel_filterbank(int bands, int window, double sample_rate);

// Center frequency (Hz) of band `b` of mel_filterbank.
double mel_band_center(int band, int bands, double sample_rate);

// Hann-windowed STFT power -> mel bands -> log. Onset strength is the
// half-wave-rectified frame-to-frame log-energy increase summed over bands
// (0 for the first frame). Frame count is floor((len - window)/hop) + 1.
AudioFrames extract_audio_frames(const AudioClip& clip, const AudioAnalysisConfig& config = {});

struct AudioCodebook {
  Codebook book;
  AudioAnalysisConfig analysis;

  bool trained() const { return book.size() > 0; }
};

AudioCodebook fit_audio_codebook(std::span<const AudioFrames> frames, int codebook_size, int iterations,
                                 std::mt19937_64& rng);

// Nearest-entry ID per frame.
std::vector<int> quantize_audio(const AudioCodebook& codebook, const AudioFrames& frames);

// Local maxima of onset strength above mean + 1 std, at least `min_gap`
// seconds apart (stronger peaks win), ascending. Needs at least 3 frames.
std::vector<double> detect_beats(const AudioFrames& frames, double min_gap = 0.25);

// Picks peaks of `strength` (sampled at `times`) that exceed `threshold`,
// enforcing `min_gap` greedily from the strongest peak down.
std::vector<double> pick_peaks(std::span<const double> strength, std::span<const double> times, double threshold,
                               double min_gap);

// WAV: PCM 16-bit or 32-bit float, any channel count (averaged to mono).
AudioClip read_wav(const std::filesystem::path& path);
// Writes 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

void save_beats(const std::filesystem::path& path, std::span<const double> beats);
std::vector<double> load_beats(const std::filesystem::path& path);

}  // namespace gchoreo
