#pragma once

// End-to-end stages shared by the command-line tool and the acceptance
// suite: tokenizer training, audio codebook fitting, corpus assembly and
// predictor training.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gchoreo/artifacts.hpp"
#include "gchoreo/audio.hpp"
#include "gchoreo/autoencoder.hpp"
#include "gchoreo/config.hpp"
#include "gchoreo/dataset.hpp"
#include "gchoreo/generation.hpp"
#include "gchoreo/position.hpp"
#include "gchoreo/sequence.hpp"

namespace gchoreo {

struct ClipData {
  std::string id;
  std::vector<MotionSequence> dancers;
  AudioClip audio;
};

// `split` empty = every clip.
std::vector<ClipData> load_clips(const DatasetManifest& manifest, std::string_view split = {});
std::vector<ClipData> to_clip_data(std::span<const SyntheticClip> clips, std::string_view split = {});

struct TokenizerTrainConfig {
  AutoencoderConfig model{};  // input_dim and fps are taken from the data
  int levels = 4;
  int codebook_size = 64;
  bool shared = false;
  double commitment = 1.0;
  int steps = 800;
  int batch_size = 8;
  int window_frames = 64;  // random crops, rounded up to a multiple of d
  double root_emphasis = 5.0;
  TrainerConfig trainer{};

  void validate() const;
  static TokenizerTrainConfig from_config(const KeyValues& kv);
  std::string render() const;
};

struct TokenizerTrainLog {
  std::vector<LossBreakdown> history;  // per step, measured before the update
  double initial_reconstruction = 0.0; // full-clip loss after codebook init
  double final_reconstruction = 0.0;
  double utilization = 0.0;            // over the full training clips
};

TokenizerModel train_tokenizer(std::span<const MotionSequence> motions, const TokenizerTrainConfig& cfg,
                               TokenizerTrainLog* log = nullptr);

// Normalized, padded full-clip inputs.
std::vector<Matrix> tokenizer_inputs(const TemporalAutoencoder& ae, std::span<const MotionSequence> motions);

// Window 4096 samples, hop = sample_rate * d / fps so one audio token spans
// one motion token.
AudioAnalysisConfig aligned_audio_analysis(double sample_rate, const AutoencoderConfig& model, int bands = 32);

struct AudioCodebookConfig {
  int codebook_size = 64;
  int iterations = 20;
  int bands = 32;
  std::uint64_t seed = 0;

  static AudioCodebookConfig from_config(const KeyValues& kv);
};

AudioCodebook train_audio_codebook(std::span<const AudioClip> clips, const AutoencoderConfig& model,
                                   const AudioCodebookConfig& cfg);
std::vector<std::uint32_t> audio_tokens(const AudioCodebook& codebook, const AudioClip& clip);
double audio_token_rate(const AudioCodebook& codebook, double sample_rate);

struct ClipTokens {
  std::vector<std::vector<std::uint32_t>> motion_ids;  // flattened, per dancer
  std::vector<std::vector<Eigen::Vector2d>> tracks;    // root XZ per frame, per dancer
  std::vector<std::uint32_t> audio;
  int frames = 0;
};

ClipTokens tokenize_clip(const TokenizerModel& tok, const AudioCodebook& audio, const ClipData& clip);

struct PredictorTrainConfig {
  int order = 6;
  double smoothing = 0.001;
  bool with_position = true;
  bool pretrain = true;  // also count per-modality streams
  double segment_seconds = 4.0;
  std::uint32_t max_dancers = 8;
  PositionGrid grid{};

  void validate() const;
  static PredictorTrainConfig from_config(const KeyValues& kv);
};

Vocabulary make_vocabulary(const TokenizerModel& tok, const AudioCodebook& audio, const PositionGrid& grid,
                           std::uint32_t max_dancers);

// Cuts each clip into generation-sized segments; each segment becomes one
// supervised example whose prompts use the dancers' positions at the
// segment's first frame. Short tails are padded by repeating the last step.
std::vector<CorpusItem> build_corpus(std::span<const ClipTokens> clips, const TokenizerModel& tok,
                                     double audio_rate, const PredictorTrainConfig& cfg);

NGramPredictor train_predictor(std::span<const ClipTokens> clips, const TokenizerModel& tok,
                               const AudioCodebook& audio, double audio_rate, const PredictorTrainConfig& cfg);

}  // namespace gchoreo
