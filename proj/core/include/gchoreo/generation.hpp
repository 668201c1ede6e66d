#pragma once

// Segment-wise group generation with position hand-off between segments,
// over a pluggable next-word predictor. An add-k back-off n-gram model is
// the trainable predictor.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "gchoreo/autoencoder.hpp"
#include "gchoreo/motion.hpp"
#include "gchoreo/position.hpp"
#include "gchoreo/rvq.hpp"
#include "gchoreo/sequence.hpp"

namespace gchoreo {

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const Vocabulary& vocabulary() const = 0;
  // Probabilities over vocabulary ids; must sum to 1. Implementations must
  // tolerate concurrent calls.
  virtual std::vector<double> distribution(std::span<const Word> context) const = 0;
};

// Deterministic pseudo-random distributions keyed on (seed, context).
class RandomPredictor final : public Predictor {
 public:
  RandomPredictor(Vocabulary vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<double> distribution(std::span<const Word> context) const override;

 private:
  Vocabulary vocab_;
  std::uint64_t seed_;
};

struct VectorHash {
  std::size_t operator()(const std::vector<std::uint32_t>& v) const noexcept;
};

class NGramPredictor final : public Predictor {
 public:
  struct Counts {
    std::uint64_t total = 0;
    std::unordered_map<std::uint32_t, std::uint64_t> next;
  };
  using Table = std::unordered_map<std::vector<std::uint32_t>, Counts, VectorHash>;

  NGramPredictor(Vocabulary vocab, int order, double smoothing);

  const Vocabulary& vocabulary() const override { return vocab_; }
  // Longest seen context of length order-1 .. 1 with add-k smoothing; an
  // unseen context falls through to uniform (order 1 uses unigram counts).
  std::vector<double> distribution(std::span<const Word> context) const override;

  int order() const { return order_; }
  double smoothing() const { return smoothing_; }
  // tables()[m] holds contexts of length m; m = 0 is the unigram table.
  const std::vector<Table>& tables() const { return tables_; }
  std::vector<Table>& tables() { return tables_; }

  // Counts every position, or only positions whose mask entry is 1.
  void add_stream(std::span<const Word> words, std::span<const std::uint8_t> mask = {});

 private:
  Vocabulary vocab_;
  int order_;
  double smoothing_;
  std::vector<Table> tables_;
};

struct CorpusItem {
  std::vector<Word> words;
  std::vector<std::uint8_t> mask;  // empty = count every position
};

NGramPredictor train_ngram(std::span<const CorpusItem> corpus, const Vocabulary& vocab, int order, double smoothing);

// Contiguous chunks; the last one is padded by repeating its final token.
std::vector<std::vector<std::uint32_t>> segment_audio(std::span<const std::uint32_t> audio, int tokens_per_segment);

struct SamplingConfig {
  double temperature = 0.9;  // 0 = argmax, lowest id on ties
  double nucleus_p = 0.95;
};

struct SegmentRequest {
  std::span<const std::uint32_t> audio;
  std::span<const PosToken> pos_prompts;                  // all dancers; unused without position
  std::span<const std::vector<std::uint32_t>> prior_blocks;  // dancers < dancer, this segment
  int dancer = 0;
  int dancer_count = 1;
  int time_steps = 1;     // motion tokens per level
  int levels = 4;
  int codebook_size = 0;  // K; motion ids are level * K + code
  bool with_position = true;
};

// Samples time_steps * levels motion words. Each slot only admits ids of
// its level; everything else is masked out before sampling.
std::vector<std::uint32_t> generate_segment(const Predictor& pred, const SegmentRequest& request,
                                            const SamplingConfig& sampling, std::mt19937_64& rng);

struct PositionUpdate {
  Eigen::Vector2d root_xz = Eigen::Vector2d::Zero();
  PosToken prompt;
};

// Integrates the decoded segment's root trajectory from `start_xz` (heading
// 0) and returns the final-frame XZ and its position word.
PositionUpdate propagate_position(const MotionSequence& decoded, const Eigen::Vector2d& start_xz,
                                  const PositionGrid& grid);

struct GenerationConfig {
  double segment_seconds = 4.0;
  SamplingConfig sampling{};
  std::uint64_t seed = 0;
  int dancer_count = 3;
  std::vector<Eigen::Vector2d> initial_positions;  // empty = ring placement
  bool with_position = true;
  double ring_radius = 1.0;
  double audio_token_rate = 7.5;  // audio tokens per second

  void validate() const;
};

// key=value text: segment_seconds, temperature, nucleus_p, seed,
// dancer_count, initial_positions (x,z;x,z;... or auto), with_position,
// ring_radius, audio_token_rate.
GenerationConfig parse_generation_config(std::string_view text);
std::string render_generation_config(const GenerationConfig& cfg);

// Dancer i of N at angle 2*pi*i/N on a circle about the origin; a lone
// dancer stands at the origin.
std::vector<Eigen::Vector2d> ring_placement(int dancers, double radius);

struct SegmentRecord {
  int segment = 0;
  int dancer = 0;
  PosToken prompt;
  Eigen::Vector2d start_xz = Eigen::Vector2d::Zero();  // exact hand-off value
  Eigen::Vector2d end_xz = Eigen::Vector2d::Zero();    // decoded end
  std::vector<std::uint32_t> motion_ids;
};

struct GroupResult {
  std::vector<MotionSequence> dancers;  // final whole-sequence decode
  std::vector<IndexMatrix> codes;       // merged L x T per dancer
  std::vector<SegmentRecord> segments;  // segment-major, dancer-minor
  int segment_count = 0;
  int time_steps_per_segment = 0;
};

GroupResult generate_group(const Predictor& pred, const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                           std::span<const std::uint32_t> audio_tokens, const PositionGrid& grid,
                           const GenerationConfig& cfg);

}  // namespace gchoreo
