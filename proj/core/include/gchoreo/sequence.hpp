#pragma once

// Token words, the two-phase training layouts, and the masked sequence loss.
//
// Word forms: <motion_id_K> <music_id_K> <Pos_id_K>, block markers <bom>
// <eom> <boa> <eoa>, dancer count <n_K> and dancer id <c_K> (1-based).
// Multi-level motion codes are interleaved per time step into a single
// motion id space: id = level * K + code.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gchoreo/position.hpp"
#include "gchoreo/rvq.hpp"

namespace gchoreo {

enum class WordKind : std::uint8_t {
  Motion,
  Music,
  Pos,
  BeginMotion,
  EndMotion,
  BeginAudio,
  EndAudio,
  DancerCount,
  DancerId,
};

struct Word {
  WordKind kind = WordKind::Motion;
  std::uint32_t value = 0;

  static Word motion(std::uint32_t id) { return {WordKind::Motion, id}; }
  static Word music(std::uint32_t id) { return {WordKind::Music, id}; }
  static Word pos(std::uint32_t id) { return {WordKind::Pos, id}; }
  static Word marker(WordKind kind) { return {kind, 0}; }
  static Word dancer_count(std::uint32_t n) { return {WordKind::DancerCount, n}; }
  static Word dancer_id(std::uint32_t i) { return {WordKind::DancerId, i}; }

  friend bool operator==(const Word&, const Word&) = default;
};

std::string render(const Word& word);
// Throws ValidationError naming the offending text.
Word parse_word(std::string_view text);

std::string render_words(std::span<const Word> words);
std::vector<Word> parse_words(std::string_view line);

// Dense integer ids: [motion][music][pos][bom eom boa eoa][n_1..][c_1..].
struct Vocabulary {
  std::uint32_t motion_size = 0;
  std::uint32_t music_size = 0;
  std::uint32_t pos_size = 0;
  std::uint32_t max_dancers = 8;

  std::uint32_t size() const { return motion_size + music_size + pos_size + 4 + 2 * max_dancers; }
  std::uint32_t motion_offset() const { return 0; }
  bool contains(const Word& w) const;
  std::uint32_t id(const Word& w) const;  // throws if not contained
  Word word(std::uint32_t id) const;
  void validate() const;
};

// L x T codes -> interleaved motion ids (t0l0 t0l1 ... t1l0 ...).
std::vector<std::uint32_t> flatten_motion_codes(const IndexMatrix& codes, int codebook_size);
// Inverse; throws when the length is not a multiple of `levels` or an id
// sits at the wrong level position.
IndexMatrix unflatten_motion_codes(std::span<const std::uint32_t> ids, int levels, int codebook_size);

enum class Modality : std::uint8_t { Motion, Audio };

struct TokenSegment {
  Modality modality = Modality::Motion;
  std::vector<std::uint32_t> ids;
};

// Phase 1 stream: each segment wrapped in its begin/end markers, in order.
// Empty segments are skipped and reported through `warnings`.
std::vector<Word> build_pretrain_stream(std::span<const TokenSegment> segments,
                                        std::vector<std::string>* warnings = nullptr);

enum class SpanKind : std::uint8_t { Audio, PositionPrompts, DancerCount, DancerPrompt, MotionBlock };

struct LayoutSpan {
  SpanKind kind = SpanKind::Audio;
  int dancer = -1;        // 0-based, -1 for shared spans
  std::size_t begin = 0;  // word range [begin, end)
  std::size_t end = 0;
};

struct TrainingExample {
  std::vector<Word> words;
  std::vector<std::uint8_t> loss_mask;  // 1 on motion words inside motion blocks
  int dancer_count = 0;
  bool with_position = true;
  std::vector<LayoutSpan> spans;

  std::size_t masked_count() const;
};

struct DancerTrack {
  Eigen::Vector2d start_xz = Eigen::Vector2d::Zero();  // meters
  std::vector<std::uint32_t> motion_ids;
};

// Phase 2 example. With position guidance:
//   [boa audio eoa] [Pos_1 .. Pos_N] {Pos_i <bom> motion_i <eom>} for i = 1..N
// Without:
//   [boa audio eoa] <n_N> {<c_i> <bom> motion_i <eom>} for i = 1..N
TrainingExample build_sft_example(std::span<const std::uint32_t> audio_ids, std::span<const DancerTrack> dancers,
                                  const PositionGrid& grid, bool with_position);

// Words preceding dancer `dancer`'s first motion word in the layout above:
// the audio block, the prompts, the complete blocks of dancers < `dancer`,
// then the dancer's own prompt and <bom>. `pos_tokens` is ignored without
// position guidance; `prior_blocks` holds the motion ids of dancers < `dancer`.
std::vector<Word> sft_context(std::span<const std::uint32_t> audio_ids, std::span<const PosToken> pos_tokens,
                              std::span<const std::vector<std::uint32_t>> prior_blocks, int dancer, int dancer_count,
                              bool with_position);

// Recomputes spans and mask for a word sequence in either SFT layout.
TrainingExample derive_layout(std::vector<Word> words);

// -sum over masked positions of log p(true word). `distributions` holds one
// probability vector over the full vocabulary per masked position, in order.
double sft_loss(std::span<const std::vector<double>> distributions, const TrainingExample& example,
                const Vocabulary& vocab);

// One example per two lines: words, then the 0/1 mask.
void write_example(std::ostream& out, const TrainingExample& example);
std::vector<TrainingExample> read_examples(std::istream& in);

}  // namespace gchoreo
