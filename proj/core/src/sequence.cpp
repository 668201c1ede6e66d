#include "gchoreo/sequence.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "gchoreo/error.hpp"
#include "gchoreo/text.hpp"

namespace gchoreo {

namespace {

struct Form {
  WordKind kind;
  std::string_view prefix;  // "<prefix>" for markers, "<prefixK>" otherwise
  bool numbered;
};

constexpr std::array<Form, 9> kForms{{
    {WordKind::Motion, "motion_id_", true},
    {WordKind::Music, "music_id_", true},
    {WordKind::Pos, "Pos_id_", true},
    {WordKind::BeginMotion, "bom", false},
    {WordKind::EndMotion, "eom", false},
    {WordKind::BeginAudio, "boa", false},
    {WordKind::EndAudio, "eoa", false},
    {WordKind::DancerCount, "n_", true},
    {WordKind::DancerId, "c_", true},
}};

const Form& form_of(WordKind kind) { return kForms[static_cast<std::size_t>(kind)]; }

}  // namespace

std::string render(const Word& word) {
  const Form& f = form_of(word.kind);
  std::string out = "<";
  out += f.prefix;
  if (f.numbered) out += std::to_string(word.value);
  out += '>';
  return out;
}

Word parse_word(std::string_view text) {
  auto fail = [&]() -> Word { throw ValidationError("malformed token word '" + std::string(text) + "'"); };
  if (text.size() < 3 || text.front() != '<' || text.back() != '>') return fail();
  const std::string_view body = text.substr(1, text.size() - 2);
  for (const Form& f : kForms) {
    if (!f.numbered) {
      if (body == f.prefix) return Word{f.kind, 0};
      continue;
    }
    if (body.size() <= f.prefix.size() || body.substr(0, f.prefix.size()) != f.prefix) continue;
    const std::string_view digits = body.substr(f.prefix.size());
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return fail();
    if (digits.size() > 1 && digits.front() == '0') return fail();
    if (digits.size() > 9) return fail();
    const auto v = static_cast<std::uint32_t>(text::parse_uint(digits, "word id"));
    if ((f.kind == WordKind::DancerCount || f.kind == WordKind::DancerId) && v == 0) return fail();
    return Word{f.kind, v};
  }
  return fail();
}

std::string render_words(std::span<const Word> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += render(words[i]);
  }
  return out;
}

std::vector<Word> parse_words(std::string_view line) {
  std::vector<Word> out;
  for (auto tok : text::split_whitespace(line)) out.push_back(parse_word(tok));
  return out;
}

bool Vocabulary::contains(const Word& w) const {
  switch (w.kind) {
    case WordKind::Motion: return w.value < motion_size;
    case WordKind::Music: return w.value < music_size;
    case WordKind::Pos: return w.value < pos_size;
    case WordKind::BeginMotion:
    case WordKind::EndMotion:
    case WordKind::BeginAudio:
    case WordKind::EndAudio: return w.value == 0;
    case WordKind::DancerCount:
    case WordKind::DancerId: return w.value >= 1 && w.value <= max_dancers;
  }
  return false;
}

std::uint32_t Vocabulary::id(const Word& w) const {
  if (!contains(w)) throw ValidationError("word " + render(w) + " is outside the vocabulary");
  const std::uint32_t control = motion_size + music_size + pos_size;
  switch (w.kind) {
    case WordKind::Motion: return w.value;
    case WordKind::Music: return motion_size + w.value;
    case WordKind::Pos: return motion_size + music_size + w.value;
    case WordKind::BeginMotion: return control;
    case WordKind::EndMotion: return control + 1;
    case WordKind::BeginAudio: return control + 2;
    case WordKind::EndAudio: return control + 3;
    case WordKind::DancerCount: return control + 4 + (w.value - 1);
    case WordKind::DancerId: return control + 4 + max_dancers + (w.value - 1);
  }
  return 0;
}

Word Vocabulary::word(std::uint32_t id) const {
  if (id >= size()) throw ValidationError("word id " + std::to_string(id) + " outside the vocabulary");
  if (id < motion_size) return Word::motion(id);
  id -= motion_size;
  if (id < music_size) return Word::music(id);
  id -= music_size;
  if (id < pos_size) return Word::pos(id);
  id -= pos_size;
  if (id < 4) {
    constexpr std::array<WordKind, 4> markers{WordKind::BeginMotion, WordKind::EndMotion, WordKind::BeginAudio,
                                              WordKind::EndAudio};
    return Word::marker(markers[id]);
  }
  id -= 4;
  if (id < max_dancers) return Word::dancer_count(id + 1);
  return Word::dancer_id(id - max_dancers + 1);
}

void Vocabulary::validate() const {
  if (motion_size == 0 || music_size == 0 || pos_size == 0 || max_dancers == 0) {
    throw ValidationError("vocabulary sizes must be positive");
  }
}

std::vector<std::uint32_t> flatten_motion_codes(const IndexMatrix& codes, int codebook_size) {
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(codes.size()));
  for (Eigen::Index t = 0; t < codes.cols(); ++t) {
    for (Eigen::Index l = 0; l < codes.rows(); ++l) {
      const int c = codes(l, t);
      if (c < 0 || c >= codebook_size) throw ValidationError("motion code out of range");
      out.push_back(static_cast<std::uint32_t>(l * codebook_size + c));
    }
  }
  return out;
}

IndexMatrix unflatten_motion_codes(std::span<const std::uint32_t> ids, int levels, int codebook_size) {
  if (levels < 1 || ids.size() % static_cast<std::size_t>(levels) != 0) {
    throw ValidationError("motion id count " + std::to_string(ids.size()) + " is not a multiple of " +
                          std::to_string(levels) + " levels");
  }
  const auto T = static_cast<Eigen::Index>(ids.size() / static_cast<std::size_t>(levels));
  IndexMatrix codes(levels, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int l = 0; l < levels; ++l) {
      const std::uint32_t id = ids[static_cast<std::size_t>(t * levels + l)];
      const auto level = static_cast<int>(id / static_cast<std::uint32_t>(codebook_size));
      if (level != l) {
        throw ValidationError("motion id " + std::to_string(id) + " at level slot " + std::to_string(l) +
                              " belongs to level " + std::to_string(level));
      }
      codes(l, t) = static_cast<int>(id % static_cast<std::uint32_t>(codebook_size));
    }
  }
  return codes;
}

std::vector<Word> build_pretrain_stream(std::span<const TokenSegment> segments, std::vector<std::string>* warnings) {
  if (segments.empty()) throw ValidationError("build_pretrain_stream: no segments");
  std::vector<Word> out;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const TokenSegment& seg = segments[s];
    if (seg.ids.empty()) {
      if (warnings) warnings->push_back("skipping empty segment " + std::to_string(s));
      continue;
    }
    const bool motion = seg.modality == Modality::Motion;
    out.push_back(Word::marker(motion ? WordKind::BeginMotion : WordKind::BeginAudio));
    for (auto id : seg.ids) out.push_back(motion ? Word::motion(id) : Word::music(id));
    out.push_back(Word::marker(motion ? WordKind::EndMotion : WordKind::EndAudio));
  }
  return out;
}

std::size_t TrainingExample::masked_count() const {
  return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), std::uint8_t{1}));
}

namespace {

void append_audio(std::vector<Word>& out, std::span<const std::uint32_t> audio_ids) {
  out.push_back(Word::marker(WordKind::BeginAudio));
  for (auto id : audio_ids) out.push_back(Word::music(id));
  out.push_back(Word::marker(WordKind::EndAudio));
}

void append_block(std::vector<Word>& out, std::span<const std::uint32_t> motion_ids) {
  out.push_back(Word::marker(WordKind::BeginMotion));
  for (auto id : motion_ids) out.push_back(Word::motion(id));
  out.push_back(Word::marker(WordKind::EndMotion));
}

}  // namespace

std::vector<Word> sft_context(std::span<const std::uint32_t> audio_ids, std::span<const PosToken> pos_tokens,
                              std::span<const std::vector<std::uint32_t>> prior_blocks, int dancer, int dancer_count,
                              bool with_position) {
  if (dancer_count < 1 || dancer < 0 || dancer >= dancer_count) throw ValidationError("sft_context: bad dancer index");
  if (prior_blocks.size() < static_cast<std::size_t>(dancer)) {
    throw ValidationError("sft_context: missing motion blocks of earlier dancers");
  }
  if (with_position && pos_tokens.size() != static_cast<std::size_t>(dancer_count)) {
    throw ValidationError("sft_context: need one position token per dancer");
  }
  std::vector<Word> out;
  append_audio(out, audio_ids);
  auto prompt = [&](int i) {
    return with_position ? Word::pos(pos_tokens[static_cast<std::size_t>(i)].id)
                         : Word::dancer_id(static_cast<std::uint32_t>(i + 1));
  };
  if (with_position) {
    for (const auto& p : pos_tokens) out.push_back(Word::pos(p.id));
  } else {
    out.push_back(Word::dancer_count(static_cast<std::uint32_t>(dancer_count)));
  }
  for (int i = 0; i < dancer; ++i) {
    out.push_back(prompt(i));
    append_block(out, prior_blocks[static_cast<std::size_t>(i)]);
  }
  out.push_back(prompt(dancer));
  out.push_back(Word::marker(WordKind::BeginMotion));
  return out;
}

TrainingExample build_sft_example(std::span<const std::uint32_t> audio_ids, std::span<const DancerTrack> dancers,
                                  const PositionGrid& grid, bool with_position) {
  if (dancers.empty()) throw ValidationError("build_sft_example: need at least one dancer");
  for (const auto& d : dancers) {
    if (d.motion_ids.size() != dancers.front().motion_ids.size()) {
      throw ValidationError("build_sft_example: dancer motion lengths differ");
    }
  }
  std::vector<Word> words;
  append_audio(words, audio_ids);
  std::vector<Word> prompts;
  for (std::size_t i = 0; i < dancers.size(); ++i) {
    prompts.push_back(with_position
                          ? Word::pos(position_token(grid, dancers[i].start_xz.x(), dancers[i].start_xz.y()).id)
                          : Word::dancer_id(static_cast<std::uint32_t>(i + 1)));
  }
  if (with_position) {
    words.insert(words.end(), prompts.begin(), prompts.end());
  } else {
    words.push_back(Word::dancer_count(static_cast<std::uint32_t>(dancers.size())));
  }
  for (std::size_t i = 0; i < dancers.size(); ++i) {
    words.push_back(prompts[i]);
    append_block(words, dancers[i].motion_ids);
  }
  return derive_layout(std::move(words));
}

TrainingExample derive_layout(std::vector<Word> words) {
  TrainingExample ex;
  std::size_t i = 0;
  auto fail = [&](const std::string& why) -> TrainingExample {
    throw ValidationError("example layout: " + why + " (at word " + std::to_string(i) + " of " +
                          std::to_string(words.size()) + ")");
  };
  const std::size_t n = words.size();
  if (n == 0 || words[0].kind != WordKind::BeginAudio) return fail("must start with <boa>");
  while (i < n && words[i].kind != WordKind::EndAudio) {
    if (i > 0 && words[i].kind != WordKind::Music) return fail("non-music word inside the audio block");
    ++i;
  }
  if (i == n) return fail("unterminated audio block");
  ex.spans.push_back({SpanKind::Audio, -1, 0, ++i});

  const std::size_t prompts_begin = i;
  if (i < n && words[i].kind == WordKind::DancerCount) {
    ex.with_position = false;
    ex.dancer_count = static_cast<int>(words[i].value);
    ++i;
    ex.spans.push_back({SpanKind::DancerCount, -1, prompts_begin, i});
  } else {
    ex.with_position = true;
    // The run of Pos words holds the N leading prompts plus dancer 1's own.
    std::size_t run = prompts_begin;
    while (run < n && words[run].kind == WordKind::Pos) ++run;
    if (run - prompts_begin < 2) return fail("missing position prompts or dancer count");
    ex.dancer_count = static_cast<int>(run - prompts_begin - 1);
    i = run - 1;
    ex.spans.push_back({SpanKind::PositionPrompts, -1, prompts_begin, i});
  }

  for (int d = 0; d < ex.dancer_count; ++d) {
    if (i >= n) return fail("missing dancer " + std::to_string(d + 1));
    const Word expect = ex.with_position ? words[prompts_begin + static_cast<std::size_t>(d)]
                                         : Word::dancer_id(static_cast<std::uint32_t>(d + 1));
    if (!(words[i] == expect)) return fail("dancer " + std::to_string(d + 1) + " prompt mismatch");
    ex.spans.push_back({SpanKind::DancerPrompt, d, i, i + 1});
    ++i;
    const std::size_t block_begin = i;
    if (i >= n || words[i].kind != WordKind::BeginMotion) return fail("expected <bom>");
    ++i;
    while (i < n && words[i].kind == WordKind::Motion) ++i;
    if (i >= n || words[i].kind != WordKind::EndMotion) return fail("unterminated motion block");
    ++i;
    ex.spans.push_back({SpanKind::MotionBlock, d, block_begin, i});
  }
  if (i != n) return fail("trailing words");

  ex.loss_mask.assign(n, 0);
  for (const auto& s : ex.spans) {
    if (s.kind != SpanKind::MotionBlock) continue;
    for (std::size_t k = s.begin; k < s.end; ++k) ex.loss_mask[k] = words[k].kind == WordKind::Motion ? 1 : 0;
  }
  ex.words = std::move(words);
  return ex;
}

double sft_loss(std::span<const std::vector<double>> distributions, const TrainingExample& example,
                const Vocabulary& vocab) {
  if (distributions.size() != example.masked_count()) {
    throw ValidationError("sft_loss: " + std::to_string(distributions.size()) + " distributions for " +
                          std::to_string(example.masked_count()) + " masked positions");
  }
  double loss = 0.0;
  std::size_t k = 0;
  for (std::size_t pos = 0; pos < example.words.size(); ++pos) {
    if (!example.loss_mask[pos]) continue;
    const auto& dist = distributions[k];
    if (dist.size() != vocab.size()) throw ValidationError("sft_loss: distribution size does not match the vocabulary");
    double total = 0.0;
    for (double p : dist) {
      if (!(p >= 0.0)) throw ValidationError("sft_loss: negative or NaN probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw ValidationError("sft_loss: distribution " + std::to_string(k) + " sums to " + std::to_string(total));
    }
    loss -= std::log(dist[vocab.id(example.words[pos])]);
    ++k;
  }
  return loss;
}

void write_example(std::ostream& out, const TrainingExample& example) {
  out << render_words(example.words) << '\n';
  for (std::size_t i = 0; i < example.loss_mask.size(); ++i) {
    if (i) out << ' ';
    out << static_cast<int>(example.loss_mask[i]);
  }
  out << '\n';
}

std::vector<TrainingExample> read_examples(std::istream& in) {
  std::vector<TrainingExample> out;
  std::string words_line, mask_line;
  while (std::getline(in, words_line)) {
    if (text::trim(words_line).empty()) continue;
    if (!std::getline(in, mask_line)) throw FormatError("example file: missing mask line");
    TrainingExample ex = derive_layout(parse_words(words_line));
    const auto mask = text::split_whitespace(mask_line);
    if (mask.size() != ex.words.size()) throw FormatError("example file: mask length does not match words");
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] != (ex.loss_mask[i] ? "1" : "0")) throw FormatError("example file: mask disagrees with layout");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace gchoreo
