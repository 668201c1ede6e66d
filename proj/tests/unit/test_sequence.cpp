#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gchoreo/error.hpp"
#include "gchoreo/sequence.hpp"

using namespace gchoreo;

namespace {

Vocabulary small_vocab() {
  Vocabulary v;
  v.motion_size = 8;  // L=2, K=4
  v.music_size = 5;
  v.pos_size = 16;
  v.max_dancers = 3;
  return v;
}

PositionGrid grid4() {
  PositionGrid g;
  g.order = 2;
  g.min = -2;
  g.max = 2;
  return g;
}

std::vector<DancerTrack> tracks(int n, int len) {
  std::vector<DancerTrack> out;
  for (int i = 0; i < n; ++i) {
    DancerTrack t;
    t.start_xz = Eigen::Vector2d(-1.5 + i, 0.5);
    for (int k = 0; k < len; ++k) t.motion_ids.push_back(static_cast<std::uint32_t>((i + k) % 8));
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("word rendering and parsing") {
  CHECK(render(Word::motion(12)) == "<motion_id_12>");
  CHECK(render(Word::music(0)) == "<music_id_0>");
  CHECK(render(Word::pos(4095)) == "<Pos_id_4095>");
  CHECK(render(Word::marker(WordKind::BeginMotion)) == "<bom>");
  CHECK(render(Word::marker(WordKind::EndAudio)) == "<eoa>");
  CHECK(render(Word::dancer_count(3)) == "<n_3>");
  CHECK(render(Word::dancer_id(2)) == "<c_2>");
  for (const char* bad : {"motion_id_1", "<motion_id_>", "<motion_id_01>", "<motion_id_x>", "<n_0>", "<foo>", "<>",
                          "<c_1234567890>"})
    CHECK_THROWS_AS(parse_word(bad), ValidationError);
  const std::vector<Word> w{Word::marker(WordKind::BeginAudio), Word::music(3), Word::marker(WordKind::EndAudio),
                            Word::pos(7), Word::dancer_id(1)};
  CHECK(parse_words(render_words(w)) == w);
  CHECK(render_words(w) == "<boa> <music_id_3> <eoa> <Pos_id_7> <c_1>");
}

TEST_CASE("vocabulary layout") {
  const Vocabulary v = small_vocab();
  CHECK(v.size() == 8 + 5 + 16 + 4 + 6);
  CHECK(v.id(Word::motion(7)) == 7);
  CHECK(v.id(Word::music(0)) == 8);
  CHECK(v.id(Word::pos(0)) == 13);
  CHECK(v.id(Word::marker(WordKind::BeginMotion)) == 29);
  CHECK(v.id(Word::marker(WordKind::EndAudio)) == 32);
  CHECK(v.id(Word::dancer_count(1)) == 33);
  CHECK(v.id(Word::dancer_id(3)) == 38);
  for (std::uint32_t i = 0; i < v.size(); ++i) CHECK(v.id(v.word(i)) == i);
  CHECK_FALSE(v.contains(Word::motion(8)));
  CHECK_FALSE(v.contains(Word::dancer_id(4)));
  CHECK_THROWS_AS(v.id(Word::pos(16)), ValidationError);
  CHECK_THROWS_AS(v.word(v.size()), ValidationError);
}

TEST_CASE("motion code interleaving") {
  IndexMatrix codes(2, 3);
  codes << 1, 2, 3, 0, 3, 2;
  const auto ids = flatten_motion_codes(codes, 4);
  CHECK(ids == std::vector<std::uint32_t>{1, 4, 2, 7, 3, 6});
  CHECK(unflatten_motion_codes(ids, 2, 4) == codes);
  const std::vector<std::uint32_t> odd{1, 4, 2};
  CHECK_THROWS_AS(unflatten_motion_codes(odd, 2, 4), ValidationError);
  const std::vector<std::uint32_t> wrong_level{4, 1};
  CHECK_THROWS_AS(unflatten_motion_codes(wrong_level, 2, 4), ValidationError);
}

TEST_CASE("pretrain stream wraps each segment") {
  const std::vector<TokenSegment> segs{{Modality::Audio, {1, 2}}, {Modality::Motion, {}}, {Modality::Motion, {5}}};
  std::vector<std::string> warn;
  const auto s = build_pretrain_stream(segs, &warn);
  CHECK(render_words(s) == "<boa> <music_id_1> <music_id_2> <eoa> <bom> <motion_id_5> <eom>");
  CHECK(warn.size() == 1);
  CHECK_THROWS_AS(build_pretrain_stream({}), ValidationError);
}

TEST_CASE("with-position example layout") {
  const std::vector<std::uint32_t> audio{0, 1, 2};
  const auto t = tracks(2, 4);
  const auto ex = build_sft_example(audio, t, grid4(), true);
  const auto p0 = position_token(grid4(), -1.5, 0.5).id;
  const auto p1 = position_token(grid4(), -0.5, 0.5).id;
  std::ostringstream expect;
  expect << "<boa> <music_id_0> <music_id_1> <music_id_2> <eoa> <Pos_id_" << p0 << "> <Pos_id_" << p1 << "> <Pos_id_"
         << p0 << "> <bom> <motion_id_0> <motion_id_1> <motion_id_2> <motion_id_3> <eom> <Pos_id_" << p1
         << "> <bom> <motion_id_1> <motion_id_2> <motion_id_3> <motion_id_4> <eom>";
  CHECK(render_words(ex.words) == expect.str());
  CHECK(ex.dancer_count == 2);
  CHECK(ex.with_position);
  CHECK(ex.masked_count() == 8);
}

TEST_CASE("without-position example layout") {
  const std::vector<std::uint32_t> audio{4};
  const auto ex = build_sft_example(audio, tracks(2, 1), grid4(), false);
  CHECK(render_words(ex.words) ==
        "<boa> <music_id_4> <eoa> <n_2> <c_1> <bom> <motion_id_0> <eom> <c_2> <bom> <motion_id_1> <eom>");
  CHECK_FALSE(ex.with_position);
  CHECK(ex.masked_count() == 2);
}

TEST_CASE("property: mask count equals total motion tokens and marks only motion words") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 3);
    const int len = static_cast<int>(rng() % 7);
    const bool wp = rng() % 2;
    std::vector<std::uint32_t> audio(rng() % 5);
    const auto ex = build_sft_example(audio, tracks(n, len), grid4(), wp);
    CHECK(ex.masked_count() == static_cast<std::size_t>(n * len));
    for (std::size_t i = 0; i < ex.words.size(); ++i) {
      if (ex.loss_mask[i]) CHECK(ex.words[i].kind == WordKind::Motion);
    }
    const auto again = derive_layout(ex.words);
    CHECK(again.loss_mask == ex.loss_mask);
    CHECK(again.dancer_count == n);
  }
}

TEST_CASE("sft_context is a prefix of the full example") {
  const std::vector<std::uint32_t> audio{0, 1};
  const auto t = tracks(3, 2);
  for (bool wp : {true, false}) {
    const auto ex = build_sft_example(audio, t, grid4(), wp);
    std::vector<PosToken> pos;
    for (const auto& d : t) pos.push_back(position_token(grid4(), d.start_xz.x(), d.start_xz.y()));
    std::vector<std::vector<std::uint32_t>> prior;
    for (int d = 0; d < 3; ++d) {
      const auto ctx = sft_context(audio, pos, prior, d, 3, wp);
      REQUIRE(ctx.size() < ex.words.size());
      CHECK(std::equal(ctx.begin(), ctx.end(), ex.words.begin()));
      CHECK(ex.words[ctx.size()].kind == WordKind::Motion);
      prior.push_back(t[static_cast<std::size_t>(d)].motion_ids);
    }
  }
}

TEST_CASE("derive_layout rejects malformed sequences") {
  auto words = [](const char* s) { return parse_words(s); };
  CHECK_THROWS_AS(derive_layout(words("<bom> <eom>")), ValidationError);
  CHECK_THROWS_AS(derive_layout(words("<boa> <music_id_0>")), ValidationError);
  CHECK_THROWS_AS(derive_layout(words("<boa> <eoa> <n_2> <c_1> <bom> <eom>")), ValidationError);
  CHECK_THROWS_AS(derive_layout(words("<boa> <eoa> <n_1> <c_2> <bom> <eom>")), ValidationError);
  CHECK_THROWS_AS(derive_layout(words("<boa> <eoa> <Pos_id_1> <Pos_id_2> <bom> <eom>")), ValidationError);
  CHECK_THROWS_AS(derive_layout(words("<boa> <eoa> <n_1> <c_1> <bom> <eom> <eom>")), ValidationError);
  CHECK_THROWS_AS(derive_layout(words("<boa> <eoa> <n_1> <c_1> <bom> <music_id_0> <eom>")), ValidationError);
  CHECK_NOTHROW(derive_layout(words("<boa> <eoa> <n_1> <c_1> <bom> <eom>")));
}

TEST_CASE("uniform predictor loss is k ln V") {
  const Vocabulary v = small_vocab();
  const std::vector<std::uint32_t> audio{0, 1, 2};
  const auto ex = build_sft_example(audio, tracks(3, 3), grid4(), true);
  const std::size_t k = ex.masked_count();
  const std::vector<std::vector<double>> dists(k, std::vector<double>(v.size(), 1.0 / v.size()));
  CHECK(sft_loss(dists, ex, v) == doctest::Approx(static_cast<double>(k) * std::log(static_cast<double>(v.size()))).epsilon(1e-14));
}

TEST_CASE("sft_loss with a peaked predictor") {
  const Vocabulary v = small_vocab();
  const std::vector<std::uint32_t> audio{0};
  const auto ex = build_sft_example(audio, tracks(1, 2), grid4(), false);
  std::vector<std::vector<double>> dists(2, std::vector<double>(v.size(), 0.0));
  dists[0][0] = 1.0;        // true word motion 0
  dists[1][1] = 0.5;        // true word motion 1
  dists[1][2] = 0.5;
  CHECK(sft_loss(dists, ex, v) == doctest::Approx(std::log(2.0)));
  dists.pop_back();
  CHECK_THROWS_AS(sft_loss(dists, ex, v), ValidationError);
}

TEST_CASE("example file round trip") {
  const std::vector<std::uint32_t> audio{3, 4};
  const auto a = build_sft_example(audio, tracks(2, 3), grid4(), true);
  const auto b = build_sft_example(audio, tracks(3, 1), grid4(), false);
  std::stringstream ss;
  write_example(ss, a);
  write_example(ss, b);
  const auto back = read_examples(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].words == a.words);
  CHECK(back[0].loss_mask == a.loss_mask);
  CHECK(back[1].words == b.words);
  CHECK(back[1].loss_mask == b.loss_mask);

  std::stringstream bad(render_words(a.words) + "\n0 1\n");
  CHECK_THROWS_AS(read_examples(bad), ValidationError);
}
