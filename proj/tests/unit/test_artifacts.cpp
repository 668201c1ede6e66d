#include <doctest.h>

#include <filesystem>
#include <random>
#include <utility>

#include "gchoreo/artifacts.hpp"
#include "gchoreo/error.hpp"
#include "toy_model.hpp"

using namespace gchoreo;

namespace {

NGramPredictor small_ngram() {
  Vocabulary v;
  v.motion_size = 6;
  v.music_size = 3;
  v.pos_size = 4;
  v.max_dancers = 2;
  NGramPredictor p(v, 3, 0.25);
  std::vector<Word> s;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) s.push_back(Word::motion(static_cast<std::uint32_t>(rng() % 6)));
  p.add_stream(s);
  std::vector<Word> t = {Word::marker(WordKind::BeginAudio), Word::music(1), Word::music(2), Word::marker(WordKind::EndAudio)};
  p.add_stream(t, std::vector<std::uint8_t>{0, 1, 1, 0});
  return p;
}

bool same_tables(const NGramPredictor& a, const NGramPredictor& b) {
  if (a.tables().size() != b.tables().size()) return false;
  for (std::size_t m = 0; m < a.tables().size(); ++m) {
    const auto& ta = a.tables()[m];
    const auto& tb = b.tables()[m];
    if (ta.size() != tb.size()) return false;
    for (const auto& [ctx, c] : ta) {
      auto it = tb.find(ctx);
      if (it == tb.end() || it->second.total != c.total || it->second.next != c.next) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("tokenizer round trip is bit exact") {
  for (bool shared : {false, true}) {
    toy::Tokenizer t = toy::tokenizer(3, 5, 2, 11);
    if (shared) {
      t.stack.shared = true;
      t.stack.books.resize(1);
    }
    t.stack.books[0].usage[2] = 7;
    const auto bytes = serialize_tokenizer(t.ae, t.stack);
    const TokenizerModel back = deserialize_tokenizer(bytes);
    CHECK(back.stack.shared == shared);
    CHECK(back.stack.levels == 3);
    REQUIRE(back.stack.books.size() == t.stack.books.size());
    for (std::size_t i = 0; i < t.stack.books.size(); ++i) {
      CHECK(back.stack.books[i].entries == t.stack.books[i].entries);
      CHECK(back.stack.books[i].ema_counts == t.stack.books[i].ema_counts);
      CHECK(back.stack.books[i].ema_sums == t.stack.books[i].ema_sums);
      CHECK(back.stack.books[i].usage == t.stack.books[i].usage);
    }
    CHECK(back.autoencoder.feature_mean() == t.ae.feature_mean());
    CHECK(back.autoencoder.feature_scale() == t.ae.feature_scale());
    std::vector<Matrix> a, b;
    std::as_const(t.ae).params().for_each([&](std::string_view, const Matrix& m) { a.push_back(m); });
    back.autoencoder.params().for_each([&](std::string_view, const Matrix& m) { b.push_back(m); });
    CHECK(a == b);
    CHECK(serialize_tokenizer(back.autoencoder, back.stack) == bytes);
  }
}

TEST_CASE("audio codebook round trip") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  Matrix e(4, 3);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = n(rng);
  AudioCodebook cb{Codebook::from_entries(e), {}};
  cb.analysis.window = 4096;
  cb.analysis.hop = 2940;
  cb.analysis.bands = 3;
  cb.analysis.remove_frame_mean = true;
  const auto bytes = serialize_audio_codebook(cb);
  const AudioCodebook back = deserialize_audio_codebook(bytes);
  CHECK(back.book.entries == e);
  CHECK(back.analysis.window == 4096);
  CHECK(back.analysis.hop == 2940);
  CHECK(back.analysis.bands == 3);
  CHECK(back.analysis.remove_frame_mean);
  CHECK(back.analysis.log_floor == cb.analysis.log_floor);
  CHECK(serialize_audio_codebook(back) == bytes);
}

TEST_CASE("ngram round trip and byte determinism") {
  const NGramPredictor p = small_ngram();
  const auto bytes = serialize_ngram(p);
  const NGramPredictor back = deserialize_ngram(bytes);
  CHECK(back.order() == 3);
  CHECK(back.smoothing() == 0.25);
  CHECK(back.vocabulary().size() == p.vocabulary().size());
  CHECK(same_tables(p, back));
  const std::vector<Word> ctx = {Word::motion(1), Word::motion(4)};
  CHECK(back.distribution(ctx) == p.distribution(ctx));

  // Same counts inserted in another order: different hash layout, same bytes.
  NGramPredictor q(p.vocabulary(), 3, 0.25);
  for (std::size_t m = 0; m < p.tables().size(); ++m) {
    std::vector<std::pair<std::vector<std::uint32_t>, NGramPredictor::Counts>> rows(p.tables()[m].begin(),
                                                                                   p.tables()[m].end());
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) q.tables()[m].insert(*it);
  }
  CHECK(serialize_ngram(q) == bytes);
}

TEST_CASE("grid round trip") {
  PositionGrid g{5, -3.5, 2.25};
  const PositionGrid back = deserialize_grid(serialize_grid(g));
  CHECK(back.order == 5);
  CHECK(back.min == -3.5);
  CHECK(back.max == 2.25);
}

TEST_CASE("corrupt artifacts are rejected") {
  const auto good = serialize_grid(PositionGrid{});

  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_grid(bad), FormatError);

  bad = good;
  bad[4] = 99;
  CHECK_THROWS_AS(deserialize_grid(bad), FormatError);

  for (std::size_t n : {std::size_t{0}, std::size_t{6}, std::size_t{10}, good.size() - 1}) {
    CHECK_THROWS_AS(deserialize_grid(std::vector<std::uint8_t>(good.begin(), good.begin() + static_cast<long>(n))),
                    FormatError);
  }

  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(deserialize_grid(bad), FormatError);

  // A valid artifact of the wrong kind.
  CHECK_THROWS_AS(deserialize_ngram(good), FormatError);

  const toy::Tokenizer t = toy::tokenizer(2, 4, 2, 1);
  auto tok = serialize_tokenizer(t.ae, t.stack);
  tok[8] = 'Z';  // first section tag
  CHECK_THROWS_AS(deserialize_tokenizer(tok), FormatError);
}

TEST_CASE("section reader") {
  ArtifactWriter w("TEST");
  w.section("AAAA").u32(7);
  ByteWriter& s = w.section("BBBB");
  s.f64(-0.1);
  s.u8(3);
  const auto bytes = w.finish();
  CHECK(bytes.size() == 8 + 12 + 4 + 12 + 9);

  ArtifactReader r(bytes, "TEST", "test");
  ByteReader a = r.section("AAAA");
  CHECK(a.u32() == 7u);
  a.expect_end();
  ByteReader b = r.section("BBBB");
  CHECK(b.f64() == -0.1);
  CHECK_THROWS_AS(b.expect_end(), FormatError);
  CHECK(b.u8() == 3);
  CHECK_THROWS_AS(b.u8(), FormatError);
  r.expect_end();

  ArtifactReader wrong(bytes, "TEST", "test");
  CHECK_THROWS_AS(wrong.section("BBBB"), FormatError);
}

TEST_CASE("files") {
  const auto path = std::filesystem::temp_directory_path() / "gchoreo_test_grid.bin";
  save_grid(path, PositionGrid{3, 0, 1});
  CHECK(load_grid(path).order == 3);
  std::filesystem::remove(path);
  CHECK_THROWS(load_grid(path));
}
