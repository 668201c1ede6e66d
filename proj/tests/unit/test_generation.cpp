#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gchoreo/error.hpp"
#include "gchoreo/generation.hpp"
#include "toy_model.hpp"

using namespace gchoreo;

namespace {

Vocabulary motion_vocab(std::uint32_t motion, std::uint32_t music = 2) {
  Vocabulary v;
  v.motion_size = motion;
  v.music_size = music;
  v.pos_size = 4;
  v.max_dancers = 2;
  return v;
}

std::vector<Word> words(const char* s) { return parse_words(s); }

PositionGrid small_grid() {
  PositionGrid g;
  g.order = 4;
  g.min = -4;
  g.max = 4;
  return g;
}

}  // namespace

TEST_CASE("bigram probabilities by hand") {
  const Vocabulary v = motion_vocab(2);
  const auto s = words("<motion_id_0> <motion_id_1> <motion_id_0> <motion_id_1>");
  const std::vector<Word> ctx{Word::motion(0)};
  const double V = v.size();
  SUBCASE("k = 0") {
    NGramPredictor m(v, 2, 0.0);
    m.add_stream(s);
    const auto p = m.distribution(ctx);
    CHECK(p[v.id(Word::motion(1))] == 1.0);
    CHECK(p[v.id(Word::motion(0))] == 0.0);
  }
  SUBCASE("k = 1") {
    NGramPredictor m(v, 2, 1.0);
    m.add_stream(s);
    const auto p = m.distribution(ctx);
    CHECK(p[v.id(Word::motion(1))] == doctest::Approx(3.0 / (2.0 + V)));
    CHECK(p[v.id(Word::motion(0))] == doctest::Approx(1.0 / (2.0 + V)));
    double total = 0;
    for (double x : p) total += x;
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("back-off to the longest seen context and to uniform") {
  const Vocabulary v = motion_vocab(4);
  NGramPredictor m(v, 3, 0.0);
  m.add_stream(words("<motion_id_0> <motion_id_1> <motion_id_2>"));
  m.add_stream(words("<motion_id_3> <motion_id_1> <motion_id_3>"));
  // Trigram context (0,1) seen: next is 2.
  CHECK(m.distribution(words("<motion_id_0> <motion_id_1>"))[2] == 1.0);
  // Unseen trigram (2,1) backs off to bigram (1): half 2, half 3.
  const auto p = m.distribution(words("<motion_id_2> <motion_id_1>"));
  CHECK(p[2] == 0.5);
  CHECK(p[3] == 0.5);
  // Nothing seen after 2: uniform.
  const auto u = m.distribution(words("<motion_id_2>"));
  for (double x : u) CHECK(x == doctest::Approx(1.0 / v.size()));
  // Empty context on a higher-order model is uniform too.
  CHECK(m.distribution({})[0] == doctest::Approx(1.0 / v.size()));
}

TEST_CASE("unigram model and masked counting") {
  const Vocabulary v = motion_vocab(3);
  NGramPredictor m(v, 1, 0.0);
  const auto s = words("<bom> <motion_id_0> <motion_id_0> <motion_id_1> <eom>");
  const std::vector<std::uint8_t> mask{0, 1, 1, 1, 0};
  m.add_stream(s, mask);
  const auto p = m.distribution({});
  CHECK(p[0] == doctest::Approx(2.0 / 3));
  CHECK(p[1] == doctest::Approx(1.0 / 3));
  CHECK(p[v.id(Word::marker(WordKind::BeginMotion))] == 0.0);
  const std::vector<std::uint8_t> short_mask{1};
  CHECK_THROWS_AS(m.add_stream(s, short_mask), ValidationError);
  CHECK_THROWS_AS(NGramPredictor(v, 0, 0.1), ValidationError);
  CHECK_THROWS_AS(NGramPredictor(v, 2, -1.0), ValidationError);
}

TEST_CASE("segment_audio") {
  const std::vector<std::uint32_t> a{1, 2, 3, 4, 5, 6, 7};
  auto s = segment_audio(a, 3);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == std::vector<std::uint32_t>{1, 2, 3});
  CHECK(s[2] == std::vector<std::uint32_t>{7, 7, 7});
  CHECK(segment_audio(a, 7).size() == 1);
  CHECK(segment_audio(a, 100)[0].size() == 100);
  CHECK(segment_audio(a, 1).size() == 7);
  CHECK_THROWS_AS(segment_audio(a, 0), ValidationError);
  CHECK_THROWS_AS(segment_audio({}, 2), ValidationError);
}

TEST_CASE("cyclic bigram at temperature 0 reproduces the cycle") {
  const Vocabulary v = motion_vocab(3);
  NGramPredictor m(v, 2, 0.01);
  m.add_stream(words("<boa> <music_id_0> <eoa> <n_1> <c_1> <bom> <motion_id_0> <motion_id_1> <motion_id_2> "
                     "<motion_id_0> <motion_id_1> <motion_id_2> <eom>"));
  const std::vector<std::uint32_t> audio{0};
  SegmentRequest req;
  req.audio = audio;
  req.dancer_count = 1;
  req.time_steps = 7;
  req.levels = 1;
  req.codebook_size = 3;
  req.with_position = false;
  SamplingConfig sc;
  sc.temperature = 0.0;
  std::mt19937_64 rng(0);
  CHECK(generate_segment(m, req, sc, rng) == std::vector<std::uint32_t>{0, 1, 2, 0, 1, 2, 0});
}

TEST_CASE("argmax ties go to the lowest id") {
  const Vocabulary v = motion_vocab(4);
  NGramPredictor uniform(v, 1, 0.0);
  const std::vector<std::uint32_t> audio{0};
  SegmentRequest req;
  req.audio = audio;
  req.time_steps = 2;
  req.levels = 2;
  req.codebook_size = 2;
  req.with_position = false;
  SamplingConfig sc;
  sc.temperature = 0.0;
  std::mt19937_64 rng(0);
  CHECK(generate_segment(uniform, req, sc, rng) == std::vector<std::uint32_t>{0, 2, 0, 2});
}

TEST_CASE("sampled slots respect their level") {
  const Vocabulary v = motion_vocab(12);
  RandomPredictor pred(v, 5);
  const std::vector<std::uint32_t> audio{0, 1};
  SegmentRequest req;
  req.audio = audio;
  req.time_steps = 20;
  req.levels = 3;
  req.codebook_size = 4;
  req.with_position = false;
  std::mt19937_64 rng(1);
  const auto ids = generate_segment(pred, req, {}, rng);
  REQUIRE(ids.size() == 60);
  for (std::size_t j = 0; j < ids.size(); ++j) CHECK(ids[j] / 4 == j % 3);
  req.codebook_size = 5;
  CHECK_THROWS_AS(generate_segment(pred, req, {}, rng), ValidationError);
}

TEST_CASE("nucleus sampling keeps only the head") {
  const Vocabulary v = motion_vocab(3);
  NGramPredictor m(v, 1, 0.0);
  // Unigram 0.8 / 0.15 / 0.05.
  std::vector<Word> s;
  for (int i = 0; i < 16; ++i) s.push_back(Word::motion(0));
  for (int i = 0; i < 3; ++i) s.push_back(Word::motion(1));
  s.push_back(Word::motion(2));
  m.add_stream(s);
  const std::vector<std::uint32_t> audio{0};
  SegmentRequest req;
  req.audio = audio;
  req.time_steps = 500;
  req.levels = 1;
  req.codebook_size = 3;
  req.with_position = false;
  SamplingConfig sc;
  sc.temperature = 1.0;
  sc.nucleus_p = 0.9;
  std::mt19937_64 rng(2);
  const auto ids = generate_segment(m, req, sc, rng);
  int ones = 0;
  for (auto id : ids) {
    CHECK(id != 2);
    ones += id == 1;
  }
  CHECK(ones > 0);
}

TEST_CASE("random predictor is a deterministic distribution") {
  const Vocabulary v = motion_vocab(8);
  RandomPredictor a(v, 3), b(v, 3), c(v, 4);
  const auto ctx = words("<boa> <eoa>");
  CHECK(a.distribution(ctx) == b.distribution(ctx));
  CHECK(a.distribution(ctx) != c.distribution(ctx));
  double total = 0;
  for (double p : a.distribution(ctx)) total += p;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("propagate_position integrates from the start with heading 0") {
  MotionSequence m;
  for (int f = 0; f < 3; ++f) {
    Pose p = Pose::zeros(2);
    p.root_velocity_z = 0.1;
    p.root_velocity_x = 0.05;
    m.frames.push_back(p);
  }
  m.initial_position = Vec3(9, 9, 9);  // ignored
  const auto up = propagate_position(m, Eigen::Vector2d(1.0, -0.5), small_grid());
  CHECK(up.root_xz.x() == doctest::Approx(1.1));
  CHECK(up.root_xz.y() == doctest::Approx(-0.3));
  CHECK(up.prompt == position_token(small_grid(), 1.1, -0.3));
  CHECK_THROWS_AS(propagate_position(MotionSequence{}, Eigen::Vector2d::Zero(), small_grid()), ValidationError);
}

TEST_CASE("ring placement") {
  const auto r = ring_placement(4, 2.0);
  REQUIRE(r.size() == 4);
  CHECK((r[0] - Eigen::Vector2d(2, 0)).norm() < 1e-12);
  CHECK((r[1] - Eigen::Vector2d(0, 2)).norm() < 1e-12);
  CHECK((r[2] - Eigen::Vector2d(-2, 0)).norm() < 1e-12);
  CHECK(ring_placement(1, 5.0)[0] == Eigen::Vector2d::Zero());
  for (const auto& p : ring_placement(7, 1.3)) CHECK(p.norm() == doctest::Approx(1.3));
  CHECK_THROWS_AS(ring_placement(0, 1.0), ValidationError);
}

TEST_CASE("generation config text") {
  const auto cfg = parse_generation_config(
      "# comment\nsegment_seconds=2\ntemperature=0\nseed=18446744073709551615\ndancer_count=2\n"
      "initial_positions=1,2; -3.5,4\nwith_position=false\n");
  CHECK(cfg.segment_seconds == 2.0);
  CHECK(cfg.sampling.temperature == 0.0);
  CHECK(cfg.seed == 18446744073709551615ULL);
  REQUIRE(cfg.initial_positions.size() == 2);
  CHECK(cfg.initial_positions[1] == Eigen::Vector2d(-3.5, 4));
  CHECK_FALSE(cfg.with_position);
  const auto again = parse_generation_config(render_generation_config(cfg));
  CHECK(render_generation_config(again) == render_generation_config(cfg));
  CHECK_THROWS_AS(parse_generation_config("dancer_count=2\ninitial_positions=1,2\n"), ValidationError);
  CHECK_THROWS_AS(parse_generation_config("temperature=-1\n"), ValidationError);
  CHECK_THROWS_AS(parse_generation_config("nucleus_p=0\n"), ValidationError);
  CHECK_THROWS_AS(parse_generation_config("bogus=1\n"), ValidationError);
  CHECK_THROWS_AS(parse_generation_config("seed=-1\n"), ValidationError);
}

TEST_CASE("group generation hands positions off exactly between segments") {
  const auto tok = toy::tokenizer(2, 8, 3, 11);
  const PositionGrid grid = small_grid();
  const Vocabulary vocab = toy::vocabulary(tok, 4, grid);
  RandomPredictor pred(vocab, 21);
  std::vector<std::uint32_t> audio;
  for (int i = 0; i < 37; ++i) audio.push_back(static_cast<std::uint32_t>(i % 4));
  GenerationConfig cfg;
  cfg.segment_seconds = 1.0;
  cfg.audio_token_rate = 7.5;
  cfg.dancer_count = 3;
  cfg.seed = 5;
  const auto res = generate_group(pred, tok.ae, tok.stack, audio, grid, cfg);
  CHECK(res.segment_count == 5);
  CHECK(res.time_steps_per_segment == 8);
  REQUIRE(res.segments.size() == 15);
  for (const auto& rec : res.segments) {
    CHECK(position_token(grid, rec.start_xz.x(), rec.start_xz.y()) == rec.prompt);
    CHECK(rec.motion_ids.size() == 16);
    if (rec.segment > 0) {
      const auto& prev = res.segments[static_cast<std::size_t>((rec.segment - 1) * 3 + rec.dancer)];
      CHECK(prev.dancer == rec.dancer);
      CHECK(rec.start_xz == prev.end_xz);
    } else {
      CHECK(rec.start_xz == ring_placement(3, cfg.ring_radius)[static_cast<std::size_t>(rec.dancer)]);
    }
  }
  REQUIRE(res.dancers.size() == 3);
  for (const auto& d : res.dancers) CHECK(d.frame_count() == 5 * 8 * 4);
  for (const auto& c : res.codes) CHECK(c.cols() == 40);

  const auto again = generate_group(pred, tok.ae, tok.stack, audio, grid, cfg);
  CHECK(again.codes == res.codes);
  cfg.seed = 6;
  CHECK(generate_group(pred, tok.ae, tok.stack, audio, grid, cfg).codes != res.codes);
}

TEST_CASE("group generation without position guidance") {
  const auto tok = toy::tokenizer(2, 4, 2, 12);
  const Vocabulary vocab = toy::vocabulary(tok, 2, small_grid());
  RandomPredictor pred(vocab, 1);
  const std::vector<std::uint32_t> audio(10, 1);
  GenerationConfig cfg;
  cfg.with_position = false;
  cfg.dancer_count = 2;
  cfg.segment_seconds = 1.0;
  cfg.initial_positions = {Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(-1, 0)};
  const auto res = generate_group(pred, tok.ae, tok.stack, audio, small_grid(), cfg);
  CHECK(res.segment_count == 2);
  CHECK(res.dancers[1].initial_position == Vec3(-1, 0, 0));
  const std::vector<std::uint32_t> bad_audio{9};
  CHECK_THROWS_AS(generate_group(pred, tok.ae, tok.stack, bad_audio, small_grid(), cfg), ValidationError);
  cfg.dancer_count = 9;
  cfg.initial_positions.clear();
  CHECK_THROWS_AS(generate_group(pred, tok.ae, tok.stack, audio, small_grid(), cfg), ValidationError);
}
