#include "gchoreo/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gchoreo/config.hpp"
#include "gchoreo/error.hpp"
#include "gchoreo/text.hpp"

namespace gchoreo {

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  // splitmix64 finalizer over the running hash
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

void check_distribution(const std::vector<double>& dist, const Vocabulary& vocab) {
  if (dist.size() != vocab.size()) {
    throw ComputeError("predictor returned " + std::to_string(dist.size()) + " probabilities for a vocabulary of " +
                       std::to_string(vocab.size()));
  }
  double total = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ComputeError("predictor returned a negative or non-finite probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ComputeError("predictor distribution sums to " + text::format_double(total));
  }
}

int sample_index(std::span<const double> p, const SamplingConfig& cfg, std::mt19937_64& rng) {
  const auto n = static_cast<int>(p.size());
  if (cfg.temperature <= 0.0) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
      if (p[i] > p[best]) best = i;
    }
    return best;
  }
  const double pmax = *std::max_element(p.begin(), p.end());
  std::vector<double> w(p.size(), 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (p[i] > 0.0) w[i] = std::exp((std::log(p[i]) - std::log(pmax)) / cfg.temperature);
    total += w[i];
  }
  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w[a] > w[b]; });
  double kept = 0.0;
  std::size_t keep = 0;
  while (keep < order.size() && w[order[keep]] > 0.0) {
    kept += w[order[keep++]];
    if (kept >= cfg.nucleus_p * total) break;
  }
  double u = std::uniform_real_distribution<double>(0.0, kept)(rng);
  for (std::size_t j = 0; j < keep; ++j) {
    u -= w[order[j]];
    if (u < 0.0) return order[j];
  }
  return order[keep - 1];
}

}  // namespace

std::vector<double> RandomPredictor::distribution(std::span<const Word> context) const {
  std::uint64_t h = mix(0, seed_);
  for (const Word& w : context) h = mix(h, (static_cast<std::uint64_t>(w.kind) << 32) | w.value);
  std::mt19937_64 rng(h);
  std::exponential_distribution<double> draw(1.0);
  std::vector<double> out(vocab_.size());
  double total = 0.0;
  for (auto& v : out) total += (v = draw(rng));
  for (auto& v : out) v /= total;
  return out;
}

std::size_t VectorHash::operator()(const std::vector<std::uint32_t>& v) const noexcept {
  std::uint64_t h = v.size();
  for (auto x : v) h = mix(h, x);
  return static_cast<std::size_t>(h);
}

NGramPredictor::NGramPredictor(Vocabulary vocab, int order, double smoothing)
    : vocab_(vocab), order_(order), smoothing_(smoothing) {
  vocab_.validate();
  if (order < 1) throw ValidationError("n-gram order must be >= 1");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw ValidationError("smoothing must be finite and >= 0");
  tables_.resize(static_cast<std::size_t>(order));
}

void NGramPredictor::add_stream(std::span<const Word> words, std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != words.size()) throw ValidationError("n-gram: mask length does not match words");
  std::vector<std::uint32_t> ids(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) ids[i] = vocab_.id(words[i]);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (!mask.empty() && !mask[t]) continue;
    const std::size_t max_m = std::min<std::size_t>(static_cast<std::size_t>(order_ - 1), t);
    for (std::size_t m = 0; m <= max_m; ++m) {
      std::vector<std::uint32_t> key(ids.begin() + static_cast<std::ptrdiff_t>(t - m),
                                     ids.begin() + static_cast<std::ptrdiff_t>(t));
      Counts& c = tables_[m][key];
      ++c.total;
      ++c.next[ids[t]];
    }
  }
}

std::vector<double> NGramPredictor::distribution(std::span<const Word> context) const {
  const std::size_t V = vocab_.size();
  const Counts* hit = nullptr;
  const std::size_t max_m = std::min<std::size_t>(static_cast<std::size_t>(order_ - 1), context.size());
  std::vector<std::uint32_t> key;
  for (std::size_t m = max_m; m >= 1 && !hit; --m) {
    key.clear();
    for (std::size_t i = context.size() - m; i < context.size(); ++i) key.push_back(vocab_.id(context[i]));
    auto it = tables_[m].find(key);
    if (it != tables_[m].end() && it->second.total > 0) hit = &it->second;
  }
  if (!hit && order_ == 1) {
    auto it = tables_[0].find({});
    if (it != tables_[0].end() && it->second.total > 0) hit = &it->second;
  }
  if (!hit) return std::vector<double>(V, 1.0 / static_cast<double>(V));

  const double denom = static_cast<double>(hit->total) + smoothing_ * static_cast<double>(V);
  std::vector<double> out(V, smoothing_ / denom);
  for (const auto& [id, n] : hit->next) out[id] += static_cast<double>(n) / denom;
  return out;
}

NGramPredictor train_ngram(std::span<const CorpusItem> corpus, const Vocabulary& vocab, int order, double smoothing) {
  if (corpus.empty()) throw ValidationError("train_ngram: empty corpus");
  NGramPredictor model(vocab, order, smoothing);
  for (const auto& item : corpus) model.add_stream(item.words, item.mask);
  return model;
}

std::vector<std::vector<std::uint32_t>> segment_audio(std::span<const std::uint32_t> audio, int tokens_per_segment) {
  if (tokens_per_segment < 1) throw ValidationError("segment_audio: tokens_per_segment must be >= 1");
  if (audio.empty()) throw ValidationError("segment_audio: empty audio token stream");
  const auto per = static_cast<std::size_t>(tokens_per_segment);
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t begin = 0; begin < audio.size(); begin += per) {
    const std::size_t end = std::min(audio.size(), begin + per);
    std::vector<std::uint32_t> seg(audio.begin() + static_cast<std::ptrdiff_t>(begin),
                                   audio.begin() + static_cast<std::ptrdiff_t>(end));
    seg.resize(per, seg.back());
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<std::uint32_t> generate_segment(const Predictor& pred, const SegmentRequest& req,
                                            const SamplingConfig& sampling, std::mt19937_64& rng) {
  const Vocabulary& vocab = pred.vocabulary();
  if (req.time_steps < 1 || req.levels < 1 || req.codebook_size < 1) {
    throw ValidationError("generate_segment: time steps, levels and codebook size must be positive");
  }
  if (static_cast<std::uint64_t>(req.levels) * static_cast<std::uint64_t>(req.codebook_size) > vocab.motion_size) {
    throw ValidationError("generate_segment: vocabulary has fewer motion words than levels * K");
  }
  if (!(sampling.temperature >= 0.0) || !(sampling.nucleus_p > 0.0 && sampling.nucleus_p <= 1.0)) {
    throw ValidationError("generate_segment: temperature must be >= 0 and nucleus_p in (0, 1]");
  }
  std::vector<Word> ctx = sft_context(req.audio, req.pos_prompts, req.prior_blocks, req.dancer, req.dancer_count,
                                      req.with_position);
  const auto K = static_cast<std::uint32_t>(req.codebook_size);
  const int total = req.time_steps * req.levels;
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<double> level_p(K);
  for (int j = 0; j < total; ++j) {
    const auto level = static_cast<std::uint32_t>(j % req.levels);
    const std::vector<double> dist = pred.distribution(ctx);
    check_distribution(dist, vocab);
    double mass = 0.0;
    for (std::uint32_t c = 0; c < K; ++c) mass += level_p[c] = dist[vocab.id(Word::motion(level * K + c))];
    if (!(mass > 0.0)) {
      throw ComputeError("predictor put no probability on level-" + std::to_string(level) + " motion words");
    }
    const auto c = static_cast<std::uint32_t>(sample_index(level_p, sampling, rng));
    out.push_back(level * K + c);
    ctx.push_back(Word::motion(level * K + c));
  }
  return out;
}

PositionUpdate propagate_position(const MotionSequence& decoded, const Eigen::Vector2d& start_xz,
                                  const PositionGrid& grid) {
  if (decoded.frames.empty()) throw ValidationError("propagate_position: empty decoded segment");
  if (!start_xz.allFinite()) throw ValidationError("propagate_position: non-finite start position");
  MotionSequence seq = decoded;
  seq.initial_position = Vec3(start_xz.x(), 0.0, start_xz.y());
  const RootTrajectory traj = recover_trajectory(seq, 0.0);
  const Vec3& end = traj.positions.back();
  if (!end.allFinite()) throw ComputeError("propagate_position: non-finite trajectory");
  PositionUpdate up;
  up.root_xz = Eigen::Vector2d(end.x(), end.z());
  up.prompt = position_token(grid, end.x(), end.z());
  return up;
}

void GenerationConfig::validate() const {
  if (!(segment_seconds > 0.0) || !std::isfinite(segment_seconds)) throw ValidationError("segment_seconds must be > 0");
  if (!(sampling.temperature >= 0.0) || !std::isfinite(sampling.temperature)) {
    throw ValidationError("temperature must be >= 0");
  }
  if (!(sampling.nucleus_p > 0.0 && sampling.nucleus_p <= 1.0)) throw ValidationError("nucleus_p must be in (0, 1]");
  if (dancer_count < 1) throw ValidationError("dancer_count must be >= 1");
  if (!initial_positions.empty() && initial_positions.size() != static_cast<std::size_t>(dancer_count)) {
    throw ValidationError("initial_positions has " + std::to_string(initial_positions.size()) + " entries for " +
                          std::to_string(dancer_count) + " dancers");
  }
  for (const auto& p : initial_positions) {
    if (!p.allFinite()) throw ValidationError("initial positions must be finite");
  }
  if (!(ring_radius >= 0.0) || !std::isfinite(ring_radius)) throw ValidationError("ring_radius must be >= 0");
  if (!(audio_token_rate > 0.0) || !std::isfinite(audio_token_rate)) {
    throw ValidationError("audio_token_rate must be > 0");
  }
}

GenerationConfig parse_generation_config(std::string_view body) {
  const KeyValues kv = KeyValues::parse(body, "generation config");
  kv.reject_unknown({"segment_seconds", "temperature", "nucleus_p", "seed", "dancer_count", "initial_positions",
                     "with_position", "ring_radius", "audio_token_rate"});
  GenerationConfig cfg;
  cfg.segment_seconds = kv.real("segment_seconds", cfg.segment_seconds);
  cfg.sampling.temperature = kv.real("temperature", cfg.sampling.temperature);
  cfg.sampling.nucleus_p = kv.real("nucleus_p", cfg.sampling.nucleus_p);
  cfg.seed = kv.unsigned_integer("seed", cfg.seed);
  cfg.dancer_count = static_cast<int>(kv.integer("dancer_count", cfg.dancer_count));
  cfg.with_position = kv.boolean("with_position", cfg.with_position);
  cfg.ring_radius = kv.real("ring_radius", cfg.ring_radius);
  cfg.audio_token_rate = kv.real("audio_token_rate", cfg.audio_token_rate);
  const std::string positions = kv.str("initial_positions", "auto");
  if (positions != "auto") {
    for (auto item : text::split(positions, ';')) {
      const auto xz = text::split(text::trim(item), ',');
      if (xz.size() != 2) throw ValidationError("initial_positions: expected x,z but got '" + std::string(item) + "'");
      cfg.initial_positions.emplace_back(text::parse_double(text::trim(xz[0]), "initial x"),
                                         text::parse_double(text::trim(xz[1]), "initial z"));
    }
  }
  cfg.validate();
  return cfg;
}

std::string render_generation_config(const GenerationConfig& cfg) {
  std::string positions;
  if (cfg.initial_positions.empty()) {
    positions = "auto";
  } else {
    for (std::size_t i = 0; i < cfg.initial_positions.size(); ++i) {
      if (i) positions += ';';
      positions += text::format_double(cfg.initial_positions[i].x()) + "," +
                   text::format_double(cfg.initial_positions[i].y());
    }
  }
  std::string out;
  out += "audio_token_rate=" + text::format_double(cfg.audio_token_rate) + "\n";
  out += "dancer_count=" + std::to_string(cfg.dancer_count) + "\n";
  out += "initial_positions=" + positions + "\n";
  out += "nucleus_p=" + text::format_double(cfg.sampling.nucleus_p) + "\n";
  out += "ring_radius=" + text::format_double(cfg.ring_radius) + "\n";
  out += "seed=" + std::to_string(cfg.seed) + "\n";
  out += "segment_seconds=" + text::format_double(cfg.segment_seconds) + "\n";
  out += "temperature=" + text::format_double(cfg.sampling.temperature) + "\n";
  out += std::string("with_position=") + (cfg.with_position ? "true" : "false") + "\n";
  return out;
}

std::vector<Eigen::Vector2d> ring_placement(int dancers, double radius) {
  if (dancers < 1) throw ValidationError("ring_placement: need at least one dancer");
  if (dancers == 1) return {Eigen::Vector2d::Zero()};
  std::vector<Eigen::Vector2d> out;
  for (int i = 0; i < dancers; ++i) {
    const double a = 2.0 * std::numbers::pi * i / dancers;
    out.emplace_back(radius * std::cos(a), radius * std::sin(a));
  }
  return out;
}

GroupResult generate_group(const Predictor& pred, const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack,
                           std::span<const std::uint32_t> audio_tokens, const PositionGrid& grid,
                           const GenerationConfig& cfg) {
  cfg.validate();
  grid.validate();
  if (!stack.initialized()) throw ValidationError("generate_group: quantizer stack is not initialized");
  const Vocabulary& vocab = pred.vocabulary();
  const int L = stack.levels;
  const int K = stack.codebook_size();
  const int N = cfg.dancer_count;
  if (cfg.with_position && vocab.pos_size < grid.token_count()) {
    throw ValidationError("generate_group: vocabulary has fewer position words than grid cells");
  }
  if (!cfg.with_position && static_cast<std::uint32_t>(N) > vocab.max_dancers) {
    throw ValidationError("generate_group: dancer count exceeds the vocabulary's dancer words");
  }
  for (auto a : audio_tokens) {
    if (a >= vocab.music_size) throw ValidationError("generate_group: audio token outside the vocabulary");
  }

  const double motion_rate = ae.config().fps / ae.config().downsample;
  const int T = std::max(1, static_cast<int>(std::lround(cfg.segment_seconds * motion_rate)));
  const int A = std::max(1, static_cast<int>(std::lround(cfg.segment_seconds * cfg.audio_token_rate)));
  const auto segments = segment_audio(audio_tokens, A);

  const std::vector<Eigen::Vector2d> start =
      cfg.initial_positions.empty() ? ring_placement(N, cfg.ring_radius) : cfg.initial_positions;
  std::vector<Eigen::Vector2d> root = start;
  std::vector<std::vector<std::uint32_t>> merged(static_cast<std::size_t>(N));

  GroupResult result;
  result.segment_count = static_cast<int>(segments.size());
  result.time_steps_per_segment = T;

  for (std::size_t k = 0; k < segments.size(); ++k) {
    std::vector<PosToken> prompts;
    for (const auto& p : root) prompts.push_back(position_token(grid, p.x(), p.y()));
    std::vector<std::vector<std::uint32_t>> prior;
    for (int i = 0; i < N; ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(i)};
      std::mt19937_64 rng(seq);
      SegmentRequest req;
      req.audio = segments[k];
      req.pos_prompts = prompts;
      req.prior_blocks = prior;
      req.dancer = i;
      req.dancer_count = N;
      req.time_steps = T;
      req.levels = L;
      req.codebook_size = K;
      req.with_position = cfg.with_position;
      std::vector<std::uint32_t> ids = generate_segment(pred, req, cfg.sampling, rng);

      const auto ui = static_cast<std::size_t>(i);
      const IndexMatrix codes = unflatten_motion_codes(ids, L, K);
      const MotionSequence decoded =
          detokenize_motion(ae, stack, codes, Vec3(root[ui].x(), 0.0, root[ui].y()));
      const PositionUpdate up = propagate_position(decoded, root[ui], grid);

      SegmentRecord rec;
      rec.segment = static_cast<int>(k);
      rec.dancer = i;
      rec.prompt = prompts[ui];
      rec.start_xz = root[ui];
      rec.end_xz = up.root_xz;
      rec.motion_ids = ids;
      result.segments.push_back(std::move(rec));

      root[ui] = up.root_xz;
      merged[ui].insert(merged[ui].end(), ids.begin(), ids.end());
      prior.push_back(std::move(ids));
    }
  }

  for (int i = 0; i < N; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    IndexMatrix codes = unflatten_motion_codes(merged[ui], L, K);
    result.dancers.push_back(detokenize_motion(ae, stack, codes, Vec3(start[ui].x(), 0.0, start[ui].y())));
    result.codes.push_back(std::move(codes));
  }
  return result;
}

}  // namespace gchoreo
