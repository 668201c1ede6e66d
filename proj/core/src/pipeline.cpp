#include "gchoreo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "gchoreo/error.hpp"
#include "gchoreo/text.hpp"

namespace gchoreo {

std::vector<ClipData> load_clips(const DatasetManifest& manifest, std::string_view split) {
  manifest.validate(true);
  std::vector<ClipData> out;
  for (const auto& c : manifest.clips) {
    if (!split.empty() && c.split != split) continue;
    ClipData d;
    d.id = c.id;
    d.audio = read_wav(manifest.resolve(c.audio));
    for (std::size_t i = 0; i < c.motions.size(); ++i) {
      MotionSequence m = load_motion(manifest.resolve(c.motions[i]));
      m.initial_position.x() = c.positions[i].x();
      m.initial_position.z() = c.positions[i].y();
      d.dancers.push_back(std::move(m));
    }
    out.push_back(std::move(d));
  }
  if (out.empty()) throw ValidationError("manifest has no clips in split '" + std::string(split) + "'");
  return out;
}

std::vector<ClipData> to_clip_data(std::span<const SyntheticClip> clips, std::string_view split) {
  std::vector<ClipData> out;
  for (const auto& c : clips) {
    if (!split.empty() && c.split != split) continue;
    out.push_back(ClipData{c.id, c.dancers, c.audio});
  }
  return out;
}

void TokenizerTrainConfig::validate() const {
  if (levels < 1 || codebook_size < 1) throw ValidationError("levels and codebook_size must be >= 1");
  if (!(commitment > 0.0)) throw ValidationError("commitment must be > 0");
  if (steps < 0 || batch_size < 1 || window_frames < 1) {
    throw ValidationError("steps >= 0, batch_size >= 1 and window_frames >= 1 required");
  }
  if (model.hidden < 1 || model.latent_dim < 1 || model.downsample < 1) {
    throw ValidationError("hidden, latent_dim and downsample must be >= 1");
  }
  if (!(trainer.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (!(root_emphasis > 0.0)) throw ValidationError("root_emphasis must be > 0");
}

TokenizerTrainConfig TokenizerTrainConfig::from_config(const KeyValues& kv) {
  kv.reject_unknown({"hidden", "latent_dim", "downsample", "levels", "codebook_size", "shared", "commitment", "steps",
                     "batch_size", "window_frames", "learning_rate", "kmeans_iterations", "maintenance_window",
                     "ema_decay", "dead_below", "root_emphasis", "weight_reconstruction", "weight_commitment", "weight_orthogonal",
                     "seed"});
  TokenizerTrainConfig c;
  c.model.hidden = static_cast<int>(kv.integer("hidden", c.model.hidden));
  c.model.latent_dim = static_cast<int>(kv.integer("latent_dim", c.model.latent_dim));
  c.model.downsample = static_cast<int>(kv.integer("downsample", c.model.downsample));
  c.levels = static_cast<int>(kv.integer("levels", c.levels));
  c.codebook_size = static_cast<int>(kv.integer("codebook_size", c.codebook_size));
  c.shared = kv.boolean("shared", c.shared);
  c.commitment = kv.real("commitment", c.commitment);
  c.steps = static_cast<int>(kv.integer("steps", c.steps));
  c.batch_size = static_cast<int>(kv.integer("batch_size", c.batch_size));
  c.window_frames = static_cast<int>(kv.integer("window_frames", c.window_frames));
  c.root_emphasis = kv.real("root_emphasis", c.root_emphasis);
  c.trainer.learning_rate = kv.real("learning_rate", c.trainer.learning_rate);
  c.trainer.kmeans_iterations = static_cast<int>(kv.integer("kmeans_iterations", c.trainer.kmeans_iterations));
  c.trainer.maintenance_window = static_cast<int>(kv.integer("maintenance_window", c.trainer.maintenance_window));
  c.trainer.maintenance.decay = kv.real("ema_decay", c.trainer.maintenance.decay);
  c.trainer.maintenance.dead_below = kv.unsigned_integer("dead_below", c.trainer.maintenance.dead_below);
  c.trainer.weights.reconstruction = kv.real("weight_reconstruction", c.trainer.weights.reconstruction);
  c.trainer.weights.commitment = kv.real("weight_commitment", c.trainer.weights.commitment);
  c.trainer.weights.orthogonal = kv.real("weight_orthogonal", c.trainer.weights.orthogonal);
  c.trainer.seed = kv.unsigned_integer("seed", c.trainer.seed);
  c.validate();
  return c;
}

std::string TokenizerTrainConfig::render() const {
  std::ostringstream o;
  o << "batch_size=" << batch_size << "\n"
    << "codebook_size=" << codebook_size << "\n"
    << "commitment=" << text::format_double(commitment) << "\n"
    << "dead_below=" << trainer.maintenance.dead_below << "\n"
    << "downsample=" << model.downsample << "\n"
    << "ema_decay=" << text::format_double(trainer.maintenance.decay) << "\n"
    << "hidden=" << model.hidden << "\n"
    << "kmeans_iterations=" << trainer.kmeans_iterations << "\n"
    << "latent_dim=" << model.latent_dim << "\n"
    << "learning_rate=" << text::format_double(trainer.learning_rate) << "\n"
    << "levels=" << levels << "\n"
    << "maintenance_window=" << trainer.maintenance_window << "\n"
    << "root_emphasis=" << text::format_double(root_emphasis) << "\n"
    << "seed=" << trainer.seed << "\n"
    << "shared=" << (shared ? "true" : "false") << "\n"
    << "steps=" << steps << "\n"
    << "weight_commitment=" << text::format_double(trainer.weights.commitment) << "\n"
    << "weight_orthogonal=" << text::format_double(trainer.weights.orthogonal) << "\n"
    << "weight_reconstruction=" << text::format_double(trainer.weights.reconstruction) << "\n"
    << "window_frames=" << window_frames << "\n";
  return o.str();
}

std::vector<Matrix> tokenizer_inputs(const TemporalAutoencoder& ae, std::span<const MotionSequence> motions) {
  std::vector<Matrix> out;
  out.reserve(motions.size());
  for (const auto& m : motions) out.push_back(ae.pad(ae.normalize(m.to_features())));
  return out;
}

TokenizerModel train_tokenizer(std::span<const MotionSequence> motions, const TokenizerTrainConfig& cfg_in,
                               TokenizerTrainLog* log) {
  cfg_in.validate();
  if (motions.empty()) throw ValidationError("train_tokenizer: no motion clips");
  const int J = motions.front().joint_count();
  for (const auto& m : motions) {
    m.validate();
    if (m.joint_count() != J) throw ValidationError("train_tokenizer: clips use different joint counts");
    if (m.fps != motions.front().fps) throw ValidationError("train_tokenizer: clips use different frame rates");
  }
  AutoencoderConfig model = cfg_in.model;
  model.input_dim = static_cast<int>(Pose::flat_dim(J));
  model.fps = motions.front().fps;

  std::mt19937_64 rng(cfg_in.trainer.seed);
  TokenizerModel tok;
  tok.autoencoder = TemporalAutoencoder::random(model, rng);
  std::vector<Matrix> raw;
  for (const auto& m : motions) raw.push_back(m.to_features());
  tok.autoencoder.fit_normalization(raw, cfg_in.root_emphasis);

  std::vector<Matrix> full;
  for (const auto& r : raw) full.push_back(tok.autoencoder.pad(tok.autoencoder.normalize(r)));

  tok.stack = ResidualQuantizerStack::uninitialized(cfg_in.levels, cfg_in.shared, cfg_in.commitment);
  initialize_codebooks(tok.autoencoder, tok.stack, cfg_in.codebook_size, full, cfg_in.trainer.kmeans_iterations, rng);
  if (log) log->initial_reconstruction = evaluate_loss(tok.autoencoder, tok.stack, full, cfg_in.trainer.weights).reconstruction;

  const int d = model.downsample;
  const int window = (cfg_in.window_frames + d - 1) / d * d;
  TrainerState state(cfg_in.trainer);
  std::vector<Matrix> batch(static_cast<std::size_t>(cfg_in.batch_size));
  std::uniform_int_distribution<std::size_t> pick_clip(0, full.size() - 1);
  for (int step = 0; step < cfg_in.steps; ++step) {
    for (auto& b : batch) {
      const Matrix& clip = full[pick_clip(rng)];
      const auto rows = static_cast<int>(clip.rows());
      if (rows <= window) {
        b = clip;
        continue;
      }
      const int start = std::uniform_int_distribution<int>(0, (rows - window) / d)(rng) * d;
      b = clip.middleRows(start, window);
    }
    const LossBreakdown loss = train_step(tok.autoencoder, tok.stack, batch, cfg_in.trainer.learning_rate, state);
    if (log) log->history.push_back(loss);
  }

  if (log) {
    log->final_reconstruction = evaluate_loss(tok.autoencoder, tok.stack, full, cfg_in.trainer.weights).reconstruction;
    std::vector<Matrix> latents;
    for (const auto& x : full) latents.push_back(tok.autoencoder.encode(x));
    log->utilization = codebook_utilization(tok.stack, latents);
  }
  return tok;
}

AudioAnalysisConfig aligned_audio_analysis(double sample_rate, const AutoencoderConfig& model, int bands) {
  if (!(sample_rate > 0.0) || !(model.fps > 0.0) || model.downsample < 1) {
    throw ValidationError("aligned_audio_analysis: bad sample rate or motion timing");
  }
  AudioAnalysisConfig a;
  a.hop = std::max(1, static_cast<int>(std::lround(sample_rate * model.downsample / model.fps)));
  a.window = std::max(4096, a.hop);
  a.bands = bands;
  return a;
}

AudioCodebookConfig AudioCodebookConfig::from_config(const KeyValues& kv) {
  kv.reject_unknown({"codebook_size", "iterations", "bands", "seed"});
  AudioCodebookConfig c;
  c.codebook_size = static_cast<int>(kv.integer("codebook_size", c.codebook_size));
  c.iterations = static_cast<int>(kv.integer("iterations", c.iterations));
  c.bands = static_cast<int>(kv.integer("bands", c.bands));
  c.seed = kv.unsigned_integer("seed", c.seed);
  if (c.codebook_size < 1 || c.iterations < 0 || c.bands < 1) {
    throw ValidationError("audio codebook: codebook_size and bands must be >= 1, iterations >= 0");
  }
  return c;
}

AudioCodebook train_audio_codebook(std::span<const AudioClip> clips, const AutoencoderConfig& model,
                                   const AudioCodebookConfig& cfg) {
  if (clips.empty()) throw ValidationError("train_audio_codebook: no audio clips");
  const AudioAnalysisConfig analysis = aligned_audio_analysis(clips.front().sample_rate, model, cfg.bands);
  std::vector<AudioFrames> frames;
  for (const auto& c : clips) {
    if (c.sample_rate != clips.front().sample_rate) throw ValidationError("train_audio_codebook: mixed sample rates");
    frames.push_back(extract_audio_frames(c, analysis));
  }
  std::mt19937_64 rng(cfg.seed);
  return fit_audio_codebook(frames, cfg.codebook_size, cfg.iterations, rng);
}

std::vector<std::uint32_t> audio_tokens(const AudioCodebook& codebook, const AudioClip& clip) {
  const std::vector<int> ids = quantize_audio(codebook, extract_audio_frames(clip, codebook.analysis));
  return {ids.begin(), ids.end()};
}

double audio_token_rate(const AudioCodebook& codebook, double sample_rate) {
  return sample_rate / codebook.analysis.hop;
}

ClipTokens tokenize_clip(const TokenizerModel& tok, const AudioCodebook& audio, const ClipData& clip) {
  if (clip.dancers.empty()) throw ValidationError("clip '" + clip.id + "' has no dancers");
  ClipTokens out;
  out.frames = clip.dancers.front().frame_count();
  const int K = tok.stack.codebook_size();
  for (const auto& m : clip.dancers) {
    if (m.frame_count() != out.frames) throw ValidationError("clip '" + clip.id + "': dancers differ in length");
    out.motion_ids.push_back(flatten_motion_codes(tokenize_motion(tok.autoencoder, tok.stack, m), K));
    out.tracks.push_back({});
    for (const auto& p : recover_trajectory(m).positions) out.tracks.back().emplace_back(p.x(), p.z());
  }
  out.audio = audio_tokens(audio, clip.audio);
  return out;
}

void PredictorTrainConfig::validate() const {
  if (order < 1) throw ValidationError("order must be >= 1");
  if (!(smoothing >= 0.0)) throw ValidationError("smoothing must be >= 0");
  if (!(segment_seconds > 0.0)) throw ValidationError("segment_seconds must be > 0");
  if (max_dancers < 1) throw ValidationError("max_dancers must be >= 1");
  grid.validate();
}

PredictorTrainConfig PredictorTrainConfig::from_config(const KeyValues& kv) {
  kv.reject_unknown({"order", "smoothing", "with_position", "pretrain", "segment_seconds", "max_dancers",
                     "grid_order", "grid_min", "grid_max"});
  PredictorTrainConfig c;
  c.order = static_cast<int>(kv.integer("order", c.order));
  c.smoothing = kv.real("smoothing", c.smoothing);
  c.with_position = kv.boolean("with_position", c.with_position);
  c.pretrain = kv.boolean("pretrain", c.pretrain);
  c.segment_seconds = kv.real("segment_seconds", c.segment_seconds);
  c.max_dancers = static_cast<std::uint32_t>(kv.unsigned_integer("max_dancers", c.max_dancers));
  c.grid.order = static_cast<int>(kv.integer("grid_order", c.grid.order));
  c.grid.min = kv.real("grid_min", c.grid.min);
  c.grid.max = kv.real("grid_max", c.grid.max);
  c.validate();
  return c;
}

Vocabulary make_vocabulary(const TokenizerModel& tok, const AudioCodebook& audio, const PositionGrid& grid,
                           std::uint32_t max_dancers) {
  Vocabulary v;
  v.motion_size = static_cast<std::uint32_t>(tok.stack.levels * tok.stack.codebook_size());
  v.music_size = static_cast<std::uint32_t>(audio.book.size());
  v.pos_size = grid.token_count();
  v.max_dancers = max_dancers;
  v.validate();
  return v;
}

std::vector<CorpusItem> build_corpus(std::span<const ClipTokens> clips, const TokenizerModel& tok, double audio_rate,
                                     const PredictorTrainConfig& cfg) {
  cfg.validate();
  const AutoencoderConfig& model = tok.autoencoder.config();
  const int L = tok.stack.levels;
  const int d = model.downsample;
  const int T = std::max(1, static_cast<int>(std::lround(cfg.segment_seconds * model.fps / d)));
  const int A = std::max(1, static_cast<int>(std::lround(cfg.segment_seconds * audio_rate)));
  std::vector<CorpusItem> corpus;
  for (const ClipTokens& clip : clips) {
    const std::size_t N = clip.motion_ids.size();
    if (N == 0 || clip.audio.empty()) continue;
    if (N > cfg.max_dancers) throw ValidationError("build_corpus: clip has more dancers than max_dancers");
    if (cfg.pretrain) {
      std::vector<TokenSegment> segs;
      for (const auto& ids : clip.motion_ids) segs.push_back({Modality::Motion, ids});
      segs.push_back({Modality::Audio, clip.audio});
      corpus.push_back({build_pretrain_stream(segs), {}});
    }
    const auto steps = static_cast<int>(clip.motion_ids.front().size() / static_cast<std::size_t>(L));
    const int segments = (steps + T - 1) / T;
    for (int k = 0; k < segments; ++k) {
      std::vector<std::uint32_t> audio(static_cast<std::size_t>(A));
      for (int a = 0; a < A; ++a) {
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(k * A + a), clip.audio.size() - 1);
        audio[static_cast<std::size_t>(a)] = clip.audio[idx];
      }
      std::vector<DancerTrack> dancers(N);
      const auto frame = std::min<std::size_t>(static_cast<std::size_t>(k * T * d), clip.tracks.front().size() - 1);
      for (std::size_t i = 0; i < N; ++i) {
        dancers[i].start_xz = clip.tracks[i][frame];
        for (int s = 0; s < T; ++s) {
          const int step = std::min(k * T + s, steps - 1);
          for (int l = 0; l < L; ++l) {
            dancers[i].motion_ids.push_back(clip.motion_ids[i][static_cast<std::size_t>(step * L + l)]);
          }
        }
      }
      TrainingExample ex = build_sft_example(audio, dancers, cfg.grid, cfg.with_position);
      corpus.push_back({std::move(ex.words), std::move(ex.loss_mask)});
    }
  }
  if (corpus.empty()) throw ValidationError("build_corpus: no usable clips");
  return corpus;
}

NGramPredictor train_predictor(std::span<const ClipTokens> clips, const TokenizerModel& tok, const AudioCodebook& audio,
                               double audio_rate, const PredictorTrainConfig& cfg) {
  const std::vector<CorpusItem> corpus = build_corpus(clips, tok, audio_rate, cfg);
  return train_ngram(corpus, make_vocabulary(tok, audio, cfg.grid, cfg.max_dancers), cfg.order, cfg.smoothing);
}

}  // namespace gchoreo
