// gchoreo: file-based pipeline from synthetic data to evaluated group dance.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gchoreo/artifacts.hpp"
#include "gchoreo/audio.hpp"
#include "gchoreo/config.hpp"
#include "gchoreo/dataset.hpp"
#include "gchoreo/error.hpp"
#include "gchoreo/generation.hpp"
#include "gchoreo/metrics.hpp"
#include "gchoreo/pipeline.hpp"
#include "gchoreo/sequence.hpp"
#include "gchoreo/text.hpp"

namespace fs = std::filesystem;
using namespace gchoreo;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value config file");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "output directory")->required();
}

KeyValues load_config(const Common& c, bool seeded) {
  KeyValues kv = c.config.empty() ? KeyValues{} : KeyValues::load(c.config);
  if (seeded && c.seed) kv.set("seed", std::to_string(*c.seed));
  return kv;
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ValidationError("cannot create output directory '" + c.out + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path.string() + "'");
  f << body;
  if (!f) throw ComputeError("write failed for '" + path.string() + "'");
}

std::vector<MotionSequence> all_motions(const std::vector<ClipData>& clips) {
  std::vector<MotionSequence> out;
  for (const auto& c : clips) out.insert(out.end(), c.dancers.begin(), c.dancers.end());
  return out;
}

std::vector<ClipTokens> tokenize_all(const TokenizerModel& tok, const AudioCodebook& acb,
                                     const std::vector<ClipData>& clips) {
  std::vector<ClipTokens> out;
  for (const auto& c : clips) out.push_back(tokenize_clip(tok, acb, c));
  return out;
}

// --- synth-data -------------------------------------------------------------

void run_synth(const Common& c) {
  const SyntheticDatasetSpec spec = SyntheticDatasetSpec::from_config(load_config(c, true));
  const DatasetManifest m = write_synthetic_dataset(spec, SkeletonSpec::default24(), prepare_out(c));
  std::cout << "wrote " << m.clips.size() << " clips to " << c.out << "\n";
}

// --- train-tokenizer --------------------------------------------------------

void run_train_tokenizer(const Common& c, const std::string& data, const std::string& split) {
  const TokenizerTrainConfig cfg = TokenizerTrainConfig::from_config(load_config(c, true));
  const auto clips = load_clips(load_manifest(data), split);
  const fs::path out = prepare_out(c);
  const auto motions = all_motions(clips);
  TokenizerTrainLog log;
  const TokenizerModel tok = train_tokenizer(motions, cfg, &log);
  save_tokenizer(out / "tokenizer.rvq", tok.autoencoder, tok.stack);
  write_text(out / "tokenizer.conf", cfg.render());

  std::ostringstream o;
  o << "step reconstruction commitment orthogonal total\n";
  for (std::size_t i = 0; i < log.history.size(); ++i) {
    const auto& h = log.history[i];
    o << i << ' ' << text::format_double(h.reconstruction) << ' ' << text::format_double(h.commitment) << ' '
      << text::format_double(h.orthogonal) << ' ' << text::format_double(h.total) << '\n';
  }
  o << "# initial_reconstruction=" << text::format_double(log.initial_reconstruction) << '\n'
    << "# final_reconstruction=" << text::format_double(log.final_reconstruction) << '\n'
    << "# utilization=" << text::format_double(log.utilization) << '\n';
  write_text(out / "tokenizer_log.txt", o.str());
  std::cout << "reconstruction " << text::format_double(log.initial_reconstruction) << " -> "
            << text::format_double(log.final_reconstruction) << ", utilization "
            << text::format_double(log.utilization) << "\n";
}

// --- train-audio-codebook ---------------------------------------------------

void run_train_audio(const Common& c, const std::string& data, const std::string& split,
                     const std::string& tokenizer) {
  const AudioCodebookConfig cfg = AudioCodebookConfig::from_config(load_config(c, true));
  const TokenizerModel tok = load_tokenizer(tokenizer);
  const auto clips = load_clips(load_manifest(data), split);
  const fs::path out = prepare_out(c);
  std::vector<AudioClip> audio;
  for (const auto& clip : clips) audio.push_back(clip.audio);
  const AudioCodebook acb = train_audio_codebook(audio, tok.autoencoder.config(), cfg);
  save_audio_codebook(out / "audio.aud", acb);
  std::cout << "audio codebook: " << acb.book.size() << " entries, hop " << acb.analysis.hop << "\n";
}

// --- tokenize ---------------------------------------------------------------

void run_tokenize(const Common& c, const std::string& data, const std::string& split, const std::string& tokenizer,
                  const std::string& audio_codebook) {
  const PredictorTrainConfig cfg = PredictorTrainConfig::from_config(load_config(c, false));
  const TokenizerModel tok = load_tokenizer(tokenizer);
  const AudioCodebook acb = load_audio_codebook(audio_codebook);
  const auto clips = load_clips(load_manifest(data), split);
  const fs::path out = prepare_out(c);
  fs::create_directories(out / "codes");

  const auto tokens = tokenize_all(tok, acb, clips);
  const double rate = audio_token_rate(acb, clips.front().audio.sample_rate);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    std::ostringstream o;
    std::vector<Word> audio;
    for (auto a : tokens[i].audio) audio.push_back(Word::music(a));
    o << "audio " << render_words(audio) << '\n';
    for (std::size_t d = 0; d < tokens[i].motion_ids.size(); ++d) {
      std::vector<Word> w;
      for (auto id : tokens[i].motion_ids[d]) w.push_back(Word::motion(id));
      o << "dancer" << d + 1 << ' ' << render_words(w) << '\n';
    }
    write_text(out / "codes" / (clips[i].id + ".txt"), o.str());
  }

  PredictorTrainConfig sft = cfg;
  sft.pretrain = false;
  std::ostringstream ex;
  for (const auto& item : build_corpus(tokens, tok, rate, sft)) write_example(ex, derive_layout(item.words));
  write_text(out / "examples.txt", ex.str());
  std::cout << "tokenized " << clips.size() << " clips\n";
}

// --- train-predictor --------------------------------------------------------

void run_train_predictor(const Common& c, const std::string& data, const std::string& split,
                         const std::string& tokenizer, const std::string& audio_codebook) {
  const PredictorTrainConfig cfg = PredictorTrainConfig::from_config(load_config(c, false));
  const TokenizerModel tok = load_tokenizer(tokenizer);
  const AudioCodebook acb = load_audio_codebook(audio_codebook);
  const auto clips = load_clips(load_manifest(data), split);
  const fs::path out = prepare_out(c);
  const auto tokens = tokenize_all(tok, acb, clips);
  const double rate = audio_token_rate(acb, clips.front().audio.sample_rate);
  const NGramPredictor model = train_predictor(tokens, tok, acb, rate, cfg);
  save_ngram(out / "predictor.ngr", model);
  save_grid(out / "grid.grd", cfg.grid);
  std::size_t contexts = 0;
  for (const auto& t : model.tables()) contexts += t.size();
  std::cout << "n-gram order " << model.order() << ", " << contexts << " contexts\n";
}

// --- generate ---------------------------------------------------------------

std::string xz_list(const std::vector<Eigen::Vector2d>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += text::format_double(v[i].x()) + "," + text::format_double(v[i].y());
  }
  return s;
}

void run_generate(const Common& c, const std::string& data, const std::string& split, const std::string& tokenizer,
                  const std::string& audio_codebook, const std::string& predictor, const std::string& grid_path) {
  const KeyValues kv = load_config(c, true);
  const GenerationConfig base = parse_generation_config(kv.render());
  const TokenizerModel tok = load_tokenizer(tokenizer);
  const AudioCodebook acb = load_audio_codebook(audio_codebook);
  const NGramPredictor pred = load_ngram(predictor);
  const PositionGrid grid = load_grid(grid_path);
  const DatasetManifest src = load_manifest(data);
  const fs::path out = prepare_out(c);
  fs::create_directories(out / "audio");
  fs::create_directories(out / "motion");

  DatasetManifest gen;
  gen.root = out;
  std::ostringstream log;
  log << "clip segment dancer prompt start_x start_z end_x end_z\n";
  int index = 0;
  for (const ClipEntry* e : src.split(split)) {
    const AudioClip audio = read_wav(src.resolve(e->audio));
    GenerationConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(index++);
    cfg.audio_token_rate = audio_token_rate(acb, audio.sample_rate);
    const GroupResult res = generate_group(pred, tok.autoencoder, tok.stack, audio_tokens(acb, audio), grid, cfg);

    ClipEntry g;
    g.id = e->id;
    g.split = "test";
    g.audio = fs::path("audio") / (e->id + ".wav");
    write_wav(out / g.audio, audio);
    for (std::size_t i = 0; i < res.dancers.size(); ++i) {
      const fs::path rel = fs::path("motion") / (e->id + "_d" + std::to_string(i + 1) + ".motion");
      save_motion(out / rel, res.dancers[i]);
      g.motions.push_back(rel);
      g.positions.emplace_back(res.dancers[i].initial_position.x(), res.dancers[i].initial_position.z());
    }
    for (const auto& r : res.segments) {
      log << e->id << ' ' << r.segment << ' ' << r.dancer + 1 << ' ' << r.prompt.id << ' '
          << text::format_double(r.start_xz.x()) << ' ' << text::format_double(r.start_xz.y()) << ' '
          << text::format_double(r.end_xz.x()) << ' ' << text::format_double(r.end_xz.y()) << '\n';
    }
    gen.clips.push_back(std::move(g));
  }
  if (gen.clips.empty()) throw ValidationError("no clips in split '" + split + "'");
  save_manifest(out / "manifest.txt", gen);
  write_text(out / "segments.txt", log.str());
  write_text(out / "generation.conf", render_generation_config(base));
  std::cout << "generated " << gen.clips.size() << " clips\n";
}

// --- evaluate ---------------------------------------------------------------

std::vector<std::vector<MotionSequence>> groups_of(const std::vector<ClipData>& clips) {
  std::vector<std::vector<MotionSequence>> out;
  for (const auto& c : clips) out.push_back(c.dancers);
  return out;
}

void run_evaluate(const Common& c, const std::string& real, const std::string& real_split,
                  const std::string& generated) {
  const MetricsConfig cfg = MetricsConfig::from_config(load_config(c, true));
  const auto real_clips = load_clips(load_manifest(real), real_split);
  const auto gen_clips = load_clips(load_manifest(generated));
  const fs::path out = prepare_out(c);
  std::vector<std::vector<double>> beats;
  for (const auto& g : gen_clips) beats.push_back(detect_beats(extract_audio_frames(g.audio), cfg.beat_gap));
  const MetricsReport rep =
      evaluate_groups(SkeletonSpec::default24(), groups_of(real_clips), groups_of(gen_clips), beats, cfg);
  write_text(out / "metrics.txt", rep.render_key_values());
  write_text(out / "metrics_table.txt", rep.render_table());
  std::cout << rep.render_table();
}

// --- plot -------------------------------------------------------------------

std::string svg_plot(const std::vector<MotionSequence>& dancers, const PositionGrid& grid) {
  std::vector<std::vector<Eigen::Vector2d>> tracks;
  double lo_x = 1e300, hi_x = -1e300, lo_z = 1e300, hi_z = -1e300;
  for (const auto& d : dancers) {
    tracks.push_back(root_track(d));
    for (const auto& p : tracks.back()) {
      lo_x = std::min(lo_x, p.x()), hi_x = std::max(hi_x, p.x());
      lo_z = std::min(lo_z, p.y()), hi_z = std::max(hi_z, p.y());
    }
  }
  // Snap the view to whole grid cells around the tracks.
  const double cs = grid.cell_size();
  auto snap_lo = [&](double v) { return std::max(grid.min, grid.min + std::floor((v - grid.min) / cs - 1) * cs); };
  auto snap_hi = [&](double v) { return std::min(grid.max, grid.min + std::ceil((v - grid.min) / cs + 1) * cs); };
  const double x0 = snap_lo(lo_x), x1 = std::max(snap_hi(hi_x), x0 + cs);
  const double z0 = snap_lo(lo_z), z1 = std::max(snap_hi(hi_z), z0 + cs);
  const double scale = 480.0 / std::max(x1 - x0, z1 - z0);
  auto px = [&](double x) { return text::format_double(std::round((x - x0) * scale * 100) / 100 + 10); };
  auto pz = [&](double z) { return text::format_double(std::round((z1 - z) * scale * 100) / 100 + 10); };

  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::ceil((x1 - x0) * scale) + 20
    << "\" height=\"" << std::ceil((z1 - z0) * scale) + 20
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<g stroke=\"#ddd\" stroke-width=\"1\">\n";
  for (double x = x0; x <= x1 + 1e-9; x += cs) {
    o << "<line x1=\"" << px(x) << "\" y1=\"" << pz(z0) << "\" x2=\"" << px(x) << "\" y2=\"" << pz(z1) << "\"/>\n";
  }
  for (double z = z0; z <= z1 + 1e-9; z += cs) {
    o << "<line x1=\"" << px(x0) << "\" y1=\"" << pz(z) << "\" x2=\"" << px(x1) << "\" y2=\"" << pz(z) << "\"/>\n";
  }
  o << "</g>\n";
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const char* col = colors[i % 8];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t f = 0; f < tracks[i].size(); ++f) {
      o << (f ? " " : "") << px(tracks[i][f].x()) << ',' << pz(tracks[i][f].y());
    }
    o << "\"/>\n";
    const auto& s = tracks[i].front();
    o << "<circle cx=\"" << px(s.x()) << "\" cy=\"" << pz(s.y()) << "\" r=\"4\" fill=\"" << col << "\"/>\n";
    o << "<text x=\"" << px(s.x()) << "\" y=\"" << pz(s.y()) << "\" dx=\"6\" dy=\"-6\">" << i + 1 << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void run_plot(const Common& c, const std::string& data, const std::string& split, const std::string& grid_path) {
  const PositionGrid grid = grid_path.empty() ? PositionGrid{} : load_grid(grid_path);
  const auto clips = load_clips(load_manifest(data), split);
  const fs::path out = prepare_out(c);
  for (const auto& clip : clips) write_text(out / (clip.id + ".svg"), svg_plot(clip.dancers, grid));
  std::cout << "plotted " << clips.size() << " clips\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gchoreo: music-driven group choreography pipeline"};
  app.require_subcommand(1);

  Common common;
  std::string data, tokenizer, audio_cb, predictor, grid, real, real_split, generated;
  // default_val writes through immediately, so each subcommand owns its split.
  std::string split_tok = "train", split_aud = "train", split_tokz = "train", split_pred = "train", split_gen = "test",
              split_plot;

  auto* synth = app.add_subcommand("synth-data", "write a synthetic group dance dataset");
  add_common(synth, common);

  auto* ttok = app.add_subcommand("train-tokenizer", "train the motion RVQ tokenizer");
  add_common(ttok, common);
  ttok->add_option("--data", data, "dataset manifest")->required();
  ttok->add_option("--split", split_tok, "clip split (empty = all)");

  auto* taud = app.add_subcommand("train-audio-codebook", "fit the audio token codebook");
  add_common(taud, common);
  taud->add_option("--data", data, "dataset manifest")->required();
  taud->add_option("--split", split_aud, "clip split (empty = all)");
  taud->add_option("--tokenizer", tokenizer, "tokenizer artifact (sets the token rate)")->required();

  auto* tokz = app.add_subcommand("tokenize", "write motion/audio codes and training examples");
  add_common(tokz, common);
  tokz->add_option("--data", data, "dataset manifest")->required();
  tokz->add_option("--split", split_tokz, "clip split (empty = all)");
  tokz->add_option("--tokenizer", tokenizer, "tokenizer artifact")->required();
  tokz->add_option("--audio-codebook", audio_cb, "audio codebook artifact")->required();

  auto* tpred = app.add_subcommand("train-predictor", "count the n-gram predictor");
  add_common(tpred, common);
  tpred->add_option("--data", data, "dataset manifest")->required();
  tpred->add_option("--split", split_pred, "clip split (empty = all)");
  tpred->add_option("--tokenizer", tokenizer, "tokenizer artifact")->required();
  tpred->add_option("--audio-codebook", audio_cb, "audio codebook artifact")->required();

  auto* gen = app.add_subcommand("generate", "generate group dance for every clip's audio");
  add_common(gen, common);
  gen->add_option("--data", data, "manifest supplying the audio")->required();
  gen->add_option("--split", split_gen, "clip split (empty = all)");
  gen->add_option("--tokenizer", tokenizer, "tokenizer artifact")->required();
  gen->add_option("--audio-codebook", audio_cb, "audio codebook artifact")->required();
  gen->add_option("--predictor", predictor, "n-gram artifact")->required();
  gen->add_option("--grid", grid, "position grid artifact")->required();

  auto* eval = app.add_subcommand("evaluate", "score generated groups against real ones");
  add_common(eval, common);
  eval->add_option("--real", real, "reference manifest")->required();
  real_split = "test";
  eval->add_option("--real-split", real_split, "reference split (empty = all)");
  eval->add_option("--generated", generated, "generated manifest")->required();

  auto* plot = app.add_subcommand("plot", "top-down SVG trajectories");
  add_common(plot, common);
  plot->add_option("--data", data, "manifest to plot")->required();
  plot->add_option("--split", split_plot, "clip split (empty = all)");
  plot->add_option("--grid", grid, "position grid artifact (default grid otherwise)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) run_synth(common);
    else if (*ttok) run_train_tokenizer(common, data, split_tok);
    else if (*taud) run_train_audio(common, data, split_aud, tokenizer);
    else if (*tokz) run_tokenize(common, data, split_tokz, tokenizer, audio_cb);
    else if (*tpred) run_train_predictor(common, data, split_pred, tokenizer, audio_cb);
    else if (*gen) run_generate(common, data, split_gen, tokenizer, audio_cb, predictor, grid);
    else if (*eval) run_evaluate(common, real, real_split, generated);
    else if (*plot) run_plot(common, data, split_plot, grid);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
