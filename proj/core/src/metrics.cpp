#include "gchoreo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "gchoreo/audio.hpp"
#include "gchoreo/error.hpp"
#include "gchoreo/text.hpp"

namespace gchoreo {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string(what) + ": non-finite feature values");
}

Eigen::MatrixXd covariance(const Matrix& rows, const RowVector& mean) {
  const Matrix centered = rows.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(rows.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const Matrix& real, const Matrix& generated) {
  if (real.cols() != generated.cols()) throw ValidationError("fid: feature dimensions differ");
  if (real.rows() < 2 || generated.rows() < 2) throw ValidationError("fid: need at least 2 samples per set");
  require_finite(real, "fid");
  require_finite(generated, "fid");
  const RowVector mr = real.colwise().mean();
  const RowVector mg = generated.colwise().mean();
  const Eigen::MatrixXd cr = covariance(real, mr);
  const Eigen::MatrixXd cg = covariance(generated, mg);
  // Tr sqrt(Cr Cg) = Tr sqrt(Cr^1/2 Cg Cr^1/2), the latter symmetric PSD.
  const Eigen::MatrixXd sr = psd_sqrt(cr);
  const Eigen::MatrixXd inner = sr * cg * sr;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (mr - mg).squaredNorm() + cr.trace() + cg.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

double diversity(const Matrix& rows, int sample_pairs, std::uint64_t seed) {
  const auto n = rows.rows();
  if (n < 2) throw ValidationError("diversity: need at least 2 samples");
  if (sample_pairs < 1) throw ValidationError("diversity: sample_pairs must be >= 1");
  require_finite(rows, "diversity");
  const auto all_pairs = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n - 1) / 2;
  double total = 0.0;
  if (all_pairs <= static_cast<std::uint64_t>(sample_pairs)) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) total += (rows.row(i) - rows.row(j)).norm();
    }
    return total / static_cast<double>(all_pairs);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  for (int s = 0; s < sample_pairs; ++s) {
    Eigen::Index i = pick(rng), j = pick(rng);
    while (j == i) j = pick(rng);
    total += (rows.row(i) - rows.row(j)).norm();
  }
  return total / sample_pairs;
}

double beat_alignment(std::span<const double> audio_beats, std::span<const double> motion_beats, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("beat_alignment: sigma must be > 0");
  if (audio_beats.empty()) throw ValidationError("beat_alignment: no audio beats");
  if (motion_beats.empty()) return 0.0;
  double total = 0.0;
  for (double a : audio_beats) {
    double best = std::numeric_limits<double>::infinity();
    for (double m : motion_beats) best = std::min(best, std::abs(a - m));
    total += std::exp(-(best * best) / (2.0 * sigma * sigma));
  }
  return total / static_cast<double>(audio_beats.size());
}

std::vector<double> motion_beats(const Matrix& global_positions, double fps, double min_gap) {
  if (!(fps > 0.0)) throw ValidationError("motion_beats: fps must be > 0");
  const auto F = global_positions.rows();
  const auto J = global_positions.cols() / 3;
  if (F < 2 || J < 1) return {};
  std::vector<double> strength(static_cast<std::size_t>(F - 1));
  std::vector<double> times(strength.size());
  for (Eigen::Index f = 0; f + 1 < F; ++f) {
    double speed = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
      speed += (global_positions.block<1, 3>(f + 1, 3 * j) - global_positions.block<1, 3>(f, 3 * j)).norm();
    }
    strength[static_cast<std::size_t>(f)] = -speed * fps / static_cast<double>(J);
    times[static_cast<std::size_t>(f)] = (static_cast<double>(f) + 0.5) / fps;
  }
  return pick_peaks(strength, times, -std::numeric_limits<double>::infinity(), min_gap);
}

double tif(std::span<const std::vector<Eigen::Vector2d>> tracks, double radius) {
  if (tracks.size() < 2) throw ValidationError("tif: need at least 2 dancers");
  if (!(radius > 0.0)) throw ValidationError("tif: collision radius must be > 0");
  const std::size_t F = tracks.front().size();
  for (const auto& t : tracks) {
    if (t.size() != F) throw ValidationError("tif: dancers have different frame counts");
  }
  if (F == 0) throw ValidationError("tif: empty trajectories");
  std::size_t hits = 0;
  for (std::size_t f = 0; f < F; ++f) {
    bool hit = false;
    for (std::size_t a = 0; a < tracks.size() && !hit; ++a) {
      for (std::size_t b = a + 1; b < tracks.size() && !hit; ++b) hit = (tracks[a][f] - tracks[b][f]).norm() < radius;
    }
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(F);
}

std::vector<Eigen::Vector2d> root_track(const MotionSequence& seq) {
  const RootTrajectory traj = recover_trajectory(seq);
  std::vector<Eigen::Vector2d> out;
  out.reserve(traj.positions.size());
  for (const auto& p : traj.positions) out.emplace_back(p.x(), p.z());
  return out;
}

double tif(std::span<const MotionSequence> group, double radius) {
  if (group.size() < 2) throw ValidationError("tif: need at least 2 dancers");
  std::vector<std::vector<Eigen::Vector2d>> tracks;
  for (const auto& seq : group) tracks.push_back(root_track(seq));
  return tif(tracks, radius);
}

Vector group_features(const SkeletonSpec& skeleton, std::span<const MotionSequence> group) {
  if (group.empty()) throw ValidationError("group_features: empty group");
  Vector kin;
  std::vector<std::vector<Eigen::Vector2d>> tracks;
  for (const auto& seq : group) {
    const Vector k = kinetic_features(skeleton, seq);
    kin = kin.size() ? Vector(kin + k) : k;
    tracks.push_back(root_track(seq));
  }
  kin /= static_cast<double>(group.size());
  Vector out(kin.size() + 3);
  out.head(kin.size()) = kin;
  double sum = 0.0, lo = 0.0, hi = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < tracks.size(); ++a) {
    for (std::size_t b = a + 1; b < tracks.size(); ++b) {
      if (tracks[a].size() != tracks[b].size()) throw ValidationError("group_features: unequal frame counts");
      for (std::size_t f = 0; f < tracks[a].size(); ++f) {
        const double d = (tracks[a][f] - tracks[b][f]).norm();
        lo = count ? std::min(lo, d) : d;
        hi = count ? std::max(hi, d) : d;
        sum += d;
        ++count;
      }
    }
  }
  out.tail(3) << (count ? sum / static_cast<double>(count) : 0.0), lo, hi;
  return out;
}

void MetricsConfig::validate() const {
  if (!(beat_sigma > 0.0) || !(collision_radius > 0.0) || !(beat_gap >= 0.0)) {
    throw ValidationError("metrics: beat_sigma and collision_radius must be > 0, beat_gap >= 0");
  }
  if (diversity_pairs < 1) throw ValidationError("metrics: diversity_pairs must be >= 1");
}

MetricsConfig MetricsConfig::from_config(const KeyValues& kv) {
  kv.reject_unknown({"beat_sigma", "collision_radius", "beat_gap", "diversity_pairs", "seed"});
  MetricsConfig c;
  c.beat_sigma = kv.real("beat_sigma", c.beat_sigma);
  c.collision_radius = kv.real("collision_radius", c.collision_radius);
  c.beat_gap = kv.real("beat_gap", c.beat_gap);
  c.diversity_pairs = static_cast<int>(kv.integer("diversity_pairs", c.diversity_pairs));
  c.seed = kv.unsigned_integer("seed", c.seed);
  c.validate();
  return c;
}

std::string MetricsConfig::hash() const {
  const std::string body = "beat_sigma=" + text::format_double(beat_sigma) +
                           ";collision_radius=" + text::format_double(collision_radius) +
                           ";beat_gap=" + text::format_double(beat_gap) +
                           ";diversity_pairs=" + std::to_string(diversity_pairs) + ";seed=" + std::to_string(seed) +
                           ";group_features=v" + std::to_string(kGroupFeatureVersion);
  return text::hex64(text::fnv1a(body));
}

std::string MetricsReport::render_key_values() const {
  std::string out;
  out += "config_hash=" + config_hash + "\n";
  out += "group_features=v" + std::to_string(kGroupFeatureVersion) + "\n";
  out += "fid_group=" + text::format_double(fid_group) + "\n";
  out += "fid_individual=" + text::format_double(fid_individual) + "\n";
  out += "diversity_group=" + text::format_double(diversity_group) + "\n";
  out += "diversity_individual=" + text::format_double(diversity_individual) + "\n";
  out += "beat_alignment=" + text::format_double(beat_alignment) + "\n";
  out += "tif=" + text::format_double(tif) + "\n";
  return out;
}

std::string MetricsReport::render_table() const {
  const std::pair<const char*, double> rows[] = {
      {"fid_group", fid_group},           {"fid_individual", fid_individual}, {"diversity_group", diversity_group},
      {"diversity_individual", diversity_individual}, {"beat_alignment", beat_alignment}, {"tif", tif},
  };
  std::string out;
  for (const auto& [name, value] : rows) out += std::string(name) + " " + text::format_double(value) + " " + config_hash + "\n";
  return out;
}

MetricsReport evaluate_groups(const SkeletonSpec& skeleton, std::span<const std::vector<MotionSequence>> real,
                              std::span<const std::vector<MotionSequence>> generated,
                              std::span<const std::vector<double>> audio_beats, const MetricsConfig& cfg) {
  if (real.size() < 2 || generated.size() < 2) throw ValidationError("evaluate: need at least 2 clips per side");
  if (audio_beats.size() != generated.size()) throw ValidationError("evaluate: one beat list per generated clip");

  auto stack_rows = [](const std::vector<Vector>& rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols()) throw ValidationError("evaluate: feature dimensions differ between clips");
      m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    return m;
  };
  auto features = [&](std::span<const std::vector<MotionSequence>> clips, std::vector<Vector>& group,
                      std::vector<Vector>& individual) {
    for (const auto& clip : clips) {
      group.push_back(group_features(skeleton, clip));
      for (const auto& seq : clip) individual.push_back(kinetic_features(skeleton, seq));
    }
  };
  std::vector<Vector> rg, ri, gg, gi;
  features(real, rg, ri);
  features(generated, gg, gi);
  const Matrix RG = stack_rows(rg), RI = stack_rows(ri), GG = stack_rows(gg), GI = stack_rows(gi);

  MetricsReport rep;
  rep.config_hash = cfg.hash();
  rep.fid_group = fid(RG, GG);
  rep.fid_individual = fid(RI, GI);
  rep.diversity_group = diversity(GG, cfg.diversity_pairs, cfg.seed);
  rep.diversity_individual = diversity(GI, cfg.diversity_pairs, cfg.seed);

  double ba = 0.0, tf = 0.0;
  std::size_t ba_n = 0, tif_n = 0;
  for (std::size_t c = 0; c < generated.size(); ++c) {
    for (const auto& seq : generated[c]) {
      if (audio_beats[c].empty()) continue;
      const auto beats = motion_beats(global_joint_positions(skeleton, seq), seq.fps, cfg.beat_gap);
      ba += beat_alignment(audio_beats[c], beats, cfg.beat_sigma);
      ++ba_n;
    }
    if (generated[c].size() >= 2) {
      tf += tif(std::span<const MotionSequence>(generated[c]), cfg.collision_radius);
      ++tif_n;
    }
  }
  rep.beat_alignment = ba_n ? ba / static_cast<double>(ba_n) : 0.0;
  rep.tif = tif_n ? tf / static_cast<double>(tif_n) : 0.0;
  return rep;
}

}  // namespace gchoreo
