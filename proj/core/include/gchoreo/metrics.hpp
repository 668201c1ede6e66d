#pragma once

// Evaluation metrics: Frechet distance on kinetic and group features,
// diversity, beat alignment and trajectory intersection frequency.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gchoreo/config.hpp"
#include "gchoreo/linalg.hpp"
#include "gchoreo/motion.hpp"

namespace gchoreo {

// Frechet distance between Gaussian fits of the rows of `real` and
// `generated` (unbiased covariances). Needs >= 2 rows each.
double fid(const Matrix& real, const Matrix& generated);

// Mean Euclidean distance over `sample_pairs` random distinct row pairs, or
// over all pairs when there are no more than `sample_pairs` of them.
double diversity(const Matrix& rows, int sample_pairs, std::uint64_t seed);

// Mean over audio beats of exp(-dt^2 / (2 sigma^2)), dt to the nearest
// motion beat. No motion beats gives 0.
double beat_alignment(std::span<const double> audio_beats, std::span<const double> motion_beats, double sigma = 0.3);

// Local minima of mean joint speed, spaced by at least `min_gap` seconds
// (deeper minima win). Speeds are forward differences stamped at the
// midpoint between frames.
std::vector<double> motion_beats(const Matrix& global_positions, double fps, double min_gap = 0.25);

// Fraction of frames where some pair of root XZ tracks is closer than
// `radius`. Tracks must have equal lengths; needs >= 2 tracks.
double tif(std::span<const std::vector<Eigen::Vector2d>> tracks, double radius = 0.5);
// Root tracks come from the recovered trajectories.
double tif(std::span<const MotionSequence> group, double radius = 0.5);

std::vector<Eigen::Vector2d> root_track(const MotionSequence& seq);

// Mean of the dancers' kinetic features followed by the mean, min and max
// of pairwise root distances over frames (zeros for a lone dancer).
inline constexpr int kGroupFeatureVersion = 1;
Vector group_features(const SkeletonSpec& skeleton, std::span<const MotionSequence> group);

struct MetricsConfig {
  double beat_sigma = 0.3;        // s
  double collision_radius = 0.5;  // m
  double beat_gap = 0.25;         // s
  int diversity_pairs = 1000;
  std::uint64_t seed = 0;

  void validate() const;
  static MetricsConfig from_config(const KeyValues& kv);
  std::string hash() const;  // over every field and the group feature version
};

struct MetricsReport {
  double fid_group = 0.0;
  double fid_individual = 0.0;
  double diversity_group = 0.0;
  double diversity_individual = 0.0;
  double beat_alignment = 0.0;
  double tif = 0.0;
  std::string config_hash;

  std::string render_key_values() const;
  // "name value config_hash" per line.
  std::string render_table() const;
};

// One group per clip. `audio_beats[c]` belongs to generated clip c.
MetricsReport evaluate_groups(const SkeletonSpec& skeleton, std::span<const std::vector<MotionSequence>> real,
                              std::span<const std::vector<MotionSequence>> generated,
                              std::span<const std::vector<double>> audio_beats, const MetricsConfig& cfg = {});

}  // namespace gchoreo
