#pragma once

// Synthetic group dance data (analytic root paths with beat-locked limb
// motion and click-track audio) and the dataset manifest format.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gchoreo/audio.hpp"
#include "gchoreo/config.hpp"
#include "gchoreo/motion.hpp"

namespace gchoreo {

// circle: every dancer orbits the origin counterclockwise (seen from +Y) on
//         the formation ring.
// line:   dancers move in and out along their radial direction.
// sway:   side-to-side sway about a fixed ring spot, one swing per beat.
// spin:   fixed ring spot, heading twists back and forth on the beat.
enum class Primitive : std::uint8_t { Circle, Line, Sway, Spin };

std::string_view primitive_name(Primitive p);
Primitive parse_primitive(std::string_view name);

struct SyntheticDatasetSpec {
  int clip_count = 8;
  int dancers_min = 1;
  int dancers_max = 3;
  double duration_seconds = 8.0;
  double fps = 30.0;
  double sample_rate = 22050.0;
  std::vector<Primitive> primitives{Primitive::Circle, Primitive::Line, Primitive::Sway, Primitive::Spin};
  double tempo_min = 90.0;  // bpm
  double tempo_max = 130.0;
  double radius_min = 0.8;  // formation ring radius, m
  double radius_max = 1.6;
  double speed_min = 0.3;  // orbit speed, m/s
  double speed_max = 0.6;
  double test_fraction = 0.2;  // trailing clips go to the test split
  std::uint64_t seed = 0;

  void validate() const;
  static SyntheticDatasetSpec from_config(const KeyValues& kv);
  std::string render() const;  // key=value
};

struct SyntheticClip {
  std::string id;
  std::string split;
  Primitive primitive = Primitive::Circle;
  double tempo_bpm = 120.0;
  double beat_offset = 0.0;  // s, first beat
  std::vector<MotionSequence> dancers;
  AudioClip audio;
  std::vector<double> beats;  // s
};

// Clip `index` depends only on (spec, index).
SyntheticClip synthesize_clip(const SyntheticDatasetSpec& spec, const SkeletonSpec& skeleton, int index);
std::vector<SyntheticClip> synthesize_dataset(const SyntheticDatasetSpec& spec, const SkeletonSpec& skeleton);

struct ClipEntry {
  std::string id;
  std::string split;  // train | test
  std::filesystem::path audio;
  std::vector<std::filesystem::path> motions;
  std::vector<Eigen::Vector2d> positions;  // initial root XZ per dancer
};

struct DatasetManifest {
  std::filesystem::path root;  // relative paths resolve against this
  std::vector<ClipEntry> clips;

  std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : root / p; }
  // Ids unique, splits known, >= 1 dancer, one position per motion, and
  // (when `check_files`) every referenced file exists.
  void validate(bool check_files = true) const;
  std::vector<const ClipEntry*> split(std::string_view name) const;
};

// Header "GCHOREO-DATASET v1", then one line per clip:
//   clip id=ID split=S audio=PATH motions=P1;P2 positions=x,z;x,z
void write_manifest(std::ostream& out, const DatasetManifest& manifest);
DatasetManifest read_manifest(std::istream& in, const std::filesystem::path& root);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
// Validates, including file references.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes audio/, motion/, beats/, manifest.txt and synth.conf under `out_dir`.
DatasetManifest write_synthetic_dataset(const SyntheticDatasetSpec& spec, const SkeletonSpec& skeleton,
                                        const std::filesystem::path& out_dir);

}  // namespace gchoreo
