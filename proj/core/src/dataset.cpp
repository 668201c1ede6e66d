#include "gchoreo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Geometry>

#include "gchoreo/error.hpp"
#include "gchoreo/text.hpp"

namespace gchoreo {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::array<std::pair<Primitive, std::string_view>, 4> kPrimitiveNames{{
    {Primitive::Circle, "circle"},
    {Primitive::Line, "line"},
    {Primitive::Sway, "sway"},
    {Primitive::Spin, "spin"},
}};

std::array<double, 6> axis_rotation(const Vec3& axis, double angle) {
  return rotation_to_6d(Eigen::AngleAxisd(angle, axis).toRotationMatrix());
}

void set_rotation(Matrix& rot6d, int joint, const std::array<double, 6>& r) {
  for (int k = 0; k < 6; ++k) rot6d(joint, k) = r[static_cast<std::size_t>(k)];
}

std::string clip_id(int index) {
  std::string s = std::to_string(index);
  return "c" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

}  // namespace

std::string_view primitive_name(Primitive p) {
  for (const auto& [k, name] : kPrimitiveNames) {
    if (k == p) return name;
  }
  return "?";
}

Primitive parse_primitive(std::string_view name) {
  for (const auto& [k, n] : kPrimitiveNames) {
    if (n == name) return k;
  }
  throw ValidationError("unknown motion primitive '" + std::string(name) + "'");
}

void SyntheticDatasetSpec::validate() const {
  if (clip_count < 1) throw ValidationError("clip_count must be >= 1");
  if (dancers_min < 1 || dancers_max < dancers_min) throw ValidationError("dancer range must satisfy 1 <= min <= max");
  if (!(duration_seconds > 0.0) || !(fps > 0.0) || !(sample_rate > 0.0)) {
    throw ValidationError("duration, fps and sample_rate must be positive");
  }
  if (primitives.empty()) throw ValidationError("primitive list is empty");
  if (!(tempo_min > 0.0) || tempo_max < tempo_min) throw ValidationError("tempo range must satisfy 0 < min <= max");
  if (!(radius_min > 0.0) || radius_max < radius_min) throw ValidationError("radius range must satisfy 0 < min <= max");
  if (!(speed_min >= 0.0) || speed_max < speed_min) throw ValidationError("speed range must satisfy 0 <= min <= max");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must be in [0, 1)");
  if (std::lround(duration_seconds * fps) < 2) throw ValidationError("clips need at least 2 frames");
}

SyntheticDatasetSpec SyntheticDatasetSpec::from_config(const KeyValues& kv) {
  kv.reject_unknown({"clip_count", "dancers_min", "dancers_max", "duration_seconds", "fps", "sample_rate",
                     "primitives", "tempo_min", "tempo_max", "radius_min", "radius_max", "speed_min", "speed_max",
                     "test_fraction", "seed"});
  SyntheticDatasetSpec s;
  s.clip_count = static_cast<int>(kv.integer("clip_count", s.clip_count));
  s.dancers_min = static_cast<int>(kv.integer("dancers_min", s.dancers_min));
  s.dancers_max = static_cast<int>(kv.integer("dancers_max", s.dancers_max));
  s.duration_seconds = kv.real("duration_seconds", s.duration_seconds);
  s.fps = kv.real("fps", s.fps);
  s.sample_rate = kv.real("sample_rate", s.sample_rate);
  if (auto p = kv.get("primitives")) {
    s.primitives.clear();
    for (auto name : text::split(*p, ',')) s.primitives.push_back(parse_primitive(text::trim(name)));
  }
  s.tempo_min = kv.real("tempo_min", s.tempo_min);
  s.tempo_max = kv.real("tempo_max", s.tempo_max);
  s.radius_min = kv.real("radius_min", s.radius_min);
  s.radius_max = kv.real("radius_max", s.radius_max);
  s.speed_min = kv.real("speed_min", s.speed_min);
  s.speed_max = kv.real("speed_max", s.speed_max);
  s.test_fraction = kv.real("test_fraction", s.test_fraction);
  s.seed = kv.unsigned_integer("seed", s.seed);
  s.validate();
  return s;
}

std::string SyntheticDatasetSpec::render() const {
  std::string prims;
  for (std::size_t i = 0; i < primitives.size(); ++i) prims += (i ? "," : "") + std::string(primitive_name(primitives[i]));
  std::ostringstream o;
  o << "clip_count=" << clip_count << "\n"
    << "dancers_max=" << dancers_max << "\n"
    << "dancers_min=" << dancers_min << "\n"
    << "duration_seconds=" << text::format_double(duration_seconds) << "\n"
    << "fps=" << text::format_double(fps) << "\n"
    << "primitives=" << prims << "\n"
    << "radius_max=" << text::format_double(radius_max) << "\n"
    << "radius_min=" << text::format_double(radius_min) << "\n"
    << "sample_rate=" << text::format_double(sample_rate) << "\n"
    << "seed=" << seed << "\n"
    << "speed_max=" << text::format_double(speed_max) << "\n"
    << "speed_min=" << text::format_double(speed_min) << "\n"
    << "tempo_max=" << text::format_double(tempo_max) << "\n"
    << "tempo_min=" << text::format_double(tempo_min) << "\n"
    << "test_fraction=" << text::format_double(test_fraction) << "\n";
  return o.str();
}

SyntheticClip synthesize_clip(const SyntheticDatasetSpec& spec, const SkeletonSpec& skeleton, int index) {
  spec.validate();
  skeleton.validate();
  const int J = skeleton.joint_count();
  if (J != 24) throw ValidationError("synthetic data is defined for the default 24-joint skeleton");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  auto uniform = [&](double lo, double hi) { return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng); };

  SyntheticClip clip;
  clip.id = clip_id(index);
  const int test_clips = static_cast<int>(std::floor(spec.clip_count * spec.test_fraction));
  clip.split = index >= spec.clip_count - test_clips ? "test" : "train";
  clip.primitive = spec.primitives[std::uniform_int_distribution<std::size_t>(0, spec.primitives.size() - 1)(rng)];
  clip.tempo_bpm = uniform(spec.tempo_min, spec.tempo_max);
  const double P = 60.0 / clip.tempo_bpm;
  clip.beat_offset = uniform(0.0, P);
  const int N = std::uniform_int_distribution<int>(spec.dancers_min, spec.dancers_max)(rng);
  const double R = uniform(spec.radius_min, spec.radius_max);
  const double speed = uniform(spec.speed_min, spec.speed_max);
  const double theta0 = uniform(0.0, 2.0 * kPi);
  const double arm = uniform(0.4, 0.9);
  const double leg = uniform(0.1, 0.35);
  const double pad_hz = 110.0 * std::pow(2.0, uniform(0.0, 1.0));

  const int F = static_cast<int>(std::lround(spec.duration_seconds * spec.fps));
  const double t0 = clip.beat_offset;

  for (int i = 0; i < N; ++i) {
    const double phi = theta0 + 2.0 * kPi * i / N;
    const Eigen::Vector2d u(std::cos(phi), std::sin(phi));
    const Eigen::Vector2d tangent(-u.y(), u.x());

    RootTrajectory traj;
    std::vector<Matrix> rotations;
    for (int f = 0; f < F; ++f) {
      const double t = f / spec.fps;
      const double beat = std::cos(kPi * (t - t0) / P);  // +-1 on every beat
      Eigen::Vector2d xz;
      double heading = 0.0;
      switch (clip.primitive) {
        case Primitive::Circle: {
          // decreasing angle in (x, z) is the positive rotation about +Y
          const double a = phi - (speed / R) * t;
          xz = R * Eigen::Vector2d(std::cos(a), std::sin(a));
          break;
        }
        case Primitive::Line:
          xz = (R + 0.4 * R * std::sin(2.0 * kPi * t / (4.0 * P))) * u;
          break;
        case Primitive::Sway:
          xz = R * u + 0.15 * beat * tangent;
          break;
        case Primitive::Spin:
          xz = R * u;
          heading = 0.6 * (beat - std::cos(kPi * (0.0 - t0) / P));
          break;
      }
      const double height = 0.91 + 0.03 * std::cos(2.0 * kPi * (t - t0) / P);
      traj.positions.emplace_back(xz.x(), height, xz.y());
      traj.headings.push_back(heading);

      Matrix rot(J, 6);
      for (int j = 0; j < J; ++j) set_rotation(rot, j, axis_rotation(Vec3::UnitY(), 0.0));
      set_rotation(rot, 16, axis_rotation(Vec3::UnitZ(), -1.0 + arm * beat));
      set_rotation(rot, 17, axis_rotation(Vec3::UnitZ(), 1.0 - arm * beat));
      set_rotation(rot, 18, axis_rotation(Vec3::UnitY(), 0.3 + 0.3 * beat));
      set_rotation(rot, 19, axis_rotation(Vec3::UnitY(), -0.3 - 0.3 * beat));
      set_rotation(rot, 1, axis_rotation(Vec3::UnitX(), leg * beat));
      set_rotation(rot, 2, axis_rotation(Vec3::UnitX(), -leg * beat));
      set_rotation(rot, 4, axis_rotation(Vec3::UnitX(), 0.1 * (1.0 - beat)));
      set_rotation(rot, 5, axis_rotation(Vec3::UnitX(), 0.1 * (1.0 + beat)));
      set_rotation(rot, 3, axis_rotation(Vec3::UnitY(), 0.15 * beat));
      set_rotation(rot, 12, axis_rotation(Vec3::UnitX(), 0.1 * beat));
      rotations.push_back(std::move(rot));
    }

    const std::vector<RootVelocity> vel = derive_root_velocities(traj);
    MotionSequence m;
    m.fps = spec.fps;
    m.initial_position = traj.positions.front();
    std::vector<Matrix> local(static_cast<std::size_t>(F));
    for (int f = 0; f < F; ++f) {
      local[static_cast<std::size_t>(f)] =
          forward_kinematics(skeleton, rotations[static_cast<std::size_t>(f)], Vec3(0.0, traj.positions[f].y(), 0.0));
    }
    for (int f = 0; f < F; ++f) {
      const auto uf = static_cast<std::size_t>(f);
      Pose p = Pose::zeros(J);
      if (f + 1 < F) {
        p.root_angular_velocity = vel[uf].angular;
        p.root_velocity_x = vel[uf].x;
        p.root_velocity_z = vel[uf].z;
        p.joint_velocities = local[uf + 1] - local[uf];
      } else if (F > 1) {
        p.joint_velocities = local[uf] - local[uf - 1];
      }
      p.root_height = traj.positions[uf].y();
      p.joint_positions = local[uf];
      p.joint_rotations = rotations[uf];
      m.frames.push_back(std::move(p));
    }
    const auto contacts = detect_foot_contacts(skeleton, m, kDefaultFootJoints);
    for (int f = 0; f < F; ++f) {
      for (int k = 0; k < 4; ++k) {
        m.frames[static_cast<std::size_t>(f)].foot_contacts[static_cast<std::size_t>(k)] =
            contacts[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)];
      }
    }
    clip.dancers.push_back(std::move(m));
  }

  clip.audio.sample_rate = spec.sample_rate;
  const auto S = static_cast<std::size_t>(std::lround(spec.duration_seconds * spec.sample_rate));
  clip.audio.samples.assign(S, 0.0);
  std::normal_distribution<double> noise(0.0, 0.003);
  for (std::size_t s = 0; s < S; ++s) {
    const double t = static_cast<double>(s) / spec.sample_rate;
    clip.audio.samples[s] = 0.08 * std::sin(2.0 * kPi * pad_hz * t) + noise(rng);
  }
  for (int k = 0;; ++k) {
    const double tb = t0 + k * P;
    if (tb >= spec.duration_seconds) break;
    clip.beats.push_back(tb);
    const double hz = k % 4 == 0 ? 1500.0 : 1000.0;
    const auto begin = static_cast<std::size_t>(std::ceil(tb * spec.sample_rate));
    const auto len = static_cast<std::size_t>(0.05 * spec.sample_rate);
    for (std::size_t s = begin; s < std::min(S, begin + len); ++s) {
      const double tau = static_cast<double>(s) / spec.sample_rate - tb;
      clip.audio.samples[s] += 0.6 * std::sin(2.0 * kPi * hz * tau) * std::exp(-tau / 0.01);
    }
  }
  for (double& v : clip.audio.samples) v = std::clamp(v, -1.0, 1.0);
  return clip;
}

std::vector<SyntheticClip> synthesize_dataset(const SyntheticDatasetSpec& spec, const SkeletonSpec& skeleton) {
  spec.validate();
  std::vector<SyntheticClip> out;
  out.reserve(static_cast<std::size_t>(spec.clip_count));
  for (int i = 0; i < spec.clip_count; ++i) out.push_back(synthesize_clip(spec, skeleton, i));
  return out;
}

void DatasetManifest::validate(bool check_files) const {
  if (clips.empty()) throw ValidationError("manifest has no clips");
  std::set<std::string> ids;
  for (const auto& c : clips) {
    if (c.id.empty()) throw ValidationError("manifest clip with an empty id");
    if (!ids.insert(c.id).second) throw ValidationError("manifest: duplicate clip id '" + c.id + "'");
    if (c.split != "train" && c.split != "test") {
      throw ValidationError("manifest clip '" + c.id + "': split must be train or test");
    }
    if (c.motions.empty()) throw ValidationError("manifest clip '" + c.id + "': needs at least one dancer");
    if (c.positions.size() != c.motions.size()) {
      throw ValidationError("manifest clip '" + c.id + "': one initial position per dancer required");
    }
    for (const auto& p : c.positions) {
      if (!p.allFinite()) throw ValidationError("manifest clip '" + c.id + "': non-finite position");
    }
    if (!check_files) continue;
    auto require = [&](const std::filesystem::path& p) {
      if (!std::filesystem::is_regular_file(resolve(p))) {
        throw ValidationError("manifest clip '" + c.id + "': missing file " + resolve(p).string());
      }
    };
    require(c.audio);
    for (const auto& m : c.motions) require(m);
  }
}

std::vector<const ClipEntry*> DatasetManifest::split(std::string_view name) const {
  std::vector<const ClipEntry*> out;
  for (const auto& c : clips) {
    if (c.split == name) out.push_back(&c);
  }
  return out;
}

void write_manifest(std::ostream& out, const DatasetManifest& manifest) {
  manifest.validate(false);
  out << "GCHOREO-DATASET v1\n";
  for (const auto& c : manifest.clips) {
    out << "clip id=" << c.id << " split=" << c.split << " audio=" << c.audio.generic_string() << " motions=";
    for (std::size_t i = 0; i < c.motions.size(); ++i) out << (i ? ";" : "") << c.motions[i].generic_string();
    out << " positions=";
    for (std::size_t i = 0; i < c.positions.size(); ++i) {
      out << (i ? ";" : "") << text::format_double(c.positions[i].x()) << ','
          << text::format_double(c.positions[i].y());
    }
    out << '\n';
  }
}

DatasetManifest read_manifest(std::istream& in, const std::filesystem::path& root) {
  DatasetManifest m;
  m.root = root;
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "GCHOREO-DATASET v1") {
    throw FormatError("manifest: missing 'GCHOREO-DATASET v1' header");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    const auto fields = text::split_whitespace(body);
    if (fields.empty() || fields[0] != "clip") throw FormatError(where + "expected 'clip'");
    ClipEntry c;
    bool has_audio = false;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto eq = fields[i].find('=');
      if (eq == std::string_view::npos) throw FormatError(where + "expected key=value, got '" + std::string(fields[i]) + "'");
      const auto key = fields[i].substr(0, eq);
      const auto value = fields[i].substr(eq + 1);
      if (key == "id") {
        c.id = std::string(value);
      } else if (key == "split") {
        c.split = std::string(value);
      } else if (key == "audio") {
        c.audio = std::filesystem::path(std::string(value));
        has_audio = true;
      } else if (key == "motions") {
        for (auto p : text::split(value, ';')) c.motions.emplace_back(std::string(p));
      } else if (key == "positions") {
        for (auto p : text::split(value, ';')) {
          const auto xz = text::split(p, ',');
          if (xz.size() != 2) throw FormatError(where + "position '" + std::string(p) + "' is not x,z");
          c.positions.emplace_back(text::parse_double(xz[0], "position x"), text::parse_double(xz[1], "position z"));
        }
      } else {
        throw FormatError(where + "unknown field '" + std::string(key) + "'");
      }
    }
    if (!has_audio) throw FormatError(where + "missing audio");
    m.clips.push_back(std::move(c));
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw ComputeError("cannot write " + path.string());
  write_manifest(out, manifest);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  DatasetManifest m = read_manifest(in, path.parent_path());
  m.validate(true);
  return m;
}

DatasetManifest write_synthetic_dataset(const SyntheticDatasetSpec& spec, const SkeletonSpec& skeleton,
                                        const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  for (const char* sub : {"audio", "motion", "beats"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw ComputeError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  DatasetManifest manifest;
  manifest.root = out_dir;
  for (int i = 0; i < spec.clip_count; ++i) {
    const SyntheticClip clip = synthesize_clip(spec, skeleton, i);
    ClipEntry e;
    e.id = clip.id;
    e.split = clip.split;
    e.audio = std::filesystem::path("audio") / (clip.id + ".wav");
    write_wav(out_dir / e.audio, clip.audio);
    save_beats(out_dir / "beats" / (clip.id + ".txt"), clip.beats);
    for (std::size_t d = 0; d < clip.dancers.size(); ++d) {
      const auto rel = std::filesystem::path("motion") / (clip.id + "_" + std::to_string(d) + ".motion");
      save_motion(out_dir / rel, clip.dancers[d]);
      e.motions.push_back(rel);
      const Vec3& p = clip.dancers[d].initial_position;
      e.positions.emplace_back(p.x(), p.z());
    }
    manifest.clips.push_back(std::move(e));
  }
  save_manifest(out_dir / "manifest.txt", manifest);
  std::ofstream spec_out(out_dir / "synth.conf");
  spec_out << spec.render();
  return manifest;
}

}  // namespace gchoreo
