#include "gchoreo/motion.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Geometry>

#include "gchoreo/error.hpp"
#include "gchoreo/text.hpp"

namespace gchoreo {

void SkeletonSpec::validate(int min_joints) const {
  if (joint_count() < min_joints) {
    throw ValidationError("skeleton needs at least " + std::to_string(min_joints) + " joints, got " +
                          std::to_string(joint_count()));
  }
  if (offset.size() != parent.size()) {
    throw ValidationError("skeleton parent/offset size mismatch");
  }
  if (parent.front() != -1) throw ValidationError("skeleton joint 0 must be the root (parent -1)");
  for (int j = 1; j < joint_count(); ++j) {
    if (parent[j] < 0 || parent[j] >= j) {
      throw ValidationError("skeleton joint " + std::to_string(j) + " has invalid parent " +
                            std::to_string(parent[j]));
    }
  }
  for (const auto& o : offset) {
    if (!o.allFinite()) throw ValidationError("skeleton offsets must be finite");
  }
}

SkeletonSpec SkeletonSpec::default24() {
  SkeletonSpec s;
  s.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  s.offset = {
      {0.0, 0.0, 0.0},      // 0 pelvis
      {0.09, -0.08, 0.0},   // 1 left hip
      {-0.09, -0.08, 0.0},  // 2 right hip
      {0.0, 0.11, 0.0},     // 3 spine1
      {0.0, -0.39, 0.0},    // 4 left knee
      {0.0, -0.39, 0.0},    // 5 right knee
      {0.0, 0.13, 0.0},     // 6 spine2
      {0.0, -0.40, 0.0},    // 7 left ankle
      {0.0, -0.40, 0.0},    // 8 right ankle
      {0.0, 0.05, 0.0},     // 9 spine3
      {0.0, -0.04, 0.12},   // 10 left toe
      {0.0, -0.04, 0.12},   // 11 right toe
      {0.0, 0.22, 0.0},     // 12 neck
      {0.07, 0.16, 0.0},    // 13 left collar
      {-0.07, 0.16, 0.0},   // 14 right collar
      {0.0, 0.09, 0.03},    // 15 head
      {0.11, 0.02, 0.0},    // 16 left shoulder
      {-0.11, 0.02, 0.0},   // 17 right shoulder
      {0.26, 0.0, 0.0},     // 18 left elbow
      {-0.26, 0.0, 0.0},    // 19 right elbow
      {0.25, 0.0, 0.0},     // 20 left wrist
      {-0.25, 0.0, 0.0},    // 21 right wrist
      {0.08, 0.0, 0.0},     // 22 left hand
      {-0.08, 0.0, 0.0},    // 23 right hand
  };
  return s;
}

Pose Pose::zeros(int joints) {
  Pose p;
  p.joint_positions = Matrix::Zero(joints, 3);
  p.joint_velocities = Matrix::Zero(joints, 3);
  p.joint_rotations = Matrix::Zero(joints, 6);
  return p;
}

void Pose::write_flat(std::span<double> out) const {
  const int J = joint_count();
  if (out.size() != flat_dim(J)) throw ValidationError("Pose::write_flat: output size mismatch");
  std::size_t k = 0;
  out[k++] = root_angular_velocity;
  out[k++] = root_velocity_x;
  out[k++] = root_velocity_z;
  out[k++] = root_height;
  for (int j = 0; j < J; ++j)
    for (int c = 0; c < 3; ++c) out[k++] = joint_positions(j, c);
  for (int j = 0; j < J; ++j)
    for (int c = 0; c < 3; ++c) out[k++] = joint_velocities(j, c);
  for (int j = 0; j < J; ++j)
    for (int c = 0; c < 6; ++c) out[k++] = joint_rotations(j, c);
  for (double c : foot_contacts) out[k++] = c;
}

Pose Pose::from_flat(std::span<const double> flat, int joints) {
  if (joints < 1 || flat.size() != flat_dim(joints)) {
    throw ValidationError("pose vector has " + std::to_string(flat.size()) + " values, expected " +
                          std::to_string(flat_dim(std::max(joints, 1))));
  }
  Pose p = zeros(joints);
  std::size_t k = 0;
  p.root_angular_velocity = flat[k++];
  p.root_velocity_x = flat[k++];
  p.root_velocity_z = flat[k++];
  p.root_height = flat[k++];
  for (int j = 0; j < joints; ++j)
    for (int c = 0; c < 3; ++c) p.joint_positions(j, c) = flat[k++];
  for (int j = 0; j < joints; ++j)
    for (int c = 0; c < 3; ++c) p.joint_velocities(j, c) = flat[k++];
  for (int j = 0; j < joints; ++j)
    for (int c = 0; c < 6; ++c) p.joint_rotations(j, c) = flat[k++];
  for (auto& c : p.foot_contacts) c = flat[k++];
  return p;
}

void MotionSequence::validate() const {
  if (frames.empty()) throw ValidationError("motion sequence is empty");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("motion fps must be positive");
  if (!initial_position.allFinite()) throw ValidationError("initial position must be finite");
  const int J = frames.front().joint_count();
  if (J < 1) throw ValidationError("motion frames have no joints");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Pose& p = frames[f];
    if (p.joint_count() != J || p.joint_velocities.rows() != J || p.joint_rotations.rows() != J ||
        p.joint_positions.cols() != 3 || p.joint_velocities.cols() != 3 || p.joint_rotations.cols() != 6) {
      throw ValidationError("frame " + std::to_string(f) + " does not match the sequence skeleton");
    }
    const bool finite = std::isfinite(p.root_angular_velocity) && std::isfinite(p.root_velocity_x) &&
                        std::isfinite(p.root_velocity_z) && std::isfinite(p.root_height) &&
                        p.joint_positions.allFinite() && p.joint_velocities.allFinite() &&
                        p.joint_rotations.allFinite();
    if (!finite) throw ValidationError("frame " + std::to_string(f) + " has non-finite values");
    for (double c : p.foot_contacts) {
      if (c != 0.0 && c != 1.0) throw ValidationError("frame " + std::to_string(f) + " has a non-binary foot contact");
    }
  }
}

Matrix MotionSequence::to_features() const {
  const int J = joint_count();
  Matrix out(frame_count(), static_cast<Eigen::Index>(Pose::flat_dim(J)));
  for (int f = 0; f < frame_count(); ++f) {
    frames[f].write_flat(std::span<double>(out.row(f).data(), static_cast<std::size_t>(out.cols())));
  }
  return out;
}

MotionSequence MotionSequence::from_features(const Matrix& features, int joints, double fps,
                                             const Vec3& initial_position) {
  MotionSequence seq;
  seq.fps = fps;
  seq.initial_position = initial_position;
  seq.frames.reserve(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index f = 0; f < features.rows(); ++f) {
    seq.frames.push_back(Pose::from_flat(
        std::span<const double>(features.row(f).data(), static_cast<std::size_t>(features.cols())), joints));
  }
  return seq;
}

Mat3 heading_rotation(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
}

RootTrajectory recover_trajectory(const MotionSequence& seq, double initial_heading) {
  if (seq.frames.empty()) throw ValidationError("recover_trajectory: empty sequence");
  RootTrajectory traj;
  const auto F = seq.frames.size();
  traj.positions.resize(F);
  traj.headings.resize(F);
  double heading = initial_heading;
  double x = seq.initial_position.x();
  double z = seq.initial_position.z();
  traj.positions[0] = Vec3(x, seq.frames[0].root_height, z);
  traj.headings[0] = heading;
  for (std::size_t f = 1; f < F; ++f) {
    const Pose& prev = seq.frames[f - 1];
    heading += prev.root_angular_velocity;
    const double c = std::cos(heading), s = std::sin(heading);
    // R_y(h) applied to (r_x, 0, r_z).
    x += c * prev.root_velocity_x + s * prev.root_velocity_z;
    z += -s * prev.root_velocity_x + c * prev.root_velocity_z;
    traj.positions[f] = Vec3(x, seq.frames[f].root_height, z);
    traj.headings[f] = heading;
  }
  return traj;
}

std::vector<RootVelocity> derive_root_velocities(const RootTrajectory& traj) {
  if (traj.positions.size() < 2 || traj.headings.size() != traj.positions.size()) {
    throw ValidationError("derive_root_velocities: need at least two frames");
  }
  std::vector<RootVelocity> out(traj.positions.size() - 1);
  for (std::size_t f = 1; f < traj.positions.size(); ++f) {
    const double h = traj.headings[f];
    const double dx = traj.positions[f].x() - traj.positions[f - 1].x();
    const double dz = traj.positions[f].z() - traj.positions[f - 1].z();
    const double c = std::cos(h), s = std::sin(h);
    // R_y(-h) applied to (dx, 0, dz).
    out[f - 1] = RootVelocity{h - traj.headings[f - 1], c * dx - s * dz, s * dx + c * dz};
  }
  return out;
}

Mat3 rotation_from_6d(std::span<const double, 6> six) {
  const Vec3 a1(six[0], six[1], six[2]);
  const Vec3 a2(six[3], six[4], six[5]);
  const double n1 = a1.norm();
  if (!(n1 > 1e-12)) throw ValidationError("degenerate 6D rotation: zero first column");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (!(n2 > 1e-12 * std::max(1.0, a2.norm()))) {
    throw ValidationError("degenerate 6D rotation: columns are zero or parallel");
  }
  const Vec3 b2 = u2 / n2;
  Mat3 r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b1.cross(b2);
  return r;
}

std::array<double, 6> rotation_to_6d(const Mat3& rotation) {
  return {rotation(0, 0), rotation(1, 0), rotation(2, 0), rotation(0, 1), rotation(1, 1), rotation(2, 1)};
}

Matrix forward_kinematics(const SkeletonSpec& skeleton, const Matrix& rotations6d,
                          const Vec3& root_position, const Mat3& root_frame) {
  skeleton.validate(1);
  const int J = skeleton.joint_count();
  if (rotations6d.rows() != J || rotations6d.cols() != 6) {
    throw ValidationError("forward_kinematics: rotations must be J x 6");
  }
  std::vector<Mat3> global_rot(static_cast<std::size_t>(J));
  Matrix out(J, 3);
  for (int j = 0; j < J; ++j) {
    const Mat3 local = rotation_from_6d(std::span<const double, 6>(rotations6d.row(j).data(), 6));
    if (j == 0) {
      global_rot[0] = root_frame * local;
      out.row(0) = root_position.transpose();
      continue;
    }
    const int p = skeleton.parent[static_cast<std::size_t>(j)];
    global_rot[j] = global_rot[p] * local;
    out.row(j) = out.row(p) + (global_rot[p] * skeleton.offset[static_cast<std::size_t>(j)]).transpose();
  }
  return out;
}

Matrix global_joint_positions(const SkeletonSpec& skeleton, const MotionSequence& seq, double initial_heading) {
  seq.validate();
  if (seq.joint_count() != skeleton.joint_count()) {
    throw ValidationError("motion joint count " + std::to_string(seq.joint_count()) +
                          " does not match skeleton " + std::to_string(skeleton.joint_count()));
  }
  const RootTrajectory traj = recover_trajectory(seq, initial_heading);
  const int J = skeleton.joint_count();
  Matrix out(seq.frame_count(), 3 * J);
  for (int f = 0; f < seq.frame_count(); ++f) {
    const Matrix joints = forward_kinematics(skeleton, seq.frames[f].joint_rotations, traj.positions[f],
                                             heading_rotation(traj.headings[f]));
    for (int j = 0; j < J; ++j) out.block<1, 3>(f, 3 * j) = joints.row(j);
  }
  return out;
}

std::vector<ContactFlags> detect_foot_contacts(const Matrix& global_positions, std::span<const int, 4> foot_joints,
                                               ContactThresholds thresholds) {
  const auto F = global_positions.rows();
  const int J = static_cast<int>(global_positions.cols() / 3);
  for (int j : foot_joints) {
    if (j < 0 || j >= J) throw ValidationError("foot joint index " + std::to_string(j) + " out of range");
  }
  std::vector<ContactFlags> flags(static_cast<std::size_t>(F));
  for (Eigen::Index f = 0; f < F; ++f) {
    for (std::size_t k = 0; k < 4; ++k) {
      const int j = foot_joints[k];
      const Vec3 p = joint_at(global_positions, static_cast<int>(f), j);
      double speed = 0.0;
      if (F > 1) {
        const Eigen::Index a = f == 0 ? 0 : f - 1;
        const Eigen::Index b = f == 0 ? 1 : f;
        speed = (joint_at(global_positions, static_cast<int>(b), j) - joint_at(global_positions, static_cast<int>(a), j))
                    .norm();
      }
      flags[static_cast<std::size_t>(f)][k] = (p.y() < thresholds.height && speed < thresholds.speed) ? 1 : 0;
    }
  }
  return flags;
}

std::vector<ContactFlags> detect_foot_contacts(const SkeletonSpec& skeleton, const MotionSequence& seq,
                                               std::span<const int, 4> foot_joints, ContactThresholds thresholds) {
  return detect_foot_contacts(global_joint_positions(skeleton, seq), foot_joints, thresholds);
}

Vector kinetic_features(const Matrix& global_positions) {
  const auto F = global_positions.rows();
  if (F < 2) throw ValidationError("kinetic_features: need at least 2 frames");
  const auto J = global_positions.cols() / 3;
  Vector out = Vector::Zero(J);
  for (Eigen::Index f = 1; f < F; ++f) {
    for (Eigen::Index j = 0; j < J; ++j) {
      out[j] += (global_positions.block<1, 3>(f, 3 * j) - global_positions.block<1, 3>(f - 1, 3 * j)).squaredNorm();
    }
  }
  return out / static_cast<double>(F - 1);
}

Vector kinetic_features(const SkeletonSpec& skeleton, const MotionSequence& seq) {
  if (seq.frame_count() < 2) throw ValidationError("kinetic_features: need at least 2 frames");
  return kinetic_features(global_joint_positions(skeleton, seq));
}

void write_motion(std::ostream& out, const MotionSequence& seq) {
  seq.validate();
  const int J = seq.joint_count();
  out << "MOTION v1 J=" << J << " F=" << seq.frame_count() << " fps=" << text::format_double(seq.fps)
      << " x=" << text::format_double(seq.initial_position.x()) << ','
      << text::format_double(seq.initial_position.y()) << ',' << text::format_double(seq.initial_position.z())
      << '\n';
  std::vector<double> flat(Pose::flat_dim(J));
  std::string line;
  for (const Pose& p : seq.frames) {
    p.write_flat(flat);
    line.clear();
    for (std::size_t k = 0; k < flat.size(); ++k) {
      if (k) line.push_back(' ');
      line += text::format_double(flat[k]);
    }
    line.push_back('\n');
    out << line;
  }
}

namespace {

std::string_view header_value(std::string_view field, std::string_view key) {
  if (field.substr(0, key.size()) != key) {
    throw FormatError("motion header: expected '" + std::string(key) + "', got '" + std::string(field) + "'");
  }
  return field.substr(key.size());
}

}  // namespace

MotionSequence read_motion(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("motion file: missing header");
  const auto fields = text::split_whitespace(header);
  if (fields.size() != 6 || fields[0] != "MOTION" || fields[1] != "v1") {
    throw FormatError("motion file: bad header '" + header + "'");
  }
  const auto J = text::parse_int(header_value(fields[2], "J="), "joint count");
  const auto F = text::parse_int(header_value(fields[3], "F="), "frame count");
  const double fps = text::parse_double(header_value(fields[4], "fps="), "fps");
  const auto xs = text::split(header_value(fields[5], "x="), ',');
  if (xs.size() != 3) throw FormatError("motion header: x needs three components");
  if (J < 1 || F < 1) throw FormatError("motion header: J and F must be positive");
  MotionSequence seq;
  seq.fps = fps;
  seq.initial_position = Vec3(text::parse_double(xs[0], "x"), text::parse_double(xs[1], "x"),
                              text::parse_double(xs[2], "x"));
  const auto dim = Pose::flat_dim(static_cast<int>(J));
  std::vector<double> flat(dim);
  std::string line;
  for (std::int64_t f = 0; f < F; ++f) {
    if (!std::getline(in, line)) throw FormatError("motion file: truncated at frame " + std::to_string(f));
    const auto tokens = text::split_whitespace(line);
    if (tokens.size() != dim) {
      throw FormatError("motion file: frame " + std::to_string(f) + " has " + std::to_string(tokens.size()) +
                        " values, expected " + std::to_string(dim));
    }
    for (std::size_t k = 0; k < dim; ++k) flat[k] = text::parse_double(tokens[k], "pose value");
    seq.frames.push_back(Pose::from_flat(flat, static_cast<int>(J)));
  }
  seq.validate();
  return seq;
}

void save_motion(const std::filesystem::path& path, const MotionSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ComputeError("cannot open " + path.string() + " for writing");
  write_motion(out, seq);
  if (!out) throw ComputeError("failed writing " + path.string());
}

MotionSequence load_motion(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open motion file " + path.string());
  try {
    return read_motion(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace gchoreo
