#pragma once

// Pose representation, root trajectory integration, forward kinematics and
// kinematic feature extraction.
//
// Conventions: Y is up, the ground plane is XZ, and a positive heading
// rotates counterclockwise when viewed from +Y (a right-handed rotation
// about +Y). Velocities are per frame; fps is carried only for conversions
// to seconds.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "gchoreo/linalg.hpp"

namespace gchoreo {

struct SkeletonSpec {
  std::vector<int> parent;  // parent[0] == -1; parent[j] < j otherwise
  std::vector<Vec3> offset;  // rest-pose offset from the parent, meters

  int joint_count() const { return static_cast<int>(parent.size()); }

  // Throws ValidationError unless the parents form a tree rooted at joint 0,
  // offsets are finite and there are at least `min_joints` joints.
  void validate(int min_joints = 2) const;

  // 24-joint desk-scale skeleton (pelvis-rooted, SMPL-like topology); the
  // joint table lives in docs/skeleton.md.
  static SkeletonSpec default24();
};

// Ankle and toe joints of default24(): left ankle, left toe, right ankle,
// right toe.
inline constexpr std::array<int, 4> kDefaultFootJoints{7, 10, 8, 11};

struct Pose {
  double root_angular_velocity = 0.0;  // r_a, rad/frame about +Y
  double root_velocity_x = 0.0;        // r_x, m/frame in the heading frame
  double root_velocity_z = 0.0;        // r_z, m/frame in the heading frame
  double root_height = 0.0;            // r_y, m
  Matrix joint_positions;              // J x 3, heading frame, m
  Matrix joint_velocities;             // J x 3, m/frame
  Matrix joint_rotations;              // J x 6, first two rotation columns
  std::array<double, 4> foot_contacts{};  // each 0 or 1

  static Pose zeros(int joints);
  static std::size_t flat_dim(int joints) { return 8 + 12 * static_cast<std::size_t>(joints); }

  int joint_count() const { return static_cast<int>(joint_positions.rows()); }

  // Field order: r_a, r_x, r_z, r_y, j_p, j_v, j_r, c_f (row-major blocks).
  void write_flat(std::span<double> out) const;
  static Pose from_flat(std::span<const double> flat, int joints);
};

struct MotionSequence {
  std::vector<Pose> frames;
  double fps = 30.0;
  Vec3 initial_position = Vec3::Zero();

  int frame_count() const { return static_cast<int>(frames.size()); }
  int joint_count() const { return frames.empty() ? 0 : frames.front().joint_count(); }

  void validate() const;

  // F x flat_dim feature matrix, one flattened pose per row.
  Matrix to_features() const;
  static MotionSequence from_features(const Matrix& features, int joints, double fps,
                                      const Vec3& initial_position);
};

// Root positions and headings, one per frame.
struct RootTrajectory {
  std::vector<Vec3> positions;
  std::vector<double> headings;
};

// Frame 0 sits at the initial position; frame f>0 adds r_a[f-1] to the
// heading and then moves by (r_x, r_z)[f-1] rotated into the world by the
// new heading. The vertical coordinate is r_y. The last frame's root
// velocities do not affect the result.
RootTrajectory recover_trajectory(const MotionSequence& seq, double initial_heading = 0.0);

struct RootVelocity {
  double angular = 0.0;
  double x = 0.0;
  double z = 0.0;
};

// Inverse of recover_trajectory on the ground plane: F-1 per-frame
// velocities that reproduce `traj` when integrated. Needs at least 2 frames.
std::vector<RootVelocity> derive_root_velocities(const RootTrajectory& traj);

// Rotation by `angle` about +Y.
Mat3 heading_rotation(double angle);

// 6D (two columns) -> rotation matrix by Gram-Schmidt and a cross product.
// Throws ValidationError for a zero or parallel column pair.
Mat3 rotation_from_6d(std::span<const double, 6> six);
std::array<double, 6> rotation_to_6d(const Mat3& rotation);

// Global joint positions (J x 3) from local 6D rotations. `root_frame`
// pre-multiplies the root rotation (used to apply the heading).
Matrix forward_kinematics(const SkeletonSpec& skeleton, const Matrix& rotations6d,
                          const Vec3& root_position, const Mat3& root_frame = Mat3::Identity());

// F x 3J matrix of global joint positions (joint j occupies columns
// 3j..3j+2), obtained from the recovered trajectory and forward kinematics.
Matrix global_joint_positions(const SkeletonSpec& skeleton, const MotionSequence& seq,
                              double initial_heading = 0.0);

inline Vec3 joint_at(const Matrix& global, int frame, int joint) {
  return global.block<1, 3>(frame, 3 * joint).transpose();
}

using ContactFlags = std::array<std::uint8_t, 4>;

struct ContactThresholds {
  double height = 0.05;  // m
  double speed = 0.01;   // m/frame
};

// Flag is 1 iff the foot joint is below the height threshold and its
// finite-difference speed is below the speed threshold. Frame 0 uses the
// forward difference; single-frame input has speed 0.
std::vector<ContactFlags> detect_foot_contacts(const Matrix& global_positions,
                                               std::span<const int, 4> foot_joints,
                                               ContactThresholds thresholds = {});
std::vector<ContactFlags> detect_foot_contacts(const SkeletonSpec& skeleton,
                                               const MotionSequence& seq,
                                               std::span<const int, 4> foot_joints,
                                               ContactThresholds thresholds = {});

// Per joint, mean over the F-1 frame transitions of the squared global
// velocity magnitude (m^2/frame^2). Requires F >= 2.
Vector kinetic_features(const Matrix& global_positions);
Vector kinetic_features(const SkeletonSpec& skeleton, const MotionSequence& seq);

// Text motion file: header `MOTION v1 J=<J> F=<F> fps=<fps> x=<x0,x1,x2>`
// followed by F lines of flat pose vectors.
void write_motion(std::ostream& out, const MotionSequence& seq);
MotionSequence read_motion(std::istream& in);
void save_motion(const std::filesystem::path& path, const MotionSequence& seq);
MotionSequence load_motion(const std::filesystem::path& path);

}  // namespace gchoreo
