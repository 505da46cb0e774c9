#pragma once

#include "t4d/gaussian.hpp"
#include "t4d/timeline.hpp"

namespace t4d {

struct Pose {
  Vec3 translation;
  Vec3 angles;  // radians, extrinsic x-y-z
  Mat3 rotation = Mat3::identity();
  Quat rotation_quat{1, 0, 0, 0};
};

// R = Rz(angles.z) * Ry(angles.y) * Rx(angles.x): rotate about world x, then
// world y, then world z.
Mat3 rotation_matrix(const Vec3& angles);
Quat rotation_quat_of(const Vec3& angles);

// Pose of object obj at time t: translation = init_pos + integral of v,
// angles = init_angle + integral of the angular rate, both exact piecewise
// integrals. Throws Error("kin.range") for t outside [0,1] or a bad index.
Pose object_pose(const TimelineProgram& program, std::size_t obj, double t);

inline Vec3 transform_point(const Pose& pose, const Vec3& x_local) {
  return pose.rotation * x_local + pose.translation;
}

// Rigid transform of a canonical cloud: positions mapped by the pose, each
// quaternion left-multiplied by the pose rotation, scales untouched. Identity
// poses return the input bitwise.
GaussianCloud transform_cloud(const GaussianCloud& cloud, const Pose& pose);

}  // namespace t4d
