#include "t4d/kinematics.hpp"

#include <cmath>

#include "t4d/error.hpp"

namespace t4d {

Mat3 rotation_matrix(const Vec3& angles) {
  const double cx = std::cos(angles.x), sx = std::sin(angles.x);
  const double cy = std::cos(angles.y), sy = std::sin(angles.y);
  const double cz = std::cos(angles.z), sz = std::sin(angles.z);
  const Mat3 rx = Mat3::from_rows({1, 0, 0}, {0, cx, -sx}, {0, sx, cx});
  const Mat3 ry = Mat3::from_rows({cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy});
  const Mat3 rz = Mat3::from_rows({cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1});
  return rz * ry * rx;
}

Quat rotation_quat_of(const Vec3& angles) {
  const Quat qx = axis_angle_quat({1, 0, 0}, angles.x);
  const Quat qy = axis_angle_quat({0, 1, 0}, angles.y);
  const Quat qz = axis_angle_quat({0, 0, 1}, angles.z);
  return qz * qy * qx;
}

Pose object_pose(const TimelineProgram& program, std::size_t obj, double t) {
  if (obj >= program.objects.size())
    throw Error("kin.range", "object index " + std::to_string(obj) + " out of range");
  if (!(t >= 0.0 && t <= 1.0))
    throw Error("kin.range", "time " + std::to_string(t) + " outside [0,1]");
  const ObjectTrack& track = program.objects[obj];
  Pose pose;
  pose.translation = track_translation(track, t);
  pose.angles = track_angles(track, t);
  pose.rotation = rotation_matrix(pose.angles);
  pose.rotation_quat = rotation_quat_of(pose.angles);
  return pose;
}

GaussianCloud transform_cloud(const GaussianCloud& cloud, const Pose& pose) {
  const bool identity_rotation = pose.angles == Vec3{};
  GaussianCloud out = cloud;
  out.canonical = false;
  for (auto& p : out.points) {
    if (identity_rotation) {
      p.pos += pose.translation;
    } else {
      p.pos = transform_point(pose, p.pos);
      p.rot = pose.rotation_quat * p.rot;
    }
  }
  return out;
}

}  // namespace t4d
