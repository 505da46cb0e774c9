#pragma once

#include "t4d/linalg.hpp"
#include "t4d/mathutil.hpp"

namespace t4d {

// Orbit camera around a look-at target. Convention: world y is up; azimuth 0,
// elevation 0 puts the eye on the +z axis looking toward -z; positive
// elevation raises the eye. Camera space is x right, y down, z forward
// (positive depth in front), pixels = (cx + fx*x/z, cy + fy*y/z) with pixel
// centers at half-integer coordinates. fov is vertical, in degrees.
struct Camera {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double radius = 3.0;
  double fov_deg = 50.0;
  int width = 256;
  int height = 256;
  Vec3 target;

  Vec3 eye() const {
    const double az = deg2rad(azimuth_deg);
    const double el = deg2rad(elevation_deg);
    return target +
           Vec3{radius * std::sin(az) * std::cos(el), radius * std::sin(el),
                radius * std::cos(az) * std::cos(el)};
  }

  // Rows: right, down, forward. t_cam = world_to_cam() * (p - eye()).
  Mat3 world_to_cam() const {
    const Vec3 f = (target - eye()).normalized();
    Vec3 up{0, 1, 0};
    if (std::abs(f.dot(up)) > 1.0 - 1e-9) up = {0, 0, 1};
    const Vec3 right = f.cross(up).normalized();
    const Vec3 down = f.cross(right);
    return Mat3::from_rows(right, down, f);
  }

  double fy() const { return 0.5 * height / std::tan(0.5 * deg2rad(fov_deg)); }
  double fx() const { return fy(); }
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }
};

}  // namespace t4d
