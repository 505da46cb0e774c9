#pragma once

#include <cmath>

namespace t4d {

// SH band-0 basis constant used by the community 3DGS PLY layout:
// color = 0.5 + kSH0 * f_dc.
inline constexpr double kSH0 = 0.28209479177;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * (kPi / 180.0); }
inline double rad2deg(double r) { return r * (180.0 / kPi); }

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Sigmoid clamped to the open interval (0,1) so downstream code may rely on
// strict bounds for any finite input.
inline double sigmoid_strict(double x) {
  double s = sigmoid(x);
  if (s <= 0.0) s = 1e-300;
  if (s >= 1.0) s = 1.0 - 1e-16;
  return s;
}

inline double inv_sigmoid(double y) { return std::log(y / (1.0 - y)); }

inline double sigmoid_grad(double s) { return s * (1.0 - s); }

}  // namespace t4d
