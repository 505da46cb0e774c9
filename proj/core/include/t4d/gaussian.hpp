#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t4d/linalg.hpp"
#include "t4d/mathutil.hpp"

namespace t4d {

// One Gaussian point. Opacity, scale, and color are stored in their training
// parameterization (logit, log, SH-dc) and exposed through accessors; this
// matches the PLY interchange fields bit for bit and keeps optimizer updates
// unconstrained.
struct GaussianPoint {
  Vec3 pos;
  Vec3 log_scale;
  Quat rot{1, 0, 0, 0};
  double opacity_logit = 0.0;
  Vec3 f_dc;
  std::uint64_t point_id = 0;

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const {
    return {std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)};
  }
  Vec3 color() const { return Vec3{0.5, 0.5, 0.5} + f_dc * kSH0; }
  Quat unit_rot() const { return rot.normalized(); }
};

// Sigma = R * diag(s^2) * R^T.
Mat3 covariance_of(const GaussianPoint& p);

struct GaussianCloud {
  std::vector<GaussianPoint> points;
  bool canonical = false;
  std::string object_label;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  Vec3 centroid() const;
  std::uint64_t next_point_id() const;
};

// Exact field sum: G(x) = sum_i alpha_i * c_i * exp(-1/2 (x-mu_i)^T Sigma_i^-1 (x-mu_i)),
// summed in ascending point_id order. Throws Error("field.singular", ...) if a
// point's covariance is not invertible (corrupt import).
Vec3 eval_field(const GaussianCloud& cloud, const Vec3& x);

// World-space splat at a fixed time, ready for projection. global_id is the
// scene-wide depth-tie sort key (object index folded in by the snapshot
// builder); effective alpha already includes any transition gating.
struct SplatInstance {
  Vec3 pos;
  Quat rot{1, 0, 0, 0};
  Vec3 scale{1, 1, 1};
  double alpha = 0.0;
  Vec3 color;
  std::uint64_t global_id = 0;
};

struct SceneSnapshot {
  std::vector<SplatInstance> splats;
  double time = 0.0;
};

// Subtracts the centroid from every position so the cloud is centered at the
// origin. Exact no-op when the centroid is already within 1e-6 of the origin,
// preserving bitwise stability of already-canonical clouds.
void recenter(GaussianCloud& cloud);

}  // namespace t4d
