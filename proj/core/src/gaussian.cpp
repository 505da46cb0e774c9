#include "t4d/gaussian.hpp"

#include <algorithm>
#include <numeric>

#include "t4d/error.hpp"

namespace t4d {

Mat3 covariance_of(const GaussianPoint& p) {
  const Mat3 r = rotation_of(p.unit_rot());
  const Vec3 s = p.scale();
  return r * Mat3::diag(s.cwise_mul(s)) * r.transposed();
}

Vec3 GaussianCloud::centroid() const {
  Vec3 c;
  for (const auto& p : points) c += p.pos;
  return points.empty() ? c : c / static_cast<double>(points.size());
}

std::uint64_t GaussianCloud::next_point_id() const {
  std::uint64_t m = 0;
  for (const auto& p : points) m = std::max(m, p.point_id + 1);
  return m;
}

Vec3 eval_field(const GaussianCloud& cloud, const Vec3& x) {
  std::vector<std::size_t> order(cloud.points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cloud.points[a].point_id < cloud.points[b].point_id;
  });

  Vec3 acc;
  for (const std::size_t i : order) {
    const GaussianPoint& p = cloud.points[i];
    const Mat3 sigma = covariance_of(p);
    const double det = sigma.det();
    if (!(det > 0.0) || !std::isfinite(det)) {
      throw Error("field.singular",
                  "singular covariance at point_id " + std::to_string(p.point_id));
    }
    const Vec3 d = x - p.pos;
    const double q = d.dot(sigma.inverse() * d);
    acc += p.color() * (p.opacity() * std::exp(-0.5 * q));
  }
  return acc;
}

void recenter(GaussianCloud& cloud) {
  const Vec3 c = cloud.centroid();
  if (c.norm() <= 1e-6) return;
  for (auto& p : cloud.points) p.pos -= c;
}

}  // namespace t4d
