#include "t4d/primitives.hpp"

#include <cmath>

#include "t4d/error.hpp"
#include "t4d/rng.hpp"

namespace t4d {

namespace {

constexpr double kTorusR = 0.7;
constexpr double kTorusr = 0.3;

Vec3 sample_sphere(std::uint64_t seed, std::uint64_t i) {
  const double z = 2.0 * rng_uniform(seed, rng_stream::kPrimitive, i, 0) - 1.0;
  const double th = 2.0 * kPi * rng_uniform(seed, rng_stream::kPrimitive, i, 1);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(th), r * std::sin(th), z};
}

Vec3 sample_box(std::uint64_t seed, std::uint64_t i) {
  const int face =
      std::min(5, static_cast<int>(rng_uniform(seed, rng_stream::kPrimitive, i, 0) * 6.0));
  const double a = 2.0 * rng_uniform(seed, rng_stream::kPrimitive, i, 1) - 1.0;
  const double b = 2.0 * rng_uniform(seed, rng_stream::kPrimitive, i, 2) - 1.0;
  switch (face) {
    case 0: return {1.0, a, b};
    case 1: return {-1.0, a, b};
    case 2: return {a, 1.0, b};
    case 3: return {a, -1.0, b};
    case 4: return {a, b, 1.0};
    default: return {a, b, -1.0};
  }
}

Vec3 sample_torus(std::uint64_t seed, std::uint64_t i) {
  for (std::uint64_t k = 0;; ++k) {
    const double u = 2.0 * kPi * rng_uniform(seed, rng_stream::kPrimitive, i, 3 * k);
    const double v = 2.0 * kPi * rng_uniform(seed, rng_stream::kPrimitive, i, 3 * k + 1);
    const double w = rng_uniform(seed, rng_stream::kPrimitive, i, 3 * k + 2);
    if (w * (kTorusR + kTorusr) <= kTorusR + kTorusr * std::cos(v)) {
      const double d = kTorusR + kTorusr * std::cos(v);
      return {d * std::cos(u), d * std::sin(u), kTorusr * std::sin(v)};
    }
  }
}

Vec3 sample_disk(std::uint64_t seed, std::uint64_t i) {
  const double r = std::sqrt(rng_uniform(seed, rng_stream::kPrimitive, i, 0));
  const double th = 2.0 * kPi * rng_uniform(seed, rng_stream::kPrimitive, i, 1);
  return {r * std::cos(th), r * std::sin(th), 0.0};
}

double surface_area(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::sphere: return 4.0 * kPi;
    case PrimitiveKind::box: return 24.0;
    case PrimitiveKind::torus: return 4.0 * kPi * kPi * kTorusR * kTorusr;
    case PrimitiveKind::disk: return kPi;
  }
  return 1.0;
}

}  // namespace

PrimitiveKind primitive_kind_from(const std::string& name) {
  if (name == "sphere") return PrimitiveKind::sphere;
  if (name == "box") return PrimitiveKind::box;
  if (name == "torus") return PrimitiveKind::torus;
  if (name == "disk") return PrimitiveKind::disk;
  throw Error("primitive.unknown-kind", "unknown primitive '" + name + "'");
}

const char* primitive_kind_name(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::box: return "box";
    case PrimitiveKind::torus: return "torus";
    case PrimitiveKind::disk: return "disk";
  }
  return "?";
}

GaussianCloud make_primitive(PrimitiveKind kind, std::size_t n_points, std::uint64_t seed,
                             const Vec3& color) {
  if (n_points < 1) throw Error("primitive.count", "n_points must be >= 1");

  const double s = std::sqrt(surface_area(kind) / static_cast<double>(n_points));
  const double log_s = std::log(s);
  const Vec3 f_dc = (color - Vec3{0.5, 0.5, 0.5}) / kSH0;
  const double logit = inv_sigmoid(0.8);

  GaussianCloud cloud;
  cloud.canonical = true;
  cloud.object_label = primitive_kind_name(kind);
  cloud.points.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    GaussianPoint& p = cloud.points[i];
    switch (kind) {
      case PrimitiveKind::sphere: p.pos = sample_sphere(seed, i); break;
      case PrimitiveKind::box: p.pos = sample_box(seed, i); break;
      case PrimitiveKind::torus: p.pos = sample_torus(seed, i); break;
      case PrimitiveKind::disk: p.pos = sample_disk(seed, i); break;
    }
    p.log_scale = {log_s, log_s, log_s};
    p.rot = {1, 0, 0, 0};
    p.opacity_logit = logit;
    p.f_dc = f_dc;
    p.point_id = i;
  }
  return cloud;
}

GaussianCloud make_primitive(const std::string& kind, std::size_t n_points,
                             std::uint64_t seed, const Vec3& color) {
  return make_primitive(primitive_kind_from(kind), n_points, seed, color);
}

void scale_cloud(GaussianCloud& cloud, double factor) {
  const double log_f = std::log(factor);
  for (auto& p : cloud.points) {
    p.pos *= factor;
    p.log_scale += Vec3{log_f, log_f, log_f};
  }
}

}  // namespace t4d
