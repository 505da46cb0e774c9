#pragma once

#include <cstdint>
#include <string>

#include "t4d/gaussian.hpp"

namespace t4d {

enum class PrimitiveKind { sphere, box, torus, disk };

// Throws Error("primitive.unknown-kind") for anything else.
PrimitiveKind primitive_kind_from(const std::string& name);
const char* primitive_kind_name(PrimitiveKind kind);

// Deterministic surface sampling of a canonical test object: unit sphere,
// [-1,1]^3 box surface, torus (R=0.7, r=0.3) or unit disk. Isotropic scales
// are sqrt(surface_area / n_points); opacity 0.8; identity rotations;
// point_ids 0..n-1. Identical (kind, n_points, seed, color) give identical
// clouds.
GaussianCloud make_primitive(PrimitiveKind kind, std::size_t n_points, std::uint64_t seed,
                             const Vec3& color);
GaussianCloud make_primitive(const std::string& kind, std::size_t n_points,
                             std::uint64_t seed, const Vec3& color);

// Uniformly scales positions and scales about the origin.
void scale_cloud(GaussianCloud& cloud, double factor);

}  // namespace t4d
