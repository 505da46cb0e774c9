#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t4d/gaussian.hpp"

namespace t4d {

// Community 3DGS PLY interchange: binary little-endian, element "vertex" with
// float32 properties x,y,z, f_dc_0..2, opacity (logit), scale_0..2 (log),
// rot_0..3 (quaternion wxyz). The importer accepts extra properties and
// float64 variants; the exporter writes exactly this layout.
//
// Stored values map 1:1 onto GaussianPoint's stored fields, so
// import(export(cloud)) reproduces every float field bitwise once the cloud's
// doubles are float32-representable (always true after one import).
GaussianCloud import_ply(const std::vector<std::uint8_t>& bytes, bool canonical = false);
std::vector<std::uint8_t> export_ply(const GaussianCloud& cloud);

GaussianCloud load_ply(const std::string& path, bool canonical = false);
void save_ply(const GaussianCloud& cloud, const std::string& path);

}  // namespace t4d
