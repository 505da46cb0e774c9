#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "t4d/camera.hpp"
#include "t4d/gaussian.hpp"
#include "t4d/image.hpp"
#include "t4d/tape.hpp"

namespace t4d {

// One splat after EWA projection: pixel-space mean, floored 2D covariance
// and its conic (inverse), depth for ordering, and the inclusive pixel
// bounding box it is evaluated over.
struct ProjectedSplat {
  int row = -1;
  std::uint64_t id = 0;
  double depth = 0.0;
  double mx = 0.0, my = 0.0;
  double va = 0.0, vb = 0.0, vc = 0.0;
  double ca = 0.0, cb = 0.0, cc = 0.0;
  double alpha = 0.0;
  Vec3 color;
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
};

// Perspective EWA projection with a 0.3 px^2 covariance floor. Returns
// nothing when the point sits at or behind the near plane (tz <= 0.01) or
// its mean lies more than 4 sigma outside the frame.
std::optional<ProjectedSplat> project_gaussian(const Vec3& pos, const Quat& rot,
                                               const Vec3& scale, double alpha,
                                               const Vec3& color, std::uint64_t id,
                                               const Camera& cam, int row = -1);

// Depth-ordered front-to-back compositing over black, ties broken by id.
Image render_frame(const SceneSnapshot& snap, const Camera& cam);

// Projection + compositing state kept by a composite tape node so backward
// can replay the exact forward walk.
struct CompositeWork {
  Camera cam;
  std::vector<std::uint64_t> ids;
  std::vector<ProjectedSplat> proj;
};

Tensor composite_forward(const Tensor& pos, const Tensor& rot, const Tensor& scale,
                         const Tensor& alpha, const Tensor& color, const Camera& cam,
                         const std::vector<std::uint64_t>& ids, CompositeWork& work);

// Null output pointers skip that input's gradient.
void composite_backward(const CompositeWork& work, const Tensor& pos, const Tensor& rot,
                        const Tensor& scale, const Tensor& alpha, const Tensor& color,
                        const Tensor& dimage, Tensor* dpos, Tensor* drot, Tensor* dscale,
                        Tensor* dalpha, Tensor* dcolor);

// Records a snapshot's splats as leaf parameters feeding one composite node,
// for gradient probing against the rendered image.
struct SnapshotTape {
  int pos = -1;
  int rot = -1;
  int scale = -1;
  int alpha = -1;
  int color = -1;
  int image = -1;
};
SnapshotTape record_render(Tape& tape, const SceneSnapshot& snap, const Camera& cam);

// Exact field sum sampled on the camera plane at depth slice_depth along
// each pixel ray; no compositing. Test oracle for the projection path.
Image eval_field_image(const GaussianCloud& cloud, const Camera& cam, double slice_depth);

Image tensor_to_image(const Tensor& t, int width, int height);
Tensor image_to_tensor(const Image& img);

}  // namespace t4d
