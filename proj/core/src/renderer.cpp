#include "t4d/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "t4d/error.hpp"
#include "t4d/threading.hpp"

namespace t4d {

namespace {

constexpr double kCovFloor = 0.3;
constexpr double kNearClip = 0.01;
constexpr double kCullSigma = 4.0;
constexpr double kEvalSigma = 6.0;
constexpr double kAlphaCap = 1.0 - 1e-12;
constexpr int kRowChunk = 8;

void sort_splats(std::vector<ProjectedSplat>& ps) {
  std::sort(ps.begin(), ps.end(), [](const ProjectedSplat& a, const ProjectedSplat& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id < b.id;
  });
}

// Splats covering pixel row y, keeping depth order.
void row_splats(const std::vector<ProjectedSplat>& proj, int y, std::vector<int>& out) {
  out.clear();
  for (int i = 0; i < static_cast<int>(proj.size()); ++i)
    if (proj[i].y0 <= y && y <= proj[i].y1) out.push_back(i);
}

void composite_pixels(const std::vector<ProjectedSplat>& proj, int w, int h, Tensor& out) {
  parallel_chunks(h, kRowChunk, [&](int, int rbegin, int rend) {
    std::vector<int> rowlist;
    for (int y = rbegin; y < rend; ++y) {
      row_splats(proj, y, rowlist);
      const double pyc = y + 0.5;
      for (int x = 0; x < w; ++x) {
        const double pxc = x + 0.5;
        double t = 1.0, r = 0.0, g = 0.0, b = 0.0;
        for (int i : rowlist) {
          const ProjectedSplat& s = proj[i];
          if (x < s.x0 || x > s.x1) continue;
          const double dx = pxc - s.mx, dy = pyc - s.my;
          const double q = s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy;
          const double raw = s.alpha * std::exp(-0.5 * q);
          const double a = raw < kAlphaCap ? raw : kAlphaCap;
          const double wgt = a * t;
          r += s.color.x * wgt;
          g += s.color.y * wgt;
          b += s.color.z * wgt;
          t *= 1.0 - a;
        }
        double* px = &out.v[3 * (static_cast<std::size_t>(y) * w + x)];
        px[0] = r;
        px[1] = g;
        px[2] = b;
      }
    }
  });
}

}  // namespace

std::optional<ProjectedSplat> project_gaussian(const Vec3& pos, const Quat& rot,
                                               const Vec3& scale, double alpha,
                                               const Vec3& color, std::uint64_t id,
                                               const Camera& cam, int row) {
  if (!(alpha > 0.0)) return std::nullopt;
  const Mat3 w2c = cam.world_to_cam();
  const Vec3 t = w2c * (pos - cam.eye());
  if (t.z <= kNearClip) return std::nullopt;

  const double fx = cam.fx(), fy = cam.fy();
  const double tz = t.z;
  const double px = cam.cx() + fx * t.x / tz;
  const double py = cam.cy() + fy * t.y / tz;

  const Mat3 r3 = rotation_of(rot.normalized());
  const Mat3 mmat = r3 * Mat3::diag(scale);
  const Mat3 sigma = mmat * mmat.transposed();

  const Vec3 j0{fx / tz, 0.0, -fx * t.x / (tz * tz)};
  const Vec3 j1{0.0, fy / tz, -fy * t.y / (tz * tz)};
  const Vec3 a0 = w2c.transposed() * j0;
  const Vec3 a1 = w2c.transposed() * j1;

  ProjectedSplat s;
  s.row = row;
  s.id = id;
  s.depth = tz;
  s.mx = px;
  s.my = py;
  s.va = a0.dot(sigma * a0) + kCovFloor;
  s.vb = a0.dot(sigma * a1);
  s.vc = a1.dot(sigma * a1) + kCovFloor;
  const double det = s.va * s.vc - s.vb * s.vb;
  s.ca = s.vc / det;
  s.cb = -s.vb / det;
  s.cc = s.va / det;
  s.alpha = alpha;
  s.color = color;

  const double mid = 0.5 * (s.va + s.vc);
  const double disc = std::sqrt(std::max(0.0, mid * mid - det));
  const double rad = std::sqrt(mid + disc);
  const double r4 = kCullSigma * rad;
  if (px < -r4 || px > cam.width + r4 || py < -r4 || py > cam.height + r4) return std::nullopt;

  const double r6 = kEvalSigma * rad;
  s.x0 = std::max(0, static_cast<int>(std::floor(px - r6)));
  s.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(px + r6)));
  s.y0 = std::max(0, static_cast<int>(std::floor(py - r6)));
  s.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(py + r6)));
  if (s.x0 > s.x1 || s.y0 > s.y1) return std::nullopt;
  return s;
}

Image render_frame(const SceneSnapshot& snap, const Camera& cam) {
  std::vector<ProjectedSplat> proj;
  proj.reserve(snap.splats.size());
  for (int i = 0; i < static_cast<int>(snap.splats.size()); ++i) {
    const SplatInstance& s = snap.splats[i];
    auto p = project_gaussian(s.pos, s.rot, s.scale, s.alpha, s.color, s.global_id, cam, i);
    if (p) proj.push_back(*p);
  }
  sort_splats(proj);
  Tensor out(cam.height * cam.width, 3);
  composite_pixels(proj, cam.width, cam.height, out);
  return tensor_to_image(out, cam.width, cam.height);
}

Tensor composite_forward(const Tensor& pos, const Tensor& rot, const Tensor& scale,
                         const Tensor& alpha, const Tensor& color, const Camera& cam,
                         const std::vector<std::uint64_t>& ids, CompositeWork& work) {
  const int n = pos.rows;
  if (rot.rows != n || scale.rows != n || alpha.rows != n || color.rows != n ||
      static_cast<int>(ids.size()) != n || pos.cols != 3 || rot.cols != 4 || scale.cols != 3 ||
      alpha.cols != 1 || color.cols != 3)
    throw Error("tape.shape", "composite input shapes disagree");
  work.cam = cam;
  work.ids = ids;
  work.proj.clear();
  work.proj.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 p{pos.at(i, 0), pos.at(i, 1), pos.at(i, 2)};
    const Quat q{rot.at(i, 0), rot.at(i, 1), rot.at(i, 2), rot.at(i, 3)};
    const Vec3 sc{scale.at(i, 0), scale.at(i, 1), scale.at(i, 2)};
    const Vec3 c{color.at(i, 0), color.at(i, 1), color.at(i, 2)};
    auto pr = project_gaussian(p, q, sc, alpha.at(i, 0), c, ids[i], cam, i);
    if (pr) work.proj.push_back(*pr);
  }
  sort_splats(work.proj);
  Tensor out(cam.height * cam.width, 3);
  composite_pixels(work.proj, cam.width, cam.height, out);
  return out;
}

namespace {

double frobenius(const Mat3& a, const Mat3& b) {
  double s = 0.0;
  for (int i = 0; i < 9; ++i) s += a.m[i] * b.m[i];
  return s;
}

// d(rotation matrix)/d(unit quaternion component).
Mat3 drot_dw(const Quat& q) {
  return Mat3::from_rows({0, -q.z, q.y}, {q.z, 0, -q.x}, {-q.y, q.x, 0}) * 2.0;
}
Mat3 drot_dx(const Quat& q) {
  return Mat3::from_rows({0, q.y, q.z}, {q.y, -2 * q.x, -q.w}, {q.z, q.w, -2 * q.x}) * 2.0;
}
Mat3 drot_dy(const Quat& q) {
  return Mat3::from_rows({-2 * q.y, q.x, q.w}, {q.x, 0, q.z}, {-q.w, q.z, -2 * q.y}) * 2.0;
}
Mat3 drot_dz(const Quat& q) {
  return Mat3::from_rows({-2 * q.z, -q.w, q.x}, {q.w, -2 * q.z, q.y}, {q.x, q.y, 0}) * 2.0;
}

}  // namespace

void composite_backward(const CompositeWork& work, const Tensor& pos, const Tensor& rot,
                        const Tensor& scale, const Tensor& alpha, const Tensor& color,
                        const Tensor& dimage, Tensor* dpos, Tensor* drot, Tensor* dscale,
                        Tensor* dalpha, Tensor* dcolor) {
  const Camera& cam = work.cam;
  const int w = cam.width, h = cam.height;
  const auto& proj = work.proj;
  const int np = static_cast<int>(proj.size());
  if (dimage.rows != h * w || dimage.cols != 3)
    throw Error("tape.shape", "composite image gradient shape");

  // Per-splat accumulators: dmx, dmy, dSigma2d (g00, g01, g11), dalpha, dcolor.
  std::vector<double> acc(static_cast<std::size_t>(np) * 9, 0.0);

  struct Contrib {
    int pi;
    double a, t, g, dx, dy;
  };
  std::vector<Contrib> walk;
  std::vector<int> rowlist;

  // Sequential pixel walk: deterministic accumulation into shared per-splat
  // slots. Replays exactly the forward arithmetic so transmittances match.
  for (int y = 0; y < h; ++y) {
    row_splats(proj, y, rowlist);
    const double pyc = y + 0.5;
    for (int x = 0; x < w; ++x) {
      const double pxc = x + 0.5;
      walk.clear();
      double t = 1.0;
      for (int i : rowlist) {
        const ProjectedSplat& s = proj[i];
        if (x < s.x0 || x > s.x1) continue;
        const double dx = pxc - s.mx, dy = pyc - s.my;
        const double q = s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy;
        const double g = std::exp(-0.5 * q);
        const double raw = s.alpha * g;
        const double a = raw < kAlphaCap ? raw : kAlphaCap;
        walk.push_back({i, a, t, g, dx, dy});
        t *= 1.0 - a;
      }
      if (walk.empty()) continue;
      const double* gpx = &dimage.v[3 * (static_cast<std::size_t>(y) * w + x)];
      double sr = 0.0, sg = 0.0, sb = 0.0;
      for (int k = static_cast<int>(walk.size()) - 1; k >= 0; --k) {
        const Contrib& c = walk[k];
        const ProjectedSplat& s = proj[c.pi];
        double* a9 = &acc[static_cast<std::size_t>(c.pi) * 9];
        const double wgt = c.a * c.t;
        a9[6] += gpx[0] * wgt;
        a9[7] += gpx[1] * wgt;
        a9[8] += gpx[2] * wgt;
        const double inv = 1.0 / (1.0 - c.a);
        const double da = gpx[0] * (s.color.x * c.t - sr * inv) +
                          gpx[1] * (s.color.y * c.t - sg * inv) +
                          gpx[2] * (s.color.z * c.t - sb * inv);
        sr += s.color.x * wgt;
        sg += s.color.y * wgt;
        sb += s.color.z * wgt;
        if (c.a >= kAlphaCap) continue;  // clamped: locally constant
        a9[5] += c.g * da;
        const double dq = -0.5 * c.a * da;
        const double vx = s.ca * c.dx + s.cb * c.dy;
        const double vy = s.cb * c.dx + s.cc * c.dy;
        a9[0] += -2.0 * dq * vx;
        a9[1] += -2.0 * dq * vy;
        a9[2] += -dq * vx * vx;
        a9[3] += -dq * vx * vy;
        a9[4] += -dq * vy * vy;
      }
    }
  }

  // Chain per-splat pixel-space gradients back to world-space inputs.
  const Mat3 w2c = cam.world_to_cam();
  const Vec3 eye = cam.eye();
  const double fx = cam.fx(), fy = cam.fy();
  for (int pi = 0; pi < np; ++pi) {
    const ProjectedSplat& s = proj[pi];
    const int i = s.row;
    const double* a9 = &acc[static_cast<std::size_t>(pi) * 9];

    if (dalpha) dalpha->at(i, 0) += a9[5];
    if (dcolor) {
      dcolor->at(i, 0) += a9[6];
      dcolor->at(i, 1) += a9[7];
      dcolor->at(i, 2) += a9[8];
    }
    if (!dpos && !drot && !dscale) continue;

    const Vec3 p{pos.at(i, 0), pos.at(i, 1), pos.at(i, 2)};
    const Quat qraw{rot.at(i, 0), rot.at(i, 1), rot.at(i, 2), rot.at(i, 3)};
    const Vec3 sc{scale.at(i, 0), scale.at(i, 1), scale.at(i, 2)};
    const Vec3 t = w2c * (p - eye);
    const double tz = t.z;
    const Quat u = qraw.normalized();
    const Mat3 r3 = rotation_of(u);
    const Mat3 mmat = r3 * Mat3::diag(sc);
    const Mat3 sigma = mmat * mmat.transposed();
    const Vec3 j0{fx / tz, 0.0, -fx * t.x / (tz * tz)};
    const Vec3 j1{0.0, fy / tz, -fy * t.y / (tz * tz)};
    const Vec3 a0 = w2c.transposed() * j0;
    const Vec3 a1 = w2c.transposed() * j1;

    const double g00 = a9[2], g01 = a9[3], g11 = a9[4];
    const Mat3 dsigma = Mat3::outer(a0, a0) * g00 +
                        (Mat3::outer(a0, a1) + Mat3::outer(a1, a0)) * g01 +
                        Mat3::outer(a1, a1) * g11;

    if (dpos) {
      const Vec3 da0 = (sigma * (a0 * g00 + a1 * g01)) * 2.0;
      const Vec3 da1 = (sigma * (a0 * g01 + a1 * g11)) * 2.0;
      const Vec3 dj0 = w2c * da0;
      const Vec3 dj1 = w2c * da1;
      Vec3 dt{dj0.z * (-fx / (tz * tz)), dj1.z * (-fy / (tz * tz)),
              dj0.x * (-fx / (tz * tz)) + dj1.y * (-fy / (tz * tz)) +
                  dj0.z * (2.0 * fx * t.x / (tz * tz * tz)) +
                  dj1.z * (2.0 * fy * t.y / (tz * tz * tz))};
      dt += j0 * a9[0] + j1 * a9[1];
      const Vec3 dp = w2c.transposed() * dt;
      dpos->at(i, 0) += dp.x;
      dpos->at(i, 1) += dp.y;
      dpos->at(i, 2) += dp.z;
    }

    if (drot || dscale) {
      const Mat3 dm = dsigma * mmat * 2.0;
      if (dscale)
        for (int k = 0; k < 3; ++k)
          dscale->at(i, k) += dm(0, k) * r3(0, k) + dm(1, k) * r3(1, k) + dm(2, k) * r3(2, k);
      if (drot) {
        Mat3 dr;
        for (int r = 0; r < 3; ++r)
          for (int k = 0; k < 3; ++k) dr(r, k) = dm(r, k) * sc[k];
        const double duw = frobenius(dr, drot_dw(u));
        const double dux = frobenius(dr, drot_dx(u));
        const double duy = frobenius(dr, drot_dy(u));
        const double duz = frobenius(dr, drot_dz(u));
        const double n = qraw.norm();
        if (n > 0.0) {
          const double dot = u.w * duw + u.x * dux + u.y * duy + u.z * duz;
          drot->at(i, 0) += (duw - u.w * dot) / n;
          drot->at(i, 1) += (dux - u.x * dot) / n;
          drot->at(i, 2) += (duy - u.y * dot) / n;
          drot->at(i, 3) += (duz - u.z * dot) / n;
        }
      }
    }
  }
}

SnapshotTape record_render(Tape& tape, const SceneSnapshot& snap, const Camera& cam) {
  const int n = static_cast<int>(snap.splats.size());
  Tensor pos(n, 3), rot(n, 4), scale(n, 3), alpha(n, 1), color(n, 3);
  std::vector<std::uint64_t> ids(n);
  for (int i = 0; i < n; ++i) {
    const SplatInstance& s = snap.splats[i];
    pos.at(i, 0) = s.pos.x;
    pos.at(i, 1) = s.pos.y;
    pos.at(i, 2) = s.pos.z;
    rot.at(i, 0) = s.rot.w;
    rot.at(i, 1) = s.rot.x;
    rot.at(i, 2) = s.rot.y;
    rot.at(i, 3) = s.rot.z;
    scale.at(i, 0) = s.scale.x;
    scale.at(i, 1) = s.scale.y;
    scale.at(i, 2) = s.scale.z;
    alpha.at(i, 0) = s.alpha;
    color.at(i, 0) = s.color.x;
    color.at(i, 1) = s.color.y;
    color.at(i, 2) = s.color.z;
    ids[i] = s.global_id;
  }
  SnapshotTape out;
  out.pos = tape.param(std::move(pos));
  out.rot = tape.param(std::move(rot));
  out.scale = tape.param(std::move(scale));
  out.alpha = tape.param(std::move(alpha));
  out.color = tape.param(std::move(color));
  out.image = tape.composite(out.pos, out.rot, out.scale, out.alpha, out.color, cam,
                             std::move(ids));
  return out;
}

Image eval_field_image(const GaussianCloud& cloud, const Camera& cam, double slice_depth) {
  Image img(cam.width, cam.height);
  const Mat3 c2w = cam.world_to_cam().transposed();
  const Vec3 eye = cam.eye();
  const double fx = cam.fx(), fy = cam.fy(), cx = cam.cx(), cy = cam.cy();
  parallel_chunks(cam.height, kRowChunk, [&](int, int rbegin, int rend) {
    for (int y = rbegin; y < rend; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const Vec3 pc{(x + 0.5 - cx) / fx * slice_depth, (y + 0.5 - cy) / fy * slice_depth,
                      slice_depth};
        const Vec3 v = eval_field(cloud, eye + c2w * pc);
        double* px = img.at(x, y);
        px[0] = v.x;
        px[1] = v.y;
        px[2] = v.z;
      }
    }
  });
  return img;
}

Image tensor_to_image(const Tensor& t, int width, int height) {
  Image img(width, height);
  img.px = t.v;
  return img;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t(img.height * img.width, 3);
  t.v = img.px;
  return t;
}

}  // namespace t4d
