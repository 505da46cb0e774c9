#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "doctest.h"
#include "t4d/camera.hpp"
#include "t4d/error.hpp"
#include "t4d/gaussian.hpp"
#include "t4d/image.hpp"
#include "t4d/mathutil.hpp"
#include "t4d/renderer.hpp"
#include "t4d/rng.hpp"
#include "t4d/tape.hpp"
#include "t4d/threading.hpp"

namespace {

using namespace t4d;

constexpr double kFdStep = 1e-4;

bool grad_close(double ad, double fd, double rel) {
  const double diff = std::abs(ad - fd);
  if (diff <= 1e-5) return true;
  return diff <= rel * std::max(std::abs(ad), std::abs(fd));
}

double fd_double(double* p, const std::function<double()>& eval) {
  const double orig = *p;
  *p = orig + kFdStep;
  const double fp = eval();
  *p = orig - kFdStep;
  const double fm = eval();
  *p = orig;
  return (fp - fm) / (2.0 * kFdStep);
}

Quat random_unit_quat(std::uint64_t seed, std::uint64_t i) {
  return Quat{rng_normal(seed, 51, i, 0), rng_normal(seed, 51, i, 1),
              rng_normal(seed, 51, i, 2), rng_normal(seed, 51, i, 3)}
      .normalized();
}

SceneSnapshot random_scene(int n, std::uint64_t seed, double extent = 0.6) {
  SceneSnapshot snap;
  for (int i = 0; i < n; ++i) {
    SplatInstance s;
    s.pos = {extent * (2.0 * rng_uniform(seed, 50, i, 0) - 1.0),
             extent * (2.0 * rng_uniform(seed, 50, i, 1) - 1.0),
             extent * (2.0 * rng_uniform(seed, 50, i, 2) - 1.0)};
    s.rot = random_unit_quat(seed, i);
    s.scale = {0.08 + 0.17 * rng_uniform(seed, 52, i, 0),
               0.08 + 0.17 * rng_uniform(seed, 52, i, 1),
               0.08 + 0.17 * rng_uniform(seed, 52, i, 2)};
    s.alpha = 0.1 + 0.6 * rng_uniform(seed, 53, i, 0);
    s.color = {0.2 + 0.7 * rng_uniform(seed, 54, i, 0),
               0.2 + 0.7 * rng_uniform(seed, 54, i, 1),
               0.2 + 0.7 * rng_uniform(seed, 54, i, 2)};
    s.global_id = static_cast<std::uint64_t>(i);
    snap.splats.push_back(s);
  }
  return snap;
}

// Evaluates every splat at every pixel (no bounding window), sorted by
// (depth, id), same alpha cap. Truncation error vs the 6 sigma window is
// below 1e-6 for these scenes.
Image brute_force_render(const SceneSnapshot& snap, const Camera& cam) {
  std::vector<ProjectedSplat> ps;
  for (const auto& s : snap.splats) {
    auto p = project_gaussian(s.pos, s.rot, s.scale, s.alpha, s.color, s.global_id, cam);
    if (p) ps.push_back(*p);
  }
  std::sort(ps.begin(), ps.end(), [](const ProjectedSplat& a, const ProjectedSplat& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id < b.id;
  });
  Image img(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double trans = 1.0;
      double c[3] = {0, 0, 0};
      for (const auto& p : ps) {
        const double dx = (x + 0.5) - p.mx;
        const double dy = (y + 0.5) - p.my;
        const double q = p.ca * dx * dx + 2.0 * p.cb * dx * dy + p.cc * dy * dy;
        const double raw = p.alpha * std::exp(-0.5 * q);
        const double a = std::min(raw, 1.0 - 1e-12);
        c[0] += p.color.x * a * trans;
        c[1] += p.color.y * a * trans;
        c[2] += p.color.z * a * trans;
        trans *= 1.0 - a;
      }
      img.at(x, y)[0] = c[0];
      img.at(x, y)[1] = c[1];
      img.at(x, y)[2] = c[2];
    }
  }
  return img;
}

// Finite differencing steps across depth-order swaps when two splats sit
// closer than the probe step, so difference scenes keep depths apart.
void separate_depths(SceneSnapshot& snap) {
  const int n = static_cast<int>(snap.splats.size());
  for (int i = 0; i < n; ++i) snap.splats[i].pos.z = -0.55 + 1.1 * i / (n - 1);
}

Tensor random_target(const Camera& cam, std::uint64_t seed) {
  Tensor t(cam.width * cam.height, 3);
  for (std::size_t i = 0; i < t.size(); ++i) t.v[i] = rng_uniform(seed, 55, i);
  return t;
}

}  // namespace

TEST_SUITE("renderer") {
  TEST_CASE("orbit camera geometry") {
    Camera cam;
    CHECK(cam.eye().x == doctest::Approx(0.0));
    CHECK(cam.eye().y == doctest::Approx(0.0));
    CHECK(cam.eye().z == doctest::Approx(3.0));

    cam.azimuth_deg = 37;
    cam.elevation_deg = 21;
    cam.target = {0.2, -0.1, 0.3};
    const Mat3 w = cam.world_to_cam();
    // orthonormal rows, det +1
    for (int r = 0; r < 3; ++r) {
      CHECK(w.row(r).dot(w.row(r)) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(w.row(r).dot(w.row((r + 1) % 3)) == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK(w.det() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((cam.eye() - cam.target).dot(cam.eye() - cam.target) ==
          doctest::Approx(9.0).epsilon(1e-12));

    // the target sits at the image center, at depth = radius
    const Vec3 t = w * (cam.target - cam.eye());
    CHECK(t.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t.z == doctest::Approx(3.0).epsilon(1e-12));

    // default view: world +x lands right of center, world +y above center
    Camera front;
    auto right = project_gaussian({0.3, 0, 0}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 0.5,
                                  {1, 1, 1}, 0, front);
    REQUIRE(right.has_value());
    CHECK(right->mx > front.cx());
    auto up = project_gaussian({0, 0.3, 0}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 0.5,
                               {1, 1, 1}, 0, front);
    REQUIRE(up.has_value());
    CHECK(up->my < front.cy());
  }

  TEST_CASE("projection matches a dense matrix oracle") {
    Camera cam;
    cam.width = 48;
    cam.height = 40;
    cam.azimuth_deg = 33;
    cam.elevation_deg = -12;
    cam.radius = 2.6;
    cam.target = {0.1, -0.2, 0.05};

    const Mat3 wm = cam.world_to_cam();
    Eigen::Matrix3d w;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) w(r, c) = wm(r, c);
    const Vec3 eye = cam.eye();

    int kept = 0, culled = 0;
    for (int i = 0; i < 120; ++i) {
      const Vec3 pos{4.0 * (rng_uniform(3, 50, i, 0) - 0.5), 4.0 * (rng_uniform(3, 50, i, 1) - 0.5),
                     4.0 * (rng_uniform(3, 50, i, 2) - 0.5)};
      const Quat rot = random_unit_quat(3, i);
      const Vec3 scale{0.05 + 0.3 * rng_uniform(3, 52, i, 0),
                       0.05 + 0.3 * rng_uniform(3, 52, i, 1),
                       0.05 + 0.3 * rng_uniform(3, 52, i, 2)};
      const auto ps = project_gaussian(pos, rot, scale, 0.5, {1, 1, 1}, 7, cam);

      const Eigen::Vector3d p(pos.x, pos.y, pos.z);
      const Eigen::Vector3d e(eye.x, eye.y, eye.z);
      const Eigen::Vector3d t = w * (p - e);
      if (t.z() <= 0.01) {
        CHECK(!ps.has_value());
        continue;
      }
      const Eigen::Quaterniond q(rot.w, rot.x, rot.y, rot.z);
      const Eigen::Matrix3d r3 = q.toRotationMatrix();
      const Mat3 mine = rotation_of(rot);
      for (int rr = 0; rr < 3; ++rr)
        for (int cc = 0; cc < 3; ++cc)
          CHECK(mine(rr, cc) == doctest::Approx(r3(rr, cc)).epsilon(1e-12));

      const Eigen::Vector3d s2(scale.x * scale.x, scale.y * scale.y, scale.z * scale.z);
      const Eigen::Matrix3d sigma = r3 * s2.asDiagonal() * r3.transpose();
      const double fx = cam.fx(), fy = cam.fy(), tz = t.z();
      Eigen::Matrix<double, 2, 3> j;
      j << fx / tz, 0, -fx * t.x() / (tz * tz), 0, fy / tz, -fy * t.y() / (tz * tz);
      Eigen::Matrix2d cov = j * w * sigma * w.transpose() * j.transpose();
      cov(0, 0) += 0.3;
      cov(1, 1) += 0.3;
      const double mx = cam.cx() + fx * t.x() / tz;
      const double my = cam.cy() + fy * t.y() / tz;

      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
      const double r4 = 4.0 * std::sqrt(es.eigenvalues().maxCoeff());
      const bool off = mx < -r4 || mx > cam.width + r4 || my < -r4 || my > cam.height + r4;
      CHECK(ps.has_value() == !off);
      if (!ps) {
        ++culled;
        continue;
      }
      ++kept;
      CHECK(ps->mx == doctest::Approx(mx).epsilon(1e-12));
      CHECK(ps->my == doctest::Approx(my).epsilon(1e-12));
      CHECK(ps->depth == doctest::Approx(tz).epsilon(1e-12));
      CHECK(ps->va == doctest::Approx(cov(0, 0)).epsilon(1e-11));
      CHECK(ps->vb == doctest::Approx(cov(0, 1)).epsilon(1e-11));
      CHECK(ps->vc == doctest::Approx(cov(1, 1)).epsilon(1e-11));
      const Eigen::Matrix2d conic = cov.inverse();
      CHECK(ps->ca == doctest::Approx(conic(0, 0)).epsilon(1e-10));
      CHECK(ps->cb == doctest::Approx(conic(0, 1)).epsilon(1e-10));
      CHECK(ps->cc == doctest::Approx(conic(1, 1)).epsilon(1e-10));
    }
    CHECK(kept > 20);
    CHECK(culled >= 3);

    // near plane and nonpositive opacity reject
    Camera front;
    CHECK(!project_gaussian(front.eye() + Vec3{0, 0, -0.005}, {1, 0, 0, 0}, {0.1, 0.1, 0.1},
                            0.5, {1, 1, 1}, 0, front)
               .has_value());
    CHECK(!project_gaussian({0, 0, 4.0}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 0.5, {1, 1, 1}, 0,
                            front)
               .has_value());
    CHECK(!project_gaussian({0, 0, 0}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 0.0, {1, 1, 1}, 0,
                            front)
               .has_value());
  }

  TEST_CASE("compositing matches the exact hand-worked cases") {
    Camera cam;
    cam.width = 1;
    cam.height = 1;

    SceneSnapshot empty;
    const Image black = render_frame(empty, cam);
    CHECK(black.width == 1);
    CHECK(black.height == 1);
    CHECK(black.at(0, 0)[0] == 0.0);
    CHECK(black.at(0, 0)[1] == 0.0);
    CHECK(black.at(0, 0)[2] == 0.0);

    // one opaque white splat at the target: saturated white
    SceneSnapshot white;
    white.splats.push_back({{0, 0, 0}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 1.0, {1, 1, 1}, 0});
    const Image w1 = render_frame(white, cam);
    for (int c = 0; c < 3; ++c) CHECK(w1.at(0, 0)[c] == doctest::Approx(1.0).epsilon(1e-9));

    // red 0.6 in front of opaque white: (1.0, 0.4, 0.4)
    SceneSnapshot rw;
    rw.splats.push_back({{0, 0, 0.5}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 0.6, {1, 0, 0}, 0});
    rw.splats.push_back({{0, 0, 0}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 1.0, {1, 1, 1}, 1});
    const Image rw1 = render_frame(rw, cam);
    CHECK(rw1.at(0, 0)[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rw1.at(0, 0)[1] == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(rw1.at(0, 0)[2] == doctest::Approx(0.4).epsilon(1e-9));

    // swapped depths: the opaque white in front hides the red
    std::swap(rw.splats[0].pos, rw.splats[1].pos);
    const Image wr1 = render_frame(rw, cam);
    for (int c = 0; c < 3; ++c) CHECK(wr1.at(0, 0)[c] == doctest::Approx(1.0).epsilon(1e-9));

    // equal depth: id order breaks the tie (red first, then green behind)
    SceneSnapshot tie;
    tie.splats.push_back({{0, 0, 0}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 0.5, {1, 0, 0}, 0});
    tie.splats.push_back({{0, 0, 0}, {1, 0, 0, 0}, {0.1, 0.1, 0.1}, 0.5, {0, 1, 0}, 1});
    const Image t1 = render_frame(tie, cam);
    CHECK(t1.at(0, 0)[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(t1.at(0, 0)[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(t1.at(0, 0)[2] == doctest::Approx(0.0).epsilon(1e-12));
    // listing order must not matter, the tie rule is by id
    std::swap(tie.splats[0], tie.splats[1]);
    const Image t2 = render_frame(tie, cam);
    CHECK(t2.at(0, 0)[0] == t1.at(0, 0)[0]);
    CHECK(t2.at(0, 0)[1] == t1.at(0, 0)[1]);
  }

  TEST_CASE("render matches a windowless brute-force oracle") {
    Camera cam;
    cam.width = 48;
    cam.height = 40;
    cam.azimuth_deg = -25;
    cam.elevation_deg = 15;
    const SceneSnapshot snap = random_scene(50, 9, 0.8);
    const Image fast = brute_force_render(snap, cam);
    const Image ref = render_frame(snap, cam);
    REQUIRE(ref.px.size() == fast.px.size());
    double max_diff = 0.0;
    for (std::size_t i = 0; i < ref.px.size(); ++i)
      max_diff = std::max(max_diff, std::abs(ref.px[i] - fast.px[i]));
    CHECK(max_diff < 1e-6);
    // everything stays inside [0,1]
    for (double v : ref.px) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("worker count never changes a pixel or a gradient") {
    Camera cam;
    cam.width = 48;
    cam.height = 48;
    const SceneSnapshot snap = random_scene(30, 13);
    const Tensor target = random_target(cam, 13);

    Tensor x(200, 6);
    for (std::size_t i = 0; i < x.size(); ++i) x.v[i] = rng_normal(14, 60, i);
    Mlp mlp = make_mlp({6, 32, 4}, 14, 0);
    for (auto& l : mlp.layers)
      for (std::size_t i = 0; i < l.w.size(); ++i)
        l.w[i] = static_cast<float>(0.3 * rng_normal(14, 61, i));

    struct Run {
      std::vector<double> px;
      double loss = 0.0;
      std::vector<double> gpos;
      double dense_loss = 0.0;
      std::vector<double> dw0;
    };
    const auto run = [&]() {
      Run r;
      r.px = render_frame(snap, cam).px;

      Tape tape;
      const SnapshotTape st = record_render(tape, snap, cam);
      tape.mse(st.image, tape.input(target));
      tape.backward();
      r.loss = tape.value(tape.node_count() - 1).v[0];
      r.gpos = tape.grad(st.pos).v;

      Tape dt;
      const int xn = dt.param(x);
      const int h = dt.dense(xn, &mlp.layers[0], true, true);
      dt.sum_sq(dt.dense(h, &mlp.layers[1], false, true));
      dt.backward();
      r.dense_loss = dt.value(dt.node_count() - 1).v[0];
      r.dw0 = *dt.layer_grad_w(mlp.layers[0]);
      return r;
    };

    set_worker_count(1);
    const Run serial = run();
    set_worker_count(4);
    const Run threaded = run();
    set_worker_count(0);

    CHECK(serial.px == threaded.px);
    CHECK(serial.loss == threaded.loss);
    CHECK(serial.gpos == threaded.gpos);
    CHECK(serial.dense_loss == threaded.dense_loss);
    CHECK(serial.dw0 == threaded.dw0);
  }

  TEST_CASE("field slice peaks at opacity * color under the projected mean") {
    Camera cam;
    cam.width = 33;
    cam.height = 33;

    GaussianCloud cloud;
    GaussianPoint g;
    g.pos = {0, 0, 0};
    g.log_scale = {std::log(0.1), std::log(0.1), std::log(0.1)};
    g.opacity_logit = inv_sigmoid(0.8);
    g.f_dc = (Vec3{0.7, 0.4, 0.6} - Vec3{0.5, 0.5, 0.5}) * (1.0 / kSH0);
    g.point_id = 0;
    cloud.points.push_back(g);

    const Image one = eval_field_image(cloud, cam, cam.radius);
    int bx = -1, by = -1;
    double best = -1.0;
    for (int y = 0; y < 33; ++y)
      for (int x = 0; x < 33; ++x) {
        const double v = one.at(x, y)[0] + one.at(x, y)[1] + one.at(x, y)[2];
        if (v > best) {
          best = v;
          bx = x;
          by = y;
        }
      }
    CHECK(bx == 16);  // pixel center (16.5, 16.5) is exactly the optical axis
    CHECK(by == 16);
    const double alpha = cloud.points[0].opacity();
    const Vec3 col = cloud.points[0].color();
    CHECK(one.at(16, 16)[0] == doctest::Approx(alpha * col.x).epsilon(1e-12));
    CHECK(one.at(16, 16)[1] == doctest::Approx(alpha * col.y).epsilon(1e-12));
    CHECK(one.at(16, 16)[2] == doctest::Approx(alpha * col.z).epsilon(1e-12));

    // a second gaussian produces a second, separate local maximum
    GaussianPoint g2 = g;
    g2.pos = {0.8, 0, 0};
    g2.point_id = 1;
    cloud.points.push_back(g2);
    const Image two = eval_field_image(cloud, cam, cam.radius);
    const auto local_max = [&](int x, int y) {
      const double v = two.at(x, y)[0];
      return v > two.at(x - 1, y)[0] && v > two.at(x + 1, y)[0] && v > two.at(x, y - 1)[0] &&
             v > two.at(x, y + 1)[0];
    };
    CHECK(local_max(16, 16));
    const auto ps = project_gaussian(g2.pos, g2.unit_rot(), g2.scale(), alpha, col,
                                     g2.point_id, cam);
    REQUIRE(ps.has_value());
    int b2x = -1, b2y = -1;
    double best2 = -1.0;
    for (int y = 1; y < 32; ++y)
      for (int x = 20; x < 32; ++x)
        if (two.at(x, y)[0] > best2) {
          best2 = two.at(x, y)[0];
          b2x = x;
          b2y = y;
        }
    CHECK(local_max(b2x, b2y));
    CHECK(std::abs(b2x + 0.5 - ps->mx) <= 1.0);
    CHECK(std::abs(b2y + 0.5 - ps->my) <= 1.0);
  }

  TEST_CASE("image gradients match central differences over 100 probes") {
    Camera cam;
    cam.width = 24;
    cam.height = 24;
    SceneSnapshot snap = random_scene(12, 5);
    separate_depths(snap);
    const int n = static_cast<int>(snap.splats.size());
    const Tensor target = random_target(cam, 5);

    const auto loss = [&]() {
      Tape t;
      const SnapshotTape st = record_render(t, snap, cam);
      return t.value(t.mse(st.image, t.input(target))).v[0];
    };

    Tape tape;
    const SnapshotTape st = record_render(tape, snap, cam);
    const int lossn = tape.mse(st.image, tape.input(target));
    tape.backward();

    // the tape image is bitwise the renderer's image, and the loss replays
    CHECK(tape.value(st.image).v == image_to_tensor(render_frame(snap, cam)).v);
    CHECK(tape.value(lossn).v[0] == loss());

    int probe = 0;
    const auto pick = [&](int mod) { return static_cast<int>(rng_key(21, 70, ++probe) % mod); };

    for (int k = 0; k < 30; ++k) {  // position, 5e-3
      const int i = pick(n), c = pick(3);
      const double fd = fd_double(&snap.splats[i].pos[c], loss);
      const double ad = tape.grad(st.pos).at(i, c);
      CHECK_MESSAGE(grad_close(ad, fd, 5e-3), "pos[", i, "][", c, "] ad ", ad, " fd ", fd);
    }
    for (int k = 0; k < 20; ++k) {  // opacity, 1e-3
      const int i = pick(n);
      const double fd = fd_double(&snap.splats[i].alpha, loss);
      const double ad = tape.grad(st.alpha).at(i, 0);
      CHECK_MESSAGE(grad_close(ad, fd, 1e-3), "alpha[", i, "] ad ", ad, " fd ", fd);
    }
    for (int k = 0; k < 20; ++k) {  // color, 1e-3
      const int i = pick(n), c = pick(3);
      const double fd = fd_double(&snap.splats[i].color[c], loss);
      const double ad = tape.grad(st.color).at(i, c);
      CHECK_MESSAGE(grad_close(ad, fd, 1e-3), "color[", i, "][", c, "] ad ", ad, " fd ", fd);
    }
    for (int k = 0; k < 15; ++k) {  // scale, 5e-3
      const int i = pick(n), c = pick(3);
      const double fd = fd_double(&snap.splats[i].scale[c], loss);
      const double ad = tape.grad(st.scale).at(i, c);
      CHECK_MESSAGE(grad_close(ad, fd, 5e-3), "scale[", i, "][", c, "] ad ", ad, " fd ", fd);
    }
    for (int k = 0; k < 15; ++k) {  // rotation, 5e-3
      const int i = pick(n), c = pick(4);
      Quat& q = snap.splats[i].rot;
      double* comp[4] = {&q.w, &q.x, &q.y, &q.z};
      const double fd = fd_double(comp[c], loss);
      const double ad = tape.grad(st.rot).at(i, c);
      CHECK_MESSAGE(grad_close(ad, fd, 5e-3), "rot[", i, "][", c, "] ad ", ad, " fd ", fd);
    }
  }

  TEST_CASE("transition probability gradients flow through the opacity product") {
    Camera cam;
    cam.width = 24;
    cam.height = 24;
    SceneSnapshot snap = random_scene(10, 8);
    separate_depths(snap);
    const int n = static_cast<int>(snap.splats.size());
    const Tensor target = random_target(cam, 8);

    Tensor pos(n, 3), rott(n, 4), scalet(n, 3), alphat(n, 1), colort(n, 3), pt(n, 1);
    std::vector<std::uint64_t> ids(n);
    for (int i = 0; i < n; ++i) {
      const auto& s = snap.splats[i];
      pos.at(i, 0) = s.pos.x;
      pos.at(i, 1) = s.pos.y;
      pos.at(i, 2) = s.pos.z;
      rott.at(i, 0) = s.rot.w;
      rott.at(i, 1) = s.rot.x;
      rott.at(i, 2) = s.rot.y;
      rott.at(i, 3) = s.rot.z;
      scalet.at(i, 0) = s.scale.x;
      scalet.at(i, 1) = s.scale.y;
      scalet.at(i, 2) = s.scale.z;
      alphat.at(i, 0) = s.alpha;
      colort.at(i, 0) = s.color.x;
      colort.at(i, 1) = s.color.y;
      colort.at(i, 2) = s.color.z;
      pt.at(i, 0) = 0.05 + 0.9 * rng_uniform(8, 56, i);
      ids[i] = s.global_id;
    }

    const auto loss = [&]() {
      Tape t;
      const int eff = t.mul(t.input(alphat), t.input(pt));
      const int img = t.composite(t.input(pos), t.input(rott), t.input(scalet), eff,
                                  t.input(colort), cam, ids);
      return t.value(t.mse(img, t.input(target))).v[0];
    };

    Tape tape;
    const int an = tape.param(alphat);
    const int pn = tape.param(pt);
    const int eff = tape.mul(an, pn);
    const int img = tape.composite(tape.input(pos), tape.input(rott), tape.input(scalet),
                                   eff, tape.input(colort), cam, ids);
    tape.mse(img, tape.input(target));
    tape.backward();

    for (int k = 0; k < 20; ++k) {
      const int i = static_cast<int>(rng_key(22, 71, k) % n);
      const double fd = fd_double(&pt.at(i, 0), loss);
      const double ad = tape.grad(pn).at(i, 0);
      CHECK_MESSAGE(grad_close(ad, fd, 1e-3), "p[", i, "] ad ", ad, " fd ", fd);
    }
    // both gradients share the factor d(loss)/d(eff): ga*alpha == gp*p
    for (int i = 0; i < n; ++i) {
      const double ga = tape.grad(an).at(i, 0);
      const double gp = tape.grad(pn).at(i, 0);
      if (std::abs(gp) > 1e-12)
        CHECK(ga * alphat.at(i, 0) == doctest::Approx(gp * pt.at(i, 0)).epsilon(1e-9));
    }
  }

  TEST_CASE("pfm and png files round-trip") {
    Image img(7, 5);
    for (std::size_t i = 0; i < img.px.size(); ++i) img.px[i] = rng_uniform(33, 57, i);
    img.px[0] = 1.5;   // out of range survives pfm, clamps in png
    img.px[1] = -0.2;

    save_pfm(img, "/tmp/t4d_rt.pfm");
    const Image pfm = load_pfm("/tmp/t4d_rt.pfm");
    REQUIRE(pfm.width == 7);
    REQUIRE(pfm.height == 5);
    for (std::size_t i = 0; i < img.px.size(); ++i)
      CHECK(pfm.px[i] == static_cast<double>(static_cast<float>(img.px[i])));

    save_png(img, "/tmp/t4d_rt.png");
    const Image png = load_png("/tmp/t4d_rt.png");
    REQUIRE(png.width == 7);
    REQUIRE(png.height == 5);
    for (std::size_t i = 0; i < img.px.size(); ++i) {
      const double want = std::min(1.0, std::max(0.0, img.px[i]));
      CHECK(std::abs(png.px[i] - want) <= 0.5 / 255.0 + 1e-9);
    }

    CHECK(load_image("/tmp/t4d_rt.pfm").px == pfm.px);
    CHECK(load_image("/tmp/t4d_rt.png").px == png.px);

    CHECK(std::isinf(psnr(pfm, pfm)));
    Image a(1, 1), b(1, 1);
    b.px[0] = 0.1;
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(3.0 / 0.01)).epsilon(1e-12));
    CHECK_THROWS_AS(psnr(a, img), Error);
  }
}
