#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <random>

#include "doctest.h"
#include "t4d/error.hpp"
#include "t4d/kinematics.hpp"
#include "t4d/primitives.hpp"

using namespace t4d;

namespace {

TimelineProgram single_track(Vec3 init_pos, Vec3 init_angle_rad,
                             std::vector<VelocitySegment> vel,
                             std::vector<RotationWindow> rot) {
  TimelineProgram program;
  ObjectTrack track;
  track.label = "obj";
  track.init_pos = init_pos;
  track.init_angle = init_angle_rad;
  track.velocity = std::move(vel);
  if (track.velocity.empty()) track.velocity.push_back({0.0, 1.0, {}});
  track.rotation = std::move(rot);
  program.objects.push_back(track);
  return program;
}

Eigen::Matrix3d eigen_euler_xyz(const Vec3& a) {
  return (Eigen::AngleAxisd(a.z, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(a.y, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(a.x, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

}  // namespace

TEST_SUITE("kinematics") {

TEST_CASE("rotation matrix axis cases") {
  const Mat3 id = rotation_matrix({0, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(id(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));

  const Vec3 once = rotation_matrix({0, 0, kPi / 2}) * Vec3{1, 0, 0};
  CHECK(once.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(once.y == doctest::Approx(1.0).epsilon(1e-12));

  const Vec3 composed = rotation_matrix({kPi / 2, kPi / 2, 0}) * Vec3{0, 0, 1};
  CHECK(composed.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(composed.y == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(composed.z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rotation matrix matches eigen and stays orthonormal") {
  std::mt19937 gen(4);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 a{u(gen), u(gen), u(gen)};
    const Mat3 r = rotation_matrix(a);
    const Eigen::Matrix3d want = eigen_euler_xyz(a);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(r(i, j) - want(i, j)) <= 1e-12);

    const Mat3 rtr = r.transposed() * r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(std::abs(rtr(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-9);
    CHECK(std::abs(r.det() - 1.0) <= 1e-9);

    const Mat3 via_quat = rotation_of(rotation_quat_of(a));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(via_quat(i, j) - r(i, j)) <= 1e-12);
  }
}

TEST_CASE("static pose returns the initial state") {
  const auto program = single_track({0.3, -0.1, 0.9}, {0.1, 0.2, 0.3}, {}, {});
  for (double t : {0.0, 0.4, 1.0}) {
    const Pose pose = object_pose(program, 0, t);
    CHECK(pose.translation.x == 0.3);
    CHECK(pose.angles.z == 0.3);
  }
}

TEST_CASE("single segment matches the closed form at 64 samples") {
  const Vec3 eta{-1, 0, 0};
  const Vec3 v{0.8, 0.1, -0.2};
  const Vec3 phi{0.0, 0.2, 0.0};
  const Vec3 w{0.3, -0.5, 1.1};
  const auto program =
      single_track(eta, phi, {{0.0, 1.0, v}}, {{0.0, 1.0, w}});
  for (int k = 0; k < 64; ++k) {
    const double t = k / 63.0;
    const Pose pose = object_pose(program, 0, t);
    const Vec3 want_x = eta + v * t;
    const Vec3 want_a = phi + w * t;
    CHECK(std::abs(pose.translation.x - want_x.x) <= 1e-12);
    CHECK(std::abs(pose.translation.y - want_x.y) <= 1e-12);
    CHECK(std::abs(pose.translation.z - want_x.z) <= 1e-12);
    CHECK(std::abs(pose.angles.x - want_a.x) <= 1e-12);
    CHECK(std::abs(pose.angles.y - want_a.y) <= 1e-12);
    CHECK(std::abs(pose.angles.z - want_a.z) <= 1e-12);
  }
  const Pose half = object_pose(program, 0, 0.5);
  CHECK(half.translation.x == doctest::Approx(-0.6).epsilon(1e-12));
}

TEST_CASE("two velocity segments integrate piecewise") {
  const auto program = single_track({0, 0, 0}, {},
                                    {{0.0, 0.5, {1, 0, 0}}, {0.5, 1.0, {0, 0, 0}}}, {});
  const Pose pose = object_pose(program, 0, 0.75);
  CHECK(pose.translation.x == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pose rejects bad arguments") {
  const auto program = single_track({}, {}, {}, {});
  CHECK_THROWS_WITH_AS(object_pose(program, 1, 0.5), doctest::Contains("kin.range"), Error);
  CHECK_THROWS_WITH_AS(object_pose(program, 0, 1.5), doctest::Contains("kin.range"), Error);
  CHECK_THROWS_WITH_AS(object_pose(program, 0, -0.1), doctest::Contains("kin.range"), Error);
}

TEST_CASE("pose is Lipschitz-continuous in t") {
  const auto program = single_track({0, 0, 0}, {},
                                    {{0.0, 0.3, {2, 0, 0}}, {0.3, 0.8, {0, 1, 0}},
                                     {0.8, 1.0, {0, 0, -3}}},
                                    {{0.1, 0.9, {0, 2, 0}}});
  const double rate_bound = 3.0 + 1e-9;
  const double eps = 1e-4;
  for (int k = 0; k + 1 < 2000; ++k) {
    const double t = k / 2000.0;
    const Pose a = object_pose(program, 0, t);
    const Pose b = object_pose(program, 0, t + eps);
    CHECK((b.translation - a.translation).norm() <= rate_bound * eps);
    CHECK((b.angles - a.angles).norm() <= rate_bound * eps);
  }
}

TEST_CASE("transform point applies R then translation") {
  Pose pose;
  CHECK(transform_point(pose, {0.4, 0.5, 0.6}) == Vec3{0.4, 0.5, 0.6});

  pose.translation = {0.6, 0, 0};
  CHECK(transform_point(pose, {0, 1, 0}) == Vec3{0.6, 1, 0});

  Pose rot;
  rot.angles = {0, 0, kPi / 2};
  rot.rotation = rotation_matrix(rot.angles);
  const Vec3 got = transform_point(rot, {1, 0, 0});
  CHECK(got.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(got.y == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identity pose leaves the cloud bitwise unchanged") {
  const auto cloud = make_primitive(PrimitiveKind::torus, 300, 2, {0.8, 0.4, 0.2});
  const Pose pose;
  const auto moved = transform_cloud(cloud, pose);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(moved.points[i].pos == cloud.points[i].pos);
    CHECK(moved.points[i].rot == cloud.points[i].rot);
  }
}

TEST_CASE("rigid transforms preserve pairwise distances") {
  const auto cloud = make_primitive(PrimitiveKind::sphere, 60, 6, {1, 1, 1});
  Pose pose;
  pose.angles = {0.4, -1.2, 2.2};
  pose.rotation = rotation_matrix(pose.angles);
  pose.rotation_quat = rotation_quat_of(pose.angles);
  pose.translation = {0.3, 0.7, -0.2};
  const auto moved = transform_cloud(cloud, pose);
  for (std::size_t i = 0; i < cloud.size(); i += 7)
    for (std::size_t j = i + 1; j < cloud.size(); j += 11) {
      const double before = (cloud.points[i].pos - cloud.points[j].pos).norm();
      const double after = (moved.points[i].pos - moved.points[j].pos).norm();
      CHECK(std::abs(before - after) <= 1e-9);
    }
}

TEST_CASE("pure translation preserves distances exactly") {
  const auto cloud = make_primitive(PrimitiveKind::box, 40, 12, {1, 1, 1});
  Pose pose;
  pose.translation = {0.25, -0.125, 0.5};  // exactly representable
  const auto moved = transform_cloud(cloud, pose);
  for (std::size_t i = 0; i + 1 < cloud.size(); i += 3) {
    const Vec3 before = cloud.points[i].pos - cloud.points[i + 1].pos;
    const Vec3 after = moved.points[i].pos - moved.points[i + 1].pos;
    CHECK(std::abs(before.norm() - after.norm()) <= 1e-12);
  }
}

TEST_CASE("field of a transformed cloud is the transformed field") {
  const auto cloud = make_primitive(PrimitiveKind::sphere, 25, 8, {0.9, 0.3, 0.2});
  Pose pose;
  pose.angles = {0, 0, kPi / 2};
  pose.rotation = rotation_matrix(pose.angles);
  pose.rotation_quat = rotation_quat_of(pose.angles);
  const auto moved = transform_cloud(cloud, pose);
  std::mt19937 gen(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int probe = 0; probe < 20; ++probe) {
    const Vec3 x{u(gen), u(gen), u(gen)};
    const Vec3 fx = eval_field(cloud, x);
    const Vec3 frx = eval_field(moved, pose.rotation * x);
    CHECK(std::abs(fx.x - frx.x) <= 1e-9);
    CHECK(std::abs(fx.y - frx.y) <= 1e-9);
    CHECK(std::abs(fx.z - frx.z) <= 1e-9);
  }
}

TEST_CASE("quaternion composition matches matrix composition") {
  std::mt19937 gen(14);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 a{u(gen), u(gen), u(gen)};
    const Quat pose_q = rotation_quat_of(a);
    const Quat point_q = axis_angle_quat({u(gen), u(gen), u(gen)}, u(gen));
    const Mat3 lhs = rotation_of((pose_q * point_q).normalized());
    const Mat3 rhs = rotation_matrix(a) * rotation_of(point_q);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(lhs(i, j) - rhs(i, j)) <= 1e-12);
  }
}

}  // TEST_SUITE
