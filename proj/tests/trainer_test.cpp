#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "t4d/adam.hpp"
#include "t4d/error.hpp"
#include "t4d/guidance.hpp"
#include "t4d/nets.hpp"
#include "t4d/renderer.hpp"
#include "t4d/scene.hpp"
#include "t4d/tape.hpp"
#include "t4d/trainer.hpp"

namespace fs = std::filesystem;
using namespace t4d;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("t4d_trainer_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

GaussianCloud ring_cloud(int n, const Vec3& f_dc, double log_s) {
  GaussianCloud c;
  for (int j = 0; j < n; ++j) {
    const double u = n == 1 ? 0.5 : static_cast<double>(j) / (n - 1);
    GaussianPoint p;
    p.pos = {0.3 * std::sin(6.2831853 * u), -0.3 + 0.6 * u, 0.25 * std::cos(6.2831853 * u)};
    p.log_scale = {log_s, log_s, log_s};
    p.rot = {1.0 - 0.1 * u, 0.2 * u, 0.05, 0.0};
    p.opacity_logit = 2.0;
    p.f_dc = f_dc;
    p.point_id = static_cast<std::uint64_t>(j);
    c.points.push_back(p);
  }
  return c;
}

SceneAssets make_scene(int n_objects, int pts, bool pair, std::uint64_t net_seed,
                       std::vector<Vec3> colors = {}) {
  SceneAssets s;
  while (static_cast<int>(colors.size()) < n_objects)
    colors.push_back({0.4 - 0.2 * colors.size(), -0.2, 0.1 * colors.size()});
  for (int i = 0; i < n_objects; ++i) {
    SceneObject ob;
    ob.label = "obj" + std::to_string(i);
    ob.cloud = ring_cloud(pts, colors[static_cast<std::size_t>(i)], std::log(0.05));
    ob.cloud.object_label = ob.label;
    s.objects.push_back(std::move(ob));

    ObjectTrack track;
    track.label = "obj" + std::to_string(i);
    track.init_pos = {n_objects == 1 ? 0.0 : -0.5 + 1.0 * i / (n_objects - 1), 0.0, 0.0};
    track.velocity.push_back({0.0, 1.0, {0.0, 0.0, 0.0}});
    s.timeline.objects.push_back(std::move(track));
  }
  if (pair) s.timeline.transitions.push_back({0, 1, 0.4, 0.6});
  s.timeline.frame_count = 4;
  s.frame_count = 4;
  s.nets = make_net_bundle(net_seed, static_cast<std::size_t>(n_objects), pair ? 1 : 0);
  s.gate.kind = GateKind::kTrainOpacity;
  s.camera.width = 48;
  s.camera.height = 48;
  return s;
}

struct ZeroGuidance : GuidanceProvider {
  GuidanceResult evaluate(const GuidanceQuery& q) override {
    GuidanceResult r;
    r.grad = Tensor(q.rendered->rows, q.rendered->cols);
    return r;
  }
  bool view_free() const override { return true; }
};

bool clouds_equal(const GaussianCloud& a, const GaussianCloud& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const GaussianPoint &p = a.points[i], &q = b.points[i];
    if (p.pos.x != q.pos.x || p.pos.y != q.pos.y || p.pos.z != q.pos.z) return false;
    if (p.log_scale.x != q.log_scale.x || p.log_scale.y != q.log_scale.y ||
        p.log_scale.z != q.log_scale.z)
      return false;
    if (p.rot.w != q.rot.w || p.rot.x != q.rot.x || p.rot.y != q.rot.y || p.rot.z != q.rot.z)
      return false;
    if (p.opacity_logit != q.opacity_logit) return false;
    if (p.f_dc.x != q.f_dc.x || p.f_dc.y != q.f_dc.y || p.f_dc.z != q.f_dc.z) return false;
    if (p.point_id != q.point_id) return false;
  }
  return true;
}

template <typename Fn>
std::string code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_SUITE("guidance") {
  TEST_CASE("identical tensors give zero loss and gradient") {
    Tensor a(5, 3);
    for (std::size_t k = 0; k < a.size(); ++k) a.v[k] = 0.1 * static_cast<double>(k);
    const GuidanceResult r = reconstruction_result(a, a);
    CHECK(r.loss == 0.0);
    for (double g : r.grad.v) CHECK(g == 0.0);
    CHECK(r.grad.rows == 5);
    CHECK(r.grad.cols == 3);
  }

  TEST_CASE("single pixel case matches hand computation") {
    Tensor rendered(1, 3), target(1, 3);
    for (int c = 0; c < 3; ++c) {
      rendered.at(0, c) = 0.5;
      target.at(0, c) = 1.0;
    }
    const GuidanceResult r = reconstruction_result(rendered, target);
    CHECK(r.loss == doctest::Approx(0.75).epsilon(1e-15));
    for (double g : r.grad.v) CHECK(g == doctest::Approx(-1.0).epsilon(1e-15));
  }

  TEST_CASE("loss divides by rows not elements") {
    Tensor rendered(4, 3), target(4, 3);
    rendered.at(2, 1) = 2.0;
    const GuidanceResult r = reconstruction_result(rendered, target);
    CHECK(r.loss == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.grad.at(2, 1) == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("matches the tape mse gradient") {
    Tensor rendered(6, 3), target(6, 3);
    for (std::size_t k = 0; k < rendered.size(); ++k) {
      rendered.v[k] = std::sin(0.7 * static_cast<double>(k));
      target.v[k] = std::cos(0.3 * static_cast<double>(k));
    }
    const GuidanceResult r = reconstruction_result(rendered, target);

    Tape tape;
    const int pred = tape.param(rendered);
    const int tgt = tape.input(target);
    const int loss = tape.mse(pred, tgt);
    tape.backward();
    CHECK(r.loss == tape.value(loss).at(0, 0));
    const Tensor& g = tape.grad(pred);
    REQUIRE(g.size() == r.grad.size());
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(r.grad.v[k] == g.v[k]);
  }

  TEST_CASE("shape mismatch raises guidance.shape") {
    Tensor a(4, 3), b(5, 3), c(4, 1);
    CHECK(code_of([&] { reconstruction_result(a, b); }) == "guidance.shape");
    CHECK(code_of([&] { reconstruction_result(a, c); }) == "guidance.shape");
    CHECK(code_of([&] { reconstruction_result(Tensor(), Tensor()); }) == "guidance.shape");
  }

  TEST_CASE("frame indexed provider selects its target") {
    std::vector<Tensor> frames;
    for (int f = 0; f < 3; ++f) {
      Tensor t(2, 3);
      for (double& v : t.v) v = 0.25 * f;
      frames.push_back(t);
    }
    ReconstructionGuidance prov(frames);
    CHECK_FALSE(prov.view_free());
    Tensor rendered(2, 3);
    for (double& v : rendered.v) v = 0.25;
    GuidanceQuery q;
    q.rendered = &rendered;
    q.frame = 1;
    CHECK(prov.evaluate(q).loss == 0.0);
    q.frame = 0;
    CHECK(prov.evaluate(q).loss > 0.0);
    q.frame = 3;
    CHECK(code_of([&] { prov.evaluate(q); }) == "guidance.shape");
    q.frame = -1;
    CHECK(code_of([&] { prov.evaluate(q); }) == "guidance.shape");
  }

  TEST_CASE("frame batch factory wraps rendered targets") {
    SceneAssets scene = make_scene(1, 6, false, 11);
    const FrameBatch batch = render_sequence(scene, scene.camera, 3);
    auto prov = reconstruction_guidance(batch);
    REQUIRE(prov != nullptr);
    CHECK_FALSE(prov->view_free());
    const Tensor rendered = image_to_tensor(batch.frames[2]);
    GuidanceQuery q;
    q.rendered = &rendered;
    q.frame = 2;
    CHECK(prov->evaluate(q).loss == 0.0);
  }

  TEST_CASE("callback provider forwards query fields") {
    Camera seen;
    double seen_t = -1.0;
    int seen_frame = -2;
    CallbackGuidance prov(
        [&](const Camera& cam, double t, int frame) {
          seen = cam;
          seen_t = t;
          seen_frame = frame;
          return Tensor(2, 3);
        },
        true);
    CHECK(prov.view_free());
    Tensor rendered(2, 3);
    GuidanceQuery q;
    q.rendered = &rendered;
    q.camera.azimuth_deg = 77.0;
    q.time = 0.375;
    q.frame = 5;
    prov.evaluate(q);
    CHECK(seen.azimuth_deg == 77.0);
    CHECK(seen_t == 0.375);
    CHECK(seen_frame == 5);
  }

  TEST_CASE("scene oracle scores its own render at zero") {
    SceneAssets scene = make_scene(2, 8, true, 7);
    auto prov = scene_oracle_guidance(scene);
    CHECK(prov->view_free());
    Camera cam = scene.camera;
    cam.azimuth_deg = 33.0;
    const Tensor rendered = image_to_tensor(render_frame(snapshot_at(scene, 0.5, 2), cam));
    GuidanceQuery q;
    q.rendered = &rendered;
    q.camera = cam;
    q.time = 0.5;
    q.frame = 2;
    CHECK(prov->evaluate(q).loss == 0.0);
    // a fresh static scene is time independent, so probe the camera instead
    q.camera.azimuth_deg = 120.0;
    CHECK(prov->evaluate(q).loss > 0.0);
  }
}

TEST_SUITE("adam") {
  TEST_CASE("zero gradient leaves parameters bitwise unchanged") {
    std::vector<double> params{0.25, -1.5, 3.75};
    const std::vector<double> before = params;
    std::vector<double> grad(3, 0.0);
    AdamState st;
    AdamConfig cfg;
    adam_step(params.data(), grad.data(), 3, st, cfg);
    CHECK(params == before);
    CHECK(st.step == 1);
    adam_step(params.data(), grad.data(), 3, st, cfg);
    CHECK(params == before);
    CHECK(st.step == 2);
  }

  TEST_CASE("first step moves by about lr against the gradient sign") {
    std::vector<double> params{1.0, 1.0};
    std::vector<double> grad{0.5, -2.0};
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 0.01;
    adam_step(params.data(), grad.data(), 2, st, cfg);
    CHECK(params[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(params[1] == doctest::Approx(1.0 + 0.01).epsilon(1e-6));
  }

  TEST_CASE("matches an independent scalar reference over several steps") {
    double param = 0.8;
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 0.05;

    double ref = 0.8, m = 0.0, v = 0.0;
    for (int k = 1; k <= 7; ++k) {
      const double g = std::sin(0.9 * k);
      adam_step(&param, &g, 1, st, cfg);
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double mhat = m / (1.0 - std::pow(cfg.beta1, k));
      const double vhat = v / (1.0 - std::pow(cfg.beta2, k));
      ref = ref - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      CHECK(param == ref);
    }
    CHECK(st.step == 7);
  }

  TEST_CASE("float storage runs the same math in double") {
    std::vector<float> fparams{1.0f, -0.5f};
    std::vector<double> grad{0.3, 0.3};
    AdamState fst;
    AdamConfig cfg;
    adam_step(fparams.data(), grad.data(), 2, fst, cfg);

    std::vector<double> dparams{1.0, -0.5};
    AdamState dst;
    adam_step(dparams.data(), grad.data(), 2, dst, cfg);
    CHECK(fparams[0] == static_cast<float>(dparams[0]));
    CHECK(fparams[1] == static_cast<float>(dparams[1]));
    CHECK(fst.m == dst.m);
    CHECK(fst.v == dst.v);
  }

  TEST_CASE("non-finite gradients abort with train.nan") {
    std::vector<double> params{1.0};
    std::vector<double> grad{std::nan("")};
    AdamState st;
    AdamConfig cfg;
    CHECK(code_of([&] { adam_step(params.data(), grad.data(), 1, st, cfg); }) == "train.nan");
    grad[0] = std::numeric_limits<double>::infinity();
    AdamState st2;
    CHECK(code_of([&] { adam_step(params.data(), grad.data(), 1, st2, cfg); }) == "train.nan");
  }

  TEST_CASE("state sized for another group is rejected") {
    std::vector<double> params{1.0, 2.0};
    std::vector<double> grad{0.1, 0.1};
    AdamState st;
    st.m.assign(5, 0.0);
    st.v.assign(5, 0.0);
    AdamConfig cfg;
    CHECK(code_of([&] { adam_step(params.data(), grad.data(), 2, st, cfg); }) == "train.nan");
  }
}

TEST_SUITE("trainer") {
  TEST_CASE("densify prunes, clones, and splits by the documented rules") {
    GaussianCloud cloud;
    for (int j = 0; j < 4; ++j) {
      GaussianPoint p;
      p.pos = {static_cast<double>(j), 0.0, 0.0};
      p.log_scale = {std::log(0.005), std::log(0.004), std::log(0.003)};
      p.opacity_logit = 2.0;
      p.f_dc = {0.1, 0.2, 0.3};
      p.point_id = static_cast<std::uint64_t>(10 + j);
      cloud.points.push_back(p);
    }
    cloud.points[1].opacity_logit = -8.0;                     // prune
    cloud.points[3].log_scale = {std::log(0.05), std::log(0.01), std::log(0.01)};  // split
    DensifyConfig cfg;
    const std::vector<double> mean_grad{1e-5, 1.0, 1e-3, 1e-3};

    const DensifyResult res = densify(cloud, mean_grad, cfg);
    CHECK(res.pruned == 1);
    CHECK(res.cloned == 1);
    CHECK(res.split == 1);
    // 4 points: one survivor, one pruned, two replaced by two children each
    REQUIRE(res.cloud.size() == 5);
    REQUIRE(res.parent.size() == 5);
    REQUIRE(res.fresh.size() == 5);

    // survivor first, children appended in walk order with fresh ids
    CHECK(res.cloud.points[0].point_id == 10);
    CHECK(res.fresh[0] == 0);
    CHECK(res.parent[0] == 0);
    CHECK(res.cloud.points[1].point_id == 14);
    CHECK(res.cloud.points[2].point_id == 15);
    CHECK(res.cloud.points[3].point_id == 16);
    CHECK(res.cloud.points[4].point_id == 17);
    for (int k = 1; k < 5; ++k) CHECK(res.fresh[static_cast<std::size_t>(k)] == 1);
    CHECK(res.parent[1] == 2);
    CHECK(res.parent[2] == 2);
    CHECK(res.parent[3] == 3);
    CHECK(res.parent[4] == 3);

    // clone children: +/- 0.5 s_max along the principal axis, scales kept
    const double s_max_clone = 0.005;
    CHECK(res.cloud.points[1].pos.x == doctest::Approx(2.0 + 0.5 * s_max_clone).epsilon(1e-12));
    CHECK(res.cloud.points[2].pos.x == doctest::Approx(2.0 - 0.5 * s_max_clone).epsilon(1e-12));
    CHECK(res.cloud.points[1].log_scale.x == cloud.points[2].log_scale.x);

    // split children: offset by 0.5 * 0.05 and shrunk by 1.6 on every axis
    CHECK(res.cloud.points[3].pos.x == doctest::Approx(3.0 + 0.025).epsilon(1e-12));
    CHECK(res.cloud.points[4].pos.x == doctest::Approx(3.0 - 0.025).epsilon(1e-12));
    CHECK(res.cloud.points[3].log_scale.x ==
          doctest::Approx(std::log(0.05) - std::log(1.6)).epsilon(1e-12));
    CHECK(res.cloud.points[3].log_scale.y ==
          doctest::Approx(std::log(0.01) - std::log(1.6)).epsilon(1e-12));

    // ids stay sorted ascending
    for (std::size_t k = 1; k < res.cloud.size(); ++k)
      CHECK(res.cloud.points[k - 1].point_id < res.cloud.points[k].point_id);

    CHECK(code_of([&] { densify(cloud, {1.0, 2.0}, cfg); }) == "train.points");
  }

  TEST_CASE("densify keeps an untouched cloud identical") {
    const GaussianCloud cloud = ring_cloud(6, {0.2, 0.1, 0.0}, std::log(0.05));
    const DensifyResult res = densify(cloud, std::vector<double>(6, 0.0), DensifyConfig{});
    CHECK(res.cloned == 0);
    CHECK(res.split == 0);
    CHECK(res.pruned == 0);
    CHECK(clouds_equal(res.cloud, cloud));
  }

  TEST_CASE("zero gradient training changes nothing") {
    SceneAssets scene = make_scene(2, 6, true, 3);
    const GaussianCloud before0 = scene.objects[0].cloud;
    const GaussianCloud before1 = scene.objects[1].cloud;
    const std::uint64_t nets_before = bundle_hash(scene.nets);

    ZeroGuidance zero;
    TrainConfig cfg;
    cfg.phase = TrainPhase::kRefine;
    cfg.steps = 3;
    cfg.densify_enabled = false;
    const TrainReport rep = train(scene, zero, cfg);
    CHECK(rep.steps_run == 3);
    for (double l : rep.losses) CHECK(l == 0.0);
    CHECK(clouds_equal(scene.objects[0].cloud, before0));
    CHECK(clouds_equal(scene.objects[1].cloud, before1));
    CHECK(bundle_hash(scene.nets) == nets_before);

    cfg.phase = TrainPhase::kDynamics;
    const TrainReport rep2 = train(scene, zero, cfg);
    CHECK(rep2.steps_run == 3);
    CHECK(clouds_equal(scene.objects[0].cloud, before0));
    CHECK(bundle_hash(scene.nets) == nets_before);
  }

  TEST_CASE("dynamics trains nets and leaves clouds bitwise") {
    SceneAssets scene = make_scene(2, 6, true, 3);
    SceneAssets reference = make_scene(2, 6, true, 3, {{0.8, -0.4, -0.4}, {-0.4, -0.4, 0.8}});
    const GaussianCloud before0 = scene.objects[0].cloud;
    const GaussianCloud before1 = scene.objects[1].cloud;
    const std::uint64_t nets_before = bundle_hash(scene.nets);

    auto prov = scene_oracle_guidance(reference);
    TrainConfig cfg;
    cfg.phase = TrainPhase::kDynamics;
    cfg.steps = 3;
    const TrainReport rep = train(scene, *prov, cfg);
    CHECK(rep.steps_run == 3);
    CHECK(rep.losses[0] > 0.0);
    CHECK(clouds_equal(scene.objects[0].cloud, before0));
    CHECK(clouds_equal(scene.objects[1].cloud, before1));
    CHECK(bundle_hash(scene.nets) != nets_before);
  }

  TEST_CASE("refine trains clouds under frozen nets") {
    SceneAssets scene = make_scene(1, 8, false, 5);
    SceneAssets reference = make_scene(1, 8, false, 5, {{0.9, 0.9, 0.9}});
    const std::uint64_t nets_before = bundle_hash(scene.nets);

    auto prov = reconstruction_guidance(render_sequence(reference, scene.camera, 4));
    TrainConfig cfg;
    cfg.phase = TrainPhase::kRefine;
    cfg.steps = 20;
    cfg.densify_enabled = false;
    const TrainReport rep = train(scene, *prov, cfg);
    CHECK(rep.steps_run == 20);
    CHECK(bundle_hash(scene.nets) == nets_before);
    CHECK_FALSE(clouds_equal(scene.objects[0].cloud, ring_cloud(8, {0.4, -0.2, 0.0}, std::log(0.05))));
    // frame 0 revisited every 4 steps; loss must have dropped on it
    CHECK(rep.losses[16] < rep.losses[0]);
  }

  TEST_CASE("schedule seeds steer transition probabilities") {
    SceneAssets scene = make_scene(2, 6, true, 9);
    ZeroGuidance zero;
    TrainConfig cfg;
    cfg.phase = TrainPhase::kDynamics;
    cfg.steps = 120;
    cfg.schedule_weight = 1.0;
    train(scene, zero, cfg);

    const auto mean_p = [&](std::size_t obj, double t) {
      Tape tape;
      const SceneTape st = record_scene(tape, scene, t, scene.camera, false, false);
      const Tensor& p = tape.value(st.objects[obj].p);
      double sum = 0.0;
      for (double v : p.v) sum += v;
      return sum / p.rows;
    };
    // target object ramps up across [0.4, 0.6]; source object ramps down
    CHECK(mean_p(1, 0.0) < 0.35);
    CHECK(mean_p(1, 1.0) > 0.65);
    CHECK(mean_p(0, 0.0) > 0.65);
    CHECK(mean_p(0, 1.0) < 0.35);
  }

  TEST_CASE("refine densifies where gradients concentrate") {
    SceneAssets scene = make_scene(1, 8, false, 13);
    SceneAssets reference = make_scene(1, 8, false, 13, {{0.9, 0.9, -0.9}});
    auto prov = scene_oracle_guidance(reference);
    TrainConfig cfg;
    cfg.phase = TrainPhase::kRefine;
    cfg.steps = 6;
    cfg.densify.interval = 3;
    TrainState state;
    const TrainReport rep = train(scene, *prov, cfg, "", &state);
    CHECK(rep.steps_run == 6);
    CHECK(scene.objects[0].cloud.size() > 8);
    for (std::size_t k = 1; k < scene.objects[0].cloud.size(); ++k)
      CHECK(scene.objects[0].cloud.points[k - 1].point_id <
            scene.objects[0].cloud.points[k].point_id);
    // snapshot tracks the new sizes
    CHECK(state.clouds[0].size() == scene.objects[0].cloud.size());
    CHECK(state.densify_sum[0].size() == scene.objects[0].cloud.size());
  }

  TEST_CASE("dynamics never changes point counts") {
    SceneAssets scene = make_scene(2, 6, true, 3);
    SceneAssets reference = make_scene(2, 6, true, 3, {{0.8, -0.4, -0.4}, {-0.4, -0.4, 0.8}});
    auto prov = scene_oracle_guidance(reference);
    TrainConfig cfg;
    cfg.phase = TrainPhase::kDynamics;
    cfg.steps = 4;
    cfg.densify_enabled = true;  // must be ignored in dynamics
    cfg.densify.interval = 1;
    train(scene, *prov, cfg);
    CHECK(scene.objects[0].cloud.size() == 6);
    CHECK(scene.objects[1].cloud.size() == 6);
  }

  TEST_CASE("state files round trip and reject corruption") {
    SceneAssets scene = make_scene(2, 5, true, 21);
    ZeroGuidance zero;
    TrainConfig cfg;
    cfg.phase = TrainPhase::kRefine;
    cfg.steps = 2;
    cfg.densify_enabled = false;
    TrainState state;
    train(scene, zero, cfg, "", &state);
    CHECK(state.step == 2);

    const auto bytes = serialize_state(state);
    const TrainState back = parse_state(bytes);
    CHECK(serialize_state(back) == bytes);
    CHECK(back.phase == TrainPhase::kRefine);
    CHECK(back.step == 2);
    REQUIRE(back.clouds.size() == 2);
    CHECK(clouds_equal(back.clouds[0], scene.objects[0].cloud));
    CHECK(bundle_hash(back.nets) == bundle_hash(scene.nets));

    const fs::path dir = temp_dir("state");
    save_state(state, (dir / "s.t4ds").string());
    CHECK(serialize_state(load_state((dir / "s.t4ds").string())) == bytes);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK(code_of([&] { parse_state(bad); }) == "state.magic");
    bad = bytes;
    bad[4] = 9;
    CHECK(code_of([&] { parse_state(bad); }) == "state.version");
    bad = bytes;
    bad.pop_back();
    CHECK(code_of([&] { parse_state(bad); }) == "state.parse");
    bad = bytes;
    bad.push_back(0);
    CHECK(code_of([&] { parse_state(bad); }) == "state.parse");
    CHECK(code_of([&] { load_state((dir / "missing.t4ds").string()); }) == "state.io");
    fs::remove_all(dir);
  }

  TEST_CASE("interrupted training resumes bit for bit") {
    const auto build = [] { return make_scene(2, 6, true, 17); };
    const auto reference = make_scene(2, 6, true, 17, {{0.7, -0.3, 0.1}, {-0.2, 0.5, 0.4}});

    TrainConfig cfg;
    cfg.phase = TrainPhase::kRefine;
    cfg.steps = 6;
    cfg.densify.interval = 2;

    SceneAssets full = build();
    auto prov1 = scene_oracle_guidance(reference);
    TrainState full_state;
    train(full, *prov1, cfg, "", &full_state);

    SceneAssets half = build();
    auto prov2 = scene_oracle_guidance(reference);
    TrainConfig half_cfg = cfg;
    half_cfg.steps = 3;
    TrainState mid;
    train(half, *prov2, half_cfg, "", &mid);
    CHECK(mid.step == 3);

    // round trip the state through bytes, then continue on a fresh scene
    TrainState resumed = parse_state(serialize_state(mid));
    SceneAssets cont = build();
    auto prov3 = scene_oracle_guidance(reference);
    train(cont, *prov3, cfg, "", &resumed);

    CHECK(serialize_state(resumed) == serialize_state(full_state));
    CHECK(clouds_equal(cont.objects[0].cloud, full.objects[0].cloud));
    CHECK(clouds_equal(cont.objects[1].cloud, full.objects[1].cloud));
    CHECK(bundle_hash(cont.nets) == bundle_hash(full.nets));
  }

  TEST_CASE("phase mismatch on resume is rejected") {
    SceneAssets scene = make_scene(1, 5, false, 2);
    ZeroGuidance zero;
    TrainConfig cfg;
    cfg.phase = TrainPhase::kDynamics;
    cfg.steps = 1;
    TrainState state;
    train(scene, zero, cfg, "", &state);

    TrainConfig other = cfg;
    other.phase = TrainPhase::kRefine;
    other.steps = 2;
    other.densify_enabled = false;
    CHECK(code_of([&] { train(scene, zero, other, "", &state); }) == "train.phase");
  }

  TEST_CASE("fixed point budget is enforced at start") {
    SceneAssets scene = make_scene(2, 5, true, 2);
    ZeroGuidance zero;
    TrainConfig cfg;
    cfg.phase = TrainPhase::kDynamics;
    cfg.steps = 1;
    cfg.fixed_points = 11;
    CHECK(code_of([&] { train(scene, zero, cfg); }) == "train.points");
    cfg.fixed_points = 10;
    CHECK(train(scene, zero, cfg).steps_run == 1);
  }

  TEST_CASE("non-finite guidance aborts with the step index") {
    SceneAssets scene = make_scene(1, 5, false, 2);
    CallbackGuidance bad(
        [](const Camera& cam, double, int) {
          Tensor t(cam.width * cam.height, 3);
          t.v[0] = std::nan("");
          return t;
        },
        true);
    TrainConfig cfg;
    cfg.phase = TrainPhase::kDynamics;
    cfg.steps = 2;
    try {
      train(scene, bad, cfg);
      FAIL("expected train.nan");
    } catch (const Error& e) {
      CHECK(e.code() == "train.nan");
      CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
  }

  TEST_CASE("run directory holds config, losses, and checkpoints") {
    const fs::path dir = temp_dir("rundir");
    SceneAssets scene = make_scene(2, 5, true, 8);
    SceneAssets reference = make_scene(2, 5, true, 8, {{0.6, 0.0, 0.0}, {0.0, 0.0, 0.6}});
    auto prov = scene_oracle_guidance(reference);
    TrainConfig cfg;
    cfg.phase = TrainPhase::kDynamics;
    cfg.steps = 4;
    cfg.checkpoint_interval = 2;
    const TrainReport rep = train(scene, *prov, cfg, dir.string());

    const nlohmann::json conf = nlohmann::json::parse(std::ifstream(dir / "config.json"));
    CHECK(conf.at("phase") == "dynamics");
    CHECK(conf.at("steps") == 4);
    CHECK(conf.at("objects").size() == 2);

    std::ifstream csv(dir / "loss.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "step,loss,wall_ms");
    int rows = 0;
    double first_loss = -1.0;
    while (std::getline(csv, line)) {
      if (rows == 0) first_loss = std::stod(line.substr(line.find(',') + 1));
      ++rows;
    }
    CHECK(rows == 4);
    CHECK(first_loss == rep.losses[0]);

    CHECK(fs::exists(dir / "state_000002.t4ds"));
    CHECK(fs::exists(dir / "nets_000002.t4dn"));
    CHECK_FALSE(fs::exists(dir / "state_000004.t4ds"));  // final step writes *_final
    CHECK(bundle_hash(load_checkpoint((dir / "nets_final.t4dn").string())) ==
          bundle_hash(scene.nets));
    const TrainState fin = load_state((dir / "state_final.t4ds").string());
    CHECK(fin.step == 4);
    CHECK(fs::exists(dir / "object_00_obj0.ply"));
    CHECK(fs::exists(dir / "object_01_obj1.ply"));
    fs::remove_all(dir);
  }

  TEST_CASE("wrapper entry points pin their phases") {
    SceneAssets scene = make_scene(1, 5, false, 2);
    ZeroGuidance zero;
    TrainConfig cfg;
    cfg.steps = 1;
    cfg.phase = TrainPhase::kRefine;  // overridden by the wrapper
    const std::uint64_t nets_before = bundle_hash(scene.nets);
    train_dynamics(scene, zero, cfg);
    CHECK(bundle_hash(scene.nets) == nets_before);  // zero grads, but ran as dynamics
    cfg.phase = TrainPhase::kDynamics;
    cfg.densify_enabled = false;
    const GaussianCloud before = scene.objects[0].cloud;
    train_refine(scene, zero, cfg);
    CHECK(clouds_equal(scene.objects[0].cloud, before));
  }
}
