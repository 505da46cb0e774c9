#include "t4d/scene.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "t4d/error.hpp"
#include "t4d/kinematics.hpp"
#include "t4d/plan.hpp"
#include "t4d/ply.hpp"
#include "t4d/primitives.hpp"
#include "t4d/renderer.hpp"
#include "t4d/toml_lite.hpp"

namespace t4d {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string resolve_path(const std::string& base, const std::string& rel) {
  if (rel.empty() || base.empty()) return rel;
  fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(base) / p).string();
}

const json* find_key(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& require_key(const json& obj, const char* key, const std::string& ctx) {
  const json* v = find_key(obj, key);
  if (!v) throw Error("manifest.missing", ctx + " requires '" + key + "'");
  return *v;
}

std::string str_of(const json& v, const std::string& ctx) {
  if (!v.is_string()) throw Error("manifest.type", ctx + " must be a string");
  return v.get<std::string>();
}

double num_of(const json& v, const std::string& ctx) {
  if (!v.is_number()) throw Error("manifest.type", ctx + " must be a number");
  return v.get<double>();
}

std::int64_t int_of(const json& v, const std::string& ctx) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw Error("manifest.type", ctx + " must be an integer");
  }
  return v.get<std::int64_t>();
}

std::uint64_t seed_of(const json& v, const std::string& ctx) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const std::int64_t s = int_of(v, ctx);
  if (s < 0) throw Error("manifest.type", ctx + " must be nonnegative");
  return static_cast<std::uint64_t>(s);
}

bool bool_of(const json& v, const std::string& ctx) {
  if (!v.is_boolean()) throw Error("manifest.type", ctx + " must be a boolean");
  return v.get<bool>();
}

Vec3 vec3_of(const json& v, const std::string& ctx) {
  if (!v.is_array() || v.size() != 3) {
    throw Error("manifest.type", ctx + " must be an array of 3 numbers");
  }
  return {num_of(v[0], ctx), num_of(v[1], ctx), num_of(v[2], ctx)};
}

ObjectSpec parse_object(const json& doc, std::size_t index, const std::string& base_dir) {
  const std::string ctx = "objects[" + std::to_string(index) + "]";
  if (!doc.is_object()) throw Error("manifest.type", ctx + " must be a table");
  ObjectSpec spec;
  spec.label = str_of(require_key(doc, "label", ctx), ctx + ".label");
  if (spec.label.empty()) throw Error("manifest.label", ctx + " has an empty label");
  if (const json* v = find_key(doc, "prompt")) spec.prompt = str_of(*v, ctx + ".prompt");

  const json* ply = find_key(doc, "ply");
  const json* prim = find_key(doc, "primitive");
  if (!!ply == !!prim) {
    throw Error("manifest.object",
                ctx + " needs exactly one of 'ply' or 'primitive'");
  }
  if (ply) {
    spec.ply_path = resolve_path(base_dir, str_of(*ply, ctx + ".ply"));
    if (spec.ply_path.empty()) throw Error("manifest.object", ctx + ".ply is empty");
  } else {
    spec.primitive = str_of(*prim, ctx + ".primitive");
    try {
      primitive_kind_from(spec.primitive);
    } catch (const Error&) {
      throw Error("manifest.object",
                  ctx + ".primitive '" + spec.primitive + "' is not a known kind");
    }
  }
  if (const json* v = find_key(doc, "points")) {
    const std::int64_t n = int_of(*v, ctx + ".points");
    if (n < 1) throw Error("manifest.type", ctx + ".points must be >= 1");
    spec.points = static_cast<int>(n);
  }
  if (const json* v = find_key(doc, "seed")) spec.seed = seed_of(*v, ctx + ".seed");
  if (const json* v = find_key(doc, "color")) spec.color = vec3_of(*v, ctx + ".color");
  if (const json* v = find_key(doc, "scale")) {
    spec.scale = num_of(*v, ctx + ".scale");
    if (!(spec.scale > 0.0) || !std::isfinite(spec.scale)) {
      throw Error("manifest.type", ctx + ".scale must be positive");
    }
  }
  return spec;
}

GateConfig parse_gate(const json& doc) {
  if (!doc.is_object()) throw Error("manifest.type", "gate must be a table");
  GateConfig gate;
  if (const json* v = find_key(doc, "mode")) {
    const std::string name = str_of(*v, "gate.mode");
    try {
      gate.kind = gate_kind_from(name);
    } catch (const Error&) {
      throw Error("manifest.type",
                  "gate.mode must be train_opacity, bernoulli, or threshold");
    }
  }
  if (const json* v = find_key(doc, "seed")) gate.seed = seed_of(*v, "gate.seed");
  return gate;
}

Camera parse_camera(const json& doc) {
  if (!doc.is_object()) throw Error("manifest.type", "camera must be a table");
  Camera cam;
  if (const json* v = find_key(doc, "azimuth")) cam.azimuth_deg = num_of(*v, "camera.azimuth");
  if (const json* v = find_key(doc, "elevation")) {
    cam.elevation_deg = num_of(*v, "camera.elevation");
  }
  if (const json* v = find_key(doc, "radius")) cam.radius = num_of(*v, "camera.radius");
  if (const json* v = find_key(doc, "fov")) cam.fov_deg = num_of(*v, "camera.fov");
  if (const json* v = find_key(doc, "width")) {
    cam.width = static_cast<int>(int_of(*v, "camera.width"));
  }
  if (const json* v = find_key(doc, "height")) {
    cam.height = static_cast<int>(int_of(*v, "camera.height"));
  }
  if (const json* v = find_key(doc, "target")) cam.target = vec3_of(*v, "camera.target");
  if (!(cam.radius > 0.0)) throw Error("manifest.type", "camera.radius must be > 0");
  if (!(cam.fov_deg > 0.0) || !(cam.fov_deg < 180.0)) {
    throw Error("manifest.type", "camera.fov must be in (0, 180)");
  }
  if (cam.width < 1 || cam.height < 1) {
    throw Error("manifest.type", "camera.width/height must be >= 1");
  }
  return cam;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(fs::path(path))) {
    throw Error("manifest.path", what + " not found: " + path);
  }
}

std::vector<std::size_t> pairs_of(const TimelineProgram& timeline, std::size_t obj) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < timeline.transitions.size(); ++k) {
    const TransitionSpec& tr = timeline.transitions[k];
    if (tr.source == static_cast<int>(obj) || tr.target == static_cast<int>(obj)) {
      out.push_back(k);
    }
  }
  return out;
}

// concat_rows is only needed when there is more than one block.
int concat_or_pass(Tape& tape, const std::vector<int>& nodes) {
  return nodes.size() == 1 ? nodes[0] : tape.concat_rows(nodes);
}

}  // namespace

SceneManifest parse_manifest(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw Error("manifest.type", "manifest must be a table");
  SceneManifest m;
  m.base_dir = base_dir;
  m.plan_path = resolve_path(base_dir, str_of(require_key(doc, "plan", "manifest"), "plan"));
  if (const json* v = find_key(doc, "checkpoint")) {
    m.checkpoint_path = resolve_path(base_dir, str_of(*v, "checkpoint"));
  }
  if (const json* v = find_key(doc, "net_seed")) m.net_seed = seed_of(*v, "net_seed");
  if (const json* v = find_key(doc, "shared_transition")) {
    m.shared_transition = bool_of(*v, "shared_transition");
  }
  if (const json* v = find_key(doc, "frame_count")) {
    const std::int64_t f = int_of(*v, "frame_count");
    if (f < 1) throw Error("manifest.type", "frame_count must be >= 1");
    m.frame_count = static_cast<int>(f);
  }
  if (const json* v = find_key(doc, "gate")) m.gate = parse_gate(*v);
  if (const json* v = find_key(doc, "camera")) m.camera = parse_camera(*v);

  const json& objs = require_key(doc, "objects", "manifest");
  if (!objs.is_array()) throw Error("manifest.type", "objects must be an array of tables");
  if (objs.empty()) throw Error("manifest.missing", "objects must not be empty");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    ObjectSpec spec = parse_object(objs[i], i, base_dir);
    if (!labels.insert(spec.label).second) {
      throw Error("manifest.label", "duplicate object label '" + spec.label + "'");
    }
    m.objects.push_back(std::move(spec));
  }
  return m;
}

SceneManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("manifest.path", "cannot read manifest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string base_dir = fs::path(path).parent_path().string();

  json doc;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw Error("manifest.syntax", std::string("bad manifest JSON: ") + e.what());
    }
  } else {
    try {
      doc = parse_toml(text);
    } catch (const Error& e) {
      throw Error("manifest.syntax", std::string("bad manifest TOML: ") + e.what());
    }
  }
  return parse_manifest(doc, base_dir);
}

std::size_t transition_net_index(std::size_t pair, bool shared) {
  return shared ? 0 : pair;
}

std::size_t transition_net_count(const TimelineProgram& timeline, bool shared) {
  if (timeline.transitions.empty()) return 0;
  return shared ? 1 : timeline.transitions.size();
}

std::uint64_t splat_id(std::size_t obj_index, std::uint64_t point_id) {
  return (static_cast<std::uint64_t>(obj_index) << 40) | point_id;
}

SceneAssets load_scene(const SceneManifest& manifest) {
  SceneAssets scene;
  scene.gate = manifest.gate;
  scene.camera = manifest.camera;
  scene.frame_count = manifest.frame_count;
  scene.shared_transition = manifest.shared_transition;

  require_file(manifest.plan_path, "plan");
  const PlanDocument plan = load_plan(manifest.plan_path);
  scene.timeline = compile_timeline(plan, manifest.frame_count);
  if (scene.timeline.object_count() != manifest.objects.size()) {
    throw Error("scene.objects",
                "manifest lists " + std::to_string(manifest.objects.size()) +
                    " objects but the plan has " +
                    std::to_string(scene.timeline.object_count()));
  }

  for (const ObjectSpec& spec : manifest.objects) {
    SceneObject obj;
    obj.label = spec.label;
    obj.prompt = spec.prompt;
    if (!spec.ply_path.empty()) {
      require_file(spec.ply_path, "object '" + spec.label + "' ply");
      obj.cloud = load_ply(spec.ply_path, true);
    } else {
      obj.cloud = make_primitive(spec.primitive, static_cast<std::size_t>(spec.points),
                                 spec.seed, spec.color);
    }
    if (spec.scale != 1.0) scale_cloud(obj.cloud, spec.scale);
    if (obj.cloud.empty()) {
      throw Error("scene.objects", "object '" + spec.label + "' has no points");
    }
    obj.cloud.object_label = spec.label;
    scene.objects.push_back(std::move(obj));
  }

  const std::size_t want = transition_net_count(scene.timeline, scene.shared_transition);
  if (!manifest.checkpoint_path.empty()) {
    require_file(manifest.checkpoint_path, "checkpoint");
    scene.nets = load_checkpoint(manifest.checkpoint_path);
    if (scene.nets.deforms.size() != scene.objects.size() ||
        scene.nets.transitions.size() != want) {
      throw Error("scene.nets",
                  "checkpoint holds " + std::to_string(scene.nets.deforms.size()) +
                      " deformation and " + std::to_string(scene.nets.transitions.size()) +
                      " transition nets; scene needs " +
                      std::to_string(scene.objects.size()) + " and " + std::to_string(want));
    }
  } else {
    scene.nets = make_net_bundle(manifest.net_seed, scene.objects.size(), want);
  }
  return scene;
}

SceneSnapshot snapshot_at(const SceneAssets& scene, double t, int frame) {
  SceneSnapshot snap;
  snap.time = t;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const GaussianCloud& cloud = scene.objects[i].cloud;
    const Pose pose = object_pose(scene.timeline, i, t);
    const std::vector<std::size_t> pairs = pairs_of(scene.timeline, i);
    const std::size_t n = cloud.size();

    std::vector<SplatInstance> inst(n);
    std::vector<double> p(n, 1.0);
    std::vector<std::uint64_t> ids(n);
    for (std::size_t j = 0; j < n; ++j) {
      const GaussianPoint& gp = cloud.points[j];
      const Vec3 xw = transform_point(pose, gp.pos);
      const Quat qw = pose.rotation_quat * gp.unit_rot();
      Vec3 dx;
      Quat dq;
      deform(scene.nets.deforms[i], xw, qw, t, &dx, &dq);
      const Vec3 xt = xw + dx;
      const Quat qt = (qw + dq).normalized();
      for (std::size_t k : pairs) {
        const TransitionNet& net =
            scene.nets.transitions[transition_net_index(k, scene.shared_transition)];
        p[j] *= transition_prob(net, xt, qt, t);
      }
      ids[j] = splat_id(i, gp.point_id);
      inst[j] = SplatInstance{xt, qt, gp.scale(), gp.opacity(), gp.color(), ids[j]};
    }

    if (scene.gate.kind == GateKind::kTrainOpacity) {
      for (std::size_t j = 0; j < n; ++j) {
        inst[j].alpha *= p[j];
        snap.splats.push_back(inst[j]);
      }
    } else {
      const std::vector<std::uint8_t> mask = gate_infer(scene.gate, ids, p, frame);
      for (std::size_t j = 0; j < n; ++j) {
        if (mask[j]) snap.splats.push_back(inst[j]);
      }
    }
  }
  return snap;
}

FrameBatch render_sequence(const SceneAssets& scene, const Camera& cam, int frame_count) {
  if (frame_count < 1) throw Error("manifest.type", "frame count must be >= 1");
  FrameBatch batch;
  batch.frames.reserve(frame_count);
  for (int k = 0; k < frame_count; ++k) {
    const double t = frame_count == 1 ? 0.0 : static_cast<double>(k) / (frame_count - 1);
    batch.frames.push_back(render_frame(snapshot_at(scene, t, k), cam));
    batch.times.push_back(t);
    batch.cameras.push_back(cam);
  }
  return batch;
}

SceneTape record_scene(Tape& tape, const SceneAssets& scene, double t, const Camera& cam,
                       bool train_nets, bool train_cloud) {
  SceneTape st;
  std::vector<int> pos_nodes, rot_nodes, scale_nodes, alpha_nodes, color_nodes;
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const GaussianCloud& cloud = scene.objects[i].cloud;
    const int n = static_cast<int>(cloud.size());
    Tensor pos(n, 3), rot(n, 4), lsc(n, 3), opa(n, 1), fdc(n, 3), tt(n, 1);
    for (int j = 0; j < n; ++j) {
      const GaussianPoint& gp = cloud.points[j];
      pos.at(j, 0) = gp.pos.x;
      pos.at(j, 1) = gp.pos.y;
      pos.at(j, 2) = gp.pos.z;
      rot.at(j, 0) = gp.rot.w;
      rot.at(j, 1) = gp.rot.x;
      rot.at(j, 2) = gp.rot.y;
      rot.at(j, 3) = gp.rot.z;
      lsc.at(j, 0) = gp.log_scale.x;
      lsc.at(j, 1) = gp.log_scale.y;
      lsc.at(j, 2) = gp.log_scale.z;
      opa.at(j, 0) = gp.opacity_logit;
      fdc.at(j, 0) = gp.f_dc.x;
      fdc.at(j, 1) = gp.f_dc.y;
      fdc.at(j, 2) = gp.f_dc.z;
      tt.at(j, 0) = t;
      ids.push_back(splat_id(i, gp.point_id));
    }

    ObjectNodes ob;
    ob.pos = train_cloud ? tape.param(std::move(pos)) : tape.input(std::move(pos));
    ob.rot = train_cloud ? tape.param(std::move(rot)) : tape.input(std::move(rot));
    ob.log_scale = train_cloud ? tape.param(std::move(lsc)) : tape.input(std::move(lsc));
    ob.opacity = train_cloud ? tape.param(std::move(opa)) : tape.input(std::move(opa));
    ob.f_dc = train_cloud ? tape.param(std::move(fdc)) : tape.input(std::move(fdc));
    const int tn = tape.input(std::move(tt));

    const Pose pose = object_pose(scene.timeline, i, t);
    const int qc = tape.quat_renorm(ob.rot);
    const int xw = tape.affine_rows(ob.pos, pose.rotation, pose.translation);
    const int qw = tape.quat_left_mul(pose.rotation_quat, qc);
    const DeformRecord dr =
        record_deform(tape, scene.nets.deforms[i], xw, qw, tn, train_nets);
    const int xt = tape.add(xw, dr.dx);
    const int qt = tape.quat_renorm(tape.add(qw, dr.dq));
    ob.world_pos = xt;

    int p = -1;
    for (std::size_t k : pairs_of(scene.timeline, i)) {
      const TransitionNet& net =
          scene.nets.transitions[transition_net_index(k, scene.shared_transition)];
      const int pk = record_transition(tape, net, xt, qt, tn, train_nets);
      p = p < 0 ? pk : tape.mul(p, pk);
    }
    if (p < 0) {
      Tensor ones(n, 1);
      for (double& v : ones.v) v = 1.0;
      p = tape.input(std::move(ones));
    }
    ob.p = p;

    ob.world_rot = qt;
    ob.eff_alpha = tape.mul(tape.sigmoid(ob.opacity), p);
    ob.scale = tape.exp(ob.log_scale);
    ob.color = tape.color_map(ob.f_dc);
    pos_nodes.push_back(xt);
    rot_nodes.push_back(qt);
    scale_nodes.push_back(ob.scale);
    alpha_nodes.push_back(ob.eff_alpha);
    color_nodes.push_back(ob.color);
    st.objects.push_back(ob);
  }

  st.image = tape.composite(concat_or_pass(tape, pos_nodes), concat_or_pass(tape, rot_nodes),
                            concat_or_pass(tape, scale_nodes),
                            concat_or_pass(tape, alpha_nodes),
                            concat_or_pass(tape, color_nodes), cam, std::move(ids));
  return st;
}

}  // namespace t4d
