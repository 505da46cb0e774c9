#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "t4d/camera.hpp"
#include "t4d/gate.hpp"
#include "t4d/gaussian.hpp"
#include "t4d/image.hpp"
#include "t4d/nets.hpp"
#include "t4d/tape.hpp"
#include "t4d/timeline.hpp"

namespace t4d {

// One object entry of a scene manifest. Splats come from a PLY file or a
// generated primitive, exclusively; entry order matches the plan's objects.
struct ObjectSpec {
  std::string label;
  std::string prompt;
  std::string ply_path;   // resolved against the manifest dir; empty -> primitive
  std::string primitive;  // sphere | box | torus | disk; empty -> ply
  int points = 2000;
  std::uint64_t seed = 0;
  Vec3 color{0.5, 0.5, 0.5};
  double scale = 1.0;  // uniform scale applied after load/generation
};

// Scene wiring: objects, plan path, optional net checkpoint, gate mode and
// seed, camera defaults. Stored paths are already resolved.
struct SceneManifest {
  std::vector<ObjectSpec> objects;
  std::string plan_path;
  std::string checkpoint_path;  // empty -> fresh nets seeded by net_seed
  std::uint64_t net_seed = 0;
  bool shared_transition = false;  // one transition net shared by all pairs
  GateConfig gate;
  Camera camera;
  int frame_count = 16;
  std::string base_dir;
};

// Errors: manifest.missing (required key absent), manifest.type (wrong type
// or out-of-range value), manifest.label (empty/duplicate labels),
// manifest.object (bad source spec). Relative paths resolve against base_dir.
SceneManifest parse_manifest(const nlohmann::json& doc, const std::string& base_dir);
// Reads TOML, or JSON for a .json path. Errors additionally: manifest.path
// (unreadable file), manifest.syntax (malformed text).
SceneManifest load_manifest(const std::string& path);

struct SceneObject {
  std::string label;
  std::string prompt;
  GaussianCloud cloud;
};

// Everything a manifest references, loaded and cross-checked.
struct SceneAssets {
  std::vector<SceneObject> objects;
  TimelineProgram timeline;
  NetBundle nets;
  GateConfig gate;
  Camera camera;
  int frame_count = 16;
  bool shared_transition = false;
};

// Net index evaluated for transition pair k.
std::size_t transition_net_index(std::size_t pair, bool shared);
// Transition nets a timeline needs (1 when shared and any pair exists).
std::size_t transition_net_count(const TimelineProgram& timeline, bool shared);

// Scene-wide splat id: object index in the high bits, point_id below.
std::uint64_t splat_id(std::size_t obj_index, std::uint64_t point_id);

// Loads plan + clouds + nets. Errors: manifest.path (missing file),
// scene.objects (manifest/plan object count mismatch), scene.nets
// (checkpoint net counts do not fit the scene), plus whatever the underlying
// loaders throw.
SceneAssets load_scene(const SceneManifest& manifest);

// State of the dynamic pipeline at time t: pose -> deformation -> transition
// probability product over the pairs containing the object (1 when none).
// train_opacity gates alpha *= p on every splat; bernoulli/threshold drop
// masked-out splats and leave alpha untouched. frame feeds the bernoulli
// stream only.
SceneSnapshot snapshot_at(const SceneAssets& scene, double t, int frame);

struct FrameBatch {
  std::vector<Image> frames;
  std::vector<double> times;
  std::vector<Camera> cameras;
};

// Frame k samples t_k = k/(F-1) (t=0 when F=1) through snapshot_at.
FrameBatch render_sequence(const SceneAssets& scene, const Camera& cam, int frame_count);

// Leaf and probe nodes of one object on a scene tape.
struct ObjectNodes {
  int pos = -1;        // [N,3] stored positions (leaf)
  int rot = -1;        // [N,4] stored rotations (leaf)
  int log_scale = -1;  // [N,3] (leaf)
  int opacity = -1;    // [N,1] logits (leaf)
  int f_dc = -1;       // [N,3] (leaf)
  int p = -1;          // [N,1] transition probability after the pair product
  int world_pos = -1;  // [N,3] deformed world positions
  int world_rot = -1;  // [N,4] deformed unit rotations
  int eff_alpha = -1;  // [N,1] sigmoid(opacity) * p
  int scale = -1;      // [N,3] exp(log_scale)
  int color = -1;      // [N,3] color_map(f_dc)
};

struct SceneTape {
  std::vector<ObjectNodes> objects;
  int image = -1;  // [H*W, 3] composited frame
};

// Differentiable twin of snapshot_at + render_frame with train_opacity gate
// semantics (the only differentiable mode); node values match the fast path
// bitwise. train_nets routes gradients into deformation/transition layers,
// train_cloud makes the per-object leaves trainable params.
SceneTape record_scene(Tape& tape, const SceneAssets& scene, double t, const Camera& cam,
                       bool train_nets, bool train_cloud);

}  // namespace t4d
