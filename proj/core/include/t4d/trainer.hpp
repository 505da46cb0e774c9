#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t4d/adam.hpp"
#include "t4d/gaussian.hpp"
#include "t4d/guidance.hpp"
#include "t4d/nets.hpp"
#include "t4d/scene.hpp"

namespace t4d {

// Dynamics trains the deformation/transition nets on frozen clouds;
// refine trains the per-object Gaussian parameters under frozen nets.
enum class TrainPhase { kDynamics, kRefine };

struct LearningRates {
  double nets = 1e-3;
  double position = 1.6e-4;
  double rotation = 1e-3;
  double scale = 2.5e-3;
  double opacity = 5e-2;
  double color = 2.5e-3;
};

struct DensifyConfig {
  double grad_threshold = 2e-4;  // mean positional gradient norm
  double scale_threshold = 0.01; // clone below, split above (max scale axis)
  double split_shrink = 1.6;     // children scale divisor on split
  double prune_alpha = 0.005;
  int interval = 100;            // steps between densification passes
};

struct TrainConfig {
  TrainPhase phase = TrainPhase::kDynamics;
  int steps = 0;  // 0 -> phase default: 4500 dynamics, 4000 refine
  LearningRates lr;
  AdamConfig adam;  // lr field unused; per-group rates come from lr
  DensifyConfig densify;
  bool densify_enabled = true;  // refine only; dynamics never densifies
  double elevation_deg = 15.0;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;       // 0 -> no periodic checkpoints
  std::uint64_t fixed_points = 0;    // >0 -> require this scene total at start
  double schedule_weight = 0.0;      // 0 -> no transition schedule term
};

// Outcome of one densification pass. parent[i] is the source index in the
// old cloud for new point i; fresh[i] marks clone/split children (optimizer
// moments reset) versus survivors (moments carried over). Survivors keep
// their ids and order; children append afterwards with fresh ascending ids,
// so an id-sorted cloud stays id-sorted.
struct DensifyResult {
  GaussianCloud cloud;
  std::vector<std::size_t> parent;
  std::vector<std::uint8_t> fresh;
  int cloned = 0;
  int split = 0;
  int pruned = 0;
};

// Deterministic clone/split/prune pass. mean_grad holds the per-point mean
// positional gradient norms accumulated since the last pass. Points with
// opacity below prune_alpha drop; points over grad_threshold duplicate at
// mu +/- 0.5 sigma along the principal axis, shrinking scales by
// split_shrink when the largest axis exceeds scale_threshold.
DensifyResult densify(const GaussianCloud& cloud, const std::vector<double>& mean_grad,
                      const DensifyConfig& cfg);

// Complete optimizer snapshot: everything needed to continue a run bit for
// bit. Clouds live here at full double precision (PLY export is float32).
// Group order: per dyn layer (deforms then transitions) weights and biases,
// then per object pos, rot, log_scale, opacity, f_dc.
struct TrainState {
  TrainPhase phase = TrainPhase::kDynamics;
  std::int64_t step = 0;  // completed steps
  NetBundle nets;
  std::vector<GaussianCloud> clouds;
  std::vector<AdamState> adam;
  std::vector<std::vector<double>> densify_sum;           // per object, per point
  std::vector<std::vector<std::int64_t>> densify_count;
};

// "T4DS" container: nets as an embedded net checkpoint blob, clouds and
// optimizer state as little-endian f64. Errors: state.magic, state.version,
// state.parse.
std::vector<std::uint8_t> serialize_state(const TrainState& state);
TrainState parse_state(const std::vector<std::uint8_t>& bytes);
void save_state(const TrainState& state, const std::string& path);
TrainState load_state(const std::string& path);

struct TrainReport {
  int steps_run = 0;
  double final_loss = 0.0;
  std::vector<double> losses;  // one entry per step of this call
};

// Runs cfg.steps total optimization steps (absolute indices; a resumed run
// continues the counter). Camera policy per step: view-free guidance orbits
// a random azimuth at elevation_deg; view-locked guidance keeps the scene
// camera. Dynamics cycles the frame grid; refine samples random times
// (view-locked refine stays on the grid so frame-indexed targets apply).
// Writes config.json, loss.csv, periodic and final checkpoints under
// run_dir unless it is empty. state, when given, both resumes (step > 0)
// and receives the final snapshot. Non-finite losses, gradients, or
// parameters abort with Error("train.nan", "step N ...").
TrainReport train(SceneAssets& scene, GuidanceProvider& guidance, const TrainConfig& cfg,
                  const std::string& run_dir = "", TrainState* state = nullptr);

TrainReport train_dynamics(SceneAssets& scene, GuidanceProvider& guidance,
                           TrainConfig cfg, const std::string& run_dir = "",
                           TrainState* state = nullptr);
TrainReport train_refine(SceneAssets& scene, GuidanceProvider& guidance, TrainConfig cfg,
                         const std::string& run_dir = "", TrainState* state = nullptr);

}  // namespace t4d
