#include "t4d/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "t4d/error.hpp"
#include "t4d/ply.hpp"
#include "t4d/rng.hpp"
#include "t4d/tape.hpp"

namespace t4d {
namespace {

// ---------- little-endian state serialization ----------

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void push_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void push_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  push_u64(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t at = 0;

  void need(std::uint64_t n) const {
    if (n > bytes.size() - at) throw Error("state.parse", "truncated state file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    at += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
    at += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + at), n);
    at += n;
    return s;
  }
};

void push_cloud(std::vector<std::uint8_t>& out, const GaussianCloud& cloud) {
  push_u32(out, static_cast<std::uint32_t>(cloud.object_label.size()));
  out.insert(out.end(), cloud.object_label.begin(), cloud.object_label.end());
  out.push_back(cloud.canonical ? 1 : 0);
  push_u64(out, cloud.size());
  for (const GaussianPoint& p : cloud.points) {
    push_f64(out, p.pos.x);
    push_f64(out, p.pos.y);
    push_f64(out, p.pos.z);
    push_f64(out, p.log_scale.x);
    push_f64(out, p.log_scale.y);
    push_f64(out, p.log_scale.z);
    push_f64(out, p.rot.w);
    push_f64(out, p.rot.x);
    push_f64(out, p.rot.y);
    push_f64(out, p.rot.z);
    push_f64(out, p.opacity_logit);
    push_f64(out, p.f_dc.x);
    push_f64(out, p.f_dc.y);
    push_f64(out, p.f_dc.z);
    push_u64(out, p.point_id);
  }
}

GaussianCloud read_cloud(Reader& r) {
  GaussianCloud cloud;
  const std::uint32_t label_len = r.u32();
  cloud.object_label = r.str(label_len);
  r.need(1);
  cloud.canonical = r.bytes[r.at++] != 0;
  const std::uint64_t n = r.u64();
  if (n > (1ULL << 32)) throw Error("state.parse", "implausible point count");
  cloud.points.resize(static_cast<std::size_t>(n));
  for (GaussianPoint& p : cloud.points) {
    p.pos = {r.f64(), r.f64(), r.f64()};
    p.log_scale = {r.f64(), r.f64(), r.f64()};
    p.rot.w = r.f64();
    p.rot.x = r.f64();
    p.rot.y = r.f64();
    p.rot.z = r.f64();
    p.opacity_logit = r.f64();
    p.f_dc = {r.f64(), r.f64(), r.f64()};
    p.point_id = r.u64();
  }
  return cloud;
}

// ---------- parameter groups ----------

// 0 pos, 1 rot, 2 log_scale, 3 opacity, 4 f_dc
constexpr int kFieldComps[5] = {3, 4, 3, 1, 3};

struct GroupRef {
  DenseLayer* layer = nullptr;  // null for cloud groups
  bool bias = false;
  int object = -1;
  int field = -1;
  double lr = 0.0;
};

std::vector<GroupRef> build_groups(SceneAssets& scene, const LearningRates& lr) {
  std::vector<GroupRef> groups;
  for (DenseLayer* layer : dyn_layers(scene.nets)) {
    groups.push_back({layer, false, -1, -1, lr.nets});
    groups.push_back({layer, true, -1, -1, lr.nets});
  }
  const double cloud_lr[5] = {lr.position, lr.rotation, lr.scale, lr.opacity, lr.color};
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    for (int f = 0; f < 5; ++f)
      groups.push_back({nullptr, false, static_cast<int>(i), f, cloud_lr[f]});
  return groups;
}

void gather_field(const GaussianCloud& cloud, int field, std::vector<double>& out) {
  const int c = kFieldComps[field];
  out.resize(cloud.size() * static_cast<std::size_t>(c));
  std::size_t k = 0;
  for (const GaussianPoint& p : cloud.points) {
    switch (field) {
      case 0:
        out[k++] = p.pos.x;
        out[k++] = p.pos.y;
        out[k++] = p.pos.z;
        break;
      case 1:
        out[k++] = p.rot.w;
        out[k++] = p.rot.x;
        out[k++] = p.rot.y;
        out[k++] = p.rot.z;
        break;
      case 2:
        out[k++] = p.log_scale.x;
        out[k++] = p.log_scale.y;
        out[k++] = p.log_scale.z;
        break;
      case 3:
        out[k++] = p.opacity_logit;
        break;
      default:
        out[k++] = p.f_dc.x;
        out[k++] = p.f_dc.y;
        out[k++] = p.f_dc.z;
        break;
    }
  }
}

void scatter_field(GaussianCloud& cloud, int field, const std::vector<double>& in) {
  std::size_t k = 0;
  for (GaussianPoint& p : cloud.points) {
    switch (field) {
      case 0:
        p.pos = {in[k], in[k + 1], in[k + 2]};
        k += 3;
        break;
      case 1:
        p.rot = {in[k], in[k + 1], in[k + 2], in[k + 3]};
        k += 4;
        break;
      case 2:
        p.log_scale = {in[k], in[k + 1], in[k + 2]};
        k += 3;
        break;
      case 3:
        p.opacity_logit = in[k++];
        break;
      default:
        p.f_dc = {in[k], in[k + 1], in[k + 2]};
        k += 3;
        break;
    }
  }
}

int node_for_field(const ObjectNodes& ob, int field) {
  switch (field) {
    case 0:
      return ob.pos;
    case 1:
      return ob.rot;
    case 2:
      return ob.log_scale;
    case 3:
      return ob.opacity;
    default:
      return ob.f_dc;
  }
}

// Expands a per-point parent/fresh mapping to per-coordinate Adam moments.
void remap_adam(AdamState& state, const DensifyResult& res, int comps) {
  if (state.m.empty()) return;  // group never stepped; stays lazily sized
  AdamState next;
  next.step = state.step;
  next.m.assign(res.cloud.size() * static_cast<std::size_t>(comps), 0.0);
  next.v.assign(next.m.size(), 0.0);
  for (std::size_t i = 0; i < res.cloud.size(); ++i) {
    if (res.fresh[i]) continue;
    for (int c = 0; c < comps; ++c) {
      next.m[i * comps + c] = state.m[res.parent[i] * comps + c];
      next.v[i * comps + c] = state.v[res.parent[i] * comps + c];
    }
  }
  state = std::move(next);
}

std::string sanitized(const std::string& label) {
  std::string out;
  for (char c : label)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out.empty() ? std::string("object") : out;
}

nlohmann::json config_json(const SceneAssets& scene, const TrainConfig& cfg,
                           std::int64_t total_steps, bool free_view) {
  nlohmann::json j;
  j["phase"] = cfg.phase == TrainPhase::kDynamics ? "dynamics" : "refine";
  j["steps"] = total_steps;
  j["seed"] = cfg.seed;
  j["frame_count"] = scene.frame_count;
  j["elevation_deg"] = cfg.elevation_deg;
  j["view_free_guidance"] = free_view;
  j["schedule_weight"] = cfg.schedule_weight;
  j["lr"] = {{"nets", cfg.lr.nets},       {"position", cfg.lr.position},
             {"rotation", cfg.lr.rotation}, {"scale", cfg.lr.scale},
             {"opacity", cfg.lr.opacity},   {"color", cfg.lr.color}};
  j["adam"] = {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}};
  j["densify"] = {{"enabled", cfg.densify_enabled && cfg.phase == TrainPhase::kRefine},
                  {"grad_threshold", cfg.densify.grad_threshold},
                  {"scale_threshold", cfg.densify.scale_threshold},
                  {"split_shrink", cfg.densify.split_shrink},
                  {"prune_alpha", cfg.densify.prune_alpha},
                  {"interval", cfg.densify.interval}};
  nlohmann::json objs = nlohmann::json::array();
  for (const SceneObject& ob : scene.objects)
    objs.push_back({{"label", ob.label}, {"points", ob.cloud.size()}});
  j["objects"] = std::move(objs);
  return j;
}

// Per-object schedule target: product over the object's transition windows of
// the ramp (target role) or its complement (source role). Objects with no
// window return a negative sentinel.
double schedule_target(const TimelineProgram& timeline, std::size_t obj, double t) {
  double s = 1.0;
  bool any = false;
  for (const TransitionSpec& tr : timeline.transitions) {
    const bool is_target = tr.target == static_cast<int>(obj);
    const bool is_source = tr.source == static_cast<int>(obj);
    if (!is_target && !is_source) continue;
    any = true;
    const double span = tr.t1 - tr.t0;
    double ramp = span > 0.0 ? (t - tr.t0) / span : (t >= tr.t1 ? 1.0 : 0.0);
    ramp = std::clamp(ramp, 0.0, 1.0);
    s *= is_target ? ramp : 1.0 - ramp;
  }
  return any ? s : -1.0;
}

}  // namespace

DensifyResult densify(const GaussianCloud& cloud, const std::vector<double>& mean_grad,
                      const DensifyConfig& cfg) {
  if (mean_grad.size() != cloud.size())
    throw Error("train.points", "gradient accumulator does not match the cloud size");
  DensifyResult out;
  out.cloud.canonical = cloud.canonical;
  out.cloud.object_label = cloud.object_label;
  std::uint64_t next_id = cloud.next_point_id();
  std::vector<std::pair<GaussianPoint, std::size_t>> children;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const GaussianPoint& gp = cloud.points[i];
    if (gp.opacity() < cfg.prune_alpha) {
      ++out.pruned;
      continue;
    }
    if (mean_grad[i] > cfg.grad_threshold) {
      const Vec3 s = gp.scale();
      int axis = 0;
      double smax = s.x;
      if (s.y > smax) {
        smax = s.y;
        axis = 1;
      }
      if (s.z > smax) {
        smax = s.z;
        axis = 2;
      }
      const Vec3 dir = rotation_of(gp.unit_rot()).col(static_cast<std::size_t>(axis));
      const Vec3 off = dir * (0.5 * smax);
      GaussianPoint hi = gp, lo = gp;
      hi.pos = gp.pos + off;
      lo.pos = gp.pos - off;
      if (smax > cfg.scale_threshold) {
        const double shrink = std::log(cfg.split_shrink);
        const Vec3 d{shrink, shrink, shrink};
        hi.log_scale -= d;
        lo.log_scale -= d;
        ++out.split;
      } else {
        ++out.cloned;
      }
      hi.point_id = next_id++;
      lo.point_id = next_id++;
      children.emplace_back(hi, i);
      children.emplace_back(lo, i);
      continue;
    }
    out.parent.push_back(i);
    out.fresh.push_back(0);
    out.cloud.points.push_back(gp);
  }
  for (auto& [child, parent] : children) {
    out.parent.push_back(parent);
    out.fresh.push_back(1);
    out.cloud.points.push_back(child);
  }
  return out;
}

std::vector<std::uint8_t> serialize_state(const TrainState& state) {
  std::vector<std::uint8_t> out;
  out.push_back('T');
  out.push_back('4');
  out.push_back('D');
  out.push_back('S');
  push_u32(out, 1);
  push_u32(out, state.phase == TrainPhase::kDynamics ? 0 : 1);
  push_u64(out, static_cast<std::uint64_t>(state.step));
  const auto nets = serialize_checkpoint(state.nets);
  push_u64(out, nets.size());
  out.insert(out.end(), nets.begin(), nets.end());
  push_u32(out, static_cast<std::uint32_t>(state.clouds.size()));
  for (const GaussianCloud& cloud : state.clouds) push_cloud(out, cloud);
  push_u32(out, static_cast<std::uint32_t>(state.adam.size()));
  for (const AdamState& a : state.adam) {
    push_u64(out, static_cast<std::uint64_t>(a.step));
    push_u64(out, a.m.size());
    for (double v : a.m) push_f64(out, v);
    for (double v : a.v) push_f64(out, v);
  }
  push_u32(out, static_cast<std::uint32_t>(state.densify_sum.size()));
  for (std::size_t i = 0; i < state.densify_sum.size(); ++i) {
    push_u64(out, state.densify_sum[i].size());
    for (double v : state.densify_sum[i]) push_f64(out, v);
    for (std::int64_t c : state.densify_count[i]) push_u64(out, static_cast<std::uint64_t>(c));
  }
  return out;
}

TrainState parse_state(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  if (r.str(4) != "T4DS") throw Error("state.magic", "not a training state file");
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw Error("state.version", "unsupported state version " + std::to_string(version));
  TrainState state;
  const std::uint32_t phase = r.u32();
  if (phase > 1) throw Error("state.parse", "bad phase tag");
  state.phase = phase == 0 ? TrainPhase::kDynamics : TrainPhase::kRefine;
  state.step = static_cast<std::int64_t>(r.u64());
  const std::uint64_t nets_len = r.u64();
  r.need(nets_len);
  std::vector<std::uint8_t> nets_blob(bytes.begin() + static_cast<std::ptrdiff_t>(r.at),
                                      bytes.begin() + static_cast<std::ptrdiff_t>(r.at + nets_len));
  r.at += nets_len;
  state.nets = parse_checkpoint(nets_blob);
  const std::uint32_t n_clouds = r.u32();
  state.clouds.reserve(n_clouds);
  for (std::uint32_t i = 0; i < n_clouds; ++i) state.clouds.push_back(read_cloud(r));
  const std::uint32_t n_groups = r.u32();
  state.adam.resize(n_groups);
  for (AdamState& a : state.adam) {
    a.step = static_cast<std::int64_t>(r.u64());
    const std::uint64_t n = r.u64();
    if (n > (1ULL << 32)) throw Error("state.parse", "implausible group size");
    a.m.resize(static_cast<std::size_t>(n));
    a.v.resize(a.m.size());
    for (double& v : a.m) v = r.f64();
    for (double& v : a.v) v = r.f64();
  }
  const std::uint32_t n_dens = r.u32();
  if (n_dens != n_clouds) throw Error("state.parse", "densify table does not match clouds");
  state.densify_sum.resize(n_dens);
  state.densify_count.resize(n_dens);
  for (std::uint32_t i = 0; i < n_dens; ++i) {
    const std::uint64_t n = r.u64();
    if (n != state.clouds[i].size())
      throw Error("state.parse", "densify accumulator does not match its cloud");
    state.densify_sum[i].resize(static_cast<std::size_t>(n));
    state.densify_count[i].resize(static_cast<std::size_t>(n));
    for (double& v : state.densify_sum[i]) v = r.f64();
    for (std::int64_t& c : state.densify_count[i]) c = static_cast<std::int64_t>(r.u64());
  }
  if (r.at != bytes.size()) throw Error("state.parse", "trailing bytes after state");
  return state;
}

void save_state(const TrainState& state, const std::string& path) {
  const auto bytes = serialize_state(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("state.io", "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("state.io", "write failed for '" + path + "'");
}

TrainState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("state.io", "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_state(bytes);
}

TrainReport train(SceneAssets& scene, GuidanceProvider& guidance, const TrainConfig& cfg,
                  const std::string& run_dir, TrainState* state) {
  namespace fs = std::filesystem;
  const bool dynamics = cfg.phase == TrainPhase::kDynamics;
  const bool free_view = guidance.view_free();
  const bool densify_on = !dynamics && cfg.densify_enabled;
  if (scene.objects.empty()) throw Error("train.points", "scene has no objects");

  std::int64_t start = 0;
  std::vector<AdamState> adam;
  std::vector<std::vector<double>> dens_sum(scene.objects.size());
  std::vector<std::vector<std::int64_t>> dens_cnt(scene.objects.size());
  if (state != nullptr && state->step > 0) {
    if (state->phase != cfg.phase)
      throw Error("train.phase", "state phase does not match the configured phase");
    if (state->clouds.size() != scene.objects.size())
      throw Error("state.parse", "state cloud count does not match the scene");
    scene.nets = state->nets;
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
      scene.objects[i].cloud = state->clouds[i];
    adam = state->adam;
    dens_sum = state->densify_sum;
    dens_cnt = state->densify_count;
    start = state->step;
  }
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (dens_sum[i].size() != scene.objects[i].cloud.size()) {
      dens_sum[i].assign(scene.objects[i].cloud.size(), 0.0);
      dens_cnt[i].assign(scene.objects[i].cloud.size(), 0);
    }
  }

  if (cfg.fixed_points > 0) {
    std::uint64_t total = 0;
    for (const SceneObject& ob : scene.objects) total += ob.cloud.size();
    if (total != cfg.fixed_points)
      throw Error("train.points", "scene holds " + std::to_string(total) +
                                      " points; config requires " +
                                      std::to_string(cfg.fixed_points));
  }

  std::vector<GroupRef> groups = build_groups(scene, cfg.lr);
  if (adam.empty())
    adam.resize(groups.size());
  else if (adam.size() != groups.size())
    throw Error("state.parse", "state group count does not match the scene");

  std::vector<std::size_t> base_counts(scene.objects.size());
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    base_counts[i] = scene.objects[i].cloud.size();
  const std::uint64_t frozen_nets = dynamics ? 0 : bundle_hash(scene.nets);
  const std::int64_t total_steps = cfg.steps > 0 ? cfg.steps : (dynamics ? 4500 : 4000);

  std::ofstream loss_csv;
  if (!run_dir.empty()) {
    fs::create_directories(run_dir);
    std::ofstream cj(fs::path(run_dir) / "config.json", std::ios::trunc);
    cj << config_json(scene, cfg, total_steps, free_view).dump(2) << "\n";
    const fs::path csv = fs::path(run_dir) / "loss.csv";
    const bool append = start > 0 && fs::exists(csv);
    loss_csv.open(csv, append ? std::ios::app : std::ios::trunc);
    if (!loss_csv) throw Error("state.io", "cannot open '" + csv.string() + "'");
    if (!append) loss_csv << "step,loss,wall_ms\n";
  }

  const auto snapshot = [&](std::int64_t step) {
    TrainState snap;
    snap.phase = cfg.phase;
    snap.step = step;
    snap.nets = scene.nets;
    for (const SceneObject& ob : scene.objects) snap.clouds.push_back(ob.cloud);
    snap.adam = adam;
    snap.densify_sum = dens_sum;
    snap.densify_count = dens_cnt;
    return snap;
  };

  TrainReport report;
  std::vector<double> scratch;
  const int frame_grid = std::max(1, scene.frame_count);

  for (std::int64_t s = start; s < total_steps; ++s) {
    const auto t0 = std::chrono::steady_clock::now();

    Camera cam = scene.camera;
    double t;
    int frame;
    if (dynamics || !free_view) {
      frame = static_cast<int>(s % frame_grid);
      t = frame_grid == 1 ? 0.0 : static_cast<double>(frame) / (frame_grid - 1);
    } else {
      t = rng_uniform(cfg.seed, rng_stream::kTrainTime, static_cast<std::uint64_t>(s));
      frame = -1;
    }
    if (free_view) {
      cam.azimuth_deg =
          360.0 * rng_uniform(cfg.seed, rng_stream::kTrainView, static_cast<std::uint64_t>(s));
      cam.elevation_deg = cfg.elevation_deg;
    }

    Tape tape;
    const SceneTape st = record_scene(tape, scene, t, cam, dynamics, !dynamics);
    GuidanceQuery query{&tape.value(st.image), cam, t, frame};
    GuidanceResult res = guidance.evaluate(query);
    if (!std::isfinite(res.loss))
      throw Error("train.nan", "step " + std::to_string(s) + ": non-finite loss");
    for (double g : res.grad.v)
      if (!std::isfinite(g))
        throw Error("train.nan", "step " + std::to_string(s) + ": non-finite pixel gradient");

    double loss = res.loss;
    std::vector<std::pair<int, Tensor>> seeds;
    seeds.emplace_back(st.image, std::move(res.grad));
    if (dynamics && cfg.schedule_weight > 0.0) {
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const double target = schedule_target(scene.timeline, i, t);
        if (target < 0.0) continue;
        const Tensor& p = tape.value(st.objects[i].p);
        Tensor seed(p.rows, 1);
        const double inv = 1.0 / p.rows;
        for (int j = 0; j < p.rows; ++j) {
          const double d = p.v[static_cast<std::size_t>(j)] - target;
          loss += cfg.schedule_weight * d * d * inv;
          seed.v[static_cast<std::size_t>(j)] = cfg.schedule_weight * 2.0 * d * inv;
        }
        seeds.emplace_back(st.objects[i].p, std::move(seed));
      }
    }
    tape.backward_from(seeds);

    try {
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const GroupRef& g = groups[gi];
        AdamConfig ac = cfg.adam;
        ac.lr = g.lr;
        if (g.layer != nullptr) {
          if (!dynamics) continue;
          const std::vector<double>* lg =
              g.bias ? tape.layer_grad_b(*g.layer) : tape.layer_grad_w(*g.layer);
          if (lg == nullptr) continue;
          float* params = g.bias ? g.layer->b.data() : g.layer->w.data();
          adam_step(params, lg->data(), lg->size(), adam[gi], ac);
        } else {
          if (dynamics) continue;
          GaussianCloud& cloud = scene.objects[static_cast<std::size_t>(g.object)].cloud;
          const Tensor& grad =
              tape.grad(node_for_field(st.objects[static_cast<std::size_t>(g.object)], g.field));
          if (grad.size() == 0) continue;
          gather_field(cloud, g.field, scratch);
          if (grad.size() != scratch.size())
            throw Error("train.points", "gradient does not match the parameter group");
          adam_step(scratch.data(), grad.v.data(), scratch.size(), adam[gi], ac);
          scatter_field(cloud, g.field, scratch);
        }
      }
    } catch (const Error& e) {
      if (e.code() == "train.nan")
        throw Error("train.nan", "step " + std::to_string(s) + ": " + e.what());
      throw;
    }

    if (dynamics) {
      for (std::size_t i = 0; i < scene.objects.size(); ++i)
        if (scene.objects[i].cloud.size() != base_counts[i])
          throw Error("train.points", "point count changed during dynamics training");
    } else if (densify_on) {
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const Tensor& grad = tape.grad(st.objects[i].pos);
        if (grad.size() == 0) continue;
        for (int j = 0; j < grad.rows; ++j) {
          const double gx = grad.at(j, 0), gy = grad.at(j, 1), gz = grad.at(j, 2);
          dens_sum[i][static_cast<std::size_t>(j)] += std::sqrt(gx * gx + gy * gy + gz * gz);
          dens_cnt[i][static_cast<std::size_t>(j)] += 1;
        }
      }
      if (cfg.densify.interval > 0 && (s + 1) % cfg.densify.interval == 0) {
        for (std::size_t i = 0; i < scene.objects.size(); ++i) {
          GaussianCloud& cloud = scene.objects[i].cloud;
          std::vector<double> mean(cloud.size(), 0.0);
          for (std::size_t j = 0; j < cloud.size(); ++j)
            if (dens_cnt[i][j] > 0) mean[j] = dens_sum[i][j] / dens_cnt[i][j];
          DensifyResult dres = densify(cloud, mean, cfg.densify);
          if (dres.cloned + dres.split + dres.pruned > 0) {
            const std::size_t group_base = 2 * dyn_layers(scene.nets).size() + 5 * i;
            for (int f = 0; f < 5; ++f)
              remap_adam(adam[group_base + f], dres, kFieldComps[f]);
            cloud = std::move(dres.cloud);
          }
          dens_sum[i].assign(cloud.size(), 0.0);
          dens_cnt[i].assign(cloud.size(), 0);
        }
        groups = build_groups(scene, cfg.lr);
      }
    }

    const auto t1 = std::chrono::steady_clock::now();
    const double wall_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count();
    report.losses.push_back(loss);
    report.final_loss = loss;
    ++report.steps_run;
    if (loss_csv.is_open()) {
      loss_csv << s << ',';
      loss_csv << std::setprecision(17) << loss << ',' << std::setprecision(6) << wall_ms
               << '\n';
    }

    if (!run_dir.empty() && cfg.checkpoint_interval > 0 &&
        (s + 1) % cfg.checkpoint_interval == 0 && s + 1 < total_steps) {
      std::ostringstream tag;
      tag << std::setw(6) << std::setfill('0') << (s + 1);
      save_state(snapshot(s + 1), (fs::path(run_dir) / ("state_" + tag.str() + ".t4ds")).string());
      save_checkpoint(scene.nets,
                      (fs::path(run_dir) / ("nets_" + tag.str() + ".t4dn")).string());
    }
  }

  if (!dynamics && bundle_hash(scene.nets) != frozen_nets)
    throw Error("train.frozen", "net parameters changed during refinement");

  if (state != nullptr) *state = snapshot(total_steps);
  if (!run_dir.empty()) {
    save_state(snapshot(total_steps), (fs::path(run_dir) / "state_final.t4ds").string());
    save_checkpoint(scene.nets, (fs::path(run_dir) / "nets_final.t4dn").string());
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      std::ostringstream name;
      name << "object_" << std::setw(2) << std::setfill('0') << i << '_'
           << sanitized(scene.objects[i].label) << ".ply";
      save_ply(scene.objects[i].cloud, (fs::path(run_dir) / name.str()).string());
    }
    if (loss_csv.is_open()) loss_csv.flush();
  }
  return report;
}

TrainReport train_dynamics(SceneAssets& scene, GuidanceProvider& guidance, TrainConfig cfg,
                           const std::string& run_dir, TrainState* state) {
  cfg.phase = TrainPhase::kDynamics;
  return train(scene, guidance, cfg, run_dir, state);
}

TrainReport train_refine(SceneAssets& scene, GuidanceProvider& guidance, TrainConfig cfg,
                         const std::string& run_dir, TrainState* state) {
  cfg.phase = TrainPhase::kRefine;
  return train(scene, guidance, cfg, run_dir, state);
}

}  // namespace t4d
