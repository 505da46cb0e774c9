#include "t4d/timeline.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "t4d/error.hpp"
#include "t4d/mathutil.hpp"

namespace t4d {

using nlohmann::json;

namespace detail {

std::vector<ObjectTrack> build_tracks(const PlanDocument& doc, int frame_count) {
  const double f = static_cast<double>(frame_count);
  const std::size_t m = doc.object_count();
  std::vector<ObjectTrack> tracks(m);
  for (std::size_t i = 0; i < m; ++i) {
    ObjectTrack& tr = tracks[i];
    tr.label = doc.obj_prompt[i];
    tr.init_pos = i < doc.init_pos.size() ? doc.init_pos[i] : Vec3{};
    tr.init_angle = Vec3{};
    if (i < doc.init_angle.size()) {
      const Vec3& a = doc.init_angle[i];
      tr.init_angle = {deg2rad(a.x), deg2rad(a.y), deg2rad(a.z)};
    }

    std::vector<double> bounds;
    bounds.push_back(0.0);
    if (i < doc.move_time.size())
      for (double t : doc.move_time[i]) bounds.push_back(std::clamp(t, 0.0, 1.0));
    bounds.push_back(1.0);
    for (std::size_t k = 1; k < bounds.size(); ++k)
      bounds[k] = std::max(bounds[k], bounds[k - 1]);

    const std::vector<Vec3>* segs = i < doc.move_list.size() ? &doc.move_list[i] : nullptr;
    for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
      VelocitySegment seg;
      seg.t0 = bounds[k];
      seg.t1 = bounds[k + 1];
      seg.rate = segs && k < segs->size() ? (*segs)[k] * f : Vec3{};
      tr.velocity.push_back(seg);
    }

    if (i < doc.rotations_time.size()) {
      const auto& windows = doc.rotations_time[i];
      for (std::size_t k = 0; k < windows.size(); ++k) {
        const double t0 = std::clamp(windows[k][0], 0.0, 1.0);
        const double t1 = std::clamp(windows[k][1], 0.0, 1.0);
        if (!(t0 < t1)) continue;
        RotationWindow w;
        w.t0 = t0;
        w.t1 = t1;
        if (i < doc.rotations.size() && k < doc.rotations[i].size()) {
          const Vec3& r = doc.rotations[i][k];
          w.rate = {deg2rad(r.x) * f, deg2rad(r.y) * f, deg2rad(r.z) * f};
        }
        tr.rotation.push_back(w);
      }
    }
  }
  return tracks;
}

}  // namespace detail

TimelineProgram compile_timeline(const PlanDocument& doc, int frame_count, bool lenient) {
  ValidateOptions opts;
  opts.lenient_arity = lenient;
  opts.frame_count = frame_count;
  const ValidationReport report = validate_plan(doc, opts);
  if (!report.ok()) {
    std::ostringstream msg;
    msg << report.error_count() << " validation error(s), first: ";
    for (const auto& f : report.findings)
      if (f.severity == Severity::error) {
        msg << f.code << " (" << f.message << ")";
        break;
      }
    throw Error("plan.invalid", msg.str());
  }

  TimelineProgram program;
  program.frame_count = frame_count;
  program.objects = detail::build_tracks(doc, frame_count);
  for (std::size_t k = 0; k < doc.trans_list.size(); ++k) {
    TransitionSpec spec;
    spec.source = doc.trans_list[k][0];
    spec.target = doc.trans_list[k][1];
    spec.t0 = doc.trans_period[k][0];
    spec.t1 = doc.trans_period[k][1];
    program.transitions.push_back(spec);
  }
  return program;
}

Vec3 track_translation(const ObjectTrack& track, double t) {
  Vec3 x = track.init_pos;
  for (const auto& seg : track.velocity) {
    const double lo = std::max(seg.t0, 0.0);
    const double hi = std::min(seg.t1, t);
    if (hi > lo) x += seg.rate * (hi - lo);
  }
  return x;
}

Vec3 track_angles(const ObjectTrack& track, double t) {
  Vec3 a = track.init_angle;
  for (const auto& w : track.rotation) {
    const double lo = std::max(w.t0, 0.0);
    const double hi = std::min(w.t1, t);
    if (hi > lo) a += w.rate * (hi - lo);
  }
  return a;
}

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

std::string timeline_to_json(const TimelineProgram& program) {
  json root;
  root["version"] = 1;
  root["frame_count"] = program.frame_count;
  root["angle_convention"] = "extrinsic-xyz-radians";
  root["objects"] = json::array();
  for (const auto& obj : program.objects) {
    json o;
    o["label"] = obj.label;
    o["init_pos"] = vec3_json(obj.init_pos);
    o["init_angle"] = vec3_json(obj.init_angle);
    o["velocity"] = json::array();
    for (const auto& seg : obj.velocity)
      o["velocity"].push_back({{"t0", seg.t0}, {"t1", seg.t1}, {"rate", vec3_json(seg.rate)}});
    o["rotation"] = json::array();
    for (const auto& w : obj.rotation)
      o["rotation"].push_back({{"t0", w.t0}, {"t1", w.t1}, {"rate", vec3_json(w.rate)}});
    root["objects"].push_back(std::move(o));
  }
  root["transitions"] = json::array();
  for (const auto& tr : program.transitions)
    root["transitions"].push_back(
        {{"source", tr.source}, {"target", tr.target}, {"t0", tr.t0}, {"t1", tr.t1}});
  return root.dump(2) + "\n";
}

TimelineProgram timeline_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("timeline.syntax", e.what());
  }
  try {
    if (!root.contains("version") || root.at("version").get<int>() != 1)
      throw Error("timeline.version", "expected timeline schema version 1");
    TimelineProgram program;
    program.frame_count = root.at("frame_count").get<int>();
    for (const auto& o : root.at("objects")) {
      ObjectTrack tr;
      tr.label = o.at("label").get<std::string>();
      tr.init_pos = vec3_from(o.at("init_pos"));
      tr.init_angle = vec3_from(o.at("init_angle"));
      for (const auto& s : o.at("velocity")) {
        VelocitySegment seg;
        seg.t0 = s.at("t0").get<double>();
        seg.t1 = s.at("t1").get<double>();
        seg.rate = vec3_from(s.at("rate"));
        tr.velocity.push_back(seg);
      }
      for (const auto& s : o.at("rotation")) {
        RotationWindow w;
        w.t0 = s.at("t0").get<double>();
        w.t1 = s.at("t1").get<double>();
        w.rate = vec3_from(s.at("rate"));
        tr.rotation.push_back(w);
      }
      program.objects.push_back(std::move(tr));
    }
    for (const auto& s : root.at("transitions")) {
      TransitionSpec spec;
      spec.source = s.at("source").get<int>();
      spec.target = s.at("target").get<int>();
      spec.t0 = s.at("t0").get<double>();
      spec.t1 = s.at("t1").get<double>();
      program.transitions.push_back(spec);
    }
    return program;
  } catch (const json::exception& e) {
    throw Error("timeline.syntax", e.what());
  }
}

}  // namespace t4d
