#pragma once

#include <string>
#include <vector>

#include "t4d/plan.hpp"

namespace t4d {

// Piecewise-constant rates over normalized time [0,1]. Velocity segments tile
// [0,1] completely; rotation rates are zero outside their windows. Angles are
// radians from here on.
struct VelocitySegment {
  double t0 = 0.0, t1 = 1.0;
  Vec3 rate;  // scene units per unit time
};

struct RotationWindow {
  double t0 = 0.0, t1 = 1.0;
  Vec3 rate;  // radians per unit time, extrinsic x-y-z axes
};

struct ObjectTrack {
  std::string label;
  Vec3 init_pos;
  Vec3 init_angle;  // radians
  std::vector<VelocitySegment> velocity;
  std::vector<RotationWindow> rotation;
};

struct TransitionSpec {
  int source = 0, target = 0;
  double t0 = 0.0, t1 = 1.0;
};

struct TimelineProgram {
  std::vector<ObjectTrack> objects;
  std::vector<TransitionSpec> transitions;
  int frame_count = 16;

  std::size_t object_count() const { return objects.size(); }
};

// Compiles a validated document: boundaries = [0] ++ move_time[i] ++ [1],
// per-frame vectors scaled by frame_count into per-unit-time rates, degrees
// converted to radians. Throws Error("plan.invalid") if validation reports
// errors; with lenient=true, segment-count mismatches are zero-padded or
// truncated instead.
TimelineProgram compile_timeline(const PlanDocument& doc, int frame_count = 16,
                                 bool lenient = false);

// Versioned JSON round-trip of the compiled program (schema in
// docs/timeline-schema.md). Throws timeline.syntax / timeline.version.
std::string timeline_to_json(const TimelineProgram& program);
TimelineProgram timeline_from_json(const std::string& text);

// Object center translation at time t (init_pos plus the exact piecewise
// integral of velocity), and integrated Euler angles in radians.
Vec3 track_translation(const ObjectTrack& track, double t);
Vec3 track_angles(const ObjectTrack& track, double t);

namespace detail {
// Total track construction: pads or truncates mismatched segment lists and
// drops degenerate windows instead of failing. validate_plan probes
// visibility through this; compile_timeline reuses it after validation.
std::vector<ObjectTrack> build_tracks(const PlanDocument& doc, int frame_count);
}  // namespace detail

}  // namespace t4d
