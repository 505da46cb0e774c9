#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "t4d/linalg.hpp"

namespace t4d {

// Parsed 4D plan document. Lists are stored exactly as found in the file;
// cross-field consistency is validate_plan's job, not the parser's.
struct PlanDocument {
  std::vector<std::string> obj_prompt;
  std::vector<Vec3> init_pos;
  std::vector<std::vector<Vec3>> move_list;
  std::vector<std::vector<double>> move_time;
  std::vector<Vec3> init_angle;                              // degrees
  std::vector<std::vector<Vec3>> rotations;                  // degrees per frame
  std::vector<std::vector<std::array<double, 2>>> rotations_time;
  std::vector<std::array<int, 2>> trans_list;
  std::vector<std::array<double, 2>> trans_period;
  std::vector<std::string> unknown_keys;

  std::size_t object_count() const { return obj_prompt.size(); }
};

enum class Severity { error, warning };

struct Finding {
  Severity severity = Severity::error;
  std::string code;
  int object = -1;  // -1 when not tied to a single object
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;

  std::size_t error_count() const;
  bool ok() const { return error_count() == 0; }
};

struct FindingCodeInfo {
  const char* code;
  Severity severity;
  const char* description;
};

// Every code that parse_plan can throw or validate_plan can report. Tests
// enforce that no ad-hoc codes exist outside this registry.
const std::vector<FindingCodeInfo>& finding_registry();

// Parses the plan JSON (top-level "sample" with "obj_prompt" and
// "TrajParams"). Throws Error with codes plan.syntax, plan.missing-key,
// plan.type, plan.arity, or plan.empty. Unknown keys are preserved on the
// document and surface later as warnings.
PlanDocument parse_plan(const std::string& text);
PlanDocument load_plan(const std::string& path);

struct ValidateOptions {
  // Downgrades move/rot segment-count mismatches to warnings; the compiler
  // then zero-pads or truncates instead of refusing.
  bool lenient_arity = false;
  // Frame count used for the visibility probe (rates are per frame).
  int frame_count = 16;
};

ValidationReport validate_plan(const PlanDocument& doc, const ValidateOptions& opts = {});

}  // namespace t4d
