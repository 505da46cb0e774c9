#pragma once

#include <string>
#include <vector>

#include "t4d/plan.hpp"

namespace t4d {

// The three-stage planning chain: decompose the prompt into main objects,
// expand those into a full scene description, extract machine-readable plan
// data from the description.
enum class PlannerStage { kDecompose, kExpand, kExtract };

const char* planner_stage_name(PlannerStage stage);

struct PromptPayload {
  PlannerStage stage = PlannerStage::kDecompose;
  std::string system_text;
  std::string user_text;
  std::vector<std::string> image_refs;  // reserved; always empty for now
};

struct PlannerConfig {
  std::string endpoint;    // e.g. http://host:port/v1/chat/completions
  std::string model;
  std::string api_key;     // empty -> no Authorization header
  double timeout_s = 60.0;
  std::string replay_dir;  // nonempty -> replay fixtures, never the network
  int retries = 2;         // stage-3 validation retries and transport retries
};

// Reads PLANNER_ENDPOINT, PLANNER_MODEL, PLANNER_API_KEY; unset vars leave
// the fields empty.
PlannerConfig planner_config_from_env();

// Frozen system text for a stage; tests pin these bytes by hash.
const std::string& stage_template(PlannerStage stage);

// Payload = stage template + caller context as the user turn. Empty context
// throws Error("planner.context").
PromptPayload build_stage_prompt(PlannerStage stage, const std::string& context);

// First fenced code block (``` ... ```), language tag dropped. Throws
// Error("planner.no-data") when no complete block exists.
std::string extract_code_block(const std::string& text);

// Hex digest of the canonical request body for (payload, model); names the
// replay fixture file. Ignores endpoint and credentials.
std::string payload_digest(const PromptPayload& payload, const std::string& model);

// Runs the chain. Replay mode resolves each request against
// "<replay_dir>/<digest>.txt" (Error("planner.fixture-miss") when absent) and
// never touches the network. Live mode POSTs to the endpoint, retrying
// transport failures up to config.retries times (Error("planner.transport")).
// Stage 3 output must carry a fenced block (Error("planner.no-data")) that
// parses and validates as a plan; parse/validation failures re-run stage 3
// with the error report appended, up to config.retries extra attempts, then
// Error("planner.invalid") with the report in the message. The returned
// document always validates clean.
PlanDocument request_plan(const PlannerConfig& config, const std::string& user_prompt);

// Runs the chain live and writes each request's response under directory as
// "<digest>.txt" (verbatim body), producing a replayable fixture set.
// Returns the document like request_plan.
PlanDocument record_fixture(const PlannerConfig& config, const std::string& user_prompt,
                            const std::string& directory);

}  // namespace t4d
