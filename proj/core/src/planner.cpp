#include "t4d/planner.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "t4d/error.hpp"
#include "t4d/nets.hpp"

namespace t4d {
namespace {

const std::string kDecomposeTemplate = R"tpl(You are a 4D Scene Decomposing Agent.

Your task is to decompose the 4D scene described by the user's prompt into a short list of main objects. Reason about the physical dynamics of the description across both space and time, not only its wording: when something changes so much over the clip that it is effectively a different object afterwards (melting, breaking, exploding), list the before and after states as two separate main objects.

Rules:
- The background is empty. List only objects that move, appear, disappear, or change shape.
- Keep each object prompt short and concrete, suitable for producing a single 3D object.
- Reply with a numbered list of object prompts, one per line, and nothing else.

Example (authored for this tool, not model output):
Prompt: "A snowball rolls across the ground and melts into a puddle."
1. a round white snowball
2. a flat shallow puddle of water
)tpl";

const std::string kExpandTemplate = R"tpl(You are an Efficient Scene Expansion Agent.

Your task is to combine the decomposed main objects with the original prompt and expand them into a complete physics-aware 4D scene description.

Cover, for every object:
- its initial position as [x, y, z],
- its movement as a vector per frame, split into segments whenever speed or direction changes, with the times at which segments begin and end,
- its initial orientation as [rx, ry, rz] in degrees,
- its rotation rate per frame and the time windows over which it rotates,
- when it appears, disappears, or transforms,
- which object transforms into which, and over what time period.

Time runs from 0 at the start of the clip to 1 at the end; events between use decimal times. The scene is centred on [0, 0, 0] and each axis spans [-1, 1]; objects may begin outside and enter, but every main object must be inside the scene at some point. Keep the motion physically plausible: speeds stay steady within a segment, nothing teleports, and transformations happen where the objects involved actually meet.

Example (authored for this tool, not model output):
For the snowball that melts: the snowball starts at [-0.8, 0.2, 0.0] and rolls right at 0.05 per frame until time 0.5, spinning about z at 4 degrees per frame while it rolls; the puddle lies flat at [0.0, -0.4, 0.0] and never moves; the snowball transforms into the puddle between times 0.45 and 0.7.
)tpl";

const std::string kExtractTemplate = R"tpl(You are a 4D data production Agent.

Your task is to transfer the complete 4D scene description into precise 4D planning data, returned as one fenced json code block and nothing else.

The json must follow this exact shape:

{
    "sample": {
        "obj_prompt": ["one text prompt per object"],
        "TrajParams": {
            "init_pos": [[x, y, z]],
            "move_list": [[[dx, dy, dz]]],
            "move_time": [[t]],
            "init_angle": [[rx, ry, rz]],
            "rotations": [[[rx, ry, rz]]],
            "rotations_time": [[[t_start, t_end]]],
            "trans_list": [[source_index, target_index]],
            "trans_period": [[t_start, t_end]]
        }
    }
}

Rules:
- Every per-object list has exactly one entry per object, in obj_prompt order.
- move_list holds movement vectors per frame. An object with k movement segments lists k vectors and the k - 1 boundary times between them in move_time; an object that never moves gets one zero vector and an empty move_time list.
- init_angle is in degrees. rotations holds degree changes per frame; each rotation segment pairs with a [t_start, t_end] window in rotations_time, and a never-rotating object gets empty lists for both.
- trans_list indices are zero-based positions into obj_prompt; each pair lines up with a [t_start, t_end] entry in trans_period where 0 <= t_start < t_end <= 1.
- All times live in [0, 1]; positions stay within [-1, 1] on every axis.

Example (authored for this tool, not model output):

{
    "sample": {
        "obj_prompt": ["a round white snowball", "a flat shallow puddle of water"],
        "TrajParams": {
            "init_pos": [[-0.8, 0.2, 0.0], [0.0, -0.4, 0.0]],
            "move_list": [[[0.05, 0.0, 0.0], [0.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]]],
            "move_time": [[0.5], []],
            "init_angle": [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            "rotations": [[[0.0, 0.0, 4.0]], []],
            "rotations_time": [[[0.0, 0.5]], []],
            "trans_list": [[0, 1]],
            "trans_period": [[0.45, 0.7]]
        }
    }
}
)tpl";

std::string canonical_body(const PromptPayload& payload, const std::string& model) {
  nlohmann::json body;
  body["model"] = model;
  body["messages"] = nlohmann::json::array(
      {{{"role", "system"}, {"content", payload.system_text}},
       {{"role", "user"}, {"content", payload.user_text}}});
  return body.dump();
}

// endpoint -> (scheme://authority, path)
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const std::size_t scheme = endpoint.find("://");
  if (scheme == std::string::npos)
    throw Error("planner.transport", "endpoint '" + endpoint + "' has no scheme");
  const std::size_t path = endpoint.find('/', scheme + 3);
  if (path == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path), endpoint.substr(path)};
}

std::string format_report(const ValidationReport& report) {
  std::ostringstream out;
  for (const Finding& f : report.findings) {
    if (f.severity != Severity::error) continue;
    out << f.code << " (object " << f.object << "): " << f.message << "\n";
  }
  return out.str();
}

// Resolves one chat completion: replay file, or live POST with transport
// retries; records the assistant text when record_dir is set.
class Session {
 public:
  Session(const PlannerConfig& config, std::string record_dir)
      : config_(config), record_dir_(std::move(record_dir)) {}

  std::string complete(const PromptPayload& payload) {
    const std::string digest = payload_digest(payload, config_.model);
    if (!config_.replay_dir.empty()) {
      const std::filesystem::path file =
          std::filesystem::path(config_.replay_dir) / (digest + ".txt");
      std::ifstream in(file, std::ios::binary);
      if (!in)
        throw Error("planner.fixture-miss",
                    "no recorded response " + digest + ".txt under '" + config_.replay_dir + "'");
      std::ostringstream text;
      text << in.rdbuf();
      return text.str();
    }
    const std::string text = live(payload);
    if (!record_dir_.empty()) {
      std::filesystem::create_directories(record_dir_);
      const std::filesystem::path file = std::filesystem::path(record_dir_) / (digest + ".txt");
      std::ofstream out(file, std::ios::binary | std::ios::trunc);
      out << text;
      if (!out) throw Error("planner.transport", "cannot write fixture '" + file.string() + "'");
    }
    return text;
  }

 private:
  std::string live(const PromptPayload& payload) {
    const auto [base, path] = split_endpoint(config_.endpoint);
    httplib::Client client(base);
    const auto sec = static_cast<time_t>(config_.timeout_s);
    const auto usec = static_cast<time_t>((config_.timeout_s - static_cast<double>(sec)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    httplib::Headers headers;
    if (!config_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    const std::string body = canonical_body(payload, config_.model);

    std::string why = "no attempt made";
    for (int attempt = 0; attempt <= std::max(0, config_.retries); ++attempt) {
      auto res = client.Post(path, headers, body, "application/json");
      if (!res) {
        why = "connection failed (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status != 200) {
        why = "status " + std::to_string(res->status);
        continue;
      }
      try {
        const nlohmann::json doc = nlohmann::json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        why = std::string("malformed completion response: ") + e.what();
      }
    }
    throw Error("planner.transport", "stage " +
                                         std::string(planner_stage_name(payload.stage)) +
                                         " failed: " + why);
  }

  const PlannerConfig& config_;
  std::string record_dir_;
};

PlanDocument run_chain(const PlannerConfig& config, const std::string& user_prompt,
                       Session& session) {
  const std::string objects =
      session.complete(build_stage_prompt(PlannerStage::kDecompose, user_prompt));
  const std::string description = session.complete(build_stage_prompt(
      PlannerStage::kExpand,
      "Main objects:\n" + objects + "\nOriginal prompt: " + user_prompt));

  std::string context = description;
  std::string report;
  for (int attempt = 0; attempt <= std::max(0, config.retries); ++attempt) {
    const std::string data =
        session.complete(build_stage_prompt(PlannerStage::kExtract, context));
    const std::string block = extract_code_block(data);
    try {
      PlanDocument doc = parse_plan(block);
      const ValidationReport rep = validate_plan(doc);
      if (rep.ok()) return doc;
      report = format_report(rep);
    } catch (const Error& e) {
      if (std::string(e.code()).rfind("plan.", 0) != 0) throw;
      report = std::string(e.what()) + "\n";
    }
    context = description + "\nYour previous 4D planning data failed validation:\n" + report +
              "Return corrected 4D planning data.";
  }
  throw Error("planner.invalid", "plan still failing validation after " +
                                     std::to_string(config.retries) + " retries:\n" + report);
}

}  // namespace

const char* planner_stage_name(PlannerStage stage) {
  switch (stage) {
    case PlannerStage::kDecompose:
      return "decompose";
    case PlannerStage::kExpand:
      return "expand";
    default:
      return "extract";
  }
}

PlannerConfig planner_config_from_env() {
  PlannerConfig config;
  if (const char* v = std::getenv("PLANNER_ENDPOINT")) config.endpoint = v;
  if (const char* v = std::getenv("PLANNER_MODEL")) config.model = v;
  if (const char* v = std::getenv("PLANNER_API_KEY")) config.api_key = v;
  return config;
}

const std::string& stage_template(PlannerStage stage) {
  switch (stage) {
    case PlannerStage::kDecompose:
      return kDecomposeTemplate;
    case PlannerStage::kExpand:
      return kExpandTemplate;
    default:
      return kExtractTemplate;
  }
}

PromptPayload build_stage_prompt(PlannerStage stage, const std::string& context) {
  if (context.empty()) throw Error("planner.context", "stage context must not be empty");
  PromptPayload payload;
  payload.stage = stage;
  payload.system_text = stage_template(stage);
  payload.user_text = context;
  return payload;
}

std::string extract_code_block(const std::string& text) {
  const std::size_t open = text.find("```");
  if (open == std::string::npos)
    throw Error("planner.no-data", "no fenced code block in the response");
  const std::size_t content = open + 3;
  const std::size_t close = text.find("```", content);
  if (close == std::string::npos)
    throw Error("planner.no-data", "unterminated code block in the response");
  const std::size_t newline = text.find('\n', content);
  const std::size_t begin = newline != std::string::npos && newline < close ? newline + 1 : content;
  return text.substr(begin, close - begin);
}

std::string payload_digest(const PromptPayload& payload, const std::string& model) {
  const std::string body = canonical_body(payload, model);
  const std::uint64_t h = fnv1a64(body.data(), body.size());
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

PlanDocument request_plan(const PlannerConfig& config, const std::string& user_prompt) {
  Session session(config, "");
  return run_chain(config, user_prompt, session);
}

PlanDocument record_fixture(const PlannerConfig& config, const std::string& user_prompt,
                            const std::string& directory) {
  PlannerConfig live = config;
  live.replay_dir.clear();
  Session session(live, directory);
  return run_chain(live, user_prompt, session);
}

}  // namespace t4d
