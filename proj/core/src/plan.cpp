#include "t4d/plan.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "t4d/error.hpp"
#include "t4d/timeline.hpp"

namespace t4d {

using nlohmann::json;

std::size_t ValidationReport::error_count() const {
  std::size_t n = 0;
  for (const auto& f : findings)
    if (f.severity == Severity::error) ++n;
  return n;
}

const std::vector<FindingCodeInfo>& finding_registry() {
  static const std::vector<FindingCodeInfo> registry = {
      {"plan.empty", Severity::error, "obj_prompt list is empty"},
      {"plan.syntax", Severity::error, "document is not well-formed JSON"},
      {"plan.missing-key", Severity::error, "a required key is absent"},
      {"plan.type", Severity::error, "a value has the wrong JSON type"},
      {"plan.arity", Severity::error, "a list has the wrong length"},
      {"time.range", Severity::error, "a time lies outside [0,1]"},
      {"time.order", Severity::error, "times are not increasing / start >= end"},
      {"trans.self", Severity::error, "transition source equals target"},
      {"trans.index", Severity::error, "transition object index out of range"},
      {"move.arity", Severity::error,
       "move_list segment count != move_time boundary count + 1"},
      {"rot.arity", Severity::error, "rotations count != rotations_time window count"},
      {"plan.unknown-key", Severity::warning, "unrecognized key preserved verbatim"},
      {"scene.never-visible", Severity::warning,
       "object center never enters [-1,1]^3 at 64 sampled times"},
      {"trans.overlap", Severity::warning,
       "transition periods sharing an object overlap in time"},
  };
  return registry;
}

namespace {

[[noreturn]] void fail(const char* code, const std::string& msg) { throw Error(code, msg); }

const json& must_get(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    fail("plan.missing-key", "missing key '" + (where.empty() ? "" : where + ".") + key + "'");
  return obj.at(key);
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) fail("plan.type", where + " must be a number");
  return j.get<double>();
}

Vec3 as_vec3(const json& j, const std::string& where) {
  if (!j.is_array()) fail("plan.type", where + " must be a 3-element array");
  if (j.size() != 3)
    fail("plan.arity", where + ": expected 3 components, found " + std::to_string(j.size()));
  return {as_number(j[0], where), as_number(j[1], where), as_number(j[2], where)};
}

std::array<double, 2> as_pair(const json& j, const std::string& where) {
  if (!j.is_array()) fail("plan.type", where + " must be a [start,end] pair");
  if (j.size() != 2)
    fail("plan.arity", where + ": expected 2 components, found " + std::to_string(j.size()));
  return {as_number(j[0], where), as_number(j[1], where)};
}

bool is_number_pair(const json& j) {
  return j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number();
}

}  // namespace

PlanDocument parse_plan(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("plan.syntax", e.what());
  }

  PlanDocument doc;
  const json& sample = must_get(root, "sample", "");
  if (root.is_object())
    for (auto it = root.begin(); it != root.end(); ++it)
      if (it.key() != "sample") doc.unknown_keys.push_back(it.key());

  const json& prompts = must_get(sample, "obj_prompt", "sample");
  if (!prompts.is_array()) fail("plan.type", "sample.obj_prompt must be an array");
  if (prompts.empty()) fail("plan.empty", "obj_prompt lists no objects");
  for (const auto& p : prompts) {
    if (!p.is_string()) fail("plan.type", "obj_prompt entries must be strings");
    doc.obj_prompt.push_back(p.get<std::string>());
  }

  const json& traj = must_get(sample, "TrajParams", "sample");
  for (auto it = sample.begin(); it != sample.end(); ++it)
    if (it.key() != "obj_prompt" && it.key() != "TrajParams")
      doc.unknown_keys.push_back("sample." + it.key());

  static const std::set<std::string> known = {"init_pos",    "move_list",      "move_time",
                                             "init_angle",  "rotations",      "rotations_time",
                                             "trans_list",  "trans_period"};
  if (traj.is_object())
    for (auto it = traj.begin(); it != traj.end(); ++it)
      if (!known.count(it.key())) doc.unknown_keys.push_back("TrajParams." + it.key());

  const json& init_pos = must_get(traj, "init_pos", "TrajParams");
  if (!init_pos.is_array()) fail("plan.type", "init_pos must be an array");
  for (std::size_t i = 0; i < init_pos.size(); ++i)
    doc.init_pos.push_back(as_vec3(init_pos[i], "init_pos[" + std::to_string(i) + "]"));

  const json& move_list = must_get(traj, "move_list", "TrajParams");
  if (!move_list.is_array()) fail("plan.type", "move_list must be an array");
  for (std::size_t i = 0; i < move_list.size(); ++i) {
    const json& entry = move_list[i];
    const std::string where = "move_list[" + std::to_string(i) + "]";
    if (!entry.is_array()) fail("plan.type", where + " must be an array of segment vectors");
    std::vector<Vec3> segs;
    for (std::size_t k = 0; k < entry.size(); ++k)
      segs.push_back(as_vec3(entry[k], where + "[" + std::to_string(k) + "]"));
    doc.move_list.push_back(std::move(segs));
  }

  const json& move_time = must_get(traj, "move_time", "TrajParams");
  if (!move_time.is_array()) fail("plan.type", "move_time must be an array");
  for (std::size_t i = 0; i < move_time.size(); ++i) {
    const json& entry = move_time[i];
    const std::string where = "move_time[" + std::to_string(i) + "]";
    if (!entry.is_array()) fail("plan.type", where + " must be an array of times");
    std::vector<double> times;
    for (std::size_t k = 0; k < entry.size(); ++k)
      times.push_back(as_number(entry[k], where + "[" + std::to_string(k) + "]"));
    doc.move_time.push_back(std::move(times));
  }

  const json& init_angle = must_get(traj, "init_angle", "TrajParams");
  if (!init_angle.is_array()) fail("plan.type", "init_angle must be an array");
  for (std::size_t i = 0; i < init_angle.size(); ++i)
    doc.init_angle.push_back(as_vec3(init_angle[i], "init_angle[" + std::to_string(i) + "]"));

  const json& rotations = must_get(traj, "rotations", "TrajParams");
  if (!rotations.is_array()) fail("plan.type", "rotations must be an array");
  for (std::size_t i = 0; i < rotations.size(); ++i) {
    const json& entry = rotations[i];
    const std::string where = "rotations[" + std::to_string(i) + "]";
    if (!entry.is_array()) fail("plan.type", where + " must be an array of rate vectors");
    std::vector<Vec3> rates;
    for (std::size_t k = 0; k < entry.size(); ++k)
      rates.push_back(as_vec3(entry[k], where + "[" + std::to_string(k) + "]"));
    doc.rotations.push_back(std::move(rates));
  }

  const json& rot_time = must_get(traj, "rotations_time", "TrajParams");
  if (!rot_time.is_array()) fail("plan.type", "rotations_time must be an array");
  for (std::size_t i = 0; i < rot_time.size(); ++i) {
    const json& entry = rot_time[i];
    const std::string where = "rotations_time[" + std::to_string(i) + "]";
    if (!entry.is_array()) fail("plan.type", where + " must list [start,end] windows");
    std::vector<std::array<double, 2>> windows;
    if (is_number_pair(entry)) {
      windows.push_back(as_pair(entry, where));
    } else {
      for (std::size_t k = 0; k < entry.size(); ++k)
        windows.push_back(as_pair(entry[k], where + "[" + std::to_string(k) + "]"));
    }
    doc.rotations_time.push_back(std::move(windows));
  }

  const json& trans_list = must_get(traj, "trans_list", "TrajParams");
  if (!trans_list.is_array()) fail("plan.type", "trans_list must be an array");
  for (std::size_t i = 0; i < trans_list.size(); ++i) {
    const json& entry = trans_list[i];
    const std::string where = "trans_list[" + std::to_string(i) + "]";
    if (!entry.is_array()) fail("plan.type", where + " must be a [source,target] pair");
    if (entry.size() != 2)
      fail("plan.arity", where + ": expected 2 indices, found " + std::to_string(entry.size()));
    if (!entry[0].is_number_integer() || !entry[1].is_number_integer())
      fail("plan.type", where + " indices must be integers");
    doc.trans_list.push_back({entry[0].get<int>(), entry[1].get<int>()});
  }

  const json& trans_period = must_get(traj, "trans_period", "TrajParams");
  if (!trans_period.is_array()) fail("plan.type", "trans_period must be an array");
  for (std::size_t i = 0; i < trans_period.size(); ++i)
    doc.trans_period.push_back(as_pair(trans_period[i], "trans_period[" + std::to_string(i) + "]"));

  return doc;
}

PlanDocument load_plan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("plan.io", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str());
}

namespace {

void check_unit_time(ValidationReport& report, double t, int obj, const std::string& what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    std::ostringstream msg;
    msg << what << " = " << t << " outside [0,1]";
    report.findings.push_back({Severity::error, "time.range", obj, msg.str()});
  }
}

bool overlaps(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return std::max(a[0], b[0]) < std::min(a[1], b[1]);
}

}  // namespace

ValidationReport validate_plan(const PlanDocument& doc, const ValidateOptions& opts) {
  ValidationReport report;
  const std::size_t m = doc.object_count();

  auto expect_m = [&](std::size_t actual, const char* name) {
    if (actual != m) {
      std::ostringstream msg;
      msg << name << ": expected " << m << " entries, found " << actual;
      report.findings.push_back({Severity::error, "plan.arity", -1, msg.str()});
    }
  };
  expect_m(doc.init_pos.size(), "init_pos");
  expect_m(doc.move_list.size(), "move_list");
  expect_m(doc.move_time.size(), "move_time");
  expect_m(doc.init_angle.size(), "init_angle");
  expect_m(doc.rotations.size(), "rotations");
  expect_m(doc.rotations_time.size(), "rotations_time");
  if (doc.trans_period.size() != doc.trans_list.size()) {
    std::ostringstream msg;
    msg << "trans_period: expected " << doc.trans_list.size() << " entries, found "
        << doc.trans_period.size();
    report.findings.push_back({Severity::error, "plan.arity", -1, msg.str()});
  }

  const Severity arity_severity = opts.lenient_arity ? Severity::warning : Severity::error;

  for (std::size_t i = 0; i < std::min(m, doc.move_time.size()); ++i) {
    const auto& times = doc.move_time[i];
    for (double t : times)
      check_unit_time(report, t, static_cast<int>(i), "move_time entry");
    for (std::size_t k = 1; k < times.size(); ++k)
      if (!(times[k - 1] < times[k])) {
        std::ostringstream msg;
        msg << "move_time not strictly increasing at position " << k;
        report.findings.push_back(
            {Severity::error, "time.order", static_cast<int>(i), msg.str()});
      }
    if (i < doc.move_list.size()) {
      const std::size_t segs = doc.move_list[i].size();
      const std::size_t expected = times.size() + 1;
      const bool declared_static = segs == 0 && times.empty();
      if (!declared_static && segs != expected) {
        std::ostringstream msg;
        msg << "move_list: expected " << expected << " segments for " << times.size()
            << " boundaries, found " << segs;
        report.findings.push_back({arity_severity, "move.arity", static_cast<int>(i), msg.str()});
      }
    }
  }

  for (std::size_t i = 0; i < std::min(m, doc.rotations_time.size()); ++i) {
    const auto& windows = doc.rotations_time[i];
    for (const auto& w : windows) {
      check_unit_time(report, w[0], static_cast<int>(i), "rotations_time start");
      check_unit_time(report, w[1], static_cast<int>(i), "rotations_time end");
      if (!(w[0] < w[1])) {
        std::ostringstream msg;
        msg << "rotations_time window [" << w[0] << "," << w[1] << "] has start >= end";
        report.findings.push_back(
            {Severity::error, "time.order", static_cast<int>(i), msg.str()});
      }
    }
    if (i < doc.rotations.size() && doc.rotations[i].size() != windows.size()) {
      std::ostringstream msg;
      msg << "rotations: expected " << windows.size() << " rate vectors, found "
          << doc.rotations[i].size();
      report.findings.push_back({arity_severity, "rot.arity", static_cast<int>(i), msg.str()});
    }
  }

  for (std::size_t k = 0; k < doc.trans_list.size(); ++k) {
    const auto& pair = doc.trans_list[k];
    const bool src_ok = pair[0] >= 0 && pair[0] < static_cast<int>(m);
    const bool dst_ok = pair[1] >= 0 && pair[1] < static_cast<int>(m);
    if (!src_ok || !dst_ok) {
      std::ostringstream msg;
      msg << "trans_list[" << k << "] = [" << pair[0] << "," << pair[1]
          << "] references a missing object (valid range 0.." << m - 1 << ")";
      report.findings.push_back({Severity::error, "trans.index", -1, msg.str()});
    } else if (pair[0] == pair[1]) {
      std::ostringstream msg;
      msg << "trans_list[" << k << "] maps object " << pair[0] << " onto itself";
      report.findings.push_back({Severity::error, "trans.self", pair[0], msg.str()});
    }
    if (k < doc.trans_period.size()) {
      const auto& period = doc.trans_period[k];
      check_unit_time(report, period[0], -1, "trans_period start");
      check_unit_time(report, period[1], -1, "trans_period end");
      if (!(period[0] < period[1])) {
        std::ostringstream msg;
        msg << "trans_period[" << k << "] = [" << period[0] << "," << period[1]
            << "] has start >= end";
        report.findings.push_back({Severity::error, "time.order", -1, msg.str()});
      }
    }
  }

  for (std::size_t a = 0; a < doc.trans_list.size(); ++a)
    for (std::size_t b = a + 1; b < doc.trans_list.size(); ++b) {
      if (a >= doc.trans_period.size() || b >= doc.trans_period.size()) continue;
      const auto& pa = doc.trans_list[a];
      const auto& pb = doc.trans_list[b];
      const bool share = pa[0] == pb[0] || pa[0] == pb[1] || pa[1] == pb[0] || pa[1] == pb[1];
      if (share && overlaps(doc.trans_period[a], doc.trans_period[b])) {
        std::ostringstream msg;
        msg << "transitions " << a << " and " << b << " share an object and overlap in time";
        report.findings.push_back({Severity::warning, "trans.overlap", -1, msg.str()});
      }
    }

  const auto tracks = detail::build_tracks(doc, opts.frame_count);
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    bool seen = false;
    for (int k = 0; k < 64 && !seen; ++k) {
      const double t = static_cast<double>(k) / 63.0;
      const Vec3 c = track_translation(tracks[i], t);
      seen = std::abs(c.x) <= 1.0 && std::abs(c.y) <= 1.0 && std::abs(c.z) <= 1.0;
    }
    if (!seen) {
      report.findings.push_back({Severity::warning, "scene.never-visible", static_cast<int>(i),
                                 "object center stays outside [-1,1]^3 at all sampled times"});
    }
  }

  for (const auto& key : doc.unknown_keys)
    report.findings.push_back(
        {Severity::warning, "plan.unknown-key", -1, "unknown key '" + key + "' preserved"});

  return report;
}

}  // namespace t4d
