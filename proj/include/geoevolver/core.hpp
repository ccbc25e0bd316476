#pragma once

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace geoevolver {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// A benchmark question. Gold fields are harness-only and never reach the judge.
struct Query {
  std::string id;
  std::string text;
  std::vector<std::pair<std::string, std::string>> choices;  // (label, body)
  std::optional<std::string> gold_answer;
  std::optional<std::vector<std::string>> gold_tool_sequence;
  std::optional<std::string> fixture_ref;

  bool has_choices() const { return !choices.empty(); }
};

struct EnvironmentState {
  std::string workspace_root;
  std::set<std::string> tool_names;
  long seed = 0;
};

struct ToolAction {
  std::string tool_name;
  json arguments = json::object();
  int issued_by = 1;  // executor index, >= 1
};

enum class ObsStatus { ok, error };

struct Observation {
  ObsStatus status = ObsStatus::ok;
  std::string payload;
  std::string tool_name;
};

struct Diagnostics {
  std::vector<std::string> tool_summary;
  std::string failure_reason = "None";
};

struct TrajectoryStep {
  ToolAction action;
  Observation observation;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  std::string final_text;
  std::string reasoning_text;
  std::optional<Diagnostics> diagnostics;
};

struct ValiditySignals {
  bool format_compliant = true;
  std::optional<bool> numeric_match;
  int step_count = 0;
  double confidence = 0.0;  // gamma in [0, 1]
  std::string justification;
};

struct Outcome {
  bool success = false;  // Y
  ValiditySignals validity;
};

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(pos));
      break;
    }
    lines.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

/// Lowercase and collapse whitespace runs to single spaces; trims both ends.
inline std::string normalize_space(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_ws = true;  // swallow leading whitespace
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_ws) out.push_back(' ');
      in_ws = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      in_ws = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Answer and diagnostics conventions
// ---------------------------------------------------------------------------

/// Extracts the committed answer: the innermost content of the last well-formed
/// <Answer>...</Answer> tag, or the remainder of the last "ANSWER:" line.
inline std::optional<std::string> parse_answer(const std::string& text) {
  static const std::string kOpen = "<Answer>";
  static const std::string kClose = "</Answer>";
  size_t open_pos = text.rfind(kOpen);
  while (open_pos != std::string::npos) {
    const size_t body = open_pos + kOpen.size();
    const size_t close_pos = text.find(kClose, body);
    if (close_pos != std::string::npos) {
      return trim(std::string_view(text).substr(body, close_pos - body));
    }
    if (open_pos == 0) break;
    open_pos = text.rfind(kOpen, open_pos - 1);
  }
  std::optional<std::string> fallback;
  for (const auto& raw : split_lines(text)) {
    const std::string line = trim(raw);
    if (line.rfind("ANSWER:", 0) == 0) {
      fallback = trim(std::string_view(line).substr(7));
    }
  }
  return fallback;
}

/// Parses the <Diag> block emitted at the end of an episode. A present block
/// without a "Failure reason" line gets failure_reason = "None".
inline std::optional<Diagnostics> parse_diagnostics(const std::string& text) {
  static const std::string kOpen = "<Diag>";
  static const std::string kClose = "</Diag>";
  size_t open_pos = text.rfind(kOpen);
  std::optional<std::string> block;
  while (open_pos != std::string::npos) {
    const size_t body = open_pos + kOpen.size();
    const size_t close_pos = text.find(kClose, body);
    if (close_pos != std::string::npos) {
      block = text.substr(body, close_pos - body);
      break;
    }
    if (open_pos == 0) break;
    open_pos = text.rfind(kOpen, open_pos - 1);
  }
  if (!block) return std::nullopt;

  Diagnostics diag;
  for (const auto& raw : split_lines(*block)) {
    const std::string line = trim(raw);
    if (line.rfind("- ", 0) == 0) {
      diag.tool_summary.push_back(trim(std::string_view(line).substr(2)));
    } else if (line.rfind("Tool summary:", 0) == 0) {
      const std::string rest = trim(std::string_view(line).substr(13));
      if (!rest.empty()) diag.tool_summary.push_back(rest);
    } else if (line.rfind("Failure reason:", 0) == 0) {
      const std::string rest = trim(std::string_view(line).substr(15));
      diag.failure_reason = rest.empty() ? "None" : rest;
    }
  }
  return diag;
}

inline std::vector<std::string> tool_sequence(const Trajectory& traj) {
  std::vector<std::string> out;
  out.reserve(traj.steps.size());
  for (const auto& step : traj.steps) out.push_back(step.action.tool_name);
  return out;
}

/// Tool sequence with auxiliary bookkeeping tools filtered out.
inline std::vector<std::string> tool_sequence(const Trajectory& traj,
                                              const std::set<std::string>& exclude) {
  std::vector<std::string> out;
  for (const auto& step : traj.steps) {
    if (!exclude.count(step.action.tool_name)) out.push_back(step.action.tool_name);
  }
  return out;
}

inline int trajectory_length(const Trajectory& traj) {
  return static_cast<int>(traj.steps.size());
}

// ---------------------------------------------------------------------------
// Answer normalization
// ---------------------------------------------------------------------------

/// Strips surrounding whitespace and one trailing period.
inline std::string normalize_answer(const std::string& answer) {
  std::string out = trim(answer);
  if (!out.empty() && out.back() == '.') out.pop_back();
  return trim(out);
}

/// Label comparisons (multiple choice) are case-sensitive; free text is not.
inline bool answers_match(const std::string& predicted, const std::string& gold,
                          bool label_mode) {
  const std::string p = normalize_answer(predicted);
  const std::string g = normalize_answer(gold);
  if (label_mode) return p == g;
  return to_lower(p) == to_lower(g);
}

// ---------------------------------------------------------------------------
// Trajectory log records (line-delimited, bit-exact round trip)
// ---------------------------------------------------------------------------

enum class LogKind { tool_call, tool_result, diagnostics, final_answer };

inline std::string to_string(LogKind kind) {
  switch (kind) {
    case LogKind::tool_call: return "tool_call";
    case LogKind::tool_result: return "tool_result";
    case LogKind::diagnostics: return "diagnostics";
    case LogKind::final_answer: return "final_answer";
  }
  throw Error("unreachable log kind");
}

inline LogKind log_kind_from_string(const std::string& s) {
  if (s == "tool_call") return LogKind::tool_call;
  if (s == "tool_result") return LogKind::tool_result;
  if (s == "diagnostics") return LogKind::diagnostics;
  if (s == "final_answer") return LogKind::final_answer;
  throw Error("unknown log kind: " + s);
}

struct LogRecord {
  int step = 0;
  LogKind kind = LogKind::tool_call;
  int executor = 0;  // 0 = orchestrator
  ordered_json payload;

  bool operator==(const LogRecord& other) const {
    return step == other.step && kind == other.kind && executor == other.executor &&
           payload == other.payload;
  }
};

inline std::string to_log_line(const LogRecord& record) {
  ordered_json j;
  j["step"] = record.step;
  j["kind"] = to_string(record.kind);
  j["executor"] = record.executor;
  j["payload"] = record.payload;
  return j.dump();
}

inline LogRecord parse_log_line(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw Error(std::string("malformed log line: ") + e.what());
  }
  if (!j.is_object() || !j.contains("step") || !j.contains("kind") ||
      !j.contains("executor") || !j.contains("payload")) {
    throw Error("malformed log line: missing field");
  }
  LogRecord record;
  record.step = j.at("step").get<int>();
  record.kind = log_kind_from_string(j.at("kind").get<std::string>());
  record.executor = j.at("executor").get<int>();
  record.payload = j.at("payload");
  return record;
}

// JSON views of the core types, used by the log format and the manifests.

inline ordered_json action_to_json(const ToolAction& a) {
  ordered_json j;
  j["tool_name"] = a.tool_name;
  j["arguments"] = a.arguments;
  j["issued_by"] = a.issued_by;
  return j;
}

inline ToolAction action_from_json(const json& j) {
  ToolAction a;
  a.tool_name = j.at("tool_name").get<std::string>();
  a.arguments = j.at("arguments");
  a.issued_by = j.value("issued_by", 1);
  return a;
}

inline ordered_json observation_to_json(const Observation& o) {
  ordered_json j;
  j["status"] = o.status == ObsStatus::ok ? "ok" : "error";
  j["tool_name"] = o.tool_name;
  j["payload"] = o.payload;
  return j;
}

inline Observation observation_from_json(const json& j) {
  Observation o;
  const std::string status = j.at("status").get<std::string>();
  if (status != "ok" && status != "error") throw Error("bad observation status: " + status);
  o.status = status == "ok" ? ObsStatus::ok : ObsStatus::error;
  o.tool_name = j.at("tool_name").get<std::string>();
  o.payload = j.at("payload").get<std::string>();
  return o;
}

inline ordered_json diagnostics_to_json(const Diagnostics& d) {
  ordered_json j;
  j["tool_summary"] = d.tool_summary;
  j["failure_reason"] = d.failure_reason;
  return j;
}

inline Diagnostics diagnostics_from_json(const json& j) {
  Diagnostics d;
  d.tool_summary = j.at("tool_summary").get<std::vector<std::string>>();
  d.failure_reason = j.at("failure_reason").get<std::string>();
  return d;
}

/// Appends one tool_call/tool_result record pair for a trajectory step.
inline void append_step_records(std::vector<LogRecord>& records, int& step_counter,
                                int executor, const TrajectoryStep& step) {
  ordered_json call;
  call["tool_name"] = step.action.tool_name;
  call["arguments"] = step.action.arguments;
  records.push_back({++step_counter, LogKind::tool_call, executor, call});
  records.push_back(
      {++step_counter, LogKind::tool_result, executor, observation_to_json(step.observation)});
}

}  // namespace geoevolver
