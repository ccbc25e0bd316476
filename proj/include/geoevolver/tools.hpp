#pragma once

#include "geoevolver/core.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace geoevolver {

struct ToolParam {
  std::string name;
  std::string type = "string";  // string | integer | number | array | object
  bool required = true;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::vector<ToolParam> parameters;
  bool auxiliary = false;  // bookkeeping tool, filterable from metric views
};

/// A fixture-backed file: tools read named scalars instead of raster pixels.
struct FileRecord {
  std::string date_tag;
  std::string kind;
  std::map<std::string, double> scalars;

  bool operator==(const FileRecord& other) const {
    return date_tag == other.date_tag && kind == other.kind && scalars == other.scalars;
  }
};

/// Fails the next `fire_count` matching invocations, then heals.
struct FaultRule {
  std::string tool_name;
  json match = json::object();  // argument subset that must compare equal
  std::string message;
  int fire_count = 1;
  int remaining = 1;
};

struct SimulatedWorkspace {
  std::string root;
  std::vector<std::string> allowed_output_roots;
  std::map<std::string, FileRecord> files;
  // tool name -> primary input path -> record written at the requested output path
  std::map<std::string, std::map<std::string, FileRecord>> derivations;
  std::vector<FaultRule> faults;

  bool path_allowed(const std::string& path) const {
    for (const auto& prefix : allowed_output_roots) {
      if (path.rfind(prefix, 0) == 0) return true;
    }
    return path.rfind(root, 0) == 0;
  }

  static SimulatedWorkspace from_json(const json& j) {
    SimulatedWorkspace ws;
    ws.root = j.at("root").get<std::string>();
    if (j.contains("allowed_output_roots")) {
      ws.allowed_output_roots = j.at("allowed_output_roots").get<std::vector<std::string>>();
    }
    auto parse_record = [](const json& r) {
      FileRecord rec;
      rec.date_tag = r.value("date_tag", "");
      rec.kind = r.value("kind", "");
      if (r.contains("scalars")) {
        for (const auto& [k, v] : r.at("scalars").items()) rec.scalars[k] = v.get<double>();
      }
      return rec;
    };
    if (j.contains("files")) {
      for (const auto& [path, rec] : j.at("files").items()) {
        ws.files[path] = parse_record(rec);
      }
    }
    if (j.contains("derivations")) {
      for (const auto& [tool, table] : j.at("derivations").items()) {
        for (const auto& [input, rec] : table.items()) {
          ws.derivations[tool][input] = parse_record(rec);
        }
      }
    }
    if (j.contains("faults")) {
      for (const auto& f : j.at("faults")) {
        FaultRule rule;
        rule.tool_name = f.at("tool").get<std::string>();
        rule.match = f.value("match", json::object());
        rule.message = f.at("message").get<std::string>();
        rule.fire_count = f.value("fire_count", 1);
        rule.remaining = rule.fire_count;
        ws.faults.push_back(std::move(rule));
      }
    }
    return ws;
  }

  static SimulatedWorkspace load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open workspace fixture: " + path.string());
    json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw Error("bad workspace fixture " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }
};

inline Observation ok_obs(const std::string& tool, std::string payload) {
  return Observation{ObsStatus::ok, std::move(payload), tool};
}

inline Observation err_obs(const std::string& tool, std::string message) {
  return Observation{ObsStatus::error, std::move(message), tool};
}

/// Decimal with up to six fractional digits, trailing zeros trimmed.
inline std::string format_decimal(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  std::string s(buf);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

namespace detail {

inline std::string parent_dir(const std::string& path) {
  const size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string() : path.substr(0, slash);
}

inline std::string glob_to_regex(const std::string& pattern) {
  std::string rx = "^";
  for (char c : pattern) {
    switch (c) {
      case '*': rx += ".*"; break;
      case '?': rx += "."; break;
      case '[': rx += "["; break;
      case ']': rx += "]"; break;
      default:
        if (std::string("\\^$.|+(){}").find(c) != std::string::npos) rx += '\\';
        rx += c;
    }
  }
  rx += "$";
  return rx;
}

inline bool subset_match(const json& pattern, const json& args) {
  if (!pattern.is_object()) return true;
  for (const auto& [k, v] : pattern.items()) {
    if (!args.contains(k) || args.at(k) != v) return false;
  }
  return true;
}

}  // namespace detail

struct ToolContext {
  SimulatedWorkspace& workspace;
  json& scratch;  // executor-local working state (todo lists etc.)
};

using ToolHandler = std::function<Observation(ToolContext&, const ToolAction&)>;

class ToolRegistry {
 public:
  void register_tool(ToolSpec spec, ToolHandler handler) {
    if (specs_.count(spec.name)) throw Error("duplicate tool name: " + spec.name);
    handlers_[spec.name] = std::move(handler);
    specs_[spec.name] = std::move(spec);
  }

  bool contains(const std::string& name) const { return specs_.count(name) > 0; }

  const ToolSpec& spec(const std::string& name) const {
    auto it = specs_.find(name);
    if (it == specs_.end()) throw Error("unknown tool: " + name);
    return it->second;
  }

  std::vector<ToolSpec> specs() const {
    std::vector<ToolSpec> out;
    out.reserve(specs_.size());
    for (const auto& [_, spec] : specs_) out.push_back(spec);
    return out;  // name-sorted via map order
  }

  std::set<std::string> tool_names() const {
    std::set<std::string> names;
    for (const auto& [name, _] : specs_) names.insert(name);
    return names;
  }

  std::set<std::string> auxiliary_names() const {
    std::set<std::string> names;
    for (const auto& [name, spec] : specs_) {
      if (spec.auxiliary) names.insert(name);
    }
    return names;
  }

  /// Dispatches one action. Failures are error observations; this never throws
  /// out of a tool, so an episode cannot be aborted by the environment.
  Observation invoke(SimulatedWorkspace& workspace, const ToolAction& action,
                     json& scratch) const {
    auto it = handlers_.find(action.tool_name);
    if (it == handlers_.end()) {
      return err_obs(action.tool_name, "unknown tool: " + action.tool_name);
    }
    for (auto& rule : workspace.faults) {
      if (rule.remaining > 0 && rule.tool_name == action.tool_name &&
          detail::subset_match(rule.match, action.arguments)) {
        --rule.remaining;
        return err_obs(action.tool_name, rule.message);
      }
    }
    ToolContext ctx{workspace, scratch};
    try {
      return it->second(ctx, action);
    } catch (const std::exception& e) {
      return err_obs(action.tool_name, std::string("tool failure: ") + e.what());
    }
  }

 private:
  std::map<std::string, ToolSpec> specs_;
  std::map<std::string, ToolHandler> handlers_;
};

// ---------------------------------------------------------------------------
// Built-in simulated tool suite
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<std::string> require_string(const ToolAction& a, const std::string& key,
                                                 Observation& err) {
  if (!a.arguments.contains(key) || !a.arguments.at(key).is_string()) {
    err = err_obs(a.tool_name, "missing argument '" + key + "' for tool " + a.tool_name);
    return std::nullopt;
  }
  return a.arguments.at(key).get<std::string>();
}

inline std::optional<double> number_arg(const ToolAction& a, const std::string& key) {
  if (!a.arguments.contains(key)) return std::nullopt;
  const json& v = a.arguments.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      return std::stod(v.get<std::string>());
    } catch (...) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

/// Reads one named scalar from a fixture file record.
inline Observation read_scalar(ToolContext& ctx, const ToolAction& a, const std::string& path,
                               const std::string& metric) {
  auto it = ctx.workspace.files.find(path);
  if (it == ctx.workspace.files.end()) {
    return err_obs(a.tool_name, "path not found: " + path);
  }
  auto sit = it->second.scalars.find(metric);
  if (sit == it->second.scalars.end()) {
    return err_obs(a.tool_name, "no '" + metric + "' value recorded for " + path);
  }
  return ok_obs(a.tool_name, json(sit->second).dump());
}

inline ToolHandler scalar_reader(std::string metric) {
  return [metric](ToolContext& ctx, const ToolAction& a) {
    Observation err;
    auto path = require_string(a, "input_path", err);
    if (!path) return err;
    return read_scalar(ctx, a, *path, metric);
  };
}

/// Writes the fixture-defined derived record for (tool, primary input) at the
/// requested output path. Re-running overwrites with an identical record;
/// a conflicting record at the output path is an error.
inline Observation derive(ToolContext& ctx, const ToolAction& a, const std::string& primary,
                          const std::string& output_path) {
  if (!ctx.workspace.path_allowed(output_path)) {
    return err_obs(a.tool_name, "output path outside sandbox: " + output_path);
  }
  if (!ctx.workspace.files.count(primary)) {
    return err_obs(a.tool_name, "path not found: " + primary);
  }
  auto table = ctx.workspace.derivations.find(a.tool_name);
  if (table == ctx.workspace.derivations.end() || !table->second.count(primary)) {
    return err_obs(a.tool_name,
                   "no '" + a.tool_name + "' derivation recorded for " + primary);
  }
  const FileRecord& record = table->second.at(primary);
  auto existing = ctx.workspace.files.find(output_path);
  if (existing != ctx.workspace.files.end() && !(existing->second == record)) {
    return err_obs(a.tool_name, "output path collision: " + output_path);
  }
  ctx.workspace.files[output_path] = record;
  return ok_obs(a.tool_name, "Result saved at " + output_path);
}

}  // namespace detail

/// Fixture sanity: fault rules and derivation tables must reference tools the
/// registry actually provides, so a typo fails the episode up front instead of
/// silently never firing.
inline void validate_workspace_tools(const SimulatedWorkspace& workspace,
                                     const ToolRegistry& registry) {
  for (const auto& rule : workspace.faults) {
    if (!registry.contains(rule.tool_name)) {
      throw Error("workspace fault rule references unregistered tool: " + rule.tool_name);
    }
  }
  for (const auto& [tool, _] : workspace.derivations) {
    if (!registry.contains(tool)) {
      throw Error("workspace derivation table references unregistered tool: " + tool);
    }
  }
}

/// The simulated EO tool suite used by the fixtures; registries are extensible,
/// callers may register additional tools before an episode starts.
inline ToolRegistry make_default_registry() {
  ToolRegistry reg;

  reg.register_tool(
      ToolSpec{"ls",
               "List files under a directory in lexicographic order, paged by offset/limit.",
               {{"path"}, {"offset", "integer"}, {"limit", "integer"}}},
      [](ToolContext& ctx, const ToolAction& a) {
        Observation err;
        auto path = detail::require_string(a, "path", err);
        if (!path) return err;
        long offset = a.arguments.value("offset", 0);
        long limit = a.arguments.value("limit", 50);
        if (offset < 0 || limit < 1) {
          return err_obs(a.tool_name, "offset must be >= 0 and limit >= 1");
        }
        std::string dir = *path;
        while (!dir.empty() && dir.back() == '/') dir.pop_back();
        std::vector<std::string> children;
        bool dir_exists = false;
        for (const auto& [p, _] : ctx.workspace.files) {
          if (p.rfind(dir + "/", 0) == 0) {
            dir_exists = true;
            if (detail::parent_dir(p) == dir) children.push_back(p);
          }
        }
        if (!dir_exists) return err_obs(a.tool_name, "path not found: " + dir);
        const size_t begin = std::min<size_t>(offset, children.size());
        const size_t end = std::min<size_t>(begin + limit, children.size());
        json out = json::array();
        for (size_t i = begin; i < end; ++i) out.push_back(children[i]);
        return ok_obs(a.tool_name, out.dump());
      });

  reg.register_tool(
      ToolSpec{"glob", "List files matching a shell-style wildcard pattern.", {{"pattern"}}},
      [](ToolContext& ctx, const ToolAction& a) {
        Observation err;
        auto pattern = detail::require_string(a, "pattern", err);
        if (!pattern) return err;
        if (pattern->empty()) return err_obs(a.tool_name, "pattern must be nonempty");
        const std::regex rx(detail::glob_to_regex(*pattern));
        json out = json::array();
        for (const auto& [p, _] : ctx.workspace.files) {
          if (std::regex_match(p, rx)) out.push_back(p);
        }
        return ok_obs(a.tool_name, out.dump());
      });

  reg.register_tool(
      ToolSpec{"write_todos", "Record or update the executor's todo list.",
               {{"todos", "array"}},
               /*auxiliary=*/true},
      [](ToolContext& ctx, const ToolAction& a) {
        if (!a.arguments.contains("todos")) {
          return err_obs(a.tool_name, "missing argument 'todos' for tool write_todos");
        }
        ctx.scratch["todos"] = a.arguments.at("todos");
        return ok_obs(a.tool_name, "Updated todo list to " + a.arguments.at("todos").dump());
      });

  reg.register_tool(
      ToolSpec{"update_work_memory", "Append a note to the executor's working state.",
               {{"note"}},
               /*auxiliary=*/true},
      [](ToolContext& ctx, const ToolAction& a) {
        Observation err;
        auto note = detail::require_string(a, "note", err);
        if (!note) return err;
        if (!ctx.scratch.contains("notes")) ctx.scratch["notes"] = json::array();
        ctx.scratch["notes"].push_back(*note);
        return ok_obs(a.tool_name, "Work memory updated.");
      });

  reg.register_tool(
      ToolSpec{"calculate_area", "Water-pixel area of a raster.", {{"input_path"}}},
      detail::scalar_reader("area"));

  reg.register_tool(
      ToolSpec{"calculate_band_mean_by_condition",
               "Mean of band values satisfying a condition expression.",
               {{"input_path"}, {"condition"}}},
      detail::scalar_reader("band_mean_by_condition"));

  reg.register_tool(
      ToolSpec{"calc_batch_image_sum", "Per-image pixel sums over a list of rasters.",
               {{"input_paths", "array"}}},
      [](ToolContext& ctx, const ToolAction& a) {
        if (!a.arguments.contains("input_paths") || !a.arguments.at("input_paths").is_array()) {
          return err_obs(a.tool_name, "missing argument 'input_paths' for tool " + a.tool_name);
        }
        json out = json::array();
        for (const auto& p : a.arguments.at("input_paths")) {
          const std::string path = p.get<std::string>();
          auto it = ctx.workspace.files.find(path);
          if (it == ctx.workspace.files.end()) {
            return err_obs(a.tool_name, "path not found: " + path);
          }
          auto sit = it->second.scalars.find("sum");
          if (sit == it->second.scalars.end()) {
            return err_obs(a.tool_name, "no 'sum' value recorded for " + path);
          }
          out.push_back(sit->second);
        }
        return ok_obs(a.tool_name, out.dump());
      });

  reg.register_tool(
      ToolSpec{"calc_batch_image_mean_mean",
               "Mean of per-image means over a list of rasters.",
               {{"input_paths", "array"}}},
      [](ToolContext& ctx, const ToolAction& a) {
        if (!a.arguments.contains("input_paths") || !a.arguments.at("input_paths").is_array() ||
            a.arguments.at("input_paths").empty()) {
          return err_obs(a.tool_name,
                         "missing argument 'input_paths' for tool " + a.tool_name);
        }
        double acc = 0.0;
        size_t count = 0;
        for (const auto& p : a.arguments.at("input_paths")) {
          const std::string path = p.get<std::string>();
          auto it = ctx.workspace.files.find(path);
          if (it == ctx.workspace.files.end()) {
            return err_obs(a.tool_name, "path not found: " + path);
          }
          auto sit = it->second.scalars.find("mean");
          if (sit == it->second.scalars.end()) {
            return err_obs(a.tool_name, "no 'mean' value recorded for " + path);
          }
          acc += sit->second;
          ++count;
        }
        return ok_obs(a.tool_name, json(acc / static_cast<double>(count)).dump());
      });

  reg.register_tool(
      ToolSpec{"calculate_water_turbidity_ntu",
               "Derive a turbidity raster from a surface-reflectance scene.",
               {{"input_path"}, {"output_path"}}},
      [](ToolContext& ctx, const ToolAction& a) {
        Observation err;
        auto input = detail::require_string(a, "input_path", err);
        if (!input) return err;
        auto output = detail::require_string(a, "output_path", err);
        if (!output) return err;
        return detail::derive(ctx, a, *input, *output);
      });

  reg.register_tool(
      ToolSpec{"split_window",
               "Split-window LST from paired brightness-temperature and emissivity rasters.",
               {{"band31_path"}, {"band32_path"}, {"emis31_path"}, {"emis32_path"},
                {"output_path"}}},
      [](ToolContext& ctx, const ToolAction& a) {
        Observation err;
        auto primary = detail::require_string(a, "band31_path", err);
        if (!primary) return err;
        auto output = detail::require_string(a, "output_path", err);
        if (!output) return err;
        return detail::derive(ctx, a, *primary, *output);
      });

  reg.register_tool(
      ToolSpec{"temperature_emissivity_separation",
               "TTM temperature-emissivity separation over an ordered TIR band triplet.",
               {{"tir_band_paths", "array"},
                {"representative_band_index", "integer", false},
                {"output_path"}}},
      [](ToolContext& ctx, const ToolAction& a) {
        if (!a.arguments.contains("tir_band_paths") ||
            !a.arguments.at("tir_band_paths").is_array() ||
            a.arguments.at("tir_band_paths").empty()) {
          return err_obs(a.tool_name,
                         "missing argument 'tir_band_paths' for tool " + a.tool_name);
        }
        Observation err;
        auto output = detail::require_string(a, "output_path", err);
        if (!output) return err;
        const std::string primary = a.arguments.at("tir_band_paths")[0].get<std::string>();
        return detail::derive(ctx, a, primary, *output);
      });

  reg.register_tool(
      ToolSpec{"difference", "Difference a - b rendered as a trimmed decimal.",
               {{"a", "number"}, {"b", "number"}}},
      [](ToolContext&, const ToolAction& a) {
        auto lhs = detail::number_arg(a, "a");
        auto rhs = detail::number_arg(a, "b");
        if (!lhs || !rhs) {
          return err_obs(a.tool_name, "difference requires numeric arguments 'a' and 'b'");
        }
        return ok_obs(a.tool_name, format_decimal(*lhs - *rhs));
      });

  return reg;
}

}  // namespace geoevolver
