#pragma once

#include "geoevolver/core.hpp"
#include "geoevolver/embedding.hpp"
#include "geoevolver/tools.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace geoevolver {

enum class Role { system, user, assistant, tool };

inline std::string to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
  }
  throw Error("unreachable role");
}

struct ToolCallRef {
  std::string id;
  std::string tool_name;
  json arguments = json::object();
};

struct ChatMessage {
  Role role = Role::user;
  std::string content;
  std::optional<ToolCallRef> tool_call;
  std::optional<std::string> tool_result_for;  // required when role == tool
};

enum class FinishReason { stop, tool_calls, length, error };

inline std::string to_string(FinishReason f) {
  switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::tool_calls: return "tool_calls";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  throw Error("unreachable finish reason");
}

inline FinishReason finish_from_string(const std::string& s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "tool_calls") return FinishReason::tool_calls;
  if (s == "length") return FinishReason::length;
  return FinishReason::error;
}

struct ProviderResponse {
  std::string text;
  std::vector<ToolCallRef> tool_calls;
  FinishReason finish = FinishReason::stop;
};

struct SamplingParams {
  long seed = 0;
  double temperature = 0.0;
};

/// One provider request as seen by tests (executor-isolation assertions).
struct CapturedRequest {
  std::string role_tag;
  std::vector<ChatMessage> messages;
  std::vector<std::string> tool_names;
  SamplingParams sampling;
};

class Provider {
 public:
  virtual ~Provider() = default;

  /// role_tag routes scripted replies (e.g. "variant-1.executor-2"); remote
  /// providers ignore it.
  virtual ProviderResponse complete(const std::string& role_tag,
                                    const std::vector<ChatMessage>& messages,
                                    const std::vector<ToolSpec>& tools,
                                    const SamplingParams& sampling) = 0;

  virtual EmbeddingVector embed(const std::string& text) = 0;
  virtual bool supports_embeddings() const { return false; }

 protected:
  static void check_messages(const std::vector<ChatMessage>& messages) {
    if (messages.empty() || messages.front().role != Role::system) {
      throw Error("chat requests must start with a system message");
    }
  }
};

// ---------------------------------------------------------------------------
// Scripted provider
// ---------------------------------------------------------------------------

inline ProviderResponse response_from_json(const json& j) {
  ProviderResponse r;
  r.text = j.value("text", "");
  if (j.contains("tool_calls")) {
    for (const auto& tc : j.at("tool_calls")) {
      ToolCallRef ref;
      ref.id = tc.value("id", "");
      ref.tool_name = tc.at("tool_name").get<std::string>();
      ref.arguments = tc.value("arguments", json::object());
      r.tool_calls.push_back(std::move(ref));
    }
  }
  r.finish = finish_from_string(j.value("finish", r.tool_calls.empty() ? "stop" : "tool_calls"));
  if (r.finish == FinishReason::tool_calls && r.tool_calls.empty()) {
    throw Error("scripted response declares tool_calls finish without tool calls");
  }
  return r;
}

/// Canned responses keyed by (role_tag, turn). Turn indices per tag must be
/// contiguous from 0.
struct Script {
  std::map<std::pair<std::string, int>, ProviderResponse> entries;
  bool strict = true;

  static Script from_json(const json& j) {
    Script s;
    s.strict = j.value("strict", true);
    std::map<std::string, std::set<int>> turns_by_tag;
    for (const auto& e : j.at("entries")) {
      const std::string tag = e.at("role_tag").get<std::string>();
      const int turn = e.at("turn").get<int>();
      if (!s.entries.emplace(std::make_pair(tag, turn), response_from_json(e.at("response")))
               .second) {
        throw Error("duplicate script entry: " + tag + " turn " + std::to_string(turn));
      }
      turns_by_tag[tag].insert(turn);
    }
    for (const auto& [tag, turns] : turns_by_tag) {
      int expect = 0;
      for (int t : turns) {
        if (t != expect++) {
          throw Error("script turns for '" + tag + "' are not contiguous from 0");
        }
      }
    }
    return s;
  }

  static Script load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open script fixture: " + path.string());
    json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw Error("bad script fixture " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }
};

class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(Script script) : script_(std::move(script)) {}

  ProviderResponse complete(const std::string& role_tag,
                            const std::vector<ChatMessage>& messages,
                            const std::vector<ToolSpec>& tools,
                            const SamplingParams& sampling) override {
    check_messages(messages);
    std::lock_guard<std::mutex> lock(mu_);
    CapturedRequest req{role_tag, messages, {}, sampling};
    for (const auto& t : tools) req.tool_names.push_back(t.name);
    captured_.push_back(std::move(req));

    const int turn = turns_[role_tag]++;
    auto it = script_.entries.find({role_tag, turn});
    if (it == script_.entries.end()) {
      if (script_.strict) {
        throw Error("script exhausted for role '" + role_tag + "' at turn " +
                    std::to_string(turn));
      }
      return ProviderResponse{"I cannot proceed further with this request.", {},
                              FinishReason::stop};
    }
    return it->second;
  }

  EmbeddingVector embed(const std::string&) override {
    throw Error("scripted provider has no embedding endpoint");
  }

  const std::vector<CapturedRequest>& captured() const { return captured_; }

 private:
  Script script_;
  std::map<std::string, int> turns_;
  std::vector<CapturedRequest> captured_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible wire format
// ---------------------------------------------------------------------------

inline ordered_json chat_message_to_wire(const ChatMessage& m) {
  ordered_json j;
  j["role"] = to_string(m.role);
  j["content"] = m.content;
  if (m.tool_call) {
    ordered_json call;
    call["id"] = m.tool_call->id;
    call["type"] = "function";
    call["function"] = {{"name", m.tool_call->tool_name},
                        {"arguments", m.tool_call->arguments.dump()}};
    j["tool_calls"] = ordered_json::array({call});
  }
  if (m.tool_result_for) j["tool_call_id"] = *m.tool_result_for;
  return j;
}

inline ordered_json tool_spec_to_wire(const ToolSpec& spec) {
  ordered_json props = ordered_json::object();
  ordered_json required = ordered_json::array();
  for (const auto& p : spec.parameters) {
    props[p.name] = {{"type", p.type}};
    if (p.required) required.push_back(p.name);
  }
  ordered_json fn;
  fn["name"] = spec.name;
  fn["description"] = spec.description;
  fn["parameters"] = {{"type", "object"}, {"properties", props}, {"required", required}};
  ordered_json j;
  j["type"] = "function";
  j["function"] = fn;
  return j;
}

/// Request body with a fixed key order: model, messages, tools, temperature, seed.
inline ordered_json build_chat_body(const std::string& model,
                                    const std::vector<ChatMessage>& messages,
                                    const std::vector<ToolSpec>& tools,
                                    const SamplingParams& sampling) {
  ordered_json body;
  body["model"] = model;
  ordered_json msgs = ordered_json::array();
  for (const auto& m : messages) msgs.push_back(chat_message_to_wire(m));
  body["messages"] = msgs;
  ordered_json tool_list = ordered_json::array();
  for (const auto& t : tools) tool_list.push_back(tool_spec_to_wire(t));
  body["tools"] = tool_list;
  body["temperature"] = sampling.temperature;
  body["seed"] = sampling.seed;
  return body;
}

inline ProviderResponse parse_chat_response(const json& body) {
  try {
    const json& choice = body.at("choices").at(0);
    const json& message = choice.at("message");
    ProviderResponse r;
    if (message.contains("content") && message.at("content").is_string()) {
      r.text = message.at("content").get<std::string>();
    }
    if (message.contains("tool_calls")) {
      for (const auto& tc : message.at("tool_calls")) {
        ToolCallRef ref;
        ref.id = tc.value("id", "");
        ref.tool_name = tc.at("function").at("name").get<std::string>();
        ref.arguments = json::parse(tc.at("function").at("arguments").get<std::string>());
        r.tool_calls.push_back(std::move(ref));
      }
    }
    r.finish = finish_from_string(choice.value("finish_reason", "stop"));
    return r;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("malformed chat completion body (" + std::string(e.what()) +
                "): " + body.dump());
  }
}

inline EmbeddingVector parse_embedding_response(const json& body) {
  try {
    const json& values = body.at("data").at(0).at("embedding");
    EmbeddingVector v;
    v.values.reserve(values.size());
    for (const auto& x : values) v.values.push_back(x.get<double>());
    return renormalize(std::move(v));
  } catch (const std::exception& e) {
    throw Error("malformed embedding body (" + std::string(e.what()) + "): " + body.dump());
  }
}

struct RemoteConfig {
  std::string endpoint;              // e.g. http://localhost:8080/v1
  std::string model;
  std::string embedding_model;
  std::string api_key_env;           // env var holding the key; value never logged
  size_t embedding_dimension = 256;  // for the empty-text zero vector
  int max_retries = 2;
  std::vector<int> backoff_ms = {500, 2000};
};

}  // namespace geoevolver

#ifndef GEOEVOLVER_NO_HTTP

#ifndef CPPHTTPLIB_HTTPLIB_H
#include <httplib.h>
#endif

namespace geoevolver {

/// Chat + embeddings over an OpenAI-compatible HTTP endpoint with a bounded
/// retry/backoff schedule for transient transport failures.
class RemoteProvider : public Provider {
 public:
  explicit RemoteProvider(RemoteConfig config) : config_(std::move(config)) {}

  ProviderResponse complete(const std::string&, const std::vector<ChatMessage>& messages,
                            const std::vector<ToolSpec>& tools,
                            const SamplingParams& sampling) override {
    check_messages(messages);
    const json body =
        json::parse(build_chat_body(config_.model, messages, tools, sampling).dump());
    return parse_chat_response(post_json("/chat/completions", body));
  }

  EmbeddingVector embed(const std::string& text) override {
    if (trim(text).empty()) return zero_vector(config_.embedding_dimension);
    json body;
    body["model"] = config_.embedding_model.empty() ? config_.model : config_.embedding_model;
    body["input"] = text;
    return parse_embedding_response(post_json("/embeddings", body));
  }

  bool supports_embeddings() const override { return true; }

 private:
  json post_json(const std::string& route, const json& body) {
    std::string host = config_.endpoint;
    std::string base_path;
    const size_t scheme = host.find("://");
    const size_t path_start = host.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start != std::string::npos) {
      base_path = host.substr(path_start);
      host = host.substr(0, path_start);
    }
    httplib::Client client(host);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
    }

    const std::string payload = body.dump();
    std::string last_failure;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        const size_t idx = std::min<size_t>(attempt - 1, config_.backoff_ms.size() - 1);
        std::this_thread::sleep_for(std::chrono::milliseconds(
            config_.backoff_ms.empty() ? 0 : config_.backoff_ms[idx]));
      }
      auto res = client.Post(base_path + route, headers, payload, "application/json");
      if (!res) {
        last_failure = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_failure = "server error: HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw Error("provider rejected request: HTTP " + std::to_string(res->status) + " " +
                    res->body);
      }
      try {
        return json::parse(res->body);
      } catch (const std::exception&) {
        throw Error("malformed provider body: " + res->body);
      }
    }
    throw Error("provider unreachable after " + std::to_string(config_.max_retries + 1) +
                " attempts (" + last_failure + ")");
  }

  RemoteConfig config_;
};

/// Remote realization of the encoder: provider embeddings, re-normalized.
class RemoteEncoder : public TextEncoder {
 public:
  RemoteEncoder(std::shared_ptr<Provider> provider, size_t dimension)
      : provider_(std::move(provider)), dimension_(dimension) {
    if (dimension_ < 8) throw Error("encoder dimension must be >= 8");
  }

  size_t dimension() const override { return dimension_; }

  EmbeddingVector encode(const std::string& text) const override {
    if (trim(text).empty()) return zero_vector(dimension_);
    EmbeddingVector v = renormalize(provider_->embed(text));
    if (v.dimension() != dimension_) {
      throw Error("remote embedding dimension " + std::to_string(v.dimension()) +
                  " does not match configured " + std::to_string(dimension_));
    }
    return v;
  }

 private:
  std::shared_ptr<Provider> provider_;
  size_t dimension_;
};

}  // namespace geoevolver

#endif  // GEOEVOLVER_NO_HTTP
