#pragma once

#include "geoevolver/exploration.hpp"
#include "geoevolver/memory_bank.hpp"

#include <sstream>
#include <string>
#include <vector>

namespace geoevolver {

/// Trajectory digest sent to the extractor: tool names and argument keys per
/// step, observations clipped to 400 characters, error messages kept whole.
inline std::string render_digest_block(const CandidateSolution& candidate,
                                       size_t payload_clip = 400) {
  std::ostringstream out;
  out << "=== Variant " << candidate.variant_index << " ("
      << (candidate.s == 1 ? "SUCCESS" : "FAILURE") << ") ===\n";
  int step = 0;
  for (const auto& traj : candidate.trajectories) {
    for (const auto& s : traj.steps) {
      std::vector<std::string> keys;
      if (s.action.arguments.is_object()) {
        for (const auto& [k, _] : s.action.arguments.items()) keys.push_back(k);
      }
      out << "[" << ++step << "] " << s.action.tool_name << "(" << join(keys, ", ") << ") -> "
          << (s.observation.status == ObsStatus::ok ? "ok" : "error") << ": ";
      if (s.observation.status == ObsStatus::error) {
        out << s.observation.payload;
      } else {
        out << s.observation.payload.substr(0, payload_clip);
      }
      out << "\n";
    }
  }
  out << "Final answer: " << (candidate.parsed_answer ? *candidate.parsed_answer : "(none)")
      << "\n";
  return out.str();
}

/// Unified contrastive block: every candidate with its success label.
inline std::string render_contrastive_block(const std::vector<CandidateSolution>& candidates) {
  std::string out;
  for (const auto& c : candidates) out += render_digest_block(c) + "\n";
  return out;
}

namespace detail {

inline std::optional<json> parse_memories_payload(const std::string& text) {
  std::string body = trim(text);
  if (body.rfind("```", 0) == 0) {
    const size_t first_nl = body.find('\n');
    const size_t last_fence = body.rfind("```");
    if (first_nl == std::string::npos || last_fence <= first_nl) return std::nullopt;
    body = trim(body.substr(first_nl + 1, last_fence - first_nl - 1));
  }
  json j;
  try {
    j = json::parse(body);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!j.is_object() || !j.contains("memories") || !j.at("memories").is_array()) {
    return std::nullopt;
  }
  return j;
}

/// Parses one extractor entry; returns nullopt for schema violations.
inline std::optional<MemoryItem> parse_memory_entry(const json& e) {
  if (!e.is_object()) return std::nullopt;
  MemoryItem item;
  if (!e.contains("title") || !e.at("title").is_string()) return std::nullopt;
  item.title = e.at("title").get<std::string>();
  if (trim(item.title).empty()) return std::nullopt;
  if (!e.contains("pattern_type") || !e.at("pattern_type").is_string()) return std::nullopt;
  try {
    item.pattern_type = pattern_type_from_string(e.at("pattern_type").get<std::string>());
  } catch (const Error&) {
    return std::nullopt;
  }
  item.description = e.value("description", "");
  item.content = e.value("content", "");
  if (e.contains("action_items") && e.at("action_items").is_array()) {
    for (const auto& a : e.at("action_items")) {
      if (a.is_string()) item.action_items.push_back(a.get<std::string>());
    }
  }
  if (e.contains("detection_cues") && e.at("detection_cues").is_array()) {
    for (const auto& c : e.at("detection_cues")) {
      if (c.is_string()) item.detection_cues.push_back(c.get<std::string>());
    }
  }
  if (e.contains("failure_cause") && e.at("failure_cause").is_string()) {
    item.failure_cause = e.at("failure_cause").get<std::string>();
  }
  return item;
}

/// Type discipline: analysis patterns carry no failure cause; attributions
/// without one are invalid and dropped rather than repaired.
inline bool enforce_type_discipline(MemoryItem& item) {
  if (item.pattern_type == PatternType::analysis_pattern) {
    item.failure_cause.reset();
    return true;
  }
  return item.failure_cause && !trim(*item.failure_cause).empty() &&
         *item.failure_cause != "None";
}

inline ProviderResponse ask_extractor(Provider& provider, const std::string& role_tag,
                                      const Query& query, const std::string& block,
                                      const SamplingParams& sampling) {
  const std::string user = prompts::interpolate(
      prompts::kExtractorUserTemplate,
      {{"query", render_query(query)}, {"trajectories_block", block}});
  std::vector<ChatMessage> messages{{Role::system, prompts::kExtractorSystem},
                                    {Role::user, user}};
  return provider.complete(role_tag, messages, {}, sampling);
}

}  // namespace detail

/// Single-variant extraction: at most one item from the selected best solution. The
/// pattern type is forced from the verified outcome, overriding the model's
/// label. Malformed JSON gets one re-ask, then yields nothing.
inline std::vector<MemoryItem> extract_single(Provider& provider, const Query& query,
                                              const CandidateSolution& best,
                                              const TextEncoder& encoder,
                                              std::vector<std::string>* events = nullptr) {
  const std::string block = render_digest_block(best);
  SamplingParams sampling;
  ProviderResponse response =
      detail::ask_extractor(provider, "extractor.single", query, block, sampling);
  auto payload = detail::parse_memories_payload(response.text);
  if (!payload) {
    response = detail::ask_extractor(provider, "extractor.single", query, block, sampling);
    payload = detail::parse_memories_payload(response.text);
  }
  if (!payload) {
    if (events) events->push_back("extract_single: malformed extractor output, no item kept");
    return {};
  }
  for (const auto& entry : payload->at("memories")) {
    auto item = detail::parse_memory_entry(entry);
    if (!item) continue;
    item->pattern_type = best.outcome.success ? PatternType::analysis_pattern
                                              : PatternType::error_attribution;
    if (!detail::enforce_type_discipline(*item)) {
      if (events) {
        events->push_back("extract_single: dropped attribution without failure cause");
      }
      continue;
    }
    item->source_id = query.id;
    item->embedding = encoder.encode(indexing_text(*item));
    return {*item};  // at most one
  }
  return {};
}

/// Contrastive distillation: one unified request across all variants; at most four
/// schema-valid items survive.
inline std::vector<MemoryItem> distill_contrastive(Provider& provider, const Query& query,
                                                   const std::vector<CandidateSolution>& all,
                                                   const TextEncoder& encoder,
                                                   std::vector<std::string>* events = nullptr) {
  if (all.empty()) throw Error("distill_contrastive requires candidates");
  const ProviderResponse response = detail::ask_extractor(
      provider, "extractor.contrastive", query, render_contrastive_block(all), {});
  auto payload = detail::parse_memories_payload(response.text);
  if (!payload) {
    if (events) events->push_back("distill_contrastive: malformed extractor output");
    return {};
  }
  std::vector<MemoryItem> items;
  for (const auto& entry : payload->at("memories")) {
    if (items.size() >= 4) break;
    auto item = detail::parse_memory_entry(entry);
    if (!item) {
      if (events) events->push_back("distill_contrastive: dropped schema-invalid entry");
      continue;
    }
    if (!detail::enforce_type_discipline(*item)) {
      if (events) {
        events->push_back("distill_contrastive: dropped attribution without failure cause");
      }
      continue;
    }
    item->source_id = query.id;
    item->embedding = encoder.encode(indexing_text(*item));
    items.push_back(std::move(*item));
  }
  return items;
}

/// Consolidation: single-variant and contrastive items funnel through
/// key-based dedup into the bank.
inline int consolidate(MemoryBank& bank, std::vector<MemoryItem> items) {
  return bank.insert(items);
}

}  // namespace geoevolver
