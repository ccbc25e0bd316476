#pragma once

#include "geoevolver/core.hpp"
#include "geoevolver/embedding.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

namespace geoevolver {

enum class PatternType { analysis_pattern, error_attribution };

inline std::string to_string(PatternType t) {
  return t == PatternType::analysis_pattern ? "analysis_pattern" : "error_attribution";
}

inline PatternType pattern_type_from_string(const std::string& s) {
  if (s == "analysis_pattern") return PatternType::analysis_pattern;
  if (s == "error_attribution") return PatternType::error_attribution;
  throw Error("unknown pattern type: " + s);
}

/// One distilled experience unit. error_attribution items must carry a
/// failure cause; analysis patterns must not.
struct MemoryItem {
  std::string source_id;
  PatternType pattern_type = PatternType::analysis_pattern;
  std::string title;
  std::string description;
  std::string content;
  std::vector<std::string> action_items;
  std::vector<std::string> detection_cues;
  std::optional<std::string> failure_cause;
  EmbeddingVector embedding;
  long sequence = 0;  // assigned at insertion, strictly increasing
};

/// Dedup identity: (source_id, pattern_type, normalized title).
struct CanonicalKey {
  std::string source_id;
  PatternType pattern_type = PatternType::analysis_pattern;
  std::string title_norm;

  static CanonicalKey of(const MemoryItem& item) {
    return CanonicalKey{item.source_id, item.pattern_type, normalize_space(item.title)};
  }

  auto tie() const { return std::tie(source_id, pattern_type, title_norm); }
  bool operator<(const CanonicalKey& o) const { return tie() < o.tie(); }
  bool operator==(const CanonicalKey& o) const { return tie() == o.tie(); }

  std::string display() const {
    return source_id + "|" + to_string(pattern_type) + "|" + title_norm;
  }
};

struct StrategyContext {
  std::string rendered;
  std::vector<CanonicalKey> item_keys;

  bool empty() const { return item_keys.empty(); }
};

/// Text that represents an item for similarity ranking: title, description and
/// detection cues (what the query must match), not the full content.
inline std::string indexing_text(const MemoryItem& item) {
  std::string out = item.title + "\n" + item.description;
  for (const auto& cue : item.detection_cues) out += "\n" + cue;
  return out;
}

/// True when the item would leak the expected output. Golds of >= 3 normalized
/// characters use substring co-occurrence over content + action items; shorter
/// golds (choice letters) match only the structured answer patterns.
inline bool leakage_check(const MemoryItem& item, const std::string& gold) {
  std::string raw = item.content;
  for (const auto& a : item.action_items) raw += "\n" + a;
  const std::string gold_norm = normalize_space(gold);
  if (gold_norm.size() >= 3) {
    return normalize_space(raw).find(gold_norm) != std::string::npos;
  }
  const std::string g = trim(gold);
  if (g.empty()) return false;
  return raw.find("ANSWER: " + g) != std::string::npos ||
         raw.find("<Answer>" + g + "</Answer>") != std::string::npos;
}

/// Deterministic rendering of retrieved items, in rank order.
inline StrategyContext aggregate_context(const std::vector<MemoryItem>& items) {
  StrategyContext ctx;
  std::ostringstream out;
  for (size_t i = 0; i < items.size(); ++i) {
    const MemoryItem& item = items[i];
    if (i > 0) out << "---\n";
    out << "[" << (i + 1) << "] " << item.title << "\n";
    out << "type: " << to_string(item.pattern_type) << "\n";
    out << "content: " << item.content << "\n";
    if (!item.action_items.empty()) {
      out << "action items:\n";
      for (size_t k = 0; k < item.action_items.size(); ++k) {
        out << "  " << (k + 1) << ". " << item.action_items[k] << "\n";
      }
    }
    if (!item.detection_cues.empty()) {
      out << "detection cues:\n";
      for (const auto& cue : item.detection_cues) out << "  - " << cue << "\n";
    }
    if (item.failure_cause && !item.failure_cause->empty() && *item.failure_cause != "None") {
      out << "failure cause: " << *item.failure_cause << "\n";
    }
    ctx.item_keys.push_back(CanonicalKey::of(item));
  }
  ctx.rendered = out.str();
  return ctx;
}

inline ordered_json memory_item_to_json(const MemoryItem& item) {
  ordered_json j;
  j["source_id"] = item.source_id;
  j["pattern_type"] = to_string(item.pattern_type);
  j["title"] = item.title;
  j["description"] = item.description;
  j["content"] = item.content;
  j["action_items"] = item.action_items;
  j["detection_cues"] = item.detection_cues;
  if (item.failure_cause) {
    j["failure_cause"] = *item.failure_cause;
  } else {
    j["failure_cause"] = nullptr;
  }
  j["embedding"] = item.embedding.values;
  j["sequence"] = item.sequence;
  return j;
}

inline MemoryItem memory_item_from_json(const json& j) {
  MemoryItem item;
  item.source_id = j.at("source_id").get<std::string>();
  item.pattern_type = pattern_type_from_string(j.at("pattern_type").get<std::string>());
  item.title = j.at("title").get<std::string>();
  item.description = j.value("description", "");
  item.content = j.value("content", "");
  if (j.contains("action_items")) {
    item.action_items = j.at("action_items").get<std::vector<std::string>>();
  }
  if (j.contains("detection_cues")) {
    item.detection_cues = j.at("detection_cues").get<std::vector<std::string>>();
  }
  if (j.contains("failure_cause") && !j.at("failure_cause").is_null()) {
    item.failure_cause = j.at("failure_cause").get<std::string>();
  }
  if (j.contains("embedding")) {
    item.embedding.values = j.at("embedding").get<std::vector<double>>();
  }
  item.sequence = j.value("sequence", 0L);
  if (item.title.empty()) throw Error("memory item has empty title");
  return item;
}

/// The global experience bank: similarity retrieval with leakage filtering,
/// key-based dedup, and line-delimited persistence. Readers share a lock;
/// insert/persist are exclusive.
class MemoryBank {
 public:
  explicit MemoryBank(std::shared_ptr<const TextEncoder> encoder)
      : encoder_(std::move(encoder)) {
    if (!encoder_) throw Error("memory bank requires an encoder");
  }

  size_t size() const {
    std::shared_lock lock(mu_);
    return items_.size();
  }

  long next_sequence() const {
    std::shared_lock lock(mu_);
    return next_sequence_;
  }

  std::vector<MemoryItem> items_snapshot() const {
    std::shared_lock lock(mu_);
    return items_;
  }

  /// Drops items whose canonical key already exists (including duplicates
  /// earlier in the same batch), assigns sequence numbers to survivors and
  /// appends them to the attached persistence file before committing.
  int insert(const std::vector<MemoryItem>& incoming) {
    std::unique_lock lock(mu_);
    std::vector<MemoryItem> survivors;
    std::set<CanonicalKey> batch_keys;
    long seq = next_sequence_;
    for (const MemoryItem& item : incoming) {
      const CanonicalKey key = CanonicalKey::of(item);
      if (keys_.count(key) || batch_keys.count(key)) continue;
      batch_keys.insert(key);
      MemoryItem stamped = item;
      stamped.sequence = seq++;
      survivors.push_back(std::move(stamped));
    }
    if (survivors.empty()) return 0;

    if (attached_) {
      std::string block;
      for (const auto& item : survivors) block += memory_item_to_json(item).dump() + "\n";
      std::ofstream out(*attached_, std::ios::app);
      out << block;
      out.flush();
      if (!out) {
        throw Error("memory bank persistence write failed: " + attached_->string());
      }
    }
    for (auto& item : survivors) {
      keys_.insert(CanonicalKey::of(item));
      items_.push_back(std::move(item));
    }
    next_sequence_ = seq;
    return static_cast<int>(survivors.size());
  }

  /// Top-k by similarity (descending), ties broken by lower sequence number.
  /// Items blocked by the leakage filter are excluded before ranking.
  std::vector<MemoryItem> retrieve_top_k(
      const std::string& query_text, int k,
      const std::optional<std::string>& leakage_context = std::nullopt) const {
    if (k < 1) throw Error("retrieve_top_k requires k >= 1");
    std::shared_lock lock(mu_);
    const EmbeddingVector q = encoder_->encode(query_text);
    std::vector<std::pair<double, const MemoryItem*>> ranked;
    ranked.reserve(items_.size());
    for (const auto& item : items_) {
      if (leakage_context && !leakage_context->empty() &&
          leakage_check(item, *leakage_context)) {
        continue;
      }
      ranked.emplace_back(similarity(q, item.embedding), &item);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second->sequence < b.second->sequence;
    });
    std::vector<MemoryItem> out;
    for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(k); ++i) {
      out.push_back(*ranked[i].second);
    }
    return out;
  }

  /// Future inserts append to this file.
  void attach(std::filesystem::path path) { attached_ = std::move(path); }

  /// Full rewrite of the bank at `path`, one item per line.
  void persist(const std::filesystem::path& path) const {
    std::shared_lock lock(mu_);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open bank file for writing: " + path.string());
    for (const auto& item : items_) out << memory_item_to_json(item).dump() << "\n";
    out.flush();
    if (!out) throw Error("memory bank persistence write failed: " + path.string());
  }

  static MemoryBank load(const std::filesystem::path& path,
                         std::shared_ptr<const TextEncoder> encoder) {
    MemoryBank bank(std::move(encoder));
    std::ifstream in(path);
    if (!in) throw Error("cannot open bank file: " + path.string());
    std::string line;
    int line_no = 0;
    long max_seq = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) {
        throw Error("memory bank load: " + path.string() + ": line " +
                    std::to_string(line_no) + ": empty line");
      }
      MemoryItem item;
      try {
        item = memory_item_from_json(json::parse(line));
      } catch (const std::exception& e) {
        throw Error("memory bank load: " + path.string() + ": line " +
                    std::to_string(line_no) + ": " + e.what());
      }
      max_seq = std::max(max_seq, item.sequence);
      bank.keys_.insert(CanonicalKey::of(item));
      bank.items_.push_back(std::move(item));
    }
    bank.next_sequence_ = max_seq + 1;
    return bank;
  }

  const TextEncoder& encoder() const { return *encoder_; }

  MemoryBank(MemoryBank&& other) noexcept
      : items_(std::move(other.items_)),
        keys_(std::move(other.keys_)),
        next_sequence_(other.next_sequence_),
        encoder_(std::move(other.encoder_)),
        attached_(std::move(other.attached_)) {}

 private:
  std::vector<MemoryItem> items_;
  std::set<CanonicalKey> keys_;
  long next_sequence_ = 1;
  std::shared_ptr<const TextEncoder> encoder_;
  std::optional<std::filesystem::path> attached_;
  mutable std::shared_mutex mu_;
};

}  // namespace geoevolver
