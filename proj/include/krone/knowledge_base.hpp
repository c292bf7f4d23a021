#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "krone/decompose.hpp"
#include "krone/hierarchy.hpp"

namespace krone {

/// Identity of an execution unit: level, labels from the root to the
/// parent node, and the node labels themselves. Canonical text form is
/// "S|root/session/open|started,succeeded".
struct ScopeKey {
  SeqLevel level = SeqLevel::S;
  std::vector<std::string> parent_path;
  std::vector<std::string> nodes;

  std::string to_string() const {
    std::string out(krone::to_string(level));
    out += '|';
    out += util::join(parent_path, "/");
    out += '|';
    out += util::join(nodes, ",");
    return out;
  }

  std::string parent_string() const { return util::join(parent_path, "/"); }

  friend bool operator==(const ScopeKey&, const ScopeKey&) = default;
  friend auto operator<=>(const ScopeKey& a, const ScopeKey& b) { return a.to_string() <=> b.to_string(); }
};

inline ScopeKey parse_scope_key(std::string_view text) {
  const auto parts = util::split(text, '|');
  auto bad = [&] { return Error(ErrorCode::InvalidArgument, "bad scope key '" + std::string(text) + "'"); };
  if (parts.size() != 3) throw bad();
  ScopeKey key;
  auto level = parse_seq_level(parts[0]);
  if (!level) throw bad();
  key.level = *level;
  key.parent_path = util::split(parts[1], '/');
  key.nodes = util::split(parts[2], ',');
  auto valid = [](const std::string& s) { return !s.empty(); };
  if (!std::all_of(key.parent_path.begin(), key.parent_path.end(), valid) ||
      !std::all_of(key.nodes.begin(), key.nodes.end(), valid) || key.parent_path.front() != kRootLabel) {
    throw bad();
  }
  return key;
}

inline ScopeKey scope_key(const KroneSeq& seq, const KroneTree& tree) {
  ScopeKey key{seq.level, tree.label_path(seq.parent), {}};
  key.nodes.reserve(seq.nodes.size());
  for (NodeId n : seq.nodes) key.nodes.push_back(tree.label(n));
  return key;
}

/// "<parent> → <nodes>", same as render() on the originating KroneSeq.
inline std::string render(const ScopeKey& key) {
  std::string out = key.parent_path.back();
  out += ' ';
  out += kArrow;
  for (const auto& n : key.nodes) {
    out += ' ';
    out += n;
  }
  return out;
}

inline std::string describe_scope(const ScopeKey& key) {
  switch (key.level) {
    case SeqLevel::S:
      return "status sequence of action '" + key.parent_path.back() + "' on entity '" +
             key.parent_path[key.parent_path.size() >= 2 ? key.parent_path.size() - 2 : 0] + "'";
    case SeqLevel::A:
      return "action sequence performed on entity '" + key.parent_path.back() + "'";
    case SeqLevel::E:
      return "entity sequence of one whole execution";
  }
  return {};
}

enum class Provenance { TrainingPattern = 0, LlmVerdict = 1, HumanOverride = 2 };

constexpr std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::TrainingPattern: return "TrainingPattern";
    case Provenance::LlmVerdict: return "LlmVerdict";
    case Provenance::HumanOverride: return "HumanOverride";
  }
  return "?";
}

inline std::optional<Provenance> parse_provenance(std::string_view s) {
  if (s == "TrainingPattern") return Provenance::TrainingPattern;
  if (s == "LlmVerdict") return Provenance::LlmVerdict;
  if (s == "HumanOverride") return Provenance::HumanOverride;
  return std::nullopt;
}

struct KnowledgeEntry {
  ScopeKey key;
  Label label = Label::Normal;
  std::string explanation;
  Provenance provenance = Provenance::TrainingPattern;
  std::uint64_t frequency = 0;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;
  std::vector<std::string> source_sequence_ids;  // first few observers only
  std::optional<std::string> override_note;
  friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

enum class UpsertOutcome { Created, Updated, FrequencyOnly, ConflictRejected };

struct UpsertResult {
  KnowledgeEntry entry;
  UpsertOutcome outcome = UpsertOutcome::Created;
};

struct NodeSummary {
  std::vector<std::string> path;       // root .. node
  std::size_t entries = 0;
  std::array<std::size_t, 3> per_level{};  // S, A, E
  std::size_t normal = 0;
  std::size_t anomaly = 0;
  std::uint64_t total_frequency = 0;
  friend bool operator==(const NodeSummary&, const NodeSummary&) = default;
};

struct IngestReport {
  std::size_t sequences = 0;
  std::size_t new_entries = 0;
  std::size_t total_observations = 0;
  friend bool operator==(const IngestReport&, const IngestReport&) = default;
};

inline constexpr std::string_view kStoreFormat = "krone-kb";
inline constexpr int kStoreVersion = 1;
inline constexpr std::size_t kMaxSourceIds = 5;

inline nlohmann::ordered_json entry_to_json(const KnowledgeEntry& e) {
  nlohmann::ordered_json j;
  j["key"] = e.key.to_string();
  j["level"] = std::string(to_string(e.key.level));
  j["label"] = std::string(to_string(e.label));
  j["provenance"] = std::string(to_string(e.provenance));
  j["frequency"] = e.frequency;
  j["explanation"] = e.explanation;
  j["created_ms"] = e.created_ms;
  j["updated_ms"] = e.updated_ms;
  j["sources"] = e.source_sequence_ids;
  j["override_note"] = e.override_note ? nlohmann::ordered_json(*e.override_note) : nlohmann::ordered_json(nullptr);
  return j;
}

inline KnowledgeEntry entry_from_json(const nlohmann::json& j) {
  KnowledgeEntry e;
  e.key = parse_scope_key(j.at("key").get<std::string>());
  auto label = parse_label(j.at("label").get<std::string>());
  auto prov = parse_provenance(j.at("provenance").get<std::string>());
  if (!label || !prov) throw Error(ErrorCode::InvalidEntry, "bad label or provenance");
  e.label = *label;
  e.provenance = *prov;
  e.frequency = j.at("frequency").get<std::uint64_t>();
  e.explanation = j.at("explanation").get<std::string>();
  e.created_ms = j.at("created_ms").get<std::int64_t>();
  e.updated_ms = j.at("updated_ms").get<std::int64_t>();
  e.source_sequence_ids = j.at("sources").get<std::vector<std::string>>();
  if (const auto& n = j.at("override_note"); !n.is_null()) e.override_note = n.get<std::string>();
  if (e.frequency < 1) throw Error(ErrorCode::InvalidEntry, "frequency < 1");
  if (e.provenance == Provenance::TrainingPattern && e.label != Label::Normal) {
    throw Error(ErrorCode::InvalidEntry, "training pattern must be Normal");
  }
  return e;
}

/// Exact-key store of execution-unit knowledge.
///
/// Label authority: HumanOverride > LlmVerdict > TrainingPattern. A
/// lower-authority upsert only bumps the frequency. An LLM verdict that
/// contradicts a training pattern is rejected (ConflictRejected) and
/// reported through the warning sink; training knowledge is never flipped
/// by a model.
///
/// Many readers, one writer (std::shared_mutex). When a journal is attached
/// every mutation is appended to it as one JSON line; the journal is
/// compacted once it holds more than twice as many records as there are
/// entries (plus a fixed slack).
class KnowledgeBase {
 public:
  using Clock = std::function<std::int64_t()>;

  KnowledgeBase() = default;
  KnowledgeBase(const KnowledgeBase&) = delete;
  KnowledgeBase& operator=(const KnowledgeBase&) = delete;

  void set_clock(Clock clock) { clock_ = std::move(clock); }
  void set_warning_sink(std::function<void(const std::string&)> sink) { warn_ = std::move(sink); }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  std::optional<KnowledgeEntry> query(const ScopeKey& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key.to_string());
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  UpsertResult upsert(const ScopeKey& key, Label label, std::string explanation, Provenance provenance,
                      std::string_view source_sequence_id = {}) {
    if (provenance == Provenance::TrainingPattern && label != Label::Normal) {
      throw Error(ErrorCode::InvalidEntry, "training pattern must be Normal: " + key.to_string());
    }
    std::unique_lock lock(mu_);
    const auto now = now_ms();
    const std::string k = key.to_string();
    auto it = entries_.find(k);
    if (it == entries_.end()) {
      KnowledgeEntry e{key, label, std::move(explanation), provenance, 1, now, now, {}, std::nullopt};
      if (!source_sequence_id.empty()) e.source_sequence_ids.emplace_back(source_sequence_id);
      it = entries_.emplace(k, std::move(e)).first;
      journal(it->second);
      return {it->second, UpsertOutcome::Created};
    }

    KnowledgeEntry& e = it->second;
    if (provenance == Provenance::LlmVerdict && e.provenance == Provenance::TrainingPattern && label != e.label) {
      lock.unlock();
      if (warn_) warn_("ConflictingVerdict: LLM labeled training pattern " + k + " as " + std::string(to_string(label)));
      return {*query(key), UpsertOutcome::ConflictRejected};
    }

    UpsertOutcome outcome = UpsertOutcome::FrequencyOnly;
    ++e.frequency;
    e.updated_ms = now;
    if (!source_sequence_id.empty() && e.source_sequence_ids.size() < kMaxSourceIds &&
        std::find(e.source_sequence_ids.begin(), e.source_sequence_ids.end(), source_sequence_id) ==
            e.source_sequence_ids.end()) {
      e.source_sequence_ids.emplace_back(source_sequence_id);
    }
    const bool authority = static_cast<int>(provenance) > static_cast<int>(e.provenance) ||
                           (provenance == e.provenance && provenance != Provenance::TrainingPattern);
    // an LLM agreeing with training data leaves the trusted provenance alone
    const bool training_confirmed = provenance == Provenance::LlmVerdict && e.provenance == Provenance::TrainingPattern;
    if (authority && !training_confirmed) {
      e.label = label;
      e.provenance = provenance;
      if (!explanation.empty()) e.explanation = std::move(explanation);
      outcome = UpsertOutcome::Updated;
    }
    journal(e);
    return {e, outcome};
  }

  /// Human correction: takes label authority, keeps the frequency.
  KnowledgeEntry override_label(const ScopeKey& key, Label label, std::string note) {
    std::unique_lock lock(mu_);
    auto it = entries_.find(key.to_string());
    if (it == entries_.end()) throw Error(ErrorCode::UnknownKey, key.to_string());
    auto& e = it->second;
    e.label = label;
    e.provenance = Provenance::HumanOverride;
    e.override_note = std::move(note);
    e.updated_ms = now_ms();
    journal(e);
    if (journal_out_) journal_out_.flush();
    return e;
  }

  /// All entries, ordered by canonical key.
  std::vector<KnowledgeEntry> entries() const {
    std::shared_lock lock(mu_);
    std::vector<KnowledgeEntry> out;
    out.reserve(entries_.size());
    for (const auto& [k, e] : entries_) out.push_back(e);
    return out;
  }

  /// Entries filtered by parent path ("root/session/open") and level,
  /// frequency descending, ties by key.
  std::vector<KnowledgeEntry> list(std::optional<std::string> parent, std::optional<SeqLevel> level) const {
    std::vector<KnowledgeEntry> out;
    {
      std::shared_lock lock(mu_);
      for (const auto& [k, e] : entries_) {
        if (level && e.key.level != *level) continue;
        if (parent && e.key.parent_string() != *parent) continue;
        out.push_back(e);
      }
    }
    std::stable_sort(out.begin(), out.end(), [](const KnowledgeEntry& a, const KnowledgeEntry& b) {
      return a.frequency > b.frequency;
    });
    return out;
  }

  /// Normal entries in one scope (same level and parent path), frequency
  /// descending then key ascending, at most `k`.
  std::vector<KnowledgeEntry> normals_in_scope(const std::vector<std::string>& parent_path, SeqLevel level,
                                               std::size_t k, const ScopeKey* exclude = nullptr) const {
    auto all = list(util::join(parent_path, "/"), level);
    std::vector<KnowledgeEntry> out;
    for (auto& e : all) {
      if (out.size() >= k) break;
      if (e.label != Label::Normal) continue;
      if (exclude && e.key == *exclude) continue;
      out.push_back(std::move(e));
    }
    return out;
  }

  NodeSummary node_summary(const KroneTree& tree, NodeId node) const {
    NodeSummary s;
    s.path = tree.label_path(node);
    std::shared_lock lock(mu_);
    for (const auto& [k, e] : entries_) {
      const auto& pp = e.key.parent_path;
      if (pp.size() < s.path.size() || !std::equal(s.path.begin(), s.path.end(), pp.begin())) continue;
      ++s.entries;
      ++s.per_level[static_cast<std::size_t>(e.key.level)];
      if (e.label == Label::Normal) ++s.normal;
      else ++s.anomaly;
      s.total_frequency += e.frequency;
    }
    return s;
  }

  // -- persistence --------------------------------------------------------

  /// Writes a compacted snapshot (header line + one entry per line, key
  /// order) via a temporary file and rename.
  void persist(const std::string& path) const {
    std::shared_lock lock(mu_);
    write_snapshot(path);
  }

  /// Replaces the contents with the records in `path`. Later records for a
  /// key supersede earlier ones, so snapshots and journals load alike.
  void load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    auto loaded = read_records(in);
    std::unique_lock lock(mu_);
    entries_ = std::move(loaded.entries);
    journal_records_ = loaded.records;
  }

  /// Loads `path` if it exists, then appends every later mutation to it.
  void attach_journal(const std::string& path) {
    if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) load(path);
    std::unique_lock lock(mu_);
    journal_path_ = path;
    write_snapshot(path);
    journal_records_ = entries_.size();
    journal_out_.open(path, std::ios::app | std::ios::binary);
    if (!journal_out_) throw Error(ErrorCode::IoError, "cannot append to " + path);
  }

  void flush() {
    std::unique_lock lock(mu_);
    if (journal_out_) journal_out_.flush();
  }

  std::size_t journal_records() const {
    std::shared_lock lock(mu_);
    return journal_records_;
  }

 private:
  struct Loaded {
    std::map<std::string, KnowledgeEntry> entries;
    std::size_t records = 0;
  };

  static Loaded read_records(std::istream& in) {
    Loaded out;
    std::string line;
    std::size_t lineno = 0;
    auto corrupt = [&](const std::string& why) {
      return Error(ErrorCode::CorruptStore, "line " + std::to_string(lineno) + ": " + why);
    };
    if (!std::getline(in, line)) throw Error(ErrorCode::CorruptStore, "line 1: missing header");
    ++lineno;
    try {
      auto h = nlohmann::json::parse(line);
      if (h.at("format") != kStoreFormat || h.at("version") != kStoreVersion) throw corrupt("unsupported header");
    } catch (const nlohmann::json::exception&) {
      throw corrupt("bad header");
    }
    while (true) {
      const bool got = static_cast<bool>(std::getline(in, line));
      if (!got) break;
      ++lineno;
      // a record without its terminating newline was cut off mid-write
      if (in.eof()) throw corrupt("truncated record");
      if (line.empty()) continue;
      try {
        auto e = entry_from_json(nlohmann::json::parse(line));
        auto k = e.key.to_string();
        out.entries.insert_or_assign(std::move(k), std::move(e));
        ++out.records;
      } catch (const nlohmann::json::exception& e) {
        throw corrupt(e.what());
      } catch (const Error& e) {
        throw corrupt(e.what());
      }
    }
    return out;
  }

  void write_snapshot(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
      nlohmann::ordered_json header;
      header["format"] = kStoreFormat;
      header["version"] = kStoreVersion;
      out << header.dump() << '\n';
      for (const auto& [k, e] : entries_) out << entry_to_json(e).dump() << '\n';
      if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoError, "rename " + tmp + ": " + ec.message());
  }

  // caller holds the unique lock
  void journal(const KnowledgeEntry& e) {
    if (!journal_out_.is_open()) return;
    journal_out_ << entry_to_json(e).dump() << '\n';
    ++journal_records_;
    if (journal_records_ > 2 * entries_.size() + 256) {
      journal_out_.close();
      write_snapshot(journal_path_);
      journal_records_ = entries_.size();
      journal_out_.open(journal_path_, std::ios::app | std::ios::binary);
    }
  }

  std::int64_t now_ms() const {
    if (clock_) return clock_();
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  mutable std::shared_mutex mu_;
  std::map<std::string, KnowledgeEntry> entries_;
  Clock clock_;
  std::function<void(const std::string&)> warn_;
  std::string journal_path_;
  std::ofstream journal_out_;
  std::size_t journal_records_ = 0;
};

/// Stores every KroneSeq of every training sequence as a normal pattern.
/// All sequences are decomposed before the first write, so a bad sequence
/// leaves the store untouched.
inline IngestReport ingest_training(const SequenceCorpus& corpus, const KroneTree& tree, KnowledgeBase& kb,
                                    const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  std::vector<std::vector<ScopeKey>> keys;
  keys.reserve(corpus.size());
  for (const auto& seq : corpus.sequences) {
    if (seq.label == Label::Anomaly) throw Error(ErrorCode::LabeledTrainAnomaly, seq.id);
    auto set = decompose(seq, tree);
    std::vector<ScopeKey> k;
    for (auto level : {SeqLevel::S, SeqLevel::A, SeqLevel::E}) {
      for (const auto& s : set.at(level)) k.push_back(scope_key(s, tree));
    }
    keys.push_back(std::move(k));
  }
  IngestReport report;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (const auto& k : keys[i]) {
      auto r = kb.upsert(k, Label::Normal, {}, Provenance::TrainingPattern, corpus.sequences[i].id);
      if (r.outcome == UpsertOutcome::Created) ++report.new_entries;
      ++report.total_observations;
    }
    ++report.sequences;
    if (progress) progress(i + 1, keys.size());
  }
  return report;
}

}  // namespace krone
