#pragma once

// Structured documents exchanged with the UI, the CLI (--format jsonl) and
// the HTTP service. Field order is fixed (ordered_json); docs/schemas.md
// describes every document.

#include <json.hpp>

#include "krone/corpus.hpp"
#include "krone/decompose.hpp"
#include "krone/detector.hpp"
#include "krone/hierarchy.hpp"
#include "krone/knowledge_base.hpp"

namespace krone::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

template <typename T>
Json optional_number(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json to_json(const TreeStats& s) {
  Json j;
  j["entity_count"] = s.entity_count;
  j["action_count"] = s.action_count;
  j["status_count"] = s.status_count;
  j["template_count"] = s.template_count;
  j["max_branching"] = {{"entity", s.max_branching[0]}, {"action", s.max_branching[1]}, {"status", s.max_branching[2]}};
  j["mean_branching"] = {{"entity", s.mean_branching[0]}, {"action", s.mean_branching[1]}, {"status", s.mean_branching[2]}};
  return j;
}

inline Json node_to_json(const KroneTree& tree, NodeId id) {
  const auto& n = tree.node(id);
  Json j;
  j["id"] = n.id.value;
  j["label"] = n.label;
  j["level"] = std::string(to_string(n.level));
  j["path"] = util::join(tree.label_path(id), "/");
  if (n.level == NodeLevel::Status) {
    j["template_id"] = *n.template_id;
    j["template_text"] = n.template_text;
  } else {
    Json children = Json::array();
    for (NodeId c : n.children) children.push_back(node_to_json(tree, c));
    j["children"] = std::move(children);
  }
  return j;
}

inline Json to_json(const KroneTree& tree) {
  Json j;
  j["version"] = kSchemaVersion;
  j["root"] = node_to_json(tree, tree.root().id);
  j["stats"] = to_json(tree_stats(tree));
  return j;
}

inline Json to_json(const Span& s) { return Json::array({s.begin, s.end}); }

inline Json to_json(const KroneSeq& seq, const KroneTree& tree) {
  Json j;
  j["level"] = std::string(to_string(seq.level));
  j["parent"] = util::join(tree.label_path(seq.parent), "/");
  Json nodes = Json::array();
  for (NodeId n : seq.nodes) nodes.push_back(tree.label(n));
  j["nodes"] = std::move(nodes);
  j["span"] = to_json(seq.span);
  j["key"] = scope_key(seq, tree).to_string();
  j["rendered"] = render(seq, tree);
  return j;
}

inline Json to_json(const KroneSeqSet& set, const LogSequence& source, const KroneTree& tree) {
  Json j;
  j["sequence_id"] = source.id;
  j["events"] = source.events;
  for (auto level : {SeqLevel::S, SeqLevel::A, SeqLevel::E}) {
    Json arr = Json::array();
    for (const auto& s : set.at(level)) arr.push_back(to_json(s, tree));
    j[std::string(1, static_cast<char>(std::tolower(to_string(level)[0]))) + "_seqs"] = std::move(arr);
  }
  return j;
}

inline Json to_json(const SeqVerdict& v) {
  Json j;
  j["level"] = std::string(to_string(v.key.level));
  j["key"] = v.key.to_string();
  j["rendered"] = render(v.key);
  j["span"] = to_json(v.span);
  j["label"] = std::string(to_string(v.label));
  j["method"] = std::string(to_string(v.method));
  j["explanation"] = v.explanation;
  j["llm_called"] = v.llm_called;
  return j;
}

inline Json to_json(const DetectionReport& r) {
  Json j;
  j["sequence_id"] = r.sequence_id;
  j["final_label"] = std::string(to_string(r.final_label));
  if (r.anomalous_segment) {
    const auto& a = *r.anomalous_segment;
    j["anomalous_segment"] = {{"key", a.key.to_string()},
                              {"level", std::string(to_string(a.key.level))},
                              {"rendered", render(a.key)},
                              {"span", to_json(a.span)},
                              {"events", a.events}};
  } else {
    j["anomalous_segment"] = nullptr;
  }
  j["explanation"] = r.explanation;
  Json trace = Json::array();
  for (const auto& v : r.trace) trace.push_back(to_json(v));
  j["trace"] = std::move(trace);
  j["llm_call_count"] = r.llm_call_count;
  Json levels = Json::array();
  for (auto l : r.levels_completed) levels.push_back(std::string(to_string(l)));
  j["levels_completed"] = std::move(levels);
  return j;
}

inline Json to_json(const KnowledgeEntry& e) {
  Json j = entry_to_json(e);
  j["rendered"] = render(e.key);
  j["parent"] = e.key.parent_string();
  j["nodes"] = e.key.nodes;
  return j;
}

inline Json to_json(const NodeSummary& s) {
  Json j;
  j["path"] = util::join(s.path, "/");
  Json ancestors = Json::array();
  for (std::size_t i = 0; i + 1 < s.path.size(); ++i) ancestors.push_back(s.path[i]);
  j["ancestors"] = std::move(ancestors);
  j["entries"] = s.entries;
  j["per_level"] = {{"S", s.per_level[0]}, {"A", s.per_level[1]}, {"E", s.per_level[2]}};
  j["normal"] = s.normal;
  j["anomaly"] = s.anomaly;
  j["total_frequency"] = s.total_frequency;
  return j;
}

inline Json to_json(const IngestReport& r) {
  return Json{{"sequences", r.sequences}, {"new_entries", r.new_entries}, {"total_observations", r.total_observations}};
}

inline Json to_json(const ValidationReport& r) {
  return Json{{"sequences", r.sequences},
              {"events", r.events},
              {"distinct_templates", r.distinct_templates},
              {"labels", {{"Normal", r.normal}, {"Anomaly", r.anomaly}, {"unlabeled", r.unlabeled}}},
              {"unknown_references", r.unknown_references}};
}

inline Json to_json(const Metrics& m) {
  Json j;
  j["sequences"] = m.sequences;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["tn"] = m.tn;
  j["fn"] = m.fn;
  j["precision"] = optional_number(m.precision);
  j["recall"] = optional_number(m.recall);
  j["f1"] = optional_number(m.f1);
  j["llm_calls"] = m.llm_calls;
  j["llm_call_fraction"] = m.llm_call_fraction;
  j["total_events"] = m.total_events;
  j["distinct_keys"] = m.distinct_keys;
  j["distinct_seq_ratio"] = optional_number(m.distinct_seq_ratio);
  return j;
}

inline Json error_body(const Error& e) {
  return Json{{"code", std::string(e.name())}, {"message", e.what()}, {"detail", e.detail()}};
}

}  // namespace krone::io
