#pragma once

#include <span>
#include <string>
#include <vector>

#include "krone/corpus.hpp"
#include "krone/hierarchy.hpp"

namespace krone {

enum class SeqLevel { S, A, E };

constexpr std::string_view to_string(SeqLevel l) noexcept {
  switch (l) {
    case SeqLevel::S: return "S";
    case SeqLevel::A: return "A";
    case SeqLevel::E: return "E";
  }
  return "?";
}

inline std::optional<SeqLevel> parse_seq_level(std::string_view s) {
  if (s == "S" || s == "s") return SeqLevel::S;
  if (s == "A" || s == "a") return SeqLevel::A;
  if (s == "E" || s == "e") return SeqLevel::E;
  return std::nullopt;
}

/// Half-open interval [begin, end) into a sequence's events.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// One contiguous execution segment. `parent` is an action node for S,
/// an entity node for A and the root for E; `nodes` are children of it.
struct KroneSeq {
  SeqLevel level = SeqLevel::S;
  NodeId parent;
  std::vector<NodeId> nodes;
  Span span;
  std::string source_sequence_id;
  friend bool operator==(const KroneSeq&, const KroneSeq&) = default;
};

struct KroneSeqSet {
  std::vector<KroneSeq> s_seqs;
  std::vector<KroneSeq> a_seqs;
  std::vector<KroneSeq> e_seqs;

  const std::vector<KroneSeq>& at(SeqLevel level) const {
    switch (level) {
      case SeqLevel::S: return s_seqs;
      case SeqLevel::A: return a_seqs;
      case SeqLevel::E: return e_seqs;
    }
    return s_seqs;
  }
  friend bool operator==(const KroneSeqSet&, const KroneSeqSet&) = default;
};

inline std::vector<LeafPath> annotate(const LogSequence& sequence, const KroneTree& tree) {
  std::vector<LeafPath> paths;
  paths.reserve(sequence.events.size());
  for (const auto& e : sequence.events) paths.push_back(tree.lookup_leaf(e));
  return paths;
}

/// Splits a sequence into maximal same-entity runs, each of those into
/// maximal same-action runs. Every action run is an S-seq, every entity run
/// an A-seq, and the whole sequence the single E-seq. Interleaved entities
/// repeat in the E-seq; nothing is reordered.
inline KroneSeqSet decompose(const LogSequence& sequence, const KroneTree& tree) {
  if (sequence.events.empty()) throw Error(ErrorCode::EmptySequence, sequence.id);
  const auto paths = annotate(sequence, tree);
  const std::size_t n = paths.size();

  KroneSeqSet out;
  KroneSeq e_seq{SeqLevel::E, tree.root().id, {}, {0, n}, sequence.id};

  std::size_t entity_start = 0;
  while (entity_start < n) {
    const NodeId entity = paths[entity_start].entity;
    std::size_t entity_end = entity_start;
    while (entity_end < n && paths[entity_end].entity == entity) ++entity_end;

    KroneSeq a_seq{SeqLevel::A, entity, {}, {entity_start, entity_end}, sequence.id};
    std::size_t action_start = entity_start;
    while (action_start < entity_end) {
      const NodeId action = paths[action_start].action;
      KroneSeq s_seq{SeqLevel::S, action, {}, {action_start, action_start}, sequence.id};
      std::size_t i = action_start;
      for (; i < entity_end && paths[i].action == action; ++i) s_seq.nodes.push_back(paths[i].status);
      s_seq.span.end = i;
      a_seq.nodes.push_back(action);
      out.s_seqs.push_back(std::move(s_seq));
      action_start = i;
    }
    e_seq.nodes.push_back(entity);
    out.a_seqs.push_back(std::move(a_seq));
    entity_start = entity_end;
  }
  out.e_seqs.push_back(std::move(e_seq));
  return out;
}

inline std::vector<TemplateId> segment_events(const KroneSeq& seq, const LogSequence& source) {
  if (seq.span.begin >= seq.span.end || seq.span.end > source.events.size()) {
    throw Error(ErrorCode::SpanOutOfBounds, "[" + std::to_string(seq.span.begin) + "," +
                                                std::to_string(seq.span.end) + ") of " +
                                                std::to_string(source.events.size()));
  }
  return {source.events.begin() + static_cast<std::ptrdiff_t>(seq.span.begin),
          source.events.begin() + static_cast<std::ptrdiff_t>(seq.span.end)};
}

inline constexpr std::string_view kArrow = "\xE2\x86\x92";  // U+2192

/// "<parent> → <node> <node> ..."
inline std::string render(const KroneSeq& seq, const KroneTree& tree) {
  std::string out = tree.label(seq.parent);
  out += ' ';
  out += kArrow;
  for (NodeId n : seq.nodes) {
    out += ' ';
    out += tree.label(n);
  }
  return out;
}

}  // namespace krone
