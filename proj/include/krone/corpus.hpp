#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "krone/csv.hpp"
#include "krone/error.hpp"
#include "krone/util.hpp"

namespace krone {

using TemplateId = std::string;

enum class Label { Normal, Anomaly };
enum class Split { Train, Test };

constexpr std::string_view to_string(Label l) noexcept {
  return l == Label::Normal ? "Normal" : "Anomaly";
}
constexpr std::string_view to_string(Split s) noexcept {
  return s == Split::Train ? "Train" : "Test";
}

inline std::optional<Label> parse_label(std::string_view text) {
  const auto t = util::to_lower(util::trim(text));
  if (t == "normal") return Label::Normal;
  if (t == "anomaly") return Label::Anomaly;
  return std::nullopt;
}

struct Template {
  TemplateId id;
  std::string text;
  friend bool operator==(const Template&, const Template&) = default;
};

/// The set of log templates for one analysis session. Immutable once
/// constructed; iteration order is natural id order.
class TemplateCatalog {
 public:
  TemplateCatalog() = default;

  explicit TemplateCatalog(std::vector<Template> templates) : templates_(std::move(templates)) {
    std::stable_sort(templates_.begin(), templates_.end(),
                     [](const Template& a, const Template& b) { return util::natural_less(a.id, b.id); });
    for (std::size_t i = 0; i < templates_.size(); ++i) {
      const auto& t = templates_[i];
      if (t.id.empty()) throw Error(ErrorCode::MalformedRecord, "empty template id");
      if (t.text.empty()) throw Error(ErrorCode::MalformedRecord, "empty text for template " + t.id);
      if (!index_.emplace(t.id, i).second) throw Error(ErrorCode::DuplicateTemplateId, t.id);
      by_text_.emplace(t.text, t.id);
    }
  }

  std::size_t size() const noexcept { return templates_.size(); }
  bool empty() const noexcept { return templates_.empty(); }
  bool contains(std::string_view id) const { return index_.contains(std::string(id)); }

  const std::string& text(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw Error(ErrorCode::UnknownTemplateId, std::string(id));
    return templates_[it->second].text;
  }

  const std::vector<Template>& templates() const noexcept { return templates_; }

  /// Fallback parser for toy data: maps a raw log line to the template
  /// whose text equals it exactly (after trimming).
  std::optional<TemplateId> match_exact(std::string_view raw_line) const {
    auto it = by_text_.find(std::string(util::trim(raw_line)));
    if (it == by_text_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Template> templates_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, TemplateId> by_text_;
};

struct LogSequence {
  std::string id;
  std::vector<TemplateId> events;
  std::optional<Label> label;
  friend bool operator==(const LogSequence&, const LogSequence&) = default;
};

struct SequenceCorpus {
  std::vector<LogSequence> sequences;
  Split split = Split::Test;

  const LogSequence* find(std::string_view id) const {
    auto it = std::find_if(sequences.begin(), sequences.end(),
                           [&](const LogSequence& s) { return s.id == id; });
    return it == sequences.end() ? nullptr : &*it;
  }
  std::size_t size() const noexcept { return sequences.size(); }
};

struct ValidationReport {
  std::size_t sequences = 0;
  std::size_t events = 0;
  std::size_t distinct_templates = 0;
  std::size_t normal = 0;
  std::size_t anomaly = 0;
  std::size_t unlabeled = 0;
  std::size_t unknown_references = 0;  // events whose id is absent from the catalog
  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

namespace detail {

inline bool header_matches(const csv::Record& rec, std::initializer_list<std::string_view> names) {
  if (rec.fields.size() != names.size()) return false;
  std::size_t i = 0;
  for (auto n : names) {
    if (util::to_lower(util::trim(rec.fields[i++])) != n) return false;
  }
  return true;
}

inline std::string line_ref(std::size_t line, std::string_view what) {
  return "line " + std::to_string(line) + ": " + std::string(what);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return in;
}

}  // namespace detail

/// Reads `template_id,template_text` records. A header-only or blank input
/// is an EmptyFile error.
inline TemplateCatalog read_templates(std::istream& in) {
  csv::Reader reader(in);
  csv::Record rec;
  if (!reader.next(rec)) throw Error(ErrorCode::EmptyFile, "no template header");
  if (!detail::header_matches(rec, {"template_id", "template_text"})) {
    throw Error(ErrorCode::MalformedRecord,
                detail::line_ref(rec.line, "expected header template_id,template_text"));
  }
  std::vector<Template> templates;
  std::set<std::string> seen;
  while (reader.next(rec)) {
    if (rec.fields.size() != 2) {
      throw Error(ErrorCode::MalformedRecord, detail::line_ref(rec.line, "expected 2 fields"));
    }
    std::string id(util::trim(rec.fields[0]));
    if (id.empty() || rec.fields[1].empty()) {
      throw Error(ErrorCode::MalformedRecord, detail::line_ref(rec.line, "empty id or text"));
    }
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateTemplateId, id);
    templates.push_back({std::move(id), std::move(rec.fields[1])});
  }
  if (templates.empty()) throw Error(ErrorCode::EmptyFile, "no template records");
  return TemplateCatalog(std::move(templates));
}

inline TemplateCatalog load_templates(const std::string& path) {
  auto in = detail::open_input(path);
  return read_templates(in);
}

/// Reads `sequence_id,events,label` records. When `catalog` is null the
/// events are not checked (used only for catalog-free inspection).
inline SequenceCorpus read_sequences(std::istream& in, const TemplateCatalog* catalog, Split split) {
  csv::Reader reader(in);
  csv::Record rec;
  SequenceCorpus corpus;
  corpus.split = split;
  if (!reader.next(rec)) throw Error(ErrorCode::EmptyFile, "no sequence header");
  if (!detail::header_matches(rec, {"sequence_id", "events", "label"})) {
    throw Error(ErrorCode::MalformedRecord,
                detail::line_ref(rec.line, "expected header sequence_id,events,label"));
  }
  std::set<std::string> ids;
  while (reader.next(rec)) {
    if (rec.fields.size() != 3) {
      throw Error(ErrorCode::MalformedRecord, detail::line_ref(rec.line, "expected 3 fields"));
    }
    LogSequence seq;
    seq.id = std::string(util::trim(rec.fields[0]));
    if (seq.id.empty()) throw Error(ErrorCode::MalformedRecord, detail::line_ref(rec.line, "empty sequence id"));
    if (!ids.insert(seq.id).second) {
      throw Error(ErrorCode::MalformedRecord, detail::line_ref(rec.line, "duplicate sequence id " + seq.id));
    }
    seq.events = util::split_ws(rec.fields[1]);
    if (catalog) {
      for (const auto& e : seq.events) {
        if (!catalog->contains(e)) throw Error(ErrorCode::UnknownTemplateId, seq.id + "," + e);
      }
    }
    const auto label_text = util::trim(rec.fields[2]);
    if (!label_text.empty()) {
      seq.label = parse_label(label_text);
      if (!seq.label) {
        throw Error(ErrorCode::MalformedRecord,
                    detail::line_ref(rec.line, "bad label '" + std::string(label_text) + "'"));
      }
    }
    if (split == Split::Train && seq.label == Label::Anomaly) {
      throw Error(ErrorCode::LabeledTrainAnomaly, seq.id);
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

inline SequenceCorpus load_sequences(const std::string& path, const TemplateCatalog& catalog, Split split) {
  auto in = detail::open_input(path);
  return read_sequences(in, &catalog, split);
}

inline void write_templates(std::ostream& out, const TemplateCatalog& catalog) {
  out << "template_id,template_text\n";
  for (const auto& t : catalog.templates()) csv::write_row(out, {t.id, t.text});
}

inline void write_sequences(std::ostream& out, const SequenceCorpus& corpus) {
  out << "sequence_id,events,label\n";
  for (const auto& s : corpus.sequences) {
    const std::string label = s.label ? std::string(to_string(*s.label)) : std::string();
    csv::write_row(out, {s.id, util::join(s.events, " "), label});
  }
}

inline ValidationReport validate_corpus(const SequenceCorpus& corpus, const TemplateCatalog& catalog) {
  ValidationReport r;
  std::set<std::string_view> distinct;
  for (const auto& s : corpus.sequences) {
    ++r.sequences;
    r.events += s.events.size();
    for (const auto& e : s.events) {
      distinct.insert(e);
      if (!catalog.contains(e)) ++r.unknown_references;
    }
    if (!s.label) ++r.unlabeled;
    else if (*s.label == Label::Normal) ++r.normal;
    else ++r.anomaly;
  }
  r.distinct_templates = distinct.size();
  return r;
}

}  // namespace krone
