#pragma once

// Conversion from the public HDFS benchmark layout (template table, per-block
// event traces, anomaly_label.csv) into the engine's templates/sequences files.
//
// Behaviour:
//  * template table: header `EventId,EventTemplate[,...]` (extra columns
//    ignored) or the engine's own `template_id,template_text`.
//  * traces: header containing `BlockId` and one of `Features`,
//    `EventSequence` or `EventId`; the event list may be written as
//    "[E5,E22]", "['E5', 'E22']" or "E5 E22".
//  * labels: `BlockId,Label` with Normal/Anomaly; every trace block must
//    have a label.
//  * blocks keep file order; no windowing or deduplication is applied.
//  * split: the first ceil(train_ratio * #normal) normal blocks go to Train,
//    every other block (remaining normals and all anomalies) goes to Test.

#include <cmath>
#include <optional>
#include <unordered_map>

#include "krone/corpus.hpp"

namespace krone::hdfs {

struct ConvertOptions {
  double train_ratio = 0.8;
  std::optional<std::size_t> max_blocks;  // keep only the first N trace rows
};

struct ConvertReport {
  std::size_t blocks = 0;
  std::size_t normal = 0;
  std::size_t anomaly = 0;
  std::size_t train = 0;
  std::size_t test = 0;
  std::size_t unused_labels = 0;  // label rows with no trace
};

struct Dataset {
  TemplateCatalog catalog;
  SequenceCorpus train;
  SequenceCorpus test;
  ConvertReport report;
};

namespace detail {

inline std::optional<std::size_t> column(const csv::Record& header, std::initializer_list<std::string_view> names) {
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    const auto h = util::to_lower(util::trim(header.fields[i]));
    for (auto n : names) {
      if (h == util::to_lower(n)) return i;
    }
  }
  return std::nullopt;
}

inline std::vector<std::string> parse_event_list(std::string_view raw) {
  std::string cleaned;
  cleaned.reserve(raw.size());
  for (char c : raw) {
    if (c == '[' || c == ']' || c == '\'' || c == '"') continue;
    cleaned += (c == ',' ? ' ' : c);
  }
  return util::split_ws(cleaned);
}

}  // namespace detail

inline TemplateCatalog read_template_table(std::istream& in) {
  csv::Reader reader(in);
  csv::Record header;
  if (!reader.next(header)) throw Error(ErrorCode::EmptyFile, "empty template table");
  const auto id_col = detail::column(header, {"EventId", "template_id"});
  const auto text_col = detail::column(header, {"EventTemplate", "template_text"});
  if (!id_col || !text_col) {
    throw Error(ErrorCode::MalformedRecord, "line 1: template table needs EventId and EventTemplate columns");
  }
  std::vector<Template> templates;
  csv::Record rec;
  while (reader.next(rec)) {
    if (rec.fields.size() <= std::max(*id_col, *text_col)) {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(rec.line) + ": missing columns");
    }
    templates.push_back({std::string(util::trim(rec.fields[*id_col])), rec.fields[*text_col]});
  }
  if (templates.empty()) throw Error(ErrorCode::EmptyFile, "no template rows");
  return TemplateCatalog(std::move(templates));
}

inline Dataset convert(std::istream& template_table, std::istream& traces, std::istream& labels,
                       const ConvertOptions& opts = {}) {
  if (!(opts.train_ratio >= 0.0 && opts.train_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train_ratio must lie in [0,1]");
  }
  Dataset ds;
  ds.catalog = read_template_table(template_table);

  std::unordered_map<std::string, Label> label_of;
  {
    csv::Reader reader(labels);
    csv::Record header;
    if (!reader.next(header)) throw Error(ErrorCode::EmptyFile, "empty label file");
    const auto block_col = detail::column(header, {"BlockId"});
    const auto label_col = detail::column(header, {"Label"});
    if (!block_col || !label_col) throw Error(ErrorCode::MalformedRecord, "line 1: label file needs BlockId,Label");
    csv::Record rec;
    while (reader.next(rec)) {
      if (rec.fields.size() <= std::max(*block_col, *label_col)) {
        throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(rec.line) + ": missing columns");
      }
      auto label = parse_label(rec.fields[*label_col]);
      if (!label) throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(rec.line) + ": bad label");
      label_of[std::string(util::trim(rec.fields[*block_col]))] = *label;
    }
  }

  std::vector<LogSequence> blocks;
  {
    csv::Reader reader(traces);
    csv::Record header;
    if (!reader.next(header)) throw Error(ErrorCode::EmptyFile, "empty trace file");
    const auto block_col = detail::column(header, {"BlockId"});
    const auto events_col = detail::column(header, {"Features", "EventSequence", "EventId"});
    if (!block_col || !events_col) {
      throw Error(ErrorCode::MalformedRecord, "line 1: trace file needs BlockId and Features/EventSequence");
    }
    csv::Record rec;
    while (reader.next(rec)) {
      if (opts.max_blocks && blocks.size() >= *opts.max_blocks) break;
      if (rec.fields.size() <= std::max(*block_col, *events_col)) {
        throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(rec.line) + ": missing columns");
      }
      LogSequence seq;
      seq.id = std::string(util::trim(rec.fields[*block_col]));
      seq.events = detail::parse_event_list(rec.fields[*events_col]);
      for (const auto& e : seq.events) {
        if (!ds.catalog.contains(e)) throw Error(ErrorCode::UnknownTemplateId, seq.id + "," + e);
      }
      auto it = label_of.find(seq.id);
      if (it == label_of.end()) {
        throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(rec.line) + ": no label for " + seq.id);
      }
      seq.label = it->second;
      blocks.push_back(std::move(seq));
    }
  }

  std::size_t normals = 0;
  for (const auto& b : blocks) normals += (*b.label == Label::Normal);
  const auto train_quota = static_cast<std::size_t>(std::ceil(opts.train_ratio * static_cast<double>(normals)));

  ds.train.split = Split::Train;
  ds.test.split = Split::Test;
  std::size_t taken = 0;
  for (auto& b : blocks) {
    ++ds.report.blocks;
    if (*b.label == Label::Normal) ++ds.report.normal;
    else ++ds.report.anomaly;
    if (*b.label == Label::Normal && taken < train_quota) {
      ++taken;
      ds.train.sequences.push_back(std::move(b));
    } else {
      ds.test.sequences.push_back(std::move(b));
    }
  }
  ds.report.train = ds.train.size();
  ds.report.test = ds.test.size();
  ds.report.unused_labels = label_of.size() >= blocks.size() ? label_of.size() - blocks.size() : 0;
  return ds;
}

}  // namespace krone::hdfs
