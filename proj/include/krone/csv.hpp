#pragma once

// Minimal RFC 4180 reader/writer: comma separated, optional double quotes,
// "" as an escaped quote, quoted fields may span lines. CRLF and a leading
// UTF-8 byte order mark are accepted.

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "krone/error.hpp"

namespace krone::csv {

struct Record {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record. Blank lines are skipped. Returns false at EOF.
  bool next(Record& rec) {
    rec.fields.clear();
    std::string line;
    for (;;) {
      if (!std::getline(in_, line)) return false;
      ++line_;
      if (line_ == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) break;
    }
    rec.line = line_;

    std::string field;
    bool quoted = false;
    bool in_quotes = false;
    std::size_t i = 0;
    for (;;) {
      if (i >= line.size()) {
        if (in_quotes) {
          // quoted field continues on the next physical line
          std::string more;
          if (!std::getline(in_, more)) {
            throw Error(ErrorCode::MalformedRecord,
                        "line " + std::to_string(rec.line) + ": unterminated quoted field");
          }
          ++line_;
          if (!more.empty() && more.back() == '\r') more.pop_back();
          field += '\n';
          line = std::move(more);
          i = 0;
          continue;
        }
        rec.fields.push_back(std::move(field));
        return true;
      }
      const char c = line[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          in_quotes = false;
          ++i;
          continue;
        }
        field += c;
        ++i;
        continue;
      }
      if (c == ',') {
        rec.fields.push_back(std::move(field));
        field.clear();
        quoted = false;
        ++i;
        continue;
      }
      if (c == '"') {
        if (quoted || !field.empty()) {
          throw Error(ErrorCode::MalformedRecord,
                      "line " + std::to_string(rec.line) + ": stray quote");
        }
        quoted = true;
        in_quotes = true;
        ++i;
        continue;
      }
      if (quoted) {
        throw Error(ErrorCode::MalformedRecord,
                    "line " + std::to_string(rec.line) + ": text after closing quote");
      }
      field += c;
      ++i;
    }
  }

  std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

inline std::string escape(std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos ||
                            (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_row(std::ostream& out, std::span<const std::string> fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

inline void write_row(std::ostream& out, std::initializer_list<std::string_view> fields) {
  bool first = true;
  for (auto f : fields) {
    if (!first) out << ',';
    out << escape(f);
    first = false;
  }
  out << '\n';
}

}  // namespace krone::csv
