#pragma once

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "krone/corpus.hpp"
#include "krone/csv.hpp"
#include "krone/error.hpp"
#include "krone/hierarchy.hpp"
#include "krone/util.hpp"

namespace krone {

enum class LlmTask { Extract, Verify };

/// One chat-completion call. `key` identifies what is being asked about
/// (template id for extraction, canonical scope key for verification) and
/// is what offline clients look responses up by.
struct LlmRequest {
  LlmTask task = LlmTask::Verify;
  std::string key;
  std::string system_prompt;
  std::string user_prompt;
};

/// Returns the raw completion text; parsing and retries belong to callers.
class LlmClient {
 public:
  virtual ~LlmClient() = default;

  std::string complete(const LlmRequest& req) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    if (req.task == LlmTask::Verify) verify_calls_.fetch_add(1, std::memory_order_relaxed);
    else extract_calls_.fetch_add(1, std::memory_order_relaxed);
    return do_complete(req);
  }

  std::size_t call_count() const noexcept { return calls_.load(); }
  std::size_t verify_calls() const noexcept { return verify_calls_.load(); }
  std::size_t extract_calls() const noexcept { return extract_calls_.load(); }

  /// Serializes the check-then-call-then-store path of verification so
  /// concurrent detections never pay twice for the same scope key.
  std::mutex& verify_gate() noexcept { return verify_gate_; }

 protected:
  virtual std::string do_complete(const LlmRequest& req) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> verify_calls_{0};
  std::atomic<std::size_t> extract_calls_{0};
  std::mutex verify_gate_;
};

// ---------------------------------------------------------------------------
// Prompts and response parsing

namespace prompts {

inline constexpr std::string_view kExtractSystem =
    "You analyse log templates from distributed systems. Every template describes a status "
    "of an action performed on an entity (system component). Answer only in the requested format.";

inline std::string extract_user(const Template& t) {
  std::string p;
  p += "Identify the entity (system component), the action performed on it, and the status ";
  p += "(outcome) of the action in this log template. Use short lowercase phrases.\n\n";
  p += "Template " + t.id + ": " + t.text + "\n\n";
  p += "Reply with exactly this block and nothing else:\n";
  p += "```\nentity: <entity>\naction: <action>\nstatus: <status>\n```\n";
  return p;
}

inline constexpr std::string_view kVerifySystem =
    "You verify execution segments of system logs. A segment is compared only with normal "
    "segments from the same scope. Answer only in the requested format.";

/// `examples` are already-rendered normal segments of the same scope.
inline std::string verify_user(std::string_view scope_description, std::string_view rendered_seq,
                               const std::vector<std::string>& examples) {
  std::string p;
  p += "Scope: " + std::string(scope_description) + "\n\n";
  if (examples.empty()) {
    p += "No normal examples are available for this scope.\n\n";
  } else {
    p += "Normal examples from this scope:\n";
    for (std::size_t i = 0; i < examples.size(); ++i) {
      p += std::to_string(i + 1) + ". " + examples[i] + "\n";
    }
    p += "\n";
  }
  p += "Segment to verify:\n" + std::string(rendered_seq) + "\n\n";
  p += "Is this segment a normal execution or an anomaly? Reply with two lines:\n";
  p += "VERDICT: NORMAL or ANOMALY\nEXPLANATION: <one or two sentences>\n";
  return p;
}

}  // namespace prompts

struct ParsedVerdict {
  Label label = Label::Normal;
  std::string explanation;
};

inline std::optional<ParsedVerdict> parse_verdict(std::string_view raw) {
  std::optional<Label> label;
  std::string explanation;
  for (auto& line_str : util::split(raw, '\n')) {
    auto line = util::trim(line_str);
    while (!line.empty() && (line.front() == '*' || line.front() == '`')) line.remove_prefix(1);
    const auto lower = util::to_lower(line);
    if (lower.rfind("verdict:", 0) == 0) {
      auto v = util::to_lower(util::trim(line.substr(8)));
      while (!v.empty() && !std::isalpha(static_cast<unsigned char>(v.back()))) v.pop_back();
      while (!v.empty() && !std::isalpha(static_cast<unsigned char>(v.front()))) v.erase(0, 1);
      if (v == "normal") label = Label::Normal;
      else if (v == "anomaly" || v == "anomalous" || v == "abnormal") label = Label::Anomaly;
    } else if (lower.rfind("explanation:", 0) == 0) {
      explanation = std::string(util::trim(line.substr(12)));
    } else if (!explanation.empty() && !line.empty() && line != "```") {
      explanation += " ";
      explanation += line;
    }
  }
  if (!label) return std::nullopt;
  return ParsedVerdict{*label, explanation};
}

inline std::optional<SemanticTriple> parse_triple(std::string_view raw, const TemplateId& id) {
  SemanticTriple t;
  t.template_id = id;
  for (auto& line_str : util::split(raw, '\n')) {
    auto line = util::trim(line_str);
    auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const auto field = util::to_lower(util::trim(line.substr(0, colon)));
    const std::string value(util::trim(line.substr(colon + 1)));
    if (field == "entity") t.entity = value;
    else if (field == "action") t.action = value;
    else if (field == "status") t.status = value;
  }
  if (!t.normalized().complete()) return std::nullopt;
  return t;
}

inline std::string format_verdict(Label label, std::string_view explanation) {
  return std::string("VERDICT: ") + (label == Label::Normal ? "NORMAL" : "ANOMALY") +
         "\nEXPLANATION: " + std::string(explanation) + "\n";
}

inline std::string format_triple(const SemanticTriple& t) {
  return "```\nentity: " + t.entity + "\naction: " + t.action + "\nstatus: " + t.status + "\n```\n";
}

// ---------------------------------------------------------------------------
// Offline clients

/// Deterministic mock: every verification returns the same label.
class ConstantLlm final : public LlmClient {
 public:
  explicit ConstantLlm(Label label) : label_(label) {}

 protected:
  std::string do_complete(const LlmRequest& req) override {
    if (req.task == LlmTask::Extract) {
      throw Error(ErrorCode::LlmUnavailable, "mock client cannot extract " + req.key);
    }
    return format_verdict(label_, label_ == Label::Anomaly ? "mock: flagged" : "mock: accepted");
  }

 private:
  Label label_;
};

/// Canned responses keyed by scope key (verification) or template id
/// (extraction). Unknown keys behave like an unreachable endpoint.
class FixtureLlm final : public LlmClient {
 public:
  void add_verdict(std::string scope_key, Label label, std::string explanation) {
    verdicts_[std::move(scope_key)] = {label, std::move(explanation)};
  }
  void add_triple(const SemanticTriple& t) { triples_[t.template_id] = t; }
  std::size_t verdict_count() const noexcept { return verdicts_.size(); }

  /// Verdict fixture file: header `scope_key,label,explanation`.
  void load_verdicts(std::istream& in) {
    csv::Reader reader(in);
    csv::Record rec;
    if (!reader.next(rec)) return;
    while (reader.next(rec)) {
      if (rec.fields.size() != 3) {
        throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(rec.line) + ": expected 3 fields");
      }
      auto label = parse_label(rec.fields[1]);
      if (!label) throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(rec.line) + ": bad label");
      add_verdict(rec.fields[0], *label, rec.fields[2]);
    }
  }

 protected:
  std::string do_complete(const LlmRequest& req) override {
    if (req.task == LlmTask::Extract) {
      auto it = triples_.find(req.key);
      if (it == triples_.end()) throw Error(ErrorCode::LlmUnavailable, "no fixture triple for " + req.key);
      return format_triple(it->second);
    }
    auto it = verdicts_.find(req.key);
    if (it == verdicts_.end()) throw Error(ErrorCode::LlmUnavailable, "no fixture verdict for " + req.key);
    return format_verdict(it->second.label, it->second.explanation);
  }

 private:
  std::map<std::string, ParsedVerdict> verdicts_;
  std::map<std::string, SemanticTriple> triples_;
};

/// Wraps a callable; used by tests to script malformed or changing replies.
class CallbackLlm final : public LlmClient {
 public:
  explicit CallbackLlm(std::function<std::string(const LlmRequest&)> fn) : fn_(std::move(fn)) {}

 protected:
  std::string do_complete(const LlmRequest& req) override { return fn_(req); }

 private:
  std::function<std::string(const LlmRequest&)> fn_;
};

}  // namespace krone
