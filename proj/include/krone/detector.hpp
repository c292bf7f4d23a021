#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "krone/decompose.hpp"
#include "krone/knowledge_base.hpp"
#include "krone/llm.hpp"

namespace krone {

enum class LlmMode { Live, Fixture, AlwaysAnomaly, AlwaysNormal, FlagUnknown };

constexpr std::string_view to_string(LlmMode m) noexcept {
  switch (m) {
    case LlmMode::Live: return "live";
    case LlmMode::Fixture: return "fixture";
    case LlmMode::AlwaysAnomaly: return "always-anomaly";
    case LlmMode::AlwaysNormal: return "always-normal";
    case LlmMode::FlagUnknown: return "flag-unknown";
  }
  return "?";
}

inline std::optional<LlmMode> parse_llm_mode(std::string_view s) {
  for (auto m : {LlmMode::Live, LlmMode::Fixture, LlmMode::AlwaysAnomaly, LlmMode::AlwaysNormal, LlmMode::FlagUnknown}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

struct DetectorConfig {
  std::size_t k = 5;                             // in-context normal examples
  LlmMode mode = LlmMode::FlagUnknown;
  std::size_t max_llm_calls_per_sequence = 10;

  void validate() const {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  }
};

enum class Method { PatternMatch, KnowledgeReuse, Llm, HumanOverrideReuse, FlagUnknown };

constexpr std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::PatternMatch: return "PatternMatch";
    case Method::KnowledgeReuse: return "KnowledgeReuse";
    case Method::Llm: return "Llm";
    case Method::HumanOverrideReuse: return "HumanOverrideReuse";
    case Method::FlagUnknown: return "FlagUnknown";
  }
  return "?";
}

struct SeqVerdict {
  ScopeKey key;
  Span span;
  Label label = Label::Normal;
  Method method = Method::PatternMatch;
  std::string explanation;
  bool llm_called = false;
  friend bool operator==(const SeqVerdict&, const SeqVerdict&) = default;
};

struct AnomalousSegment {
  ScopeKey key;
  Span span;
  std::vector<TemplateId> events;
  friend bool operator==(const AnomalousSegment&, const AnomalousSegment&) = default;
};

struct DetectionReport {
  std::string sequence_id;
  Label final_label = Label::Normal;
  std::optional<AnomalousSegment> anomalous_segment;
  std::string explanation;
  std::vector<SeqVerdict> trace;          // evaluation order: S seqs, then A, then E
  std::size_t llm_call_count = 0;
  std::vector<SeqLevel> levels_completed;
};

/// Known iff the store holds the exact key.
inline std::optional<SeqVerdict> pattern_match(const ScopeKey& key, Span span, const KnowledgeBase& kb) {
  auto entry = kb.query(key);
  if (!entry) return std::nullopt;
  Method method = Method::KnowledgeReuse;
  if (entry->provenance == Provenance::HumanOverride) method = Method::HumanOverrideReuse;
  else if (entry->provenance == Provenance::TrainingPattern) method = Method::PatternMatch;
  return SeqVerdict{key, span, entry->label, method, entry->explanation, false};
}

/// Up to k rendered normal units from the same scope, most frequent first,
/// ties broken by key.
inline std::vector<std::string> select_examples(const KnowledgeBase& kb, const std::vector<std::string>& parent_path,
                                                SeqLevel level, std::size_t k, const ScopeKey* exclude = nullptr) {
  std::vector<std::string> out;
  for (const auto& e : kb.normals_in_scope(parent_path, level, k, exclude)) out.push_back(render(e.key));
  return out;
}

struct LlmVerification {
  SeqVerdict verdict;
  std::size_t attempts = 0;
};

/// One verification round trip (plus one retry on an unparseable reply);
/// the verdict is stored as an LlmVerdict entry.
inline LlmVerification llm_verify(const ScopeKey& key, Span span, const std::vector<std::string>& examples,
                                  LlmClient& llm, KnowledgeBase& kb, std::string_view source_sequence_id = {}) {
  LlmRequest req{LlmTask::Verify, key.to_string(), std::string(prompts::kVerifySystem),
                 prompts::verify_user(describe_scope(key), render(key), examples)};
  std::string raw;
  for (std::size_t attempt = 1; attempt <= 2; ++attempt) {
    raw = llm.complete(req);
    if (auto parsed = parse_verdict(raw)) {
      auto stored = kb.upsert(key, parsed->label, parsed->explanation, Provenance::LlmVerdict, source_sequence_id);
      const Label label = stored.outcome == UpsertOutcome::ConflictRejected ? stored.entry.label : parsed->label;
      return {SeqVerdict{key, span, label, Method::Llm, parsed->explanation, true}, attempt};
    }
  }
  throw Error(ErrorCode::VerdictUnparseable, raw);
}

inline constexpr std::string_view kFlagUnknownExplanation = "no matching normal pattern in this scope";

/// Bottom-up detection with early stopping: S-seqs in span order, then
/// A-seqs, then the E-seq; the first anomalous unit ends the run and is
/// reported as the localized segment. `llm` may be null only in
/// FlagUnknown mode.
inline DetectionReport detect_sequence(const LogSequence& sequence, const KroneTree& tree, KnowledgeBase& kb,
                                       LlmClient* llm, const DetectorConfig& config) {
  config.validate();
  const auto set = decompose(sequence, tree);
  DetectionReport report;
  report.sequence_id = sequence.id;

  for (auto level : {SeqLevel::S, SeqLevel::A, SeqLevel::E}) {
    for (const auto& seq : set.at(level)) {
      const ScopeKey key = scope_key(seq, tree);
      std::optional<SeqVerdict> verdict = pattern_match(key, seq.span, kb);

      if (!verdict && config.mode == LlmMode::FlagUnknown) {
        verdict = SeqVerdict{key, seq.span, Label::Anomaly, Method::FlagUnknown,
                             std::string(kFlagUnknownExplanation), false};
      }
      if (!verdict) {
        if (!llm) throw Error(ErrorCode::LlmUnavailable, "no LLM client configured");
        std::lock_guard gate(llm->verify_gate());
        verdict = pattern_match(key, seq.span, kb);  // another worker may have stored it meanwhile
        if (!verdict) {
          if (report.llm_call_count >= config.max_llm_calls_per_sequence) {
            throw Error(ErrorCode::LlmCallBudgetExceeded, std::to_string(config.max_llm_calls_per_sequence));
          }
          const auto examples = select_examples(kb, key.parent_path, key.level, config.k, &key);
          auto v = llm_verify(key, seq.span, examples, *llm, kb, sequence.id);
          report.llm_call_count += v.attempts;
          verdict = std::move(v.verdict);
        }
      }

      report.trace.push_back(*verdict);
      if (verdict->label == Label::Anomaly) {
        report.final_label = Label::Anomaly;
        report.explanation = verdict->explanation;
        report.anomalous_segment = AnomalousSegment{key, seq.span, segment_events(seq, sequence)};
        return report;
      }
    }
    report.levels_completed.push_back(level);
  }
  return report;
}

struct Metrics {
  std::size_t sequences = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::size_t llm_calls = 0;
  double llm_call_fraction = 0.0;     // LLM calls / test sequences
  std::size_t total_events = 0;
  std::size_t distinct_keys = 0;      // distinct execution units covering the test data
  std::optional<double> distinct_seq_ratio;
};

/// Anomaly is the positive class. Precision (recall) is absent when nothing
/// was predicted (labeled) anomalous; F1 is absent when either is absent.
inline void fill_rates(Metrics& m) {
  m.precision = (m.tp + m.fp) ? std::optional<double>(static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp))
                              : std::nullopt;
  m.recall = (m.tp + m.fn) ? std::optional<double>(static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn))
                           : std::nullopt;
  if (m.precision && m.recall) {
    const double s = *m.precision + *m.recall;
    m.f1 = s > 0.0 ? 2.0 * *m.precision * *m.recall / s : 0.0;
  } else {
    m.f1.reset();
  }
}

struct Evaluation {
  Metrics metrics;
  std::vector<DetectionReport> reports;  // corpus order
};

/// Runs detect_sequence over a labeled corpus. With jobs > 1 sequences are
/// processed concurrently; LLM calls stay single-flight per scope key.
inline Evaluation evaluate(const SequenceCorpus& corpus, const KroneTree& tree, KnowledgeBase& kb, LlmClient* llm,
                           const DetectorConfig& config, std::size_t jobs = 1,
                           const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  for (const auto& s : corpus.sequences) {
    if (!s.label) throw Error(ErrorCode::UnlabeledCorpus, s.id);
  }
  Evaluation ev;
  ev.reports.resize(corpus.size());

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= corpus.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        ev.reports[i] = detect_sequence(corpus.sequences[i], tree, kb, llm, config);
        const auto d = done.fetch_add(1) + 1;
        if (progress) {
          std::lock_guard lock(mu);
          progress(d, corpus.size());
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (jobs <= 1 || corpus.size() <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < std::min(jobs, corpus.size()); ++t) threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  Metrics& m = ev.metrics;
  std::set<std::string> keys;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& seq = corpus.sequences[i];
    const auto& r = ev.reports[i];
    const bool truth = *seq.label == Label::Anomaly;
    const bool pred = r.final_label == Label::Anomaly;
    if (truth && pred) ++m.tp;
    else if (!truth && pred) ++m.fp;
    else if (truth && !pred) ++m.fn;
    else ++m.tn;
    m.llm_calls += r.llm_call_count;
    m.total_events += seq.events.size();
    const auto set = decompose(seq, tree);
    for (auto level : {SeqLevel::S, SeqLevel::A, SeqLevel::E}) {
      for (const auto& s : set.at(level)) keys.insert(scope_key(s, tree).to_string());
    }
  }
  m.sequences = corpus.size();
  fill_rates(m);
  m.llm_call_fraction = m.sequences ? static_cast<double>(m.llm_calls) / static_cast<double>(m.sequences) : 0.0;
  m.distinct_keys = keys.size();
  if (m.distinct_keys) m.distinct_seq_ratio = static_cast<double>(m.total_events) / static_cast<double>(m.distinct_keys);
  return ev;
}

}  // namespace krone
