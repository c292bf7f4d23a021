#pragma once

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "krone/corpus.hpp"
#include "krone/csv.hpp"
#include "krone/hierarchy.hpp"
#include "krone/llm.hpp"

namespace krone {

struct ExtractionResult {
  SemanticTriple triple;        // normalized
  std::string raw_response;     // last raw LLM reply, kept for audit
  std::size_t attempts = 0;
};

/// Asks the LLM for one template's entity/action/status; one retry when the
/// reply lacks a field.
inline ExtractionResult extract_semantics(const Template& tpl, LlmClient& llm) {
  LlmRequest req{LlmTask::Extract, tpl.id, std::string(prompts::kExtractSystem), prompts::extract_user(tpl)};
  ExtractionResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    result.raw_response = llm.complete(req);
    result.attempts = static_cast<std::size_t>(attempt + 1);
    if (auto t = parse_triple(result.raw_response, tpl.id)) {
      result.triple = t->normalized();
      return result;
    }
  }
  throw Error(ErrorCode::ExtractionInvalid, result.raw_response);
}

using TripleFixture = std::map<TemplateId, SemanticTriple, util::NaturalLess>;

/// Fixture file: header `template_id,entity,action,status`.
inline TripleFixture read_triple_fixture(std::istream& in) {
  csv::Reader reader(in);
  csv::Record rec;
  if (!reader.next(rec)) throw Error(ErrorCode::EmptyFile, "empty fixture");
  if (!detail::header_matches(rec, {"template_id", "entity", "action", "status"})) {
    throw Error(ErrorCode::MalformedRecord, "line 1: expected header template_id,entity,action,status");
  }
  TripleFixture fixture;
  while (reader.next(rec)) {
    if (rec.fields.size() != 4) {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(rec.line) + ": expected 4 fields");
    }
    SemanticTriple t{std::string(util::trim(rec.fields[0])), rec.fields[1], rec.fields[2], rec.fields[3]};
    if (!fixture.emplace(t.template_id, t).second) throw Error(ErrorCode::DuplicateTriple, t.template_id);
  }
  return fixture;
}

inline TripleFixture load_triple_fixture(const std::string& path) {
  auto in = detail::open_input(path);
  return read_triple_fixture(in);
}

inline void write_triple_fixture(std::ostream& out, const std::vector<SemanticTriple>& triples) {
  out << "template_id,entity,action,status\n";
  for (const auto& t : triples) csv::write_row(out, {t.template_id, t.entity, t.action, t.status});
}

struct HierarchyExtraction {
  std::vector<SemanticTriple> triples;      // natural template-id order
  std::map<TemplateId, std::string> raw;    // raw LLM replies for templates not in the fixture
  std::size_t from_fixture = 0;
  std::size_t from_llm = 0;
};

/// Fixture-first: templates covered by `fixture` never reach the LLM. The
/// rest are extracted concurrently, at most `parallelism` calls in flight.
inline HierarchyExtraction extract_hierarchy(const TemplateCatalog& catalog, const TripleFixture* fixture,
                                             LlmClient* llm, std::size_t parallelism = 4) {
  HierarchyExtraction out;
  std::vector<const Template*> pending;
  std::map<TemplateId, SemanticTriple, util::NaturalLess> found;
  for (const auto& t : catalog.templates()) {
    if (fixture) {
      if (auto it = fixture->find(t.id); it != fixture->end()) {
        found.emplace(t.id, it->second.normalized());
        ++out.from_fixture;
        continue;
      }
    }
    pending.push_back(&t);
  }
  if (!pending.empty() && !llm) {
    throw Error(ErrorCode::LlmUnavailable,
                std::to_string(pending.size()) + " template(s) not covered by fixture, first " + pending.front()->id);
  }

  if (!pending.empty()) {
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= pending.size()) return;
        {
          std::lock_guard lock(mu);
          if (failure) return;
        }
        try {
          auto r = extract_semantics(*pending[i], *llm);
          std::lock_guard lock(mu);
          found.emplace(pending[i]->id, r.triple);
          out.raw.emplace(pending[i]->id, std::move(r.raw_response));
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const std::size_t n = std::clamp<std::size_t>(parallelism, 1, pending.size());
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(worker);
    threads.clear();
    if (failure) std::rethrow_exception(failure);
    out.from_llm = pending.size();
  }

  for (auto& [id, t] : found) out.triples.push_back(std::move(t));
  return out;
}

}  // namespace krone
