#pragma once

// HTTP facade over one analysis session. Every response body is a document
// from json_io.hpp; errors are {code, message, detail}. Endpoints are listed
// in docs/api.md.

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "krone/corpus.hpp"
#include "krone/decompose.hpp"
#include "krone/detector.hpp"
#include "krone/extraction.hpp"
#include "krone/hierarchy.hpp"
#include "krone/json_io.hpp"
#include "krone/knowledge_base.hpp"
#include "krone/llm.hpp"
#include "krone/llm_http.hpp"

namespace krone::service {

using io::Json;

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::UnknownKey:
    case ErrorCode::UnknownNode:
      return 404;
    case ErrorCode::CatalogNotReady:
    case ErrorCode::TreeNotReady:
      return 409;
    case ErrorCode::LlmCallBudgetExceeded:
      return 422;
    case ErrorCode::VerdictUnparseable:
    case ErrorCode::ExtractionInvalid:
      return 502;
    case ErrorCode::LlmUnavailable:
      return 503;
    case ErrorCode::IoError:
    case ErrorCode::CorruptStore:
      return 500;
    default:
      return 400;
  }
}

enum class JobState { Queued, Running, Succeeded, Failed };

constexpr std::string_view to_string(JobState s) noexcept {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Succeeded: return "succeeded";
    case JobState::Failed: return "failed";
  }
  return "?";
}

/// Background jobs with pollable progress. Thread-safe.
class JobRegistry {
 public:
  struct Snapshot {
    std::string id;
    std::string kind;
    JobState state = JobState::Queued;
    std::size_t processed = 0;
    std::size_t total = 0;
    Json result;
    Json error;
  };

  class Progress {
   public:
    Progress(JobRegistry& reg, std::string id) : reg_(reg), id_(std::move(id)) {}
    void operator()(std::size_t done, std::size_t total) const {
      std::lock_guard lock(reg_.mu_);
      auto& j = reg_.jobs_.at(id_);
      j.processed = done;
      j.total = total;
    }

   private:
    JobRegistry& reg_;
    std::string id_;
  };

  JobRegistry() = default;
  JobRegistry(const JobRegistry&) = delete;
  JobRegistry& operator=(const JobRegistry&) = delete;
  ~JobRegistry() {
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(mu_);
      threads.swap(threads_);
    }
    for (auto& t : threads) t.join();
  }

  template <typename Fn>  // Fn: Json(const Progress&)
  std::string start(std::string kind, std::size_t total, Fn fn) {
    std::lock_guard lock(mu_);
    std::string id = kind + "-" + std::to_string(++counter_);
    jobs_[id] = Snapshot{id, kind, JobState::Queued, 0, total, nullptr, nullptr};
    latest_[kind] = id;
    threads_.emplace_back([this, id, fn = std::move(fn)]() mutable {
      set_state(id, JobState::Running);
      try {
        Json result = fn(Progress(*this, id));
        std::lock_guard lock(mu_);
        auto& j = jobs_.at(id);
        j.result = std::move(result);
        j.state = JobState::Succeeded;
      } catch (const Error& e) {
        std::lock_guard lock(mu_);
        auto& j = jobs_.at(id);
        j.error = io::error_body(e);
        j.state = JobState::Failed;
      } catch (const std::exception& e) {
        std::lock_guard lock(mu_);
        auto& j = jobs_.at(id);
        j.error = Json{{"code", "InternalError"}, {"message", e.what()}, {"detail", ""}};
        j.state = JobState::Failed;
      }
    });
    return id;
  }

  std::optional<Snapshot> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<Snapshot> latest(const std::string& kind) const {
    std::lock_guard lock(mu_);
    auto it = latest_.find(kind);
    if (it == latest_.end()) return std::nullopt;
    return jobs_.at(it->second);
  }

  static Json to_json(const Snapshot& s) {
    Json j;
    j["job_id"] = s.id;
    j["kind"] = s.kind;
    j["state"] = std::string(to_string(s.state));
    j["processed"] = s.processed;
    j["total"] = s.total;
    j["result"] = s.result;
    j["error"] = s.error;
    return j;
  }

 private:
  void set_state(const std::string& id, JobState st) {
    std::lock_guard lock(mu_);
    jobs_.at(id).state = st;
  }

  mutable std::mutex mu_;
  std::map<std::string, Snapshot> jobs_;
  std::map<std::string, std::string> latest_;
  std::vector<std::thread> threads_;
  std::size_t counter_ = 0;
};

struct ServiceOptions {
  std::string store_path;               // journal file; empty keeps the store in memory
  std::string triple_fixture_path;      // extraction fixture used by /hierarchy/extract
  std::string verdict_fixture_path;     // canned verdicts for mode=fixture
  std::string cors_origin = "*";
  std::string static_dir;               // built web UI, served at /
  DetectorConfig detector;              // defaults for /detect
};

/// One analysis session: catalog, tree, named corpora, knowledge base and
/// the LLM clients for each mode.
class Service {
 public:
  explicit Service(ServiceOptions opts) : opts_(std::move(opts)) {
    if (!opts_.store_path.empty()) kb_.attach_journal(opts_.store_path);
    if (!opts_.triple_fixture_path.empty()) triple_fixture_ = load_triple_fixture(opts_.triple_fixture_path);
    if (!opts_.verdict_fixture_path.empty()) {
      auto in = detail::open_input(opts_.verdict_fixture_path);
      fixture_llm_.load_verdicts(in);
    }
  }

  KnowledgeBase& knowledge_base() noexcept { return kb_; }
  LlmClient& mock_llm(Label label) noexcept { return label == Label::Anomaly ? anomaly_llm_ : normal_llm_; }
  FixtureLlm& fixture_llm() noexcept { return fixture_llm_; }
  JobRegistry& jobs() noexcept { return jobs_; }

  std::shared_ptr<const KroneTree> tree() const {
    std::lock_guard lock(mu_);
    return tree_;
  }

  void bind(httplib::Server& srv) {
    srv.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { send(res, 200, Json{{"status", "ok"}}); });

    srv.Post("/templates", wrap([this](const httplib::Request& req) { return post_templates(req); }));
    srv.Get("/templates", wrap([this](const httplib::Request&) { return get_templates(); }));
    srv.Post("/sequences", wrap([this](const httplib::Request& req) { return post_sequences(req); }));
    srv.Get("/sequences", wrap([this](const httplib::Request&) { return list_corpora(); }));
    srv.Get(R"(/sequences/([^/]+)/decomposition)",
            wrap([this](const httplib::Request& req) { return get_decomposition(req.matches[1]); }));
    srv.Get(R"(/sequences/([^/]+))", wrap([this](const httplib::Request& req) { return get_sequence(req.matches[1]); }));

    srv.Post("/hierarchy/extract", wrap([this](const httplib::Request& req) { return post_extract(req); }));
    srv.Get("/hierarchy", wrap([this](const httplib::Request&) { return get_hierarchy(); }));

    srv.Post("/train", wrap([this](const httplib::Request& req) { return post_train(req); }));
    srv.Get("/train/status", wrap([this](const httplib::Request&) { return job_status_latest("train"); }));

    srv.Post(R"(/detect/([^/]+))", wrap([this](const httplib::Request& req) { return post_detect(req, req.matches[1]); }));
    srv.Get(R"(/detect/([^/]+)/report)", wrap([this](const httplib::Request& req) { return get_report(req.matches[1]); }));
    srv.Post("/detect", wrap([this](const httplib::Request& req) { return post_detect_batch(req); }));
    srv.Get(R"(/jobs/([^/]+))", wrap([this](const httplib::Request& req) { return job_status(req.matches[1]); }));

    srv.Get(R"(/kb/nodes/(.+)/summary)", wrap([this](const httplib::Request& req) { return node_summary(req.matches[1]); }));
    srv.Get("/kb/entries", wrap([this](const httplib::Request& req) { return list_entries(req); }));
    srv.Post(R"(/kb/entries/(.+)/override)",
             wrap([this](const httplib::Request& req) { return post_override(req, req.matches[1]); }));
    srv.Get("/kb/stats", wrap([this](const httplib::Request&) { return kb_stats(); }));

    if (!opts_.static_dir.empty()) srv.set_mount_point("/", opts_.static_dir);
  }

  struct Reply {
    int status = 200;
    Json body;
  };

 private:
  using Handler = std::function<Reply(const httplib::Request&)>;

  static void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        auto r = h(req);
        send(res, r.status, r.body);
      } catch (const Error& e) {
        send(res, http_status(e.code()), io::error_body(e));
      } catch (const nlohmann::json::exception& e) {
        send(res, 400, Json{{"code", "MalformedRecord"}, {"message", e.what()}, {"detail", "request body"}});
      } catch (const std::exception& e) {
        send(res, 500, Json{{"code", "InternalError"}, {"message", e.what()}, {"detail", ""}});
      }
    };
  }

  static nlohmann::json body_json(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be an object");
    return j;
  }

  /// Payload text from {"csv": "..."} or {"path": "..."}.
  static std::string payload_text(const nlohmann::json& body, std::string_view what) {
    if (body.contains("csv")) return body.at("csv").get<std::string>();
    if (body.contains("path")) {
      auto in = detail::open_input(body.at("path").get<std::string>());
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    }
    throw Error(ErrorCode::InvalidArgument, std::string(what) + ": body needs 'csv' or 'path'");
  }

  std::shared_ptr<const KroneTree> require_tree() const {
    std::lock_guard lock(mu_);
    if (!tree_) throw Error(ErrorCode::TreeNotReady, "run POST /hierarchy/extract first");
    return tree_;
  }

  std::pair<LogSequence, std::string> find_sequence(const std::string& id) const {
    std::lock_guard lock(mu_);
    for (const auto& [name, corpus] : corpora_) {
      if (const auto* s = corpus.find(id)) return {*s, name};
    }
    throw Error(ErrorCode::NotFound, "sequence " + id);
  }

  LlmClient* client_for(LlmMode mode) {
    switch (mode) {
      case LlmMode::FlagUnknown: return nullptr;
      case LlmMode::AlwaysAnomaly: return &anomaly_llm_;
      case LlmMode::AlwaysNormal: return &normal_llm_;
      case LlmMode::Fixture: return &fixture_llm_;
      case LlmMode::Live: {
        std::lock_guard lock(mu_);
        if (!live_llm_) live_llm_ = std::make_unique<HttpLlm>(HttpLlmConfig::from_env());
        return live_llm_.get();
      }
    }
    return nullptr;
  }

  DetectorConfig config_from(const nlohmann::json& body) const {
    DetectorConfig cfg = opts_.detector;
    if (body.contains("mode")) {
      auto m = parse_llm_mode(body.at("mode").get<std::string>());
      if (!m) throw Error(ErrorCode::InvalidArgument, "unknown mode");
      cfg.mode = *m;
    }
    if (body.contains("k")) cfg.k = body.at("k").get<std::size_t>();
    if (body.contains("budget")) cfg.max_llm_calls_per_sequence = body.at("budget").get<std::size_t>();
    cfg.validate();
    return cfg;
  }

  Reply post_templates(const httplib::Request& req) {
    const auto body = body_json(req);
    std::istringstream in(payload_text(body, "templates"));
    auto catalog = read_templates(in);
    std::lock_guard lock(mu_);
    if (tree_) throw Error(ErrorCode::InvalidArgument, "templates are fixed once the hierarchy is extracted");
    const auto n = catalog.size();
    catalog_ = std::move(catalog);
    return {200, Json{{"templates", n}}};
  }

  Reply get_templates() const {
    std::lock_guard lock(mu_);
    if (!catalog_) throw Error(ErrorCode::CatalogNotReady, "POST /templates first");
    Json arr = Json::array();
    for (const auto& t : catalog_->templates()) arr.push_back(Json{{"template_id", t.id}, {"template_text", t.text}});
    return {200, Json{{"templates", std::move(arr)}}};
  }

  Reply post_sequences(const httplib::Request& req) {
    const auto body = body_json(req);
    const std::string split_text = util::to_lower(body.value("split", std::string("test")));
    if (split_text != "train" && split_text != "test") throw Error(ErrorCode::InvalidArgument, "split must be train or test");
    const Split split = split_text == "train" ? Split::Train : Split::Test;
    const std::string name = body.value("name", split_text);
    std::istringstream in(payload_text(body, "sequences"));
    std::lock_guard lock(mu_);
    if (!catalog_) throw Error(ErrorCode::CatalogNotReady, "POST /templates first");
    auto corpus = read_sequences(in, &*catalog_, split);
    auto report = validate_corpus(corpus, *catalog_);
    corpora_[name] = std::move(corpus);
    return {200, Json{{"name", name}, {"split", std::string(to_string(split))}, {"report", io::to_json(report)}}};
  }

  Reply list_corpora() const {
    std::lock_guard lock(mu_);
    Json arr = Json::array();
    for (const auto& [name, c] : corpora_) {
      Json ids = Json::array();
      for (const auto& s : c.sequences) ids.push_back(s.id);
      arr.push_back(Json{{"name", name}, {"split", std::string(to_string(c.split))}, {"size", c.size()}, {"ids", std::move(ids)}});
    }
    return {200, Json{{"corpora", std::move(arr)}}};
  }

  Reply get_sequence(const std::string& id) const {
    auto [seq, corpus] = find_sequence(id);
    Json j;
    j["sequence_id"] = seq.id;
    j["corpus"] = corpus;
    j["events"] = seq.events;
    j["label"] = seq.label ? Json(std::string(to_string(*seq.label))) : Json(nullptr);
    return {200, j};
  }

  Reply get_decomposition(const std::string& id) const {
    auto tree = require_tree();
    auto [seq, corpus] = find_sequence(id);
    return {200, io::to_json(decompose(seq, *tree), seq, *tree)};
  }

  Reply post_extract(const httplib::Request& req) {
    const auto body = body_json(req);
    TripleFixture fixture;
    bool have_fixture = false;
    if (body.contains("fixture_csv")) {
      std::istringstream in(body.at("fixture_csv").get<std::string>());
      fixture = read_triple_fixture(in);
      have_fixture = true;
    } else if (body.contains("fixture_path")) {
      fixture = load_triple_fixture(body.at("fixture_path").get<std::string>());
      have_fixture = true;
    } else if (triple_fixture_) {
      fixture = *triple_fixture_;
      have_fixture = true;
    }
    const bool live = body.value("mode", std::string("fixture")) == "live";
    const std::size_t parallelism = body.value("parallelism", std::size_t{4});

    TemplateCatalog catalog;
    {
      std::lock_guard lock(mu_);
      if (!catalog_) throw Error(ErrorCode::CatalogNotReady, "POST /templates first");
      catalog = *catalog_;
    }
    LlmClient* llm = live ? client_for(LlmMode::Live) : nullptr;
    auto extraction = extract_hierarchy(catalog, have_fixture ? &fixture : nullptr, llm, parallelism);
    auto tree = std::make_shared<const KroneTree>(build_tree(catalog, extraction.triples));
    Json j = io::to_json(*tree);
    j["from_fixture"] = extraction.from_fixture;
    j["from_llm"] = extraction.from_llm;
    std::lock_guard lock(mu_);
    tree_ = std::move(tree);
    return {200, j};
  }

  Reply get_hierarchy() const { return {200, io::to_json(*require_tree())}; }

  Reply post_train(const httplib::Request& req) {
    const auto body = body_json(req);
    const std::string name = body.value("corpus", std::string("train"));
    auto tree = require_tree();
    auto corpus = std::make_shared<SequenceCorpus>();
    {
      std::lock_guard lock(mu_);
      auto it = corpora_.find(name);
      if (it == corpora_.end()) throw Error(ErrorCode::NotFound, "corpus " + name);
      *corpus = it->second;
    }
    for (const auto& s : corpus->sequences) {
      if (s.label == Label::Anomaly) throw Error(ErrorCode::LabeledTrainAnomaly, s.id);
      for (const auto& e : s.events) {
        if (!tree->binds(e)) throw Error(ErrorCode::UnboundTemplate, e);
      }
    }
    auto id = jobs_.start("train", corpus->size(), [this, tree, corpus](const JobRegistry::Progress& progress) {
      return io::to_json(ingest_training(*corpus, *tree, kb_, progress));
    });
    return {202, Json{{"job_id", id}}};
  }

  Reply post_detect(const httplib::Request& req, const std::string& id) {
    const auto cfg = config_from(body_json(req));
    auto tree = require_tree();
    auto [seq, corpus] = find_sequence(id);
    auto report = detect_sequence(seq, *tree, kb_, client_for(cfg.mode), cfg);
    kb_.flush();
    Json j = io::to_json(report);
    std::lock_guard lock(mu_);
    reports_[id] = report;
    return {200, j};
  }

  Reply get_report(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = reports_.find(id);
    if (it == reports_.end()) throw Error(ErrorCode::NotFound, "no report for " + id);
    return {200, io::to_json(it->second)};
  }

  Reply post_detect_batch(const httplib::Request& req) {
    const auto body = body_json(req);
    const auto cfg = config_from(body);
    const std::string name = body.value("corpus", std::string("test"));
    const std::size_t jobs = body.value("jobs", std::size_t{1});
    auto tree = require_tree();
    auto corpus = std::make_shared<SequenceCorpus>();
    {
      std::lock_guard lock(mu_);
      auto it = corpora_.find(name);
      if (it == corpora_.end()) throw Error(ErrorCode::NotFound, "corpus " + name);
      *corpus = it->second;
    }
    LlmClient* llm = client_for(cfg.mode);
    auto id = jobs_.start("detect", corpus->size(),
                          [this, tree, corpus, llm, cfg, jobs](const JobRegistry::Progress& progress) {
                            auto ev = evaluate(*corpus, *tree, kb_, llm, cfg, jobs, progress);
                            kb_.flush();
                            std::lock_guard lock(mu_);
                            for (auto& r : ev.reports) reports_[r.sequence_id] = r;
                            return Json{{"metrics", io::to_json(ev.metrics)}};
                          });
    return {202, Json{{"job_id", id}}};
  }

  Reply job_status(const std::string& id) const {
    auto s = jobs_.get(id);
    if (!s) throw Error(ErrorCode::NotFound, "job " + id);
    return {200, JobRegistry::to_json(*s)};
  }

  Reply job_status_latest(const std::string& kind) const {
    auto s = jobs_.latest(kind);
    if (!s) throw Error(ErrorCode::NotFound, "no " + kind + " job yet");
    return {200, JobRegistry::to_json(*s)};
  }

  Reply node_summary(const std::string& path) const {
    auto tree = require_tree();
    auto node = tree->find_by_path(path);
    if (!node) throw Error(ErrorCode::UnknownNode, path);
    Json j = io::to_json(kb_.node_summary(*tree, *node));
    j["level"] = std::string(to_string(tree->node(*node).level));
    return {200, j};
  }

  Reply list_entries(const httplib::Request& req) const {
    std::optional<std::string> parent;
    std::optional<SeqLevel> level;
    if (req.has_param("parent")) parent = req.get_param_value("parent");
    if (req.has_param("level")) {
      level = parse_seq_level(req.get_param_value("level"));
      if (!level) throw Error(ErrorCode::InvalidArgument, "level must be S, A or E");
    }
    Json arr = Json::array();
    for (const auto& e : kb_.list(parent, level)) arr.push_back(io::to_json(e));
    return {200, Json{{"entries", std::move(arr)}}};
  }

  Reply post_override(const httplib::Request& req, const std::string& key_text) {
    const auto body = body_json(req);
    auto label = parse_label(body.at("label").get<std::string>());
    if (!label) throw Error(ErrorCode::InvalidArgument, "label must be Normal or Anomaly");
    ScopeKey key;
    try {
      key = parse_scope_key(key_text);
    } catch (const Error&) {
      throw Error(ErrorCode::UnknownKey, key_text);
    }
    auto entry = kb_.override_label(key, *label, body.value("note", std::string()));
    return {200, io::to_json(entry)};
  }

  Reply kb_stats() const {
    Json j;
    std::size_t by_level[3] = {0, 0, 0};
    std::map<std::string, std::size_t> by_prov;
    std::size_t normal = 0, anomaly = 0;
    const auto entries = kb_.entries();
    for (const auto& e : entries) {
      ++by_level[static_cast<int>(e.key.level)];
      ++by_prov[std::string(to_string(e.provenance))];
      (e.label == Label::Normal ? normal : anomaly)++;
    }
    j["entries"] = entries.size();
    j["per_level"] = {{"S", by_level[0]}, {"A", by_level[1]}, {"E", by_level[2]}};
    j["provenance"] = by_prov;
    j["normal"] = normal;
    j["anomaly"] = anomaly;
    return {200, j};
  }

  ServiceOptions opts_;
  mutable std::mutex mu_;
  std::optional<TemplateCatalog> catalog_;
  std::shared_ptr<const KroneTree> tree_;
  std::map<std::string, SequenceCorpus> corpora_;
  std::map<std::string, DetectionReport> reports_;
  std::optional<TripleFixture> triple_fixture_;
  KnowledgeBase kb_;
  ConstantLlm anomaly_llm_{Label::Anomaly};
  ConstantLlm normal_llm_{Label::Normal};
  FixtureLlm fixture_llm_;
  std::unique_ptr<HttpLlm> live_llm_;
  JobRegistry jobs_;
};

}  // namespace krone::service
