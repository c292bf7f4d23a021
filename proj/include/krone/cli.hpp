#pragma once

// `krone` command line. run() is the whole program minus main(), so tests
// can drive it with captured streams.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "krone/corpus.hpp"
#include "krone/decompose.hpp"
#include "krone/detector.hpp"
#include "krone/extraction.hpp"
#include "krone/hdfs.hpp"
#include "krone/hierarchy.hpp"
#include "krone/json_io.hpp"
#include "krone/knowledge_base.hpp"
#include "krone/llm.hpp"
#include "krone/llm_http.hpp"
#include "krone/service.hpp"

namespace krone::cli {

enum class Format { Table, Jsonl };

struct Options {
  std::string templates;
  std::string train;
  std::string test;
  std::string store;
  std::string fixture;    // triple fixture for extraction
  std::string verdicts;   // canned verdicts for --mode fixture
  std::string mode = "flag-unknown";
  std::string extract_mode = "fixture";
  std::size_t k = 5;
  std::size_t budget = 10;
  std::size_t jobs = 1;
  std::string format = "table";
  std::string addr = "127.0.0.1:8080";
  std::string static_dir;
  std::string seq;
  std::string out;
  std::string level;
  std::string parent;
  // convert-hdfs
  std::string hdfs_templates;
  std::string traces;
  std::string labels;
  double train_ratio = 0.8;
  std::size_t max_blocks = 0;
};

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << *v;
  return ss.str();
}

inline void write_jsonl(std::ostream& out, const io::Json& j) { out << j.dump() << '\n'; }

inline TemplateCatalog need_catalog(const Options& o) {
  if (o.templates.empty()) throw Error(ErrorCode::InvalidArgument, "--templates is required");
  return load_templates(o.templates);
}

inline KroneTree need_tree(const Options& o, const TemplateCatalog& catalog, std::unique_ptr<LlmClient>& live,
                           std::vector<SemanticTriple>* triples_out = nullptr) {
  std::optional<TripleFixture> fixture;
  if (!o.fixture.empty()) fixture = load_triple_fixture(o.fixture);
  LlmClient* llm = nullptr;
  if (o.extract_mode == "live") {
    live = std::make_unique<HttpLlm>(HttpLlmConfig::from_env());
    llm = live.get();
  }
  auto ex = extract_hierarchy(catalog, fixture ? &*fixture : nullptr, llm);
  if (triples_out) *triples_out = ex.triples;
  return build_tree(catalog, ex.triples);
}

inline void open_store(const Options& o, KnowledgeBase& kb) {
  if (!o.store.empty()) kb.attach_journal(o.store);
}

inline LlmMode need_mode(const Options& o) {
  auto m = parse_llm_mode(o.mode);
  if (!m) throw Error(ErrorCode::InvalidArgument, "unknown mode " + o.mode);
  return *m;
}

/// Owns whichever client the mode needs; null for flag-unknown.
inline std::unique_ptr<LlmClient> make_client(const Options& o, LlmMode mode) {
  switch (mode) {
    case LlmMode::FlagUnknown: return nullptr;
    case LlmMode::AlwaysAnomaly: return std::make_unique<ConstantLlm>(Label::Anomaly);
    case LlmMode::AlwaysNormal: return std::make_unique<ConstantLlm>(Label::Normal);
    case LlmMode::Fixture: {
      auto f = std::make_unique<FixtureLlm>();
      if (!o.verdicts.empty()) {
        auto in = krone::detail::open_input(o.verdicts);
        f->load_verdicts(in);
      }
      return f;
    }
    case LlmMode::Live: return std::make_unique<HttpLlm>(HttpLlmConfig::from_env());
  }
  return nullptr;
}

inline DetectorConfig config(const Options& o) {
  DetectorConfig c;
  c.k = o.k;
  c.mode = need_mode(o);
  c.max_llm_calls_per_sequence = o.budget;
  c.validate();
  return c;
}

inline void print_report_row(std::ostream& out, const DetectionReport& r) {
  out << r.sequence_id << "  " << to_string(r.final_label);
  if (r.anomalous_segment) {
    const auto& a = *r.anomalous_segment;
    out << "  span=[" << a.span.begin << "," << a.span.end << ")  level=" << to_string(a.key.level) << "  "
        << render(a.key);
  }
  out << "  llm_calls=" << r.llm_call_count;
  if (!r.explanation.empty()) out << "  explanation=\"" << r.explanation << "\"";
  out << '\n';
}

inline void print_metrics_table(std::ostream& out, const Metrics& m) {
  out << "sequences           " << m.sequences << '\n'
      << "tp fp tn fn         " << m.tp << ' ' << m.fp << ' ' << m.tn << ' ' << m.fn << '\n'
      << "precision           " << fmt_opt(m.precision) << '\n'
      << "recall              " << fmt_opt(m.recall) << '\n'
      << "f1                  " << fmt_opt(m.f1) << '\n'
      << "llm_calls           " << m.llm_calls << '\n'
      << "llm_call_fraction   " << fmt_opt(m.llm_call_fraction) << '\n'
      << "total_events        " << m.total_events << '\n'
      << "distinct_keys       " << m.distinct_keys << '\n'
      << "distinct_seq_ratio  " << fmt_opt(m.distinct_seq_ratio) << '\n';
}

inline void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  body(out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace detail

// -- subcommands -----------------------------------------------------------

inline void cmd_convert_hdfs(const Options& o, std::ostream& out, Format fmt) {
  auto tpl = krone::detail::open_input(o.hdfs_templates);
  auto traces = krone::detail::open_input(o.traces);
  auto labels = krone::detail::open_input(o.labels);
  hdfs::ConvertOptions co;
  co.train_ratio = o.train_ratio;
  if (o.max_blocks) co.max_blocks = o.max_blocks;
  auto ds = hdfs::convert(tpl, traces, labels, co);
  detail::write_file(o.templates, [&](std::ostream& s) { write_templates(s, ds.catalog); });
  detail::write_file(o.train, [&](std::ostream& s) { write_sequences(s, ds.train); });
  detail::write_file(o.test, [&](std::ostream& s) { write_sequences(s, ds.test); });
  const auto& r = ds.report;
  if (fmt == Format::Jsonl) {
    detail::write_jsonl(out, io::Json{{"templates", ds.catalog.size()},
                                      {"blocks", r.blocks},
                                      {"normal", r.normal},
                                      {"anomaly", r.anomaly},
                                      {"train", r.train},
                                      {"test", r.test},
                                      {"unused_labels", r.unused_labels}});
  } else {
    out << "templates " << ds.catalog.size() << "\nblocks    " << r.blocks << " (" << r.normal << " normal, "
        << r.anomaly << " anomaly)\ntrain     " << r.train << "\ntest      " << r.test << '\n';
  }
}

inline void cmd_extract(const Options& o, std::ostream& out, Format fmt) {
  auto catalog = detail::need_catalog(o);
  std::unique_ptr<LlmClient> live;
  std::vector<SemanticTriple> triples;
  auto tree = detail::need_tree(o, catalog, live, &triples);
  if (!o.out.empty()) {
    detail::write_file(o.out, [&](std::ostream& s) { write_triple_fixture(s, triples); });
  }
  if (fmt == Format::Jsonl) {
    detail::write_jsonl(out, io::to_json(tree));
    return;
  }
  const auto stats = tree_stats(tree);
  out << "entities " << stats.entity_count << "  actions " << stats.action_count << "  statuses "
      << stats.status_count << "  templates " << stats.template_count << '\n';
  for (NodeId e : tree.root().children) {
    out << tree.label(e) << '\n';
    for (NodeId a : tree.node(e).children) {
      out << "  " << tree.label(a) << '\n';
      for (NodeId s : tree.node(a).children) {
        out << "    " << tree.label(s) << "  <- " << *tree.node(s).template_id << '\n';
      }
    }
  }
}

inline void cmd_train(const Options& o, std::ostream& out, Format fmt) {
  if (o.train.empty()) throw Error(ErrorCode::InvalidArgument, "--train is required");
  std::optional<TemplateCatalog> catalog;
  if (!o.templates.empty()) catalog = load_templates(o.templates);
  auto in = krone::detail::open_input(o.train);
  auto corpus = read_sequences(in, catalog ? &*catalog : nullptr, Split::Train);

  KnowledgeBase kb;
  IngestReport report;
  if (!corpus.sequences.empty()) {
    if (!catalog) throw Error(ErrorCode::InvalidArgument, "--templates is required for a non-empty corpus");
    std::unique_ptr<LlmClient> live;
    auto tree = detail::need_tree(o, *catalog, live);
    detail::open_store(o, kb);
    report = ingest_training(corpus, tree, kb);
    kb.flush();
  } else {
    detail::open_store(o, kb);
  }
  if (fmt == Format::Jsonl) {
    auto j = io::to_json(report);
    j["store_entries"] = kb.size();
    detail::write_jsonl(out, j);
  } else {
    out << "sequences           " << report.sequences << "\nnew_entries         " << report.new_entries
        << "\ntotal_observations  " << report.total_observations << "\nstore_entries       " << kb.size() << '\n';
  }
}

struct Session {
  TemplateCatalog catalog;
  KroneTree tree;
  KnowledgeBase kb;
  std::unique_ptr<LlmClient> extract_llm;
};

inline std::unique_ptr<Session> open_session(const Options& o) {
  auto s = std::make_unique<Session>();
  s->catalog = detail::need_catalog(o);
  s->tree = detail::need_tree(o, s->catalog, s->extract_llm);
  detail::open_store(o, s->kb);
  if (!o.train.empty()) {
    auto corpus = load_sequences(o.train, s->catalog, Split::Train);
    ingest_training(corpus, s->tree, s->kb);
  }
  return s;
}

inline void cmd_detect(const Options& o, std::ostream& out, Format fmt) {
  if (o.test.empty()) throw Error(ErrorCode::InvalidArgument, "--test is required");
  const auto cfg = detail::config(o);
  auto s = open_session(o);
  auto corpus = load_sequences(o.test, s->catalog, Split::Test);
  auto llm = detail::make_client(o, cfg.mode);
  std::vector<const LogSequence*> targets;
  if (!o.seq.empty()) {
    const auto* seq = corpus.find(o.seq);
    if (!seq) throw Error(ErrorCode::NotFound, "sequence " + o.seq);
    targets.push_back(seq);
  } else {
    for (const auto& q : corpus.sequences) targets.push_back(&q);
  }
  for (const auto* seq : targets) {
    auto r = detect_sequence(*seq, s->tree, s->kb, llm.get(), cfg);
    if (fmt == Format::Jsonl) detail::write_jsonl(out, io::to_json(r));
    else detail::print_report_row(out, r);
  }
  s->kb.flush();
}

inline void cmd_eval(const Options& o, std::ostream& out, Format fmt) {
  if (o.test.empty()) throw Error(ErrorCode::InvalidArgument, "--test is required");
  const auto cfg = detail::config(o);
  auto s = open_session(o);
  auto corpus = load_sequences(o.test, s->catalog, Split::Test);
  auto llm = detail::make_client(o, cfg.mode);
  auto ev = evaluate(corpus, s->tree, s->kb, llm.get(), cfg, o.jobs);
  s->kb.flush();
  auto record = io::to_json(ev.metrics);
  record["mode"] = std::string(to_string(cfg.mode));
  if (fmt == Format::Jsonl) {
    for (const auto& r : ev.reports) detail::write_jsonl(out, io::to_json(r));
    detail::write_jsonl(out, record);
  } else {
    detail::print_metrics_table(out, ev.metrics);
    out << "record " << record.dump() << '\n';
  }
}

inline void cmd_kb_stats(const Options& o, std::ostream& out, Format fmt) {
  if (o.store.empty()) throw Error(ErrorCode::InvalidArgument, "--store is required");
  KnowledgeBase kb;
  kb.load(o.store);
  std::optional<SeqLevel> level;
  if (!o.level.empty()) {
    level = parse_seq_level(o.level);
    if (!level) throw Error(ErrorCode::InvalidArgument, "--level must be S, A or E");
  }
  std::optional<std::string> parent;
  if (!o.parent.empty()) parent = o.parent;
  const auto entries = kb.list(parent, level);
  std::size_t per_level[3] = {0, 0, 0};
  std::size_t normal = 0, anomaly = 0, overrides = 0, llm = 0;
  for (const auto& e : entries) {
    ++per_level[static_cast<int>(e.key.level)];
    (e.label == Label::Normal ? normal : anomaly)++;
    overrides += e.provenance == Provenance::HumanOverride;
    llm += e.provenance == Provenance::LlmVerdict;
  }
  if (fmt == Format::Jsonl) {
    for (const auto& e : entries) detail::write_jsonl(out, io::to_json(e));
    detail::write_jsonl(out, io::Json{{"entries", entries.size()},
                                      {"per_level", {{"S", per_level[0]}, {"A", per_level[1]}, {"E", per_level[2]}}},
                                      {"normal", normal},
                                      {"anomaly", anomaly},
                                      {"llm_verdicts", llm},
                                      {"overrides", overrides}});
    return;
  }
  out << "entries    " << entries.size() << "  (S " << per_level[0] << ", A " << per_level[1] << ", E "
      << per_level[2] << ")\nnormal     " << normal << "\nanomaly    " << anomaly << "\nllm        " << llm
      << "\noverrides  " << overrides << '\n';
  for (const auto& e : entries) {
    out << std::setw(6) << e.frequency << "  " << std::left << std::setw(8) << to_string(e.label) << std::right
        << "  " << render(e.key) << '\n';
  }
}

inline void cmd_serve(const Options& o, std::ostream& out) {
  service::ServiceOptions so;
  so.store_path = o.store;
  so.triple_fixture_path = o.fixture;
  so.verdict_fixture_path = o.verdicts;
  so.static_dir = o.static_dir;
  so.detector = detail::config(o);
  if (const char* origin = std::getenv("KRONE_CORS_ORIGIN")) so.cors_origin = origin;
  std::string host = o.addr;
  int port = 8080;
  if (auto colon = o.addr.rfind(':'); colon != std::string::npos) {
    host = o.addr.substr(0, colon);
    try {
      port = std::stoi(o.addr.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad --addr " + o.addr);
    }
  }
  service::Service svc(so);
  httplib::Server srv;
  svc.bind(srv);
  out << "listening on " << host << ':' << port << std::endl;
  if (!srv.listen(host, port)) throw Error(ErrorCode::IoError, "cannot bind " + o.addr);
}

// -- entry point -----------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"KRONE hierarchical log anomaly detection", "krone"};
  app.require_subcommand(1);
  Options o;

  auto add_format = [&](CLI::App* c) {
    c->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"table", "jsonl"}));
  };
  auto add_tree = [&](CLI::App* c, bool required) {
    auto* t = c->add_option("--templates", o.templates, "Template catalog CSV");
    if (required) t->required();
    c->add_option("--fixture", o.fixture, "Extraction fixture CSV (template_id,entity,action,status)");
    c->add_option("--extract-mode", o.extract_mode, "Where uncovered templates go")
        ->check(CLI::IsMember({"fixture", "live"}));
  };
  auto add_detect = [&](CLI::App* c) {
    c->add_option("--mode", o.mode, "LLM mode")
        ->check(CLI::IsMember({"live", "fixture", "always-anomaly", "always-normal", "flag-unknown"}));
    c->add_option("--verdicts", o.verdicts, "Canned verdict CSV for --mode fixture");
    c->add_option("--k", o.k, "In-context normal examples")->check(CLI::PositiveNumber);
    c->add_option("--budget", o.budget, "LLM calls allowed per sequence");
  };

  auto* convert = app.add_subcommand("convert-hdfs", "Convert the HDFS benchmark layout into engine CSVs");
  convert->add_option("--hdfs-templates", o.hdfs_templates, "HDFS.log_templates.csv")->required();
  convert->add_option("--traces", o.traces, "Event_traces.csv")->required();
  convert->add_option("--labels", o.labels, "anomaly_label.csv")->required();
  convert->add_option("--templates", o.templates, "Output template CSV")->required();
  convert->add_option("--train", o.train, "Output training CSV")->required();
  convert->add_option("--test", o.test, "Output test CSV")->required();
  convert->add_option("--train-ratio", o.train_ratio, "Share of normal blocks used for training")
      ->check(CLI::Range(0.0, 1.0));
  convert->add_option("--max-blocks", o.max_blocks, "Keep only the first N traces");
  add_format(convert);

  auto* extract = app.add_subcommand("extract", "Build the entity/action/status tree");
  add_tree(extract, true);
  extract->add_option("--out", o.out, "Write the resulting triples as a fixture CSV");
  add_format(extract);

  auto* train = app.add_subcommand("train", "Ingest normal training sequences into the knowledge base");
  add_tree(train, false);
  train->add_option("--train,--in", o.train, "Training sequences CSV")->required();
  train->add_option("--store", o.store, "Knowledge base file");
  add_format(train);

  auto* detect = app.add_subcommand("detect", "Detect and localize anomalies");
  add_tree(detect, true);
  add_detect(detect);
  detect->add_option("--test", o.test, "Sequences CSV")->required();
  detect->add_option("--train", o.train, "Training CSV ingested before detection");
  detect->add_option("--store", o.store, "Knowledge base file");
  detect->add_option("--seq", o.seq, "Only this sequence id");
  add_format(detect);

  auto* eval = app.add_subcommand("eval", "Detect over a labeled corpus and report metrics");
  add_tree(eval, true);
  add_detect(eval);
  eval->add_option("--test", o.test, "Labeled sequences CSV")->required();
  eval->add_option("--train", o.train, "Training CSV ingested before evaluation");
  eval->add_option("--store", o.store, "Knowledge base file");
  eval->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  add_format(eval);

  auto* stats = app.add_subcommand("kb-stats", "Summarize a knowledge base file");
  stats->add_option("--store", o.store, "Knowledge base file")->required();
  stats->add_option("--level", o.level, "Only S, A or E entries");
  stats->add_option("--parent", o.parent, "Only entries under this parent path");
  add_format(stats);

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--addr", o.addr, "host:port")->envname("KRONE_ADDR");
  serve->add_option("--store", o.store, "Knowledge base file")->envname("KRONE_STORE");
  serve->add_option("--fixture", o.fixture, "Extraction fixture CSV");
  serve->add_option("--static", o.static_dir, "Directory with the built web UI");
  add_detect(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const Format fmt = o.format == "jsonl" ? Format::Jsonl : Format::Table;
  try {
    if (*convert) cmd_convert_hdfs(o, out, fmt);
    else if (*extract) cmd_extract(o, out, fmt);
    else if (*train) cmd_train(o, out, fmt);
    else if (*detect) cmd_detect(o, out, fmt);
    else if (*eval) cmd_eval(o, out, fmt);
    else if (*stats) cmd_kb_stats(o, out, fmt);
    else if (*serve) cmd_serve(o, out);
  } catch (const Error& e) {
    err << "error: " << e.name() << ": " << e.detail() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace krone::cli
