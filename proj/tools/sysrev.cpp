// Command-line front end: knowledge-base ingestion, batch review runs,
// refinement, sentinel evaluation and the HTTP service.
#include <pthread.h>
#include <signal.h>

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "sysrev/error.hpp"
#include "sysrev/mesh_kb.hpp"
#include "sysrev/pipeline.hpp"
#include "sysrev/service.hpp"
#include "sysrev/session.hpp"
#include "sysrev/text.hpp"

namespace {

using namespace sysrev;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInput, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// "1,2,3" or "@file" with one PMID per line.
std::set<std::string> parse_pmid_list(const std::string& arg) {
  std::string raw = arg;
  if (!raw.empty() && raw.front() == '@') raw = read_file(raw.substr(1));
  for (auto& c : raw) {
    if (c == '\n' || c == '\r' || c == ' ' || c == '\t') c = ',';
  }
  std::set<std::string> out;
  for (const auto& p : text::split(raw, ',')) {
    if (!p.empty()) out.insert(p);
  }
  return out;
}

pipeline::Pipeline make_pipeline(const std::string& config_path) {
  auto config = pipeline::load_config(config_path);
  auto components = pipeline::build_components(config);
  return pipeline::Pipeline(std::move(config), std::move(components));
}

void print_session(const session::ReviewSession& s) { std::cout << session::serialize(s); }

int serve(const std::string& config_path, const std::string& host, int port) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto p = make_pipeline(config_path);
  service::Service svc(p);
  const int bound = svc.bind(host, port);
  std::cerr << "listening on " << host << ":" << bound << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    std::cerr << "signal " << sig << ", shutting down" << std::endl;
    svc.stop();
  });
  svc.serve();
  waiter.join();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Systematic-review search assistant"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "key = value configuration file");

  auto* kb = app.add_subcommand("kb", "MeSH knowledge base");
  kb->require_subcommand(1);
  auto* ingest = kb->add_subcommand("ingest", "Parse descriptors and report what was loaded");
  std::string kb_input, kb_format = "auto", kb_out;
  ingest->add_option("input", kb_input, "descriptor XML or TSV")->required();
  ingest->add_option("--format", kb_format, "auto, xml or tsv")->check(CLI::IsMember({"auto", "xml", "tsv"}));
  ingest->add_option("--out", kb_out, "write the canonical TSV here");

  auto* review = app.add_subcommand("review", "Run and refine review sessions");
  review->require_subcommand(1);
  auto* run = review->add_subcommand("run", "Run the pipeline for a question");
  std::string question, run_sentinels;
  run->add_option("-q,--question", question, "research question")->required();
  run->add_option("--sentinels", run_sentinels, "comma-separated PMIDs or @file");

  auto* refine = review->add_subcommand("refine", "Apply edits and re-run");
  std::string refine_session, edits_file;
  std::vector<std::string> edit_json;
  int refine_revision = 0;
  refine->add_option("-s,--session", refine_session, "session id")->required();
  refine->add_option("--edits", edits_file, "JSON file holding an array of edits");
  refine->add_option("--edit", edit_json, "one edit as inline JSON (repeatable)");
  refine->add_option("--revision", refine_revision, "expected current revision");

  auto* show = review->add_subcommand("show", "Print a stored session");
  std::string show_session;
  int show_revision = 0;
  show->add_option("-s,--session", show_session, "session id")->required();
  show->add_option("--revision", show_revision, "revision (default latest)");

  auto* eval = app.add_subcommand("eval", "Recall and precision against sentinel articles");
  std::string eval_session, eval_sentinels;
  int eval_k = 10;
  eval->add_option("-s,--session", eval_session, "session id")->required();
  eval->add_option("--sentinels", eval_sentinels, "comma-separated PMIDs or @file (default: the session's)");
  eval->add_option("-k", eval_k, "cutoff")->check(CLI::PositiveNumber);

  auto* srv = app.add_subcommand("serve", "HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  srv->add_option("--host", host, "bind address");
  srv->add_option("--port", port, "port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (ingest->parsed()) {
      const auto format = kb_format == "xml"   ? mesh::SourceFormat::kXml
                          : kb_format == "tsv" ? mesh::SourceFormat::kTsv
                                               : mesh::SourceFormat::kAuto;
      const auto base = mesh::ingest_file(kb_input, format);
      std::cout << base.size() << " descriptors, " << base.skipped_records() << " skipped\n";
      if (!kb_out.empty()) {
        std::ofstream out(kb_out, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::kConfig, "cannot write " + kb_out);
        out << base.serialize();
      }
      return kExitOk;
    }
    if (run->parsed()) {
      auto p = make_pipeline(config_path);
      concepts::ResearchQuestion q;
      q.text = question;
      const auto s = p.run(q, run_sentinels.empty() ? std::set<std::string>{} : parse_pmid_list(run_sentinels));
      print_session(s);
      std::cerr << "session " << s.session_id << " revision " << s.revision << ": " << s.queries.size()
                << " queries, " << s.hits.size() << " articles\n";
      return kExitOk;
    }
    if (refine->parsed()) {
      std::vector<pipeline::Edit> edits;
      if (!edits_file.empty()) {
        for (const auto& e : nlohmann::json::parse(read_file(edits_file))) edits.push_back(pipeline::edit_from_json(e));
      }
      for (const auto& e : edit_json) edits.push_back(pipeline::edit_from_json(nlohmann::json::parse(e)));
      auto p = make_pipeline(config_path);
      const auto s = p.refine(refine_session, edits,
                              refine_revision > 0 ? std::optional<int>(refine_revision) : std::nullopt);
      print_session(s);
      return kExitOk;
    }
    if (show->parsed()) {
      const auto config = pipeline::load_config(config_path);
      session::SessionStore store(config.session_dir);
      print_session(show_revision > 0 ? store.load_revision(show_session, show_revision) : store.load(show_session));
      return kExitOk;
    }
    if (eval->parsed()) {
      const auto config = pipeline::load_config(config_path);
      session::SessionStore store(config.session_dir);
      const auto s = store.load(eval_session);
      const auto sentinels = eval_sentinels.empty() ? s.sentinel_pmids : parse_pmid_list(eval_sentinels);
      const auto m = session::evaluate(s.hits, sentinels, eval_k);
      std::cout << nlohmann::json(m).dump(2) << "\n";
      return kExitOk;
    }
    if (srv->parsed()) return serve(config_path, host, port);
  } catch (const StageError& e) {
    std::cerr << "stage " << e.stage() << " failed (" << error_code_name(e.code()) << "): " << e.cause_message() << "\n";
    return kExitStage;
  } catch (const Error& e) {
    std::cerr << error_code_name(e.code()) << ": " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig ? kExitConfig : kExitError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
