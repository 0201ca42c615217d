// grex: extract ranked grammar rules from CoNLL-U treebanks.
//
//   grex extract --config run.json [--out DIR] [--significant-only]
//                [--sort path|gtest] [--top-k N] [--threads N]
//   grex stats FILE...
//
// Log verbosity comes from GREX_LOG_LEVEL (trace, debug, info, warn, error, off).

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>
#include <spdlog/sinks/stdout_color_sinks.h>

#include "grex/config.hpp"
#include "grex/pipeline.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("grex");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("GREX_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(lvl));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw grex::Error(grex::ErrorCode::kIo, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw grex::Error(grex::ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw grex::Error(grex::ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

struct ExtractArgs {
  std::string config;
  std::string out;
  bool significant_only = false;
  std::string sort;
  int top_k = -1;
  int threads = 0;
};

int run_extract(const ExtractArgs& args) {
  const std::filesystem::path config_path(args.config);
  grex::RunConfig cfg = grex::validate_config(read_file(config_path), config_path.parent_path());
  if (!args.out.empty()) cfg.output_dir = args.out;
  if (args.significant_only) cfg.report.significant_only = true;
  if (args.sort == "path") cfg.report.sort = grex::SortKey::kPath;
  if (args.sort == "gtest") cfg.report.sort = grex::SortKey::kGTest;
  if (args.top_k >= 0) cfg.report.top_k = static_cast<std::size_t>(args.top_k);
  if (args.threads > 0) cfg.threads = static_cast<std::size_t>(args.threads);

  spdlog::info("loading {} treebank file(s)", cfg.treebanks.size());
  const grex::Corpus corpus = grex::load_corpus(cfg.treebanks);
  spdlog::info("{} sentences, {} tokens, {} rejected", corpus.bank.sentence_count(), corpus.bank.token_count,
               corpus.bank.rejected_sentences);
  for (const auto& d : corpus.bank.diagnostics) spdlog::warn("{}:{}: {}", d.file, d.line, d.message);

  std::filesystem::create_directories(cfg.output_dir);

  std::vector<int> codes(cfg.jobs.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto worker = [&] {
    for (std::size_t j = next++; j < cfg.jobs.size(); j = next++) {
      const auto& job = cfg.jobs[j];
      try {
        const grex::JobResult result = grex::run_job(corpus, job, cfg);
        const auto base = std::filesystem::path(cfg.output_dir) / job.name;
        write_file(base.string() + ".report.json", grex::report_json(result, corpus, cfg).dump(2) + "\n");
        write_file(base.string() + ".report.md", grex::report_markdown(result, corpus, cfg));
        std::lock_guard lock(log_mutex);
        spdlog::info("job '{}': #(S) = {}, mu = {:.4f}, {} features, {} rules{}", job.name,
                     result.scope.n_scope, result.scope.mu, result.space.size(), result.rules.size(),
                     result.path.warning ? " (solver did not converge at some steps)" : "");
      } catch (const grex::Error& e) {
        std::lock_guard lock(log_mutex);
        spdlog::error("job '{}': {}", job.name, e.what());
        codes[j] = grex::exit_code(e.code());
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(cfg.threads, 1, std::max<std::size_t>(cfg.jobs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (int c : codes) {
    if (c != 0) return c;
  }
  return 0;
}

int run_stats(const std::vector<std::string>& files) {
  for (const auto& f : files) {
    const grex::Treebank bank = grex::parse_conllu_file(f);
    std::size_t multi_root = 0;
    for (const auto& s : bank.sentences) multi_root += s.multi_root() ? 1 : 0;
    std::cout << f << "\tsentences=" << bank.sentence_count() << "\ttokens=" << bank.token_count
              << "\trejected=" << bank.rejected_sentences << "\tmulti_root=" << multi_root << "\n";
    for (const auto& d : bank.diagnostics) spdlog::warn("{}:{}: {}", d.file, d.line, d.message);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Extract ranked grammar rules from dependency treebanks"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Run the rule extraction jobs of a config file");
  extract->add_option("--config", ex.config, "Run configuration (JSON)")->required();
  extract->add_option("--out", ex.out, "Output directory (overrides output_dir)");
  extract->add_flag("--significant-only", ex.significant_only, "Only report rules with p < 0.01");
  extract->add_option("--sort", ex.sort, "Rule order in reports")->check(CLI::IsMember({"path", "gtest"}));
  extract->add_option("--top-k", ex.top_k, "Maximum number of rule rows per report")->check(CLI::NonNegativeNumber);
  extract->add_option("--threads", ex.threads, "Jobs run concurrently")->check(CLI::PositiveNumber);

  std::vector<std::string> stat_files;
  auto* stats = app.add_subcommand("stats", "Print sentence and token counts of CoNLL-U files");
  stats->add_option("files", stat_files, "CoNLL-U files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) return run_extract(ex);
    return run_stats(stat_files);
  } catch (const grex::ConfigError& e) {
    for (const auto& p : e.problems()) spdlog::error("config: {}", p);
    return grex::exit_code(e.code());
  } catch (const grex::Error& e) {
    spdlog::error("{}", e.what());
    return grex::exit_code(e.code());
  }
}
