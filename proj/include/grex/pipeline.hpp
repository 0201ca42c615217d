#pragma once

// End-to-end rule extraction for one job and the JSON / Markdown reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grex/config.hpp"
#include "grex/featurize.hpp"
#include "grex/query.hpp"
#include "grex/regpath.hpp"
#include "grex/rulestats.hpp"
#include "grex/sparse_glm.hpp"
#include "grex/treebank.hpp"

namespace grex {

inline constexpr int kReportSchemaVersion = 1;

struct Corpus {
  std::vector<std::string> files;
  Treebank bank;
};

inline Corpus load_corpus(const std::vector<std::string>& files) {
  Corpus c;
  c.files = files;
  for (const auto& f : files) c.bank.append(parse_conllu_file(f));
  return c;
}

struct RuleRow {
  RuleRecord record;
  std::size_t entry_step = 0;
  double entry_weight = 0.0;
  std::size_t g_rank = 0;  // 1-based position when ordered by G descending
};

struct JobResult {
  JobSpec job;
  ScopeCounts scope;
  FeatureSpace space;
  PathResult path;
  std::vector<RuleRow> rules;  // path order
  std::optional<RankComparison> comparison;
  std::string comparison_note;
};

// Orders rows by G descending; ties keep path order.
inline std::vector<std::size_t> g_order(const std::vector<RuleRow>& rows) {
  std::vector<std::size_t> idx(rows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].record.g > rows[b].record.g; });
  return idx;
}

inline JobResult run_job(const Corpus& corpus, const JobSpec& job, const RunConfig& config,
                         std::vector<FitResult>* fits = nullptr) {
  JobResult out;
  out.job = job;
  const auto instances = extract_instances(corpus.bank, job.scope, job.response);
  out.scope = scope_counts(instances);
  if (out.scope.n_scope_q == 0 || out.scope.n_scope_q == out.scope.n_scope) {
    throw Error(ErrorCode::kNoContrastiveSignal,
                "no contrastive signal in job '" + job.name + "': mu = " + std::to_string(out.scope.mu));
  }
  out.space = build_feature_space(instances, config.features, job.response);
  const DesignMatrix x = vectorize(instances, out.space);
  out.path = run_path(x, config.path, config.solver, fits);

  for (const auto& rf : out.path.ranking) {
    RuleRow row;
    row.record = compute_rule(out.space[rf.feature], x, out.scope, rf.rank);
    row.entry_step = rf.entry_step;
    row.entry_weight = rf.entry_weight;
    out.rules.push_back(std::move(row));
  }
  const auto by_g = g_order(out.rules);
  for (std::size_t pos = 0; pos < by_g.size(); ++pos) out.rules[by_g[pos]].g_rank = pos + 1;

  if (out.rules.size() < 3) {
    out.comparison_note = "fewer than 3 selected rules";
  } else {
    std::vector<double> path_rank, g_rank;
    for (const auto& r : out.rules) {
      path_rank.push_back(static_cast<double>(r.record.path_rank));
      g_rank.push_back(-r.record.g);
    }
    try {
      out.comparison = spearman(path_rank, g_rank);
    } catch (const Error& e) {
      out.comparison_note = e.what();
    }
  }
  return out;
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline nlohmann::json scope_json(const ScopePattern& s) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& c : s.constraints) {
    const char* key = c.target == ScopeTarget::kDep ? "dep" : c.target == ScopeTarget::kGov ? "gov" : "edge";
    out[key][c.attribute] = c.value;
  }
  return out;
}

inline nlohmann::json response_json(const ResponsePattern& q) {
  if (const auto* a = std::get_if<Agreement>(&q)) return {{"agreement", a->feature}};
  return {{"order", std::string(order_name(std::get<Order>(q).direction))}};
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string md_escape(std::string s) {
  for (std::size_t pos = 0; (pos = s.find('|', pos)) != std::string::npos; pos += 2) s.insert(pos, "\\");
  return s;
}

inline std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace detail

// Canonical description of everything that determines a job's output.
inline nlohmann::json job_config_json(const JobSpec& job, const RunConfig& cfg) {
  using nlohmann::json;
  json features = {
      {"min_count", cfg.features.min_count},
      {"closed_class_pos", cfg.features.closed_class_pos},
      {"upos_groups", cfg.features.upos_groups},
      {"pairs", cfg.features.pairs},
      {"leak_attributes", cfg.features.leak_attributes},
      {"exclude_context_deprels", cfg.features.exclude_context_deprels},
      {"max_features", cfg.features.max_features ? json(*cfg.features.max_features) : json(nullptr)},
  };
  json path = {
      {"k", cfg.path.k},
      {"lambda_start", cfg.path.lambda_start},
      {"lambda_end", cfg.path.lambda_end},
      {"spacing", cfg.path.spacing == LambdaSpacing::kLinear ? "linear" : "log"},
      {"warm_start", cfg.path.warm_start},
  };
  json solver = {{"tolerance", cfg.solver.tolerance},
                 {"max_iters", cfg.solver.max_iters},
                 {"zero_eps", cfg.solver.zero_eps}};
  return {{"name", job.name},
          {"treebanks", cfg.treebanks},
          {"scope", detail::scope_json(job.scope)},
          {"response", detail::response_json(job.response)},
          {"features", features},
          {"path", path},
          {"solver", solver}};
}

// Rows after applying the report options, in output order.
inline std::vector<const RuleRow*> select_rows(const JobResult& r, const ReportOptions& opt) {
  std::vector<const RuleRow*> rows;
  if (opt.sort == SortKey::kGTest) {
    for (auto i : g_order(r.rules)) rows.push_back(&r.rules[i]);
  } else {
    for (const auto& row : r.rules) rows.push_back(&row);
  }
  if (opt.significant_only) {
    std::erase_if(rows, [](const RuleRow* row) { return !row->record.significant; });
  }
  if (opt.top_k && rows.size() > *opt.top_k) rows.resize(*opt.top_k);
  return rows;
}

inline nlohmann::json report_json(const JobResult& r, const Corpus& corpus, const RunConfig& cfg) {
  using nlohmann::json;
  const json job_cfg = job_config_json(r.job, cfg);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(job_cfg.dump())));

  json steps = json::array();
  for (std::size_t i = 0; i < r.path.steps.size(); ++i) {
    const auto& s = r.path.steps[i];
    steps.push_back({{"step", i},
                     {"lambda", s.lambda},
                     {"active", s.nonzeros.size()},
                     {"intercept", s.intercept},
                     {"objective", s.objective},
                     {"iterations", s.iterations},
                     {"converged", s.converged}});
  }

  json rules = json::array();
  for (const RuleRow* row : select_rows(r, cfg.report)) {
    const auto& rec = row->record;
    rules.push_back({{"rank", rec.path_rank},
                     {"g_rank", row->g_rank},
                     {"feature_id", rec.feature},
                     {"pattern", rec.pattern},
                     {"direction", std::string(direction_name(rec.direction))},
                     {"n", rec.n},
                     {"alpha", rec.alpha},
                     {"mu", rec.mu},
                     {"precision", rec.precision},
                     {"coverage", rec.coverage},
                     {"g", rec.g},
                     {"p_value", rec.p_value},
                     {"significant", rec.significant},
                     {"phi_c", rec.phi_c},
                     {"entry_step", row->entry_step},
                     {"entry_lambda", r.path.lambdas[row->entry_step]},
                     {"entry_weight", row->entry_weight},
                     {"counts",
                      {{"scope", rec.counts.scope},
                       {"scope_q", rec.counts.scope_q},
                       {"scope_p", rec.counts.scope_p},
                       {"scope_p_q", rec.counts.scope_p_q}}}});
  }

  json comparison = nullptr;
  if (r.comparison) {
    comparison = {{"method", "spearman(path rank, G rank)"},
                  {"rho", r.comparison->rho},
                  {"p_value", r.comparison->p_value},
                  {"n_items", r.comparison->n_items}};
  }

  return {
      {"schema_version", kReportSchemaVersion},
      {"job", r.job.name},
      {"config_hash", hash},
      {"config", job_cfg},
      {"corpus",
       {{"files", corpus.files},
        {"sentences", corpus.bank.sentence_count()},
        {"tokens", corpus.bank.token_count},
        {"rejected_sentences", corpus.bank.rejected_sentences}}},
      {"scope", {{"n", r.scope.n_scope}, {"n_q", r.scope.n_scope_q}, {"mu", r.scope.mu}}},
      {"feature_space",
       {{"n_features", r.space.size()}, {"leak_filter", r.space.leak_filter()}, {"min_count", cfg.features.min_count}}},
      {"path",
       {{"selected_features", r.path.ranking.size()}, {"warning", r.path.warning}, {"steps", steps}}},
      {"rank_comparison", comparison},
      {"report_options",
       {{"significant_only", cfg.report.significant_only},
        {"sort", cfg.report.sort == SortKey::kPath ? "path" : "gtest"},
        {"top_k", cfg.report.top_k ? json(*cfg.report.top_k) : json(nullptr)}}},
      {"rules", rules},
  };
}

inline std::string report_markdown(const JobResult& r, const Corpus& corpus, const RunConfig& cfg) {
  std::string md;
  md += "# " + r.job.name + "\n\n";
  md += "- scope: `" + detail::scope_json(r.job.scope).dump() + "`\n";
  md += "- response: `" + describe(r.job.response) + "`\n";
  md += "- corpus: " + std::to_string(corpus.bank.sentence_count()) + " sentences, " +
        std::to_string(corpus.bank.token_count) + " tokens, " +
        std::to_string(corpus.bank.rejected_sentences) + " rejected\n";
  md += "- #(S) = " + std::to_string(r.scope.n_scope) + ", #(S and Q) = " + std::to_string(r.scope.n_scope_q) +
        ", mu = " + detail::fixed(r.scope.mu, 4) + "\n";
  std::string leak;
  for (const auto& l : r.space.leak_filter()) leak += (leak.empty() ? "" : ", ") + l;
  md += "- features: " + std::to_string(r.space.size()) + " (leak filter: " + (leak.empty() ? "none" : leak) + ")\n";
  md += "- path: " + std::to_string(r.path.steps.size()) + " steps, lambda " +
        detail::sci(r.path.lambdas.front()) + " -> " + detail::sci(r.path.lambdas.back()) + ", " +
        std::to_string(r.path.ranking.size()) + " selected" +
        (r.path.warning ? ", WARNING: some steps did not converge" : "") + "\n";
  if (r.comparison) {
    md += "- spearman(path rank, G rank): rho = " + detail::fixed(r.comparison->rho, 3) +
          ", p = " + detail::sci(r.comparison->p_value) + " over " + std::to_string(r.comparison->n_items) +
          " rules\n";
  } else {
    md += "- spearman(path rank, G rank): n/a (" + r.comparison_note + ")\n";
  }
  md += "\n| rank | pattern | direction | n | alpha | precision | coverage | G | p | phi_c |\n";
  md += "|---:|---|---|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const RuleRow* row : select_rows(r, cfg.report)) {
    const auto& rec = row->record;
    md += "| " + std::to_string(rec.path_rank) + " | `" + detail::md_escape(rec.pattern) + "` | " +
          (rec.direction == Direction::kQ ? "Q" : "not Q") + " | " + std::to_string(rec.n) + " | " +
          detail::fixed(rec.alpha, 3) + " | " + detail::fixed(rec.precision, 3) + " | " +
          detail::fixed(rec.coverage, 3) + " | " + detail::fixed(rec.g, 2) + " | " + detail::sci(rec.p_value) +
          (rec.significant ? "" : " (ns)") + " | " + detail::fixed(rec.phi_c, 3) + " |\n";
  }
  return md;
}

}  // namespace grex
