#include <gtest/gtest.h>

#include "grex/pipeline.hpp"
#include "synthetic.hpp"

namespace grex {
namespace {

Corpus corpus_from(const std::string& text) {
  Corpus c;
  c.files = {"memory"};
  c.bank = parse_conllu_string(text);
  return c;
}

JobSpec adj_order_job() {
  return JobSpec{"adj_order", ScopePattern{{{ScopeTarget::kGov, "upos", "NOUN"}, {ScopeTarget::kDep, "upos", "ADJ"}}},
                 Order{OrderDirection::kGovAfterDep}};
}

RunConfig small_path() {
  RunConfig cfg;
  cfg.path.k = 40;
  return cfg;
}

TEST(RunJob, PlantedTriggerRanksFirst) {
  synth::PlantedSpec spec;
  spec.instances = 1500;
  const Corpus corpus = corpus_from(synth::planted_order_corpus(1, spec));
  const auto result = run_job(corpus, adj_order_job(), small_path());
  ASSERT_FALSE(result.rules.empty());
  const auto& top = result.rules.front().record;
  EXPECT_EQ(top.pattern, "DEP.NumType=Ord");
  EXPECT_EQ(top.path_rank, 1u);
  EXPECT_EQ(top.direction, Direction::kQ);
  EXPECT_TRUE(top.significant);
  EXPECT_NEAR(top.precision, 0.97, 0.03);
  if (result.rules.size() > 1) {
    EXPECT_GT(result.rules[1].record.path_rank, 1u);
  }
  EXPECT_NEAR(result.scope.mu, 0.5, 0.05);
}

// Rule counts re-derived by scanning the instances directly.
TEST(RunJob, RuleCountsMatchDirectScan) {
  synth::TreeGenerator gen(9);
  const Corpus corpus = corpus_from(gen.corpus(300));
  const auto job = adj_order_job();
  const auto result = run_job(corpus, job, small_path());
  const auto inst = extract_instances(corpus.bank, job.scope, job.response);
  ASSERT_EQ(result.scope.n_scope, inst.size());
  ASSERT_FALSE(result.rules.empty());
  for (const auto& row : result.rules) {
    const Feature& f = result.space[row.record.feature];
    std::size_t p = 0, pq = 0, q = 0;
    for (const auto& i : inst) {
      const auto atoms = enumerate_atoms(i, result.space.config(), result.space.leak_filter());
      const bool fires = std::all_of(f.atoms.begin(), f.atoms.end(), [&](const FeatureAtom& a) {
        return std::binary_search(atoms.begin(), atoms.end(), a);
      });
      p += fires;
      pq += fires && i.label;
      q += i.label;
    }
    EXPECT_EQ(row.record.counts.scope_p, p) << f.str();
    EXPECT_EQ(row.record.counts.scope_p_q, pq) << f.str();
    EXPECT_EQ(row.record.counts.scope_q, q);
    const double alpha = static_cast<double>(pq) / static_cast<double>(p);
    const bool q_dir = alpha >= result.scope.mu;
    EXPECT_EQ(row.record.direction == Direction::kQ, q_dir);
    EXPECT_DOUBLE_EQ(row.record.precision, q_dir ? alpha : 1.0 - alpha);
  }
  for (std::size_t i = 1; i < result.rules.size(); ++i) {
    EXPECT_GE(result.rules[i].record.path_rank, result.rules[i - 1].record.path_rank);
  }
}

TEST(RunJob, NoContrastiveSignal) {
  synth::ConlluWriter w;
  for (int i = 0; i < 10; ++i) {
    w.sentence("s" + std::to_string(i), {{"j", "j", "ADJ", {}, 2, "mod"}, {"n", "n", "NOUN", {}, 0, "root"}});
  }
  const Corpus corpus = corpus_from(w.str());
  try {
    run_job(corpus, adj_order_job(), small_path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoContrastiveSignal);
  }
  try {
    run_job(corpus, JobSpec{"none", ScopePattern{{{ScopeTarget::kDep, "upos", "VERB"}}}, Order{}}, small_path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyScope);
  }
}

TEST(Report, JsonIsDeterministicAndComplete) {
  synth::TreeGenerator gen(10);
  const Corpus corpus = corpus_from(gen.corpus(200));
  RunConfig cfg = small_path();
  const auto a = run_job(corpus, adj_order_job(), cfg);
  const auto b = run_job(corpus, adj_order_job(), cfg);
  const auto ja = report_json(a, corpus, cfg);
  EXPECT_EQ(ja.dump(2), report_json(b, corpus, cfg).dump(2));
  EXPECT_EQ(ja["schema_version"], 1);
  EXPECT_EQ(ja["job"], "adj_order");
  EXPECT_EQ(ja["config_hash"].get<std::string>().size(), 16u);
  EXPECT_EQ(ja["path"]["steps"].size(), 41u);
  EXPECT_EQ(ja["rules"].size(), a.rules.size());
  EXPECT_EQ(ja["feature_space"]["leak_filter"][0], "GOV.position");
  EXPECT_TRUE(ja["rules"][0].contains("phi_c"));

  RunConfig other = cfg;
  other.features.min_count = 6;
  EXPECT_NE(report_json(a, corpus, other)["config_hash"], ja["config_hash"]);
}

TEST(Report, SelectRowsOptions) {
  synth::TreeGenerator gen(12);
  const Corpus corpus = corpus_from(gen.corpus(250));
  const auto r = run_job(corpus, adj_order_job(), small_path());
  ASSERT_GE(r.rules.size(), 3u);
  ReportOptions opt;
  opt.sort = SortKey::kGTest;
  const auto by_g = select_rows(r, opt);
  for (std::size_t i = 1; i < by_g.size(); ++i) EXPECT_GE(by_g[i - 1]->record.g, by_g[i]->record.g);
  opt.significant_only = true;
  for (const auto* row : select_rows(r, opt)) EXPECT_TRUE(row->record.significant);
  opt.top_k = 2;
  EXPECT_LE(select_rows(r, opt).size(), 2u);
  opt.top_k = 0;
  EXPECT_TRUE(select_rows(r, opt).empty());
  ASSERT_TRUE(r.comparison.has_value());
  EXPECT_GE(r.comparison->rho, -1.0);
  EXPECT_LE(r.comparison->rho, 1.0);
  for (std::size_t i = 0; i < r.rules.size(); ++i) EXPECT_GE(r.rules[i].g_rank, 1u);
}

TEST(Report, MarkdownTable) {
  synth::PlantedSpec spec;
  spec.instances = 800;
  const Corpus corpus = corpus_from(synth::planted_order_corpus(3, spec));
  const auto r = run_job(corpus, adj_order_job(), small_path());
  const std::string md = report_markdown(r, corpus, small_path());
  EXPECT_NE(md.find("# adj_order"), std::string::npos);
  EXPECT_NE(md.find("| rank | pattern | direction | n | alpha | precision | coverage | G | p | phi_c |"),
            std::string::npos);
  EXPECT_NE(md.find("`DEP.NumType=Ord`"), std::string::npos);
  EXPECT_EQ(detail::md_escape("a|b"), "a\\|b");
}

}  // namespace
}  // namespace grex
