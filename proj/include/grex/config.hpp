#pragma once

// Declarative run configuration (JSON). Validation collects every problem it
// finds instead of stopping at the first one.
//
//   {
//     "treebanks": ["fr_gsd-sud-train.conllu"],
//     "jobs": [
//       {"name": "adj_order",
//        "scope": {"gov": {"upos": "NOUN"}, "dep": {"upos": "ADJ"}},
//        "response": {"order": "gov_after_dep"}}
//     ],
//     "features": {"min_count": 5},
//     "path": {"k": 100, "lambda_start": 0.1, "lambda_end": 0.001},
//     "report": {"sort": "path"}
//   }
//
// A single job may also be written inline with top-level "name", "scope"
// and "response" keys.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "grex/error.hpp"
#include "grex/featurize.hpp"
#include "grex/query.hpp"
#include "grex/regpath.hpp"

namespace grex {

struct JobSpec {
  std::string name;
  ScopePattern scope;
  ResponsePattern response;
};

enum class SortKey { kPath, kGTest };

struct ReportOptions {
  bool significant_only = false;
  SortKey sort = SortKey::kPath;
  std::optional<std::size_t> top_k;
};

struct RunConfig {
  std::vector<std::string> treebanks;  // resolved against the config's directory
  std::vector<JobSpec> jobs;
  FeatureConfig features;
  PathConfig path;
  SolverConfig solver;
  ReportOptions report;
  std::string output_dir = ".";
  std::size_t threads = 1;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(ErrorCode::kConfig, join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out = "invalid configuration:";
    for (const auto& s : p) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  std::vector<std::string> problems;

  void unknown_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : obj.items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || key == a;
      if (!ok) problems.push_back("unknown key '" + where + key + "'");
    }
  }

  bool expect_object(const json& v, const std::string& field) {
    if (v.is_object()) return true;
    problems.push_back("'" + field + "' must be an object");
    return false;
  }

  template <typename T>
  void number(const json& obj, const char* key, const std::string& where, T& out, double min_value,
              bool strict_min = false) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    const std::string field = where + key;
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min_value)) {
        problems.push_back("'" + field + "' must be an integer >= " + std::to_string(static_cast<long long>(min_value)));
        return;
      }
      out = v.get<T>();
    } else {
      if (!v.is_number() || (strict_min ? v.get<double>() <= min_value : v.get<double>() < min_value)) {
        problems.push_back("'" + field + "' must be a number " + (strict_min ? "> " : ">= ") +
                           std::to_string(min_value));
        return;
      }
      out = v.get<T>();
    }
  }

  void boolean(const json& obj, const char* key, const std::string& where, bool& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_boolean()) {
      problems.push_back("'" + where + key + "' must be true or false");
      return;
    }
    out = obj.at(key).get<bool>();
  }

  std::optional<std::vector<std::string>> strings(const json& v, const std::string& field) {
    if (!v.is_array()) {
      problems.push_back("'" + field + "' must be an array of strings");
      return std::nullopt;
    }
    std::vector<std::string> out;
    for (const auto& s : v) {
      if (!s.is_string() || s.get<std::string>().empty()) {
        problems.push_back("'" + field + "' must contain non-empty strings");
        return std::nullopt;
      }
      out.push_back(s.get<std::string>());
    }
    return out;
  }

  void string_set(const json& obj, const char* key, const std::string& where, std::set<std::string>& out) {
    if (!obj.contains(key)) return;
    if (auto v = strings(obj.at(key), where + key)) out = std::set<std::string>(v->begin(), v->end());
  }

  ScopePattern scope(const json& v, const std::string& where) {
    ScopePattern s;
    if (!expect_object(v, where + "scope")) return s;
    unknown_keys(v, where + "scope.", {"dep", "gov", "edge"});
    const std::pair<const char*, ScopeTarget> targets[] = {
        {"dep", ScopeTarget::kDep}, {"gov", ScopeTarget::kGov}, {"edge", ScopeTarget::kEdge}};
    for (const auto& [key, target] : targets) {
      if (!v.contains(key)) continue;
      const std::string field = where + "scope." + key;
      const json& node = v.at(key);
      if (!expect_object(node, field)) continue;
      for (const auto& [attr, value] : node.items()) {
        if (!value.is_string() || value.get<std::string>().empty()) {
          problems.push_back("'" + field + "." + attr + "' must be a non-empty string");
          continue;
        }
        if (attr == "form") {
          problems.push_back("'" + field + ".form': the form attribute is not supported");
          continue;
        }
        if (target == ScopeTarget::kEdge && attr != "deprel") {
          problems.push_back("'" + field + "." + attr + "': edge constraints only support 'deprel'");
          continue;
        }
        s.constraints.push_back({target, attr, value.get<std::string>()});
      }
    }
    return s;
  }

  std::optional<ResponsePattern> response(const json& v, const std::string& where) {
    const std::string field = where + "response";
    if (!expect_object(v, field)) return std::nullopt;
    unknown_keys(v, field + ".", {"agreement", "order"});
    const bool has_agreement = v.contains("agreement");
    const bool has_order = v.contains("order");
    if (has_agreement && has_order) {
      problems.push_back("'" + field + "': two responses declared (agreement and order); exactly one is allowed");
      return std::nullopt;
    }
    if (has_agreement) {
      const json& a = v.at("agreement");
      if (!a.is_string() || a.get<std::string>().empty()) {
        problems.push_back("'" + field + ".agreement' must name a FEATS attribute");
        return std::nullopt;
      }
      return Agreement{a.get<std::string>()};
    }
    if (has_order) {
      const json& o = v.at("order");
      if (o == "gov_before_dep") return Order{OrderDirection::kGovBeforeDep};
      if (o == "gov_after_dep") return Order{OrderDirection::kGovAfterDep};
      problems.push_back("'" + field + ".order' must be \"gov_before_dep\" or \"gov_after_dep\"");
      return std::nullopt;
    }
    if (v.is_object() && v.empty()) {
      problems.push_back("'" + field + "' declares no response (expected \"agreement\" or \"order\")");
    }
    return std::nullopt;
  }

  std::optional<JobSpec> job(const json& v, const std::string& where, bool inline_job) {
    if (!inline_job) {
      if (!expect_object(v, where.substr(0, where.size() - 1))) return std::nullopt;
      unknown_keys(v, where, {"name", "scope", "response"});
    }
    JobSpec spec;
    spec.name = "rules";
    if (v.contains("name")) {
      const json& n = v.at("name");
      const bool ok = n.is_string() && !n.get<std::string>().empty() &&
                      n.get<std::string>().find_first_not_of(
                          "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") == std::string::npos;
      if (!ok) {
        problems.push_back("'" + where + "name' must be a non-empty string of [A-Za-z0-9_.-]");
      } else {
        spec.name = n.get<std::string>();
      }
    }
    if (v.contains("scope")) spec.scope = scope(v.at("scope"), where);
    if (!v.contains("response")) {
      problems.push_back("'" + where + "response' is required");
      return std::nullopt;
    }
    auto q = response(v.at("response"), where);
    if (!q) return std::nullopt;
    spec.response = *q;
    return spec;
  }
};

// Parses with a callback that reports keys repeated inside one object.
inline json parse_rejecting_duplicates(std::string_view text, std::vector<std::string>& problems) {
  std::vector<std::set<std::string>> open;
  json::parser_callback_t cb = [&](int, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start: open.emplace_back(); break;
      case json::parse_event_t::object_end: open.pop_back(); break;
      case json::parse_event_t::key: {
        const auto key = parsed.get<std::string>();
        if (!open.empty() && !open.back().insert(key).second) {
          problems.push_back("duplicate key '" + key + "'");
        }
        break;
      }
      default: break;
    }
    return true;
  };
  return json::parse(text.begin(), text.end(), cb);
}

}  // namespace detail

// Parses and validates a config. Relative treebank paths are resolved against
// base_dir; missing files are reported when check_files is set.
inline RunConfig validate_config(std::string_view text, const std::filesystem::path& base_dir = {},
                                 bool check_files = true) {
  using nlohmann::json;
  detail::ConfigReader rd;
  json root;
  try {
    root = detail::parse_rejecting_duplicates(text, rd.problems);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"the configuration must be a JSON object"});

  RunConfig cfg;
  rd.unknown_keys(root, "", {"treebanks", "jobs", "name", "scope", "response", "features", "path", "solver",
                             "report", "output_dir", "threads"});

  // treebanks
  if (!root.contains("treebanks")) {
    rd.problems.push_back("'treebanks' is required");
  } else {
    const json& tb = root.at("treebanks");
    std::optional<std::vector<std::string>> paths;
    if (tb.is_string()) {
      paths = std::vector<std::string>{tb.get<std::string>()};
    } else {
      paths = rd.strings(tb, "treebanks");
    }
    if (paths && paths->empty()) rd.problems.push_back("'treebanks' must list at least one file");
    if (paths) {
      for (const auto& p : *paths) {
        std::filesystem::path full(p);
        if (full.is_relative() && !base_dir.empty()) full = base_dir / full;
        if (check_files && !std::filesystem::is_regular_file(full)) {
          rd.problems.push_back("treebank file not found: '" + full.string() + "'");
        }
        cfg.treebanks.push_back(full.lexically_normal().string());
      }
    }
  }

  // jobs
  const bool inline_job = root.contains("response") || root.contains("scope") || root.contains("name");
  if (inline_job && root.contains("jobs")) {
    rd.problems.push_back("declare either 'jobs' or an inline job (name/scope/response), not both");
  } else if (inline_job) {
    if (auto j = rd.job(root, "", true)) cfg.jobs.push_back(std::move(*j));
  } else if (!root.contains("jobs")) {
    rd.problems.push_back("'jobs' is required (or an inline 'response')");
  } else if (!root.at("jobs").is_array() || root.at("jobs").empty()) {
    rd.problems.push_back("'jobs' must be a non-empty array");
  } else {
    const json& jobs = root.at("jobs");
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (auto j = rd.job(jobs[i], "jobs[" + std::to_string(i) + "].", false)) cfg.jobs.push_back(std::move(*j));
    }
    std::set<std::string> names;
    for (const auto& j : cfg.jobs) {
      if (!names.insert(j.name).second) rd.problems.push_back("duplicate job name '" + j.name + "'");
    }
  }

  if (root.contains("features") && rd.expect_object(root.at("features"), "features")) {
    const json& f = root.at("features");
    const std::string w = "features.";
    rd.unknown_keys(f, w, {"min_count", "closed_class_pos", "upos_groups", "pairs", "leak_attributes",
                           "exclude_context_deprels", "max_features"});
    rd.number(f, "min_count", w, cfg.features.min_count, 1);
    rd.string_set(f, "closed_class_pos", w, cfg.features.closed_class_pos);
    rd.boolean(f, "pairs", w, cfg.features.pairs);
    rd.string_set(f, "leak_attributes", w, cfg.features.leak_attributes);
    rd.string_set(f, "exclude_context_deprels", w, cfg.features.exclude_context_deprels);
    if (f.contains("upos_groups") && rd.expect_object(f.at("upos_groups"), w + "upos_groups")) {
      cfg.features.upos_groups.clear();
      for (const auto& [name, tags] : f.at("upos_groups").items()) {
        if (auto t = rd.strings(tags, w + "upos_groups." + name)) cfg.features.upos_groups[name] = *t;
      }
    }
    if (f.contains("max_features") && !f.at("max_features").is_null()) {
      std::size_t cap = 0;
      rd.number(f, "max_features", w, cap, 1);
      if (cap > 0) cfg.features.max_features = cap;
    }
  }

  if (root.contains("path") && rd.expect_object(root.at("path"), "path")) {
    const json& p = root.at("path");
    const std::string w = "path.";
    rd.unknown_keys(p, w, {"k", "lambda_start", "lambda_end", "spacing", "warm_start"});
    rd.number(p, "k", w, cfg.path.k, 1);
    rd.number(p, "lambda_start", w, cfg.path.lambda_start, 0.0, true);
    rd.number(p, "lambda_end", w, cfg.path.lambda_end, 0.0, true);
    rd.boolean(p, "warm_start", w, cfg.path.warm_start);
    if (p.contains("spacing")) {
      if (p.at("spacing") == "linear") {
        cfg.path.spacing = LambdaSpacing::kLinear;
      } else if (p.at("spacing") == "log") {
        cfg.path.spacing = LambdaSpacing::kLog;
      } else {
        rd.problems.push_back("'path.spacing' must be \"linear\" or \"log\"");
      }
    }
    if (!(cfg.path.lambda_start > cfg.path.lambda_end)) {
      rd.problems.push_back("'path.lambda_start' must be greater than 'path.lambda_end'");
    }
  }

  if (root.contains("solver") && rd.expect_object(root.at("solver"), "solver")) {
    const json& s = root.at("solver");
    const std::string w = "solver.";
    rd.unknown_keys(s, w, {"tolerance", "max_iters", "zero_eps"});
    rd.number(s, "tolerance", w, cfg.solver.tolerance, 0.0, true);
    rd.number(s, "max_iters", w, cfg.solver.max_iters, 1);
    rd.number(s, "zero_eps", w, cfg.solver.zero_eps, 0.0);
  }

  if (root.contains("report") && rd.expect_object(root.at("report"), "report")) {
    const json& r = root.at("report");
    const std::string w = "report.";
    rd.unknown_keys(r, w, {"significant_only", "sort", "top_k"});
    rd.boolean(r, "significant_only", w, cfg.report.significant_only);
    if (r.contains("sort")) {
      if (r.at("sort") == "path") {
        cfg.report.sort = SortKey::kPath;
      } else if (r.at("sort") == "gtest") {
        cfg.report.sort = SortKey::kGTest;
      } else {
        rd.problems.push_back("'report.sort' must be \"path\" or \"gtest\"");
      }
    }
    if (r.contains("top_k") && !r.at("top_k").is_null()) {
      std::size_t k = 0;
      rd.number(r, "top_k", w, k, 0);
      cfg.report.top_k = k;
    }
  }

  if (root.contains("output_dir")) {
    if (root.at("output_dir").is_string()) {
      std::filesystem::path out(root.at("output_dir").get<std::string>());
      if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
      cfg.output_dir = out.lexically_normal().string();
    } else {
      rd.problems.push_back("'output_dir' must be a string");
    }
  }
  rd.number(root, "threads", "", cfg.threads, 1);

  if (!rd.problems.empty()) throw ConfigError(rd.problems);
  return cfg;
}

}  // namespace grex
