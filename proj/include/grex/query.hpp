#pragma once

// Rule components over dependency edges: the scope S selecting edges, the
// response Q labelling them, and the labelled instances the learner sees.

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "grex/error.hpp"
#include "grex/treebank.hpp"

namespace grex {

enum class NodeRole { kDep, kGov, kGrandparent, kCodep, kGrandchild };

inline std::string_view role_name(NodeRole r) {
  switch (r) {
    case NodeRole::kDep: return "DEP";
    case NodeRole::kGov: return "GOV";
    case NodeRole::kGrandparent: return "GRANDPARENT";
    case NodeRole::kCodep: return "CODEP";
    case NodeRole::kGrandchild: return "GRANDCHILD";
  }
  return "?";
}

// Value of a named attribute on a token: upos, lemma, deprel, or a FEATS key.
// Returns nullptr when the token does not carry it.
inline const std::string* token_attribute(const Token& t, const std::string& attribute) {
  if (attribute == "upos") return &t.upos;
  if (attribute == "lemma") return &t.lemma;
  if (attribute == "deprel") return &t.deprel;
  return t.feat(attribute);
}

enum class ScopeTarget { kDep, kGov, kEdge };

struct ScopeConstraint {
  ScopeTarget target = ScopeTarget::kDep;
  std::string attribute;
  std::string value;
};

// Conjunction of local constraints on an edge and its two endpoints.
struct ScopePattern {
  std::vector<ScopeConstraint> constraints;

  bool matches(const Token& gov, const Token& dep) const {
    for (const auto& c : constraints) {
      const std::string* v = nullptr;
      switch (c.target) {
        case ScopeTarget::kDep: v = token_attribute(dep, c.attribute); break;
        case ScopeTarget::kGov: v = token_attribute(gov, c.attribute); break;
        case ScopeTarget::kEdge: v = &dep.deprel; break;
      }
      if (v == nullptr || *v != c.value) return false;
    }
    return true;
  }
};

struct Agreement {
  std::string feature;
};

enum class OrderDirection { kGovBeforeDep, kGovAfterDep };

struct Order {
  OrderDirection direction = OrderDirection::kGovBeforeDep;
};

using ResponsePattern = std::variant<Agreement, Order>;

inline std::string_view order_name(OrderDirection d) {
  return d == OrderDirection::kGovBeforeDep ? "gov_before_dep" : "gov_after_dep";
}

inline std::string describe(const ResponsePattern& q) {
  if (const auto* a = std::get_if<Agreement>(&q)) return "agreement(" + a->feature + ")";
  const bool before = std::get<Order>(q).direction == OrderDirection::kGovBeforeDep;
  return before ? "GOV.position=before_dep" : "GOV.position=after_dep";
}

// One in-scope dependency edge. The sentence must outlive the instance.
struct Instance {
  const Sentence* sentence = nullptr;
  TokenId gov = 0;
  TokenId dep = 0;
  bool label = false;

  const Token& gov_token() const { return sentence->token(gov); }
  const Token& dep_token() const { return sentence->token(dep); }
  TokenId grandparent() const { return gov_token().head; }  // 0 when GOV is a root
};

inline void validate(const ScopePattern& scope, const ResponsePattern& response) {
  for (const auto& c : scope.constraints) {
    if (c.attribute.empty() || c.value.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "scope constraint with empty attribute or value");
    }
    if (c.target == ScopeTarget::kEdge && c.attribute != "deprel") {
      throw Error(ErrorCode::kInvalidArgument,
                  "edge constraints only support 'deprel', got '" + c.attribute + "'");
    }
  }
  if (const auto* a = std::get_if<Agreement>(&response); a && a->feature.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "agreement response needs a feature name");
  }
}

// Instances in corpus order. For Agreement(f) only edges where both ends
// carry f are in scope; multi-valued feature values are compared verbatim.
inline std::vector<Instance> extract_instances(const Treebank& bank, const ScopePattern& scope,
                                               const ResponsePattern& response) {
  validate(scope, response);
  std::vector<Instance> out;
  const auto* agreement = std::get_if<Agreement>(&response);
  for (const Sentence& s : bank.sentences) {
    for (const Token& dep : s.tokens()) {
      if (dep.head == 0) continue;
      const Token& gov = s.token(dep.head);
      if (!scope.matches(gov, dep)) continue;
      bool label = false;
      if (agreement) {
        const std::string* gv = gov.feat(agreement->feature);
        const std::string* dv = dep.feat(agreement->feature);
        if (gv == nullptr || dv == nullptr) continue;
        label = *gv == *dv;
      } else {
        const bool gov_first = gov.id < dep.id;
        label = std::get<Order>(response).direction == OrderDirection::kGovBeforeDep ? gov_first
                                                                                    : !gov_first;
      }
      out.push_back(Instance{&s, gov.id, dep.id, label});
    }
  }
  return out;
}

struct ScopeCounts {
  std::size_t n_scope = 0;    // #(S)
  std::size_t n_scope_q = 0;  // #(S and Q)
  double mu = 0.0;
};

inline ScopeCounts scope_counts(const std::vector<Instance>& instances) {
  if (instances.empty()) throw Error(ErrorCode::kEmptyScope, "empty scope: no edge matches S");
  ScopeCounts c;
  c.n_scope = instances.size();
  for (const auto& i : instances) c.n_scope_q += i.label ? 1 : 0;
  c.mu = static_cast<double>(c.n_scope_q) / static_cast<double>(c.n_scope);
  return c;
}

}  // namespace grex
