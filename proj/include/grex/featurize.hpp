#pragma once

// Boolean feature space over the neighbourhood of an edge: the dependent, its
// governor, the grandparent, the governor's other dependents (codependents)
// and the dependent's own dependents (grandchildren).
//
// Codependent and grandchild atoms are existential: an atom is present when
// at least one neighbour in that role matches. A feature is one atom or an
// unordered pair of atoms; it fires when all of its atoms are present.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "grex/error.hpp"
#include "grex/query.hpp"
#include "grex/treebank.hpp"

namespace grex {

struct FeatureAtom {
  NodeRole role = NodeRole::kDep;
  std::string attribute;
  std::string value;

  auto operator<=>(const FeatureAtom&) const = default;
  bool operator==(const FeatureAtom&) const = default;

  std::string str() const {
    return std::string(role_name(role)) + "." + attribute + "=" + value;
  }
};

inline constexpr std::string_view kUposGroupPrefix = "upos_group:";

struct FeatureConfig {
  std::size_t min_count = 5;
  // lemma atoms are only produced for tokens in these classes
  std::set<std::string> closed_class_pos{"ADP", "AUX", "CCONJ", "DET", "PART", "PRON", "SCONJ"};
  std::map<std::string, std::vector<std::string>> upos_groups{
      {"det_num", {"DET", "NUM"}},
      {"noun_propn", {"NOUN", "PROPN"}},
      {"verb_aux", {"VERB", "AUX"}},
  };
  bool pairs = true;
  // Extra attributes to drop. "Gender" drops it on every role, "DEP.Gender"
  // only on the dependent.
  std::set<std::string> leak_attributes;
  // Tokens with these relations are ignored as codependents and grandchildren.
  std::set<std::string> exclude_context_deprels;
  std::optional<std::size_t> max_features;
};

// Attributes that would encode the response itself.
inline std::set<std::string> leak_filter_for(const ResponsePattern& response,
                                             const FeatureConfig& config) {
  std::set<std::string> filter = config.leak_attributes;
  if (const auto* a = std::get_if<Agreement>(&response)) {
    filter.insert(a->feature);
  } else {
    filter.insert("GOV.position");
  }
  return filter;
}

inline bool is_leaked(const FeatureAtom& atom, const std::set<std::string>& filter) {
  if (filter.empty()) return false;
  const std::string qualified = std::string(role_name(atom.role)) + "." + atom.attribute;
  if (filter.contains(atom.attribute) || filter.contains(qualified)) return true;
  if (atom.attribute.starts_with(kUposGroupPrefix)) {
    return filter.contains("upos") || filter.contains(std::string(role_name(atom.role)) + ".upos");
  }
  return false;
}

namespace detail {

inline void node_atoms(const Token& t, NodeRole role, const FeatureConfig& config,
                       std::vector<FeatureAtom>& out) {
  out.push_back({role, "upos", t.upos});
  out.push_back({role, "deprel", t.deprel});
  if (config.closed_class_pos.contains(t.upos)) out.push_back({role, "lemma", t.lemma});
  for (const auto& [k, v] : t.feats) out.push_back({role, k, v});
  for (const auto& [group, tags] : config.upos_groups) {
    if (std::find(tags.begin(), tags.end(), t.upos) != tags.end()) {
      out.push_back({role, std::string(kUposGroupPrefix) + group, "yes"});
    }
  }
}

}  // namespace detail

// Sorted, duplicate-free atom set of one instance.
inline std::vector<FeatureAtom> enumerate_atoms(const Instance& inst, const FeatureConfig& config,
                                                const std::set<std::string>& leak_filter) {
  const Sentence& s = *inst.sentence;
  const Token& dep = inst.dep_token();
  const Token& gov = inst.gov_token();
  std::vector<FeatureAtom> atoms;

  detail::node_atoms(dep, NodeRole::kDep, config, atoms);
  detail::node_atoms(gov, NodeRole::kGov, config, atoms);
  atoms.push_back({NodeRole::kGov, "position", gov.id < dep.id ? "before_dep" : "after_dep"});

  if (const TokenId gp = gov.head; gp != 0) {
    detail::node_atoms(s.token(gp), NodeRole::kGrandparent, config, atoms);
    atoms.push_back({NodeRole::kGrandparent, "position", gp < gov.id ? "before_gov" : "after_gov"});
  }
  for (TokenId c : s.dependent_ids(gov.id)) {
    if (c == dep.id) continue;
    const Token& t = s.token(c);
    if (config.exclude_context_deprels.contains(t.deprel)) continue;
    detail::node_atoms(t, NodeRole::kCodep, config, atoms);
  }
  for (TokenId c : s.dependent_ids(dep.id)) {
    const Token& t = s.token(c);
    if (config.exclude_context_deprels.contains(t.deprel)) continue;
    detail::node_atoms(t, NodeRole::kGrandchild, config, atoms);
  }

  std::erase_if(atoms, [&](const FeatureAtom& a) { return is_leaked(a, leak_filter); });
  std::sort(atoms.begin(), atoms.end());
  atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
  return atoms;
}

inline std::vector<FeatureAtom> enumerate_atoms(const Instance& inst, const FeatureConfig& config) {
  return enumerate_atoms(inst, config, config.leak_attributes);
}

using FeatureId = std::uint32_t;

struct Feature {
  std::vector<FeatureAtom> atoms;  // one or two, canonically ordered
  FeatureId id = 0;
  std::size_t support = 0;

  std::string str() const {
    std::string out = atoms.front().str();
    if (atoms.size() == 2) out += " & " + atoms.back().str();
    return out;
  }
  bool mentions(const std::string& attribute) const {
    return std::any_of(atoms.begin(), atoms.end(),
                       [&](const FeatureAtom& a) { return a.attribute == attribute; });
  }
};

class FeatureSpace {
 public:
  const std::vector<Feature>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }
  const Feature& operator[](FeatureId id) const { return features_.at(id); }
  const std::set<std::string>& leak_filter() const { return leak_filter_; }
  const FeatureConfig& config() const { return config_; }
  std::size_t scope_size() const { return scope_size_; }

  // Feature ids firing for an atom set (sorted ascending).
  std::vector<FeatureId> active_features(std::span<const FeatureAtom> atoms) const {
    std::vector<std::uint32_t> local;
    local.reserve(atoms.size());
    for (const auto& a : atoms) {
      auto it = atom_index_.find(a.str());
      if (it != atom_index_.end()) local.push_back(it->second);
    }
    std::sort(local.begin(), local.end());
    std::vector<FeatureId> out;
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (auto f = single_[local[i]]; f >= 0) out.push_back(static_cast<FeatureId>(f));
      if (pair_.empty()) continue;
      for (std::size_t j = i + 1; j < local.size(); ++j) {
        auto it = pair_.find(pair_key(local[i], local[j]));
        if (it != pair_.end()) out.push_back(it->second);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::optional<FeatureId> find(const std::vector<FeatureAtom>& atoms) const {
    for (const auto& f : features_) {
      if (f.atoms == atoms) return f.id;
    }
    return std::nullopt;
  }

 private:
  friend FeatureSpace build_feature_space(const std::vector<Instance>&, const FeatureConfig&,
                                          const std::set<std::string>&);

  static std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::vector<Feature> features_;
  std::set<std::string> leak_filter_;
  FeatureConfig config_;
  std::size_t scope_size_ = 0;
  // canonical atom rank of every atom used by some feature
  std::unordered_map<std::string, std::uint32_t> atom_index_;
  std::vector<std::int64_t> single_;  // atom rank -> feature id or -1
  std::unordered_map<std::uint64_t, FeatureId> pair_;
};

// Counts atoms and atom pairs over the scope and keeps features seen at
// least min_count times. Two kinds of columns are dropped because they add
// nothing a simpler column does not: singletons present on every instance,
// and pairs whose support equals the support of one of their atoms.
inline FeatureSpace build_feature_space(const std::vector<Instance>& instances,
                                        const FeatureConfig& config,
                                        const std::set<std::string>& leak_filter) {
  if (instances.empty()) throw Error(ErrorCode::kEmptyScope, "cannot build features: empty scope");
  const std::size_t n = instances.size();

  // intern atoms
  std::unordered_map<std::string, std::uint32_t> intern;
  std::vector<FeatureAtom> dictionary;
  std::vector<std::size_t> atom_support;
  std::vector<std::vector<std::uint32_t>> per_instance(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& atom : enumerate_atoms(instances[i], config, leak_filter)) {
      auto [it, inserted] = intern.try_emplace(atom.str(), static_cast<std::uint32_t>(dictionary.size()));
      if (inserted) {
        dictionary.push_back(std::move(atom));
        atom_support.push_back(0);
      }
      ++atom_support[it->second];
      per_instance[i].push_back(it->second);
    }
  }

  // canonical ranks for the atoms frequent enough to appear in any feature
  std::vector<std::uint32_t> frequent;
  for (std::uint32_t a = 0; a < dictionary.size(); ++a) {
    if (atom_support[a] >= config.min_count) frequent.push_back(a);
  }
  std::sort(frequent.begin(), frequent.end(),
            [&](std::uint32_t x, std::uint32_t y) { return dictionary[x] < dictionary[y]; });
  constexpr std::uint32_t kNone = UINT32_MAX;
  std::vector<std::uint32_t> rank(dictionary.size(), kNone);
  for (std::uint32_t r = 0; r < frequent.size(); ++r) rank[frequent[r]] = r;

  struct Candidate {
    std::uint32_t a;
    std::uint32_t b;  // kNone for singletons
    std::size_t support;
  };
  std::vector<Candidate> candidates;
  for (std::uint32_t r = 0; r < frequent.size(); ++r) {
    const std::size_t sup = atom_support[frequent[r]];
    if (sup < n) candidates.push_back({r, kNone, sup});
  }

  if (config.pairs) {
    std::unordered_map<std::uint64_t, std::size_t> pair_support;
    std::vector<std::uint32_t> ranks;
    for (const auto& atoms : per_instance) {
      ranks.clear();
      for (auto a : atoms) {
        if (rank[a] != kNone) ranks.push_back(rank[a]);
      }
      std::sort(ranks.begin(), ranks.end());
      for (std::size_t i = 0; i < ranks.size(); ++i) {
        for (std::size_t j = i + 1; j < ranks.size(); ++j) {
          ++pair_support[FeatureSpace::pair_key(ranks[i], ranks[j])];
        }
      }
    }
    for (const auto& [key, sup] : pair_support) {
      if (sup < config.min_count) continue;
      const auto a = static_cast<std::uint32_t>(key >> 32);
      const auto b = static_cast<std::uint32_t>(key & 0xffffffffu);
      if (sup == atom_support[frequent[a]] || sup == atom_support[frequent[b]]) continue;
      candidates.push_back({a, b, sup});
    }
  }

  const auto canonical = [](const Candidate& x, const Candidate& y) {
    if (x.a != y.a) return x.a < y.a;
    // singleton (a) sorts before any pair (a, b)
    const std::uint64_t xb = x.b == kNone ? 0 : std::uint64_t{x.b} + 1;
    const std::uint64_t yb = y.b == kNone ? 0 : std::uint64_t{y.b} + 1;
    return xb < yb;
  };
  if (config.max_features && candidates.size() > *config.max_features) {
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& x, const Candidate& y) {
      if (x.support != y.support) return x.support > y.support;
      return canonical(x, y);
    });
    candidates.resize(*config.max_features);
  }
  std::sort(candidates.begin(), candidates.end(), canonical);

  FeatureSpace space;
  space.leak_filter_ = leak_filter;
  space.config_ = config;
  space.scope_size_ = n;
  space.single_.assign(frequent.size(), -1);
  for (const auto& c : candidates) {
    Feature f;
    f.id = static_cast<FeatureId>(space.features_.size());
    f.support = c.support;
    f.atoms.push_back(dictionary[frequent[c.a]]);
    space.atom_index_.try_emplace(f.atoms.back().str(), c.a);
    if (c.b == kNone) {
      space.single_[c.a] = f.id;
    } else {
      f.atoms.push_back(dictionary[frequent[c.b]]);
      space.atom_index_.try_emplace(f.atoms.back().str(), c.b);
      space.pair_.emplace(FeatureSpace::pair_key(c.a, c.b), f.id);
    }
    space.features_.push_back(std::move(f));
  }
  return space;
}

inline FeatureSpace build_feature_space(const std::vector<Instance>& instances,
                                        const FeatureConfig& config,
                                        const ResponsePattern& response) {
  return build_feature_space(instances, config, leak_filter_for(response, config));
}

// Sparse boolean design matrix with labels, stored both row- and column-wise.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  // rows[i] lists the active feature ids of row i (any order, no duplicates).
  DesignMatrix(std::size_t n_features, std::vector<std::vector<FeatureId>> rows,
               std::vector<std::uint8_t> labels)
      : n_features_(n_features), labels_(std::move(labels)) {
    if (rows.size() != labels_.size()) {
      throw Error(ErrorCode::kInvalidArgument, "row count and label count differ");
    }
    row_offsets_.assign(1, 0);
    row_offsets_.reserve(rows.size() + 1);
    std::vector<std::size_t> col_count(n_features_, 0);
    for (auto& r : rows) {
      std::sort(r.begin(), r.end());
      if (std::adjacent_find(r.begin(), r.end()) != r.end()) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate feature id in a row");
      }
      for (FeatureId f : r) {
        if (f >= n_features_) throw Error(ErrorCode::kInvalidArgument, "feature id out of range");
        ++col_count[f];
        row_indices_.push_back(f);
      }
      row_offsets_.push_back(row_indices_.size());
    }
    for (auto y : labels_) {
      if (y > 1) throw Error(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
      positives_ += y;
    }
    col_offsets_.assign(n_features_ + 1, 0);
    for (std::size_t f = 0; f < n_features_; ++f) col_offsets_[f + 1] = col_offsets_[f] + col_count[f];
    col_indices_.resize(row_indices_.size());
    std::vector<std::size_t> fill(col_offsets_.begin(), col_offsets_.end() - 1);
    for (std::size_t i = 0; i + 1 < row_offsets_.size(); ++i) {
      for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
        col_indices_[fill[row_indices_[k]]++] = static_cast<std::uint32_t>(i);
      }
    }
  }

  std::size_t rows() const { return labels_.size(); }
  std::size_t features() const { return n_features_; }
  std::size_t nonzeros() const { return row_indices_.size(); }
  std::size_t positives() const { return positives_; }

  std::span<const std::uint8_t> labels() const { return labels_; }
  std::span<const FeatureId> row(std::size_t i) const {
    return {row_indices_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
  }
  // Row indices where feature f is 1, ascending.
  std::span<const std::uint32_t> column(FeatureId f) const {
    return {col_indices_.data() + col_offsets_[f], col_offsets_[f + 1] - col_offsets_[f]};
  }

 private:
  std::size_t n_features_ = 0;
  std::vector<std::uint8_t> labels_;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<FeatureId> row_indices_;
  std::vector<std::size_t> col_offsets_;
  std::vector<std::uint32_t> col_indices_;
  std::size_t positives_ = 0;
};

inline DesignMatrix vectorize(const std::vector<Instance>& instances, const FeatureSpace& space) {
  std::vector<std::vector<FeatureId>> rows;
  std::vector<std::uint8_t> labels;
  rows.reserve(instances.size());
  labels.reserve(instances.size());
  for (const auto& inst : instances) {
    rows.push_back(space.active_features(enumerate_atoms(inst, space.config(), space.leak_filter())));
    labels.push_back(inst.label ? 1 : 0);
  }
  return DesignMatrix(space.size(), std::move(rows), std::move(labels));
}

}  // namespace grex
