#pragma once

// CoNLL-U reader and the in-memory dependency graph model.
//
// Only basic syntactic tokens are kept: multiword-token ranges ("3-4") and
// empty nodes ("3.1") are skipped. A sentence whose token lines are malformed
// or whose heads point outside the sentence is rejected as a whole and a
// diagnostic is recorded; it never reaches rule statistics.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "grex/error.hpp"

namespace grex {

using TokenId = int;

struct Token {
  TokenId id = 0;
  std::string form;
  std::string lemma;
  std::string upos;
  std::optional<std::string> xpos;
  std::map<std::string, std::string> feats;
  TokenId head = 0;
  std::string deprel;
  std::string deps = "_";  // kept verbatim so lines re-serialize losslessly
  std::optional<std::string> misc;

  const std::string* feat(const std::string& key) const {
    auto it = feats.find(key);
    return it == feats.end() ? nullptr : &it->second;
  }
};

struct SourceSpan {
  std::string file;
  std::size_t first_line = 0;  // 1-based, inclusive
  std::size_t last_line = 0;
};

class Sentence {
 public:
  // Validates ids (1..n in order), heads (0 or an existing id, never self).
  // Throws Error(kInvalidArgument) on violation.
  Sentence(std::string sent_id, std::vector<Token> tokens, SourceSpan source)
      : sent_id_(std::move(sent_id)), tokens_(std::move(tokens)), source_(std::move(source)) {
    const auto n = static_cast<TokenId>(tokens_.size());
    children_.resize(tokens_.size() + 1);
    for (TokenId i = 0; i < n; ++i) {
      const Token& t = tokens_[static_cast<std::size_t>(i)];
      if (t.id != i + 1) {
        throw Error(ErrorCode::kInvalidArgument,
                    "token id " + std::to_string(t.id) + " out of sequence (expected " +
                        std::to_string(i + 1) + ")");
      }
      if (t.head < 0 || t.head > n) {
        throw Error(ErrorCode::kInvalidArgument,
                    "token " + std::to_string(t.id) + " has dangling head " + std::to_string(t.head));
      }
      if (t.head == t.id) {
        throw Error(ErrorCode::kInvalidArgument,
                    "token " + std::to_string(t.id) + " is its own head");
      }
      if (t.head == 0) ++root_count_;
      children_[static_cast<std::size_t>(t.head)].push_back(t.id);
    }
  }

  const std::string& sent_id() const { return sent_id_; }
  const std::vector<Token>& tokens() const { return tokens_; }
  const SourceSpan& source() const { return source_; }
  std::size_t size() const { return tokens_.size(); }

  bool valid_id(TokenId id) const { return id >= 1 && id <= static_cast<TokenId>(tokens_.size()); }

  const Token& token(TokenId id) const {
    if (!valid_id(id)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid token id " + std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id - 1)];
  }

  // Ids of the tokens whose head is `id`, in surface order. id 0 yields the roots.
  std::span<const TokenId> dependent_ids(TokenId id) const {
    if (id != 0 && !valid_id(id)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid token id " + std::to_string(id));
    }
    return children_[static_cast<std::size_t>(id)];
  }

  // More than one token attached to the root. Such sentences are kept.
  bool multi_root() const { return root_count_ > 1; }

 private:
  std::string sent_id_;
  std::vector<Token> tokens_;
  SourceSpan source_;
  std::vector<std::vector<TokenId>> children_;
  int root_count_ = 0;
};

inline std::vector<Token> dependents_of(const Sentence& sentence, TokenId id) {
  if (!sentence.valid_id(id)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid token id " + std::to_string(id));
  }
  std::vector<Token> out;
  for (TokenId child : sentence.dependent_ids(id)) out.push_back(sentence.token(child));
  return out;
}

struct Diagnostic {
  std::string file;
  std::size_t line = 0;
  std::string message;
};

struct Treebank {
  std::vector<Sentence> sentences;
  std::size_t token_count = 0;
  std::size_t rejected_sentences = 0;
  std::vector<Diagnostic> diagnostics;

  std::size_t sentence_count() const { return sentences.size(); }

  void append(Treebank&& other) {
    for (auto& s : other.sentences) sentences.push_back(std::move(s));
    token_count += other.token_count;
    rejected_sentences += other.rejected_sentences;
    for (auto& d : other.diagnostics) diagnostics.push_back(std::move(d));
  }
};

struct ParseOptions {
  std::string source_name = "<stream>";
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::optional<int> parse_int(std::string_view s) {
  int value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

inline bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t") == std::string_view::npos;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Throws std::invalid_argument with a message; the caller attaches location.
inline std::map<std::string, std::string> parse_feats(std::string_view column) {
  std::map<std::string, std::string> feats;
  if (column == "_") return feats;
  for (auto item : split(column, '|')) {
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 == item.size()) {
      throw std::invalid_argument("malformed FEATS item '" + std::string(item) + "'");
    }
    feats.emplace(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
  }
  return feats;
}

}  // namespace detail

inline std::string format_feats(const std::map<std::string, std::string>& feats) {
  if (feats.empty()) return "_";
  std::string out;
  for (const auto& [k, v] : feats) {
    if (!out.empty()) out += '|';
    out += k;
    out += '=';
    out += v;
  }
  return out;
}

// The 10-column line for a token, FEATS sorted by key.
inline std::string format_token(const Token& t) {
  std::string out;
  auto col = [&out](std::string_view v) {
    if (!out.empty()) out += '\t';
    out += v;
  };
  col(std::to_string(t.id));
  col(t.form);
  col(t.lemma);
  col(t.upos);
  col(t.xpos ? *t.xpos : "_");
  col(format_feats(t.feats));
  col(std::to_string(t.head));
  col(t.deprel);
  col(t.deps);
  col(t.misc ? *t.misc : "_");
  return out;
}

inline Treebank parse_conllu(std::istream& in, const ParseOptions& options = {}) {
  Treebank bank;

  struct Pending {
    std::string sent_id;
    std::vector<Token> tokens;
    std::size_t first_line = 0;
    std::size_t last_line = 0;
    std::optional<Diagnostic> error;
    bool has_content = false;
  } cur;

  const auto flush = [&] {
    if (!cur.has_content) {
      cur = Pending{};
      return;
    }
    if (!cur.error && cur.tokens.empty()) {  // comment-only block
      cur = Pending{};
      return;
    }
    if (!cur.error) {
      std::string sid = cur.sent_id.empty()
                            ? options.source_name + "#" +
                                  std::to_string(bank.sentences.size() + bank.rejected_sentences + 1)
                            : cur.sent_id;
      const std::size_t ntok = cur.tokens.size();
      try {
        bank.sentences.emplace_back(std::move(sid), std::move(cur.tokens),
                                    SourceSpan{options.source_name, cur.first_line, cur.last_line});
        bank.token_count += ntok;
      } catch (const Error& e) {
        cur.error = Diagnostic{options.source_name, cur.first_line, e.what()};
      }
    }
    if (cur.error) {
      ++bank.rejected_sentences;
      bank.diagnostics.push_back(*cur.error);
    }
    cur = Pending{};
  };

  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (detail::is_blank(line)) {
      flush();
      continue;
    }
    if (!cur.has_content) {
      cur.has_content = true;
      cur.first_line = lineno;
    }
    cur.last_line = lineno;
    if (cur.error) continue;

    if (line.front() == '#') {
      auto body = detail::trim(line.substr(1));
      if (body.starts_with("sent_id")) {
        auto rest = detail::trim(body.substr(7));
        if (!rest.empty() && rest.front() == '=') cur.sent_id = std::string(detail::trim(rest.substr(1)));
      }
      continue;
    }

    const auto cols = detail::split(line, '\t');
    const auto fail = [&](const std::string& msg) {
      cur.error = Diagnostic{options.source_name, lineno, msg};
    };
    if (cols.size() != 10) {
      fail("expected 10 tab-separated columns, found " + std::to_string(cols.size()));
      continue;
    }
    if (cols[0].find('-') != std::string_view::npos || cols[0].find('.') != std::string_view::npos) {
      continue;  // multiword range or empty node
    }
    const auto id = detail::parse_int(cols[0]);
    if (!id || *id < 1) {
      fail("unparseable token id '" + std::string(cols[0]) + "'");
      continue;
    }
    const auto head = detail::parse_int(cols[6]);
    if (!head || *head < 0) {
      fail("unparseable head '" + std::string(cols[6]) + "'");
      continue;
    }
    Token t;
    t.id = *id;
    t.form = std::string(cols[1]);
    t.lemma = std::string(cols[2]);
    t.upos = std::string(cols[3]);
    if (cols[4] != "_") t.xpos = std::string(cols[4]);
    try {
      t.feats = detail::parse_feats(cols[5]);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
      continue;
    }
    t.head = *head;
    t.deprel = std::string(cols[7]);
    t.deps = std::string(cols[8]);
    if (cols[9] != "_") t.misc = std::string(cols[9]);
    cur.tokens.push_back(std::move(t));
  }
  flush();
  return bank;
}

inline Treebank parse_conllu_string(std::string_view text, const ParseOptions& options = {}) {
  std::istringstream in{std::string(text)};
  return parse_conllu(in, options);
}

inline Treebank parse_conllu_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open treebank '" + path + "'");
  Treebank bank = parse_conllu(in, ParseOptions{path});
  if (in.bad()) throw Error(ErrorCode::kIo, "read error on '" + path + "'");
  return bank;
}

}  // namespace grex
