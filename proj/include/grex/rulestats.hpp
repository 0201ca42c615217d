#pragma once

// Statistics attached to each selected trigger P: direction (Q or not Q),
// G-test against the scope base rate, Cramer's phi, coverage and precision.
// Also a tie-aware Spearman correlation for comparing two rule orders.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "grex/error.hpp"
#include "grex/featurize.hpp"
#include "grex/query.hpp"

namespace grex {

inline constexpr double kSignificanceLevel = 0.01;

struct GTest {
  double g = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

// Upper tail of chi-squared with one degree of freedom.
inline double chi2_1dof_upper_tail(double g) { return std::erfc(std::sqrt(g / 2.0)); }

// G = 2n (alpha ln(alpha/mu) + (1-alpha) ln((1-alpha)/(1-mu))), with 0 ln 0 = 0.
inline GTest g_test(std::size_t n, double alpha, double mu) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "g_test: n must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0) || !(mu >= 0.0 && mu <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "g_test: alpha and mu must lie in [0, 1]");
  }
  if (mu == 0.0 || mu == 1.0) {
    throw Error(ErrorCode::kDegenerateDistribution, "degenerate scope distribution (mu is 0 or 1)");
  }
  const auto term = [](double p, double q) { return p == 0.0 ? 0.0 : p * std::log(p / q); };
  double g = 2.0 * static_cast<double>(n) * (term(alpha, mu) + term(1.0 - alpha, 1.0 - mu));
  g = std::max(g, 0.0);  // rounding can go a hair below zero when alpha ~ mu
  GTest out;
  out.g = g;
  out.p_value = chi2_1dof_upper_tail(g);
  out.significant = out.p_value < kSignificanceLevel;
  return out;
}

// Effect size for a 2x2 table, where min(r-1, c-1) = 1.
inline double cramers_phi(double g, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "cramers_phi: n must be >= 1");
  if (g < 0.0) throw Error(ErrorCode::kInvalidArgument, "cramers_phi: G must be >= 0");
  return std::sqrt(g / static_cast<double>(n));
}

enum class Direction { kQ, kNotQ };

inline std::string_view direction_name(Direction d) { return d == Direction::kQ ? "Q" : "notQ"; }

struct RuleCounts {
  std::size_t scope = 0;      // #(S)
  std::size_t scope_q = 0;    // #(S and Q)
  std::size_t scope_p = 0;    // #(S and P)
  std::size_t scope_p_q = 0;  // #(S and P and Q)

  void check() const {
    if (scope_q > scope || scope_p > scope || scope_p_q > scope_p || scope_p_q > scope_q ||
        scope_p - scope_p_q > scope - scope_q) {
      throw Error(ErrorCode::kInvalidArgument, "inconsistent rule counts");
    }
  }
};

struct CoveragePrecision {
  double coverage = 0.0;
  double precision = 0.0;
};

inline CoveragePrecision coverage_precision(const RuleCounts& c, Direction d) {
  c.check();
  if (c.scope_p == 0) throw Error(ErrorCode::kInvalidArgument, "precision undefined: #(S and P) is 0");
  if (d == Direction::kQ) {
    if (c.scope_q == 0) throw Error(ErrorCode::kInvalidArgument, "coverage undefined: #(S and Q) is 0");
    return {static_cast<double>(c.scope_p_q) / static_cast<double>(c.scope_q),
            static_cast<double>(c.scope_p_q) / static_cast<double>(c.scope_p)};
  }
  const std::size_t not_q = c.scope - c.scope_q;
  const std::size_t p_not_q = c.scope_p - c.scope_p_q;
  if (not_q == 0) throw Error(ErrorCode::kInvalidArgument, "coverage undefined: #(S and not Q) is 0");
  return {static_cast<double>(p_not_q) / static_cast<double>(not_q),
          static_cast<double>(p_not_q) / static_cast<double>(c.scope_p)};
}

struct RuleRecord {
  FeatureId feature = 0;
  std::string pattern;
  Direction direction = Direction::kQ;
  std::size_t n = 0;   // #(S and P)
  double alpha = 0.0;  // frequency of the reported direction within P
  double mu = 0.0;     // frequency of the reported direction within S
  double g = 0.0;
  double p_value = 1.0;
  bool significant = false;
  double phi_c = 0.0;
  double coverage = 0.0;
  double precision = 0.0;
  std::size_t path_rank = 0;
  RuleCounts counts;
};

// Counts for feature f read off the design matrix. alpha >= mu is reported
// as a trigger of Q; alpha < mu as a trigger of not Q with frequencies
// 1 - alpha and 1 - mu. G is unchanged by that relabelling.
inline RuleRecord compute_rule(const Feature& feature, const DesignMatrix& x,
                               const ScopeCounts& scope, std::size_t path_rank) {
  RuleCounts c;
  c.scope = scope.n_scope;
  c.scope_q = scope.n_scope_q;
  const auto col = x.column(feature.id);
  const auto y = x.labels();
  c.scope_p = col.size();
  for (auto i : col) c.scope_p_q += y[i];
  if (c.scope_p == 0) throw Error(ErrorCode::kInvalidArgument, "feature " + feature.str() + " never fires");
  c.check();

  const double alpha = static_cast<double>(c.scope_p_q) / static_cast<double>(c.scope_p);
  RuleRecord r;
  r.feature = feature.id;
  r.pattern = feature.str();
  r.direction = alpha >= scope.mu ? Direction::kQ : Direction::kNotQ;
  r.n = c.scope_p;
  r.alpha = r.direction == Direction::kQ ? alpha : 1.0 - alpha;
  r.mu = r.direction == Direction::kQ ? scope.mu : 1.0 - scope.mu;
  const GTest t = g_test(r.n, alpha, scope.mu);
  r.g = t.g;
  r.p_value = t.p_value;
  r.significant = t.significant;
  r.phi_c = cramers_phi(t.g, r.n);
  const auto cp = coverage_precision(c, r.direction);
  r.coverage = cp.coverage;
  r.precision = cp.precision;
  r.path_rank = path_rank;
  r.counts = c;
  return r;
}

// Average ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

struct RankComparison {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n_items = 0;
};

// Spearman's rho as the Pearson correlation of fractional ranks; two-sided
// p-value from t = rho sqrt((n-2)/(1-rho^2)) with n-2 degrees of freedom.
inline RankComparison spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "spearman: length mismatch");
  if (a.size() < 3) throw Error(ErrorCode::kInvalidArgument, "spearman: need at least 3 items");
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;  // mean of fractional ranks is always (n+1)/2
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "spearman: a ranking is constant");
  }
  RankComparison out;
  out.n_items = a.size();
  out.rho = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  if (std::abs(out.rho) == 1.0) {
    out.p_value = 0.0;
  } else {
    const double dof = n - 2.0;
    const double t = out.rho * std::sqrt(dof / (1.0 - out.rho * out.rho));
    const boost::math::students_t dist(dof);
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return out;
}

}  // namespace grex
