#pragma once

// L1-regularised logistic regression with an unpenalised intercept:
//
//   min_{a,b}  (1/n) sum_i loss(a.x_i + b, y_i) + lambda * |a|_1,
//   loss(w, y) = -y w + log(1 + exp w).
//
// Solved by cyclic proximal coordinate descent. Each weight takes an exact
// soft-threshold step against the quadratic majoriser with curvature
// support_f / (4n), or against the exact coordinate curvature when that step
// lowers the objective further; the intercept takes a damped Newton step once
// per sweep.
// Sweeps alternate between the current non-zero set and a full pass, and the
// fit has converged when a full pass moves no parameter by more than the
// tolerance. Sweeps over the non-zero set are accelerated by Anderson
// extrapolation, accepted only when it lowers the objective.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "grex/error.hpp"
#include "grex/featurize.hpp"

namespace grex {

// log(1 + exp(w)) without overflow or cancellation.
inline double softplus(double w) {
  return w > 0.0 ? w + std::log1p(std::exp(-w)) : std::log1p(std::exp(w));
}

inline double loss(double w, double y) {
  // -w + softplus(w) == softplus(-w); used for y == 1 to avoid cancellation
  if (y == 1.0) return softplus(-w);
  if (y == 0.0) return softplus(w);
  return -y * w + softplus(w);
}

inline double sigmoid(double w) {
  if (w >= 0.0) return 1.0 / (1.0 + std::exp(-w));
  const double e = std::exp(w);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double predict_proba(std::span<const double> weights, double intercept,
                            std::span<const double> x) {
  if (weights.size() != x.size()) {
    throw Error(ErrorCode::kInvalidArgument, "predict_proba: weight and input dimensions differ");
  }
  double w = intercept;
  for (std::size_t f = 0; f < x.size(); ++f) w += weights[f] * x[f];
  return sigmoid(w);
}

// Sparse boolean input given by its active feature ids.
inline double predict_proba(std::span<const double> weights, double intercept,
                            std::span<const FeatureId> active) {
  double w = intercept;
  for (FeatureId f : active) {
    if (f >= weights.size()) {
      throw Error(ErrorCode::kInvalidArgument, "predict_proba: feature id out of range");
    }
    w += weights[f];
  }
  return sigmoid(w);
}

struct WarmStart {
  std::vector<double> weights;
  double intercept = 0.0;
};

struct FitProblem {
  double lambda = 0.0;
  double tolerance = 1e-6;
  std::size_t max_iters = 10000;  // sweeps
  std::optional<WarmStart> warm_start;
  bool record_trace = false;
};

struct FitResult {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  // all labels equal: weights are zero and the intercept is clipped
  bool degenerate = false;
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;  // after every sweep, when requested
};

inline constexpr double kInterceptClip = 15.0;

inline std::vector<double> margins(const DesignMatrix& x, std::span<const double> weights,
                                   double intercept) {
  std::vector<double> m(x.rows(), intercept);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (FeatureId f : x.row(i)) m[i] += weights[f];
  }
  return m;
}

inline double smooth_loss(const DesignMatrix& x, std::span<const double> margin) {
  const auto y = x.labels();
  double total = 0.0;
  for (std::size_t i = 0; i < margin.size(); ++i) total += loss(margin[i], y[i]);
  return total / static_cast<double>(x.rows());
}

inline double l1_norm(std::span<const double> weights) {
  double s = 0.0;
  for (double w : weights) s += std::abs(w);
  return s;
}

inline double objective(const DesignMatrix& x, std::span<const double> weights, double intercept,
                        double lambda) {
  const auto m = margins(x, weights, intercept);
  return smooth_loss(x, m) + lambda * l1_norm(weights);
}

namespace detail {

// (1/n) sum over column f of (sigmoid(margin) - y)
inline double coordinate_gradient(const DesignMatrix& x, std::span<const double> margin,
                                  FeatureId f) {
  const auto y = x.labels();
  double g = 0.0;
  for (auto i : x.column(f)) g += sigmoid(margin[i]) - y[i];
  return g / static_cast<double>(x.rows());
}

inline double soft_threshold(double z, double threshold) {
  if (z > threshold) return z - threshold;
  if (z < -threshold) return z + threshold;
  return 0.0;
}

// Solves m c = rhs in place (Gaussian elimination, partial pivoting).
// Returns false when m is numerically singular.
inline bool solve_small(std::vector<std::vector<double>> m, std::vector<double>& rhs) {
  const std::size_t k = rhs.size();
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t i = c + 1; i < k; ++i) {
      if (std::abs(m[i][c]) > std::abs(m[piv][c])) piv = i;
    }
    if (!(std::abs(m[piv][c]) > 1e-300)) return false;
    std::swap(m[c], m[piv]);
    std::swap(rhs[c], rhs[piv]);
    for (std::size_t i = c + 1; i < k; ++i) {
      const double factor = m[i][c] / m[c][c];
      for (std::size_t j = c; j < k; ++j) m[i][j] -= factor * m[c][j];
      rhs[i] -= factor * rhs[c];
    }
  }
  for (std::size_t c = k; c-- > 0;) {
    for (std::size_t j = c + 1; j < k; ++j) rhs[c] -= m[c][j] * rhs[j];
    rhs[c] /= m[c][c];
  }
  return std::all_of(rhs.begin(), rhs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace detail

struct SmoothGradient {
  std::vector<double> weights;
  double intercept = 0.0;
};

// Gradient of the averaged logistic loss (the smooth part of the objective).
inline SmoothGradient smooth_gradient(const DesignMatrix& x, std::span<const double> weights,
                                      double intercept) {
  const auto m = margins(x, weights, intercept);
  SmoothGradient g;
  g.weights.resize(x.features());
  for (FeatureId f = 0; f < x.features(); ++f) g.weights[f] = detail::coordinate_gradient(x, m, f);
  const auto y = x.labels();
  for (std::size_t i = 0; i < x.rows(); ++i) g.intercept += sigmoid(m[i]) - y[i];
  g.intercept /= static_cast<double>(x.rows());
  return g;
}

// Largest violation of the optimality conditions at (a, b):
//   a_f != 0:  |g_f + lambda sign(a_f)|
//   a_f == 0:  max(0, |g_f| - lambda)
//   intercept: |g_b|
inline double kkt_residual(const DesignMatrix& x, std::span<const double> weights, double intercept,
                           double lambda) {
  const auto g = smooth_gradient(x, weights, intercept);
  double worst = std::abs(g.intercept);
  for (std::size_t f = 0; f < weights.size(); ++f) {
    const double r = weights[f] != 0.0
                         ? std::abs(g.weights[f] + lambda * (weights[f] > 0.0 ? 1.0 : -1.0))
                         : std::max(0.0, std::abs(g.weights[f]) - lambda);
    worst = std::max(worst, r);
  }
  return worst;
}

inline double base_intercept(const DesignMatrix& x) {
  const double mean = static_cast<double>(x.positives()) / static_cast<double>(x.rows());
  if (x.positives() == 0) return -kInterceptClip;
  if (x.positives() == x.rows()) return kInterceptClip;
  return std::clamp(logit(mean), -kInterceptClip, kInterceptClip);
}

// Smallest lambda for which a = 0 is optimal: max_f |g_f| at a = 0 and the
// intercept fitted to the label mean.
inline double lambda_max(const DesignMatrix& x) {
  if (x.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "lambda_max of an empty matrix");
  const std::vector<double> m(x.rows(), base_intercept(x));
  double best = 0.0;
  for (FeatureId f = 0; f < x.features(); ++f) {
    best = std::max(best, std::abs(detail::coordinate_gradient(x, m, f)));
  }
  return best;
}

inline FitResult fit(const DesignMatrix& x, const FitProblem& problem) {
  if (x.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "fit: empty design matrix");
  if (!(problem.lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "fit: lambda must be >= 0");
  if (!(problem.tolerance > 0.0)) throw Error(ErrorCode::kInvalidArgument, "fit: tolerance must be > 0");

  const std::size_t n = x.rows();
  const std::size_t nf = x.features();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto y = x.labels();

  FitResult r;
  r.lambda = problem.lambda;
  r.weights.assign(nf, 0.0);
  r.intercept = base_intercept(x);

  if (x.positives() == 0 || x.positives() == n) {
    r.degenerate = true;
    r.converged = true;
    r.objective = objective(x, r.weights, r.intercept, problem.lambda);
    r.kkt_residual = 0.0;
    return r;
  }
  if (problem.warm_start) {
    if (problem.warm_start->weights.size() != nf) {
      throw Error(ErrorCode::kInvalidArgument, "fit: warm start has the wrong dimension");
    }
    r.weights = problem.warm_start->weights;
    r.intercept = problem.warm_start->intercept;
  }

  std::vector<double> margin = margins(x, r.weights, r.intercept);
  std::vector<double> curvature(nf);
  for (FeatureId f = 0; f < nf; ++f) {
    curvature[f] = 0.25 * static_cast<double>(x.column(f).size()) * inv_n;
  }

  // loss over column f plus the penalty, with a_f moved to t
  const auto coordinate_objective = [&](FeatureId f, double t) {
    const double shift = t - r.weights[f];
    double total = 0.0;
    for (auto i : x.column(f)) total += loss(margin[i] + shift, y[i]);
    return total * inv_n + problem.lambda * std::abs(t);
  };

  const auto update_weight = [&](FeatureId f) -> double {
    if (curvature[f] == 0.0) return 0.0;
    double g = 0.0;
    double h = 0.0;
    for (auto i : x.column(f)) {
      const double p = sigmoid(margin[i]);
      g += p - y[i];
      h += p * (1.0 - p);
    }
    // same arithmetic as coordinate_gradient, so lambda_max is exact
    g /= static_cast<double>(n);
    h *= inv_n;
    const double old = r.weights[f];
    double next = detail::soft_threshold(old - g / curvature[f], problem.lambda / curvature[f]);
    // the exact curvature is at most the bound; its step is kept when it does better
    if (h > 1e-300 && h < curvature[f]) {
      const double newton = detail::soft_threshold(old - g / h, problem.lambda / h);
      if (newton != next && coordinate_objective(f, newton) <= coordinate_objective(f, next)) next = newton;
    }
    const double delta = next - old;
    if (delta != 0.0) {
      r.weights[f] = next;
      for (auto i : x.column(f)) margin[i] += delta;
    }
    return std::abs(delta);
  };

  const auto update_intercept = [&]() -> double {
    double g = 0.0;
    double h = 0.0;
    double current = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      g += p - y[i];
      h += p * (1.0 - p);
      current += loss(margin[i], y[i]);
    }
    g *= inv_n;
    h *= inv_n;
    if (g == 0.0) return 0.0;
    double step = h > 1e-12 ? -g / h : -4.0 * g;
    // damped: halve until the loss does not increase
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      double trial = 0.0;
      for (std::size_t i = 0; i < n; ++i) trial += loss(margin[i] + step, y[i]);
      if (trial <= current) {
        r.intercept += step;
        for (auto& m : margin) m += step;
        return std::abs(step);
      }
    }
    return 0.0;
  };

  const auto record = [&] {
    if (problem.record_trace) {
      r.objective_trace.push_back(smooth_loss(x, margin) + problem.lambda * l1_norm(r.weights));
    }
  };
  const auto check_finite = [&](double change) {
    if (!std::isfinite(change) || !std::isfinite(r.intercept)) {
      throw Error(ErrorCode::kNumerical, "fit: non-finite parameter encountered");
    }
  };

  // Anderson extrapolation over the last few sweeps of the non-zero set,
  // kept only when it lowers the objective.
  std::vector<FeatureId> active;
  std::vector<std::vector<double>> history;
  const auto snapshot = [&] {
    std::vector<double> v;
    v.reserve(active.size() + 1);
    for (FeatureId f : active) v.push_back(r.weights[f]);
    v.push_back(r.intercept);
    history.push_back(std::move(v));
  };
  const auto extrapolate = [&] {
    const std::size_t k = history.size() - 1;
    std::vector<std::vector<double>> gram(k, std::vector<double>(k, 0.0));
    double trace = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        double dot = 0.0;
        for (std::size_t d = 0; d < history[0].size(); ++d) {
          dot += (history[a + 1][d] - history[a][d]) * (history[b + 1][d] - history[b][d]);
        }
        gram[a][b] = gram[b][a] = dot;
      }
      trace += gram[a][a];
    }
    if (!(trace > 0.0)) return;
    for (std::size_t a = 0; a < k; ++a) gram[a][a] += 1e-10 * trace;
    std::vector<double> c(k, 1.0);
    if (!detail::solve_small(gram, c)) return;
    double total = 0.0;
    for (double v : c) total += v;
    if (!(std::abs(total) > 1e-300)) return;
    std::vector<double> weights = r.weights;
    double intercept = 0.0;
    for (std::size_t j = 0; j < active.size(); ++j) weights[active[j]] = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      const double coef = c[a] / total;
      for (std::size_t j = 0; j < active.size(); ++j) weights[active[j]] += coef * history[a + 1][j];
      intercept += coef * history[a + 1].back();
    }
    if (!std::isfinite(intercept)) return;
    const double current = smooth_loss(x, margin) + problem.lambda * l1_norm(r.weights);
    auto trial_margin = margins(x, weights, intercept);
    const double trial = smooth_loss(x, trial_margin) + problem.lambda * l1_norm(weights);
    if (trial < current) {
      r.weights = std::move(weights);
      r.intercept = intercept;
      margin = std::move(trial_margin);
    }
  };
  constexpr std::size_t kAndersonDepth = 5;

  while (r.iterations < problem.max_iters) {
    double change = 0.0;
    for (FeatureId f = 0; f < nf; ++f) change = std::max(change, update_weight(f));
    change = std::max(change, update_intercept());
    ++r.iterations;
    check_finite(change);
    record();
    if (change < problem.tolerance) {
      r.converged = true;
      break;
    }
    // iterate on the non-zero set until it settles, then re-check everything
    active.clear();
    for (FeatureId f = 0; f < nf; ++f) {
      if (r.weights[f] != 0.0) active.push_back(f);
    }
    history.clear();
    snapshot();
    while (r.iterations < problem.max_iters) {
      double inner = 0.0;
      for (FeatureId f : active) inner = std::max(inner, update_weight(f));
      inner = std::max(inner, update_intercept());
      ++r.iterations;
      check_finite(inner);
      if (inner < problem.tolerance) {
        record();
        break;
      }
      snapshot();
      if (history.size() == kAndersonDepth + 1) {
        extrapolate();
        history.clear();
        snapshot();
      }
      record();
    }
  }

  r.objective = objective(x, r.weights, r.intercept, problem.lambda);
  if (!std::isfinite(r.objective)) throw Error(ErrorCode::kNumerical, "fit: non-finite objective");
  r.kkt_residual = kkt_residual(x, r.weights, r.intercept, problem.lambda);
  return r;
}

}  // namespace grex
