#pragma once

// Regularisation path over a decreasing lambda grid and the entry-order
// ranking of features: a feature enters at the first step where its weight
// is non-zero, and features entering at the same step share a rank.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "grex/error.hpp"
#include "grex/featurize.hpp"
#include "grex/sparse_glm.hpp"

namespace grex {

enum class LambdaSpacing { kLinear, kLog };

struct PathConfig {
  std::size_t k = 100;  // number of additional lambda values
  double lambda_start = 0.1;
  double lambda_end = 0.001;
  LambdaSpacing spacing = LambdaSpacing::kLinear;
  bool warm_start = true;
};

struct SolverConfig {
  double tolerance = 1e-6;
  std::size_t max_iters = 10000;
  double zero_eps = 1e-9;
};

inline void validate(const PathConfig& c) {
  if (c.k < 1) throw Error(ErrorCode::kInvalidArgument, "path: k must be >= 1");
  if (!(c.lambda_end > 0.0) || !(c.lambda_start > c.lambda_end)) {
    throw Error(ErrorCode::kInvalidArgument, "path: need lambda_start > lambda_end > 0");
  }
}

// k + 1 values from lambda_start down to lambda_end, endpoints exact.
inline std::vector<double> lambda_grid(const PathConfig& c) {
  validate(c);
  std::vector<double> grid(c.k + 1);
  const double kd = static_cast<double>(c.k);
  for (std::size_t i = 0; i <= c.k; ++i) {
    const double t = static_cast<double>(i) / kd;
    if (c.spacing == LambdaSpacing::kLinear) {
      grid[i] = c.lambda_start + (c.lambda_end - c.lambda_start) * t;
    } else {
      grid[i] = std::exp(std::log(c.lambda_start) + (std::log(c.lambda_end) - std::log(c.lambda_start)) * t);
    }
  }
  grid.front() = c.lambda_start;
  grid.back() = c.lambda_end;
  return grid;
}

inline std::vector<FeatureId> nonzero_features(const FitResult& fit, double zero_eps = 1e-9) {
  std::vector<FeatureId> out;
  for (std::size_t f = 0; f < fit.weights.size(); ++f) {
    if (std::abs(fit.weights[f]) > zero_eps) out.push_back(static_cast<FeatureId>(f));
  }
  return out;
}

struct PathStep {
  double lambda = 0.0;
  double intercept = 0.0;
  std::vector<std::pair<FeatureId, double>> nonzeros;  // sorted by id
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
};

struct RankedFeature {
  FeatureId feature = 0;
  std::size_t rank = 0;        // 1-based, shared within a tie group
  std::size_t entry_step = 0;
  double entry_weight = 0.0;
};

struct PathResult {
  std::vector<double> lambdas;
  std::vector<PathStep> steps;
  std::vector<std::optional<std::size_t>> entry_step;  // per feature
  std::vector<RankedFeature> ranking;  // rank ascending, then |entry weight| desc, then id
  bool warning = false;  // some step did not converge
};

inline std::vector<RankedFeature> rank_by_entry(const std::vector<PathStep>& steps,
                                                std::vector<std::optional<std::size_t>>& entry,
                                                double zero_eps) {
  std::vector<RankedFeature> ranked;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    for (const auto& [f, w] : steps[s].nonzeros) {
      if (std::abs(w) <= zero_eps || entry[f]) continue;
      entry[f] = s;
      ranked.push_back({f, 0, s, w});
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedFeature& a, const RankedFeature& b) {
    if (a.entry_step != b.entry_step) return a.entry_step < b.entry_step;
    if (std::abs(a.entry_weight) != std::abs(b.entry_weight)) {
      return std::abs(a.entry_weight) > std::abs(b.entry_weight);
    }
    return a.feature < b.feature;
  });
  std::size_t rank = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i == 0 || ranked[i].entry_step != ranked[i - 1].entry_step) ++rank;
    ranked[i].rank = rank;
  }
  return ranked;
}

// Fits from the largest lambda down. With warm starts each fit is
// initialised from the previous solution.
inline PathResult run_path(const DesignMatrix& x, const PathConfig& config,
                           const SolverConfig& solver = {},
                           std::vector<FitResult>* full_fits = nullptr) {
  if (x.rows() == 0 || x.positives() == 0 || x.positives() == x.rows()) {
    throw Error(ErrorCode::kNoContrastiveSignal,
                "no contrastive signal: the response holds on all or none of the scope");
  }
  PathResult result;
  result.lambdas = lambda_grid(config);
  result.entry_step.assign(x.features(), std::nullopt);

  std::optional<WarmStart> warm;
  for (double lambda : result.lambdas) {
    FitProblem problem;
    problem.lambda = lambda;
    problem.tolerance = solver.tolerance;
    problem.max_iters = solver.max_iters;
    if (config.warm_start) problem.warm_start = std::move(warm);
    FitResult fitted = fit(x, problem);

    PathStep step;
    step.lambda = lambda;
    step.intercept = fitted.intercept;
    step.objective = fitted.objective;
    step.iterations = fitted.iterations;
    step.converged = fitted.converged;
    step.kkt_residual = fitted.kkt_residual;
    for (FeatureId f : nonzero_features(fitted, solver.zero_eps)) {
      step.nonzeros.emplace_back(f, fitted.weights[f]);
    }
    result.warning = result.warning || !fitted.converged;
    result.steps.push_back(std::move(step));

    warm = WarmStart{fitted.weights, fitted.intercept};
    if (full_fits) full_fits->push_back(std::move(fitted));
  }
  result.ranking = rank_by_entry(result.steps, result.entry_step, solver.zero_eps);
  return result;
}

}  // namespace grex
