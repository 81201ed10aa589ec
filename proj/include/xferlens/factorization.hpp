#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "xferlens/core_data.hpp"
#include "xferlens/numerics.hpp"

namespace xferlens {

/// One observed cell of the task x language-pair score matrix.
struct CmfObservation {
  std::size_t task = 0;
  std::size_t pair = 0;
  double value = 0.0;
};

struct CmfOptions {
  int latent_dim = 5;
  double reg = 0.1;
  double alpha = 0.5;  // weight of the side-information reconstruction
  int sweeps = 100;
  int restarts = 3;
  double init_scale = 0.1;  // factors start uniform in [-init_scale, init_scale]
};

struct CmfModel {
  Matrix task_factors;     // |tasks| x d
  Matrix pair_factors;     // |pairs| x d
  Matrix feature_factors;  // n x d
  std::map<TaskId, std::size_t> task_index;
  std::map<LangPair, std::size_t> pair_index;
  int latent_dim = 0;
  double reg = 0.0;
  double alpha = 0.0;
  double objective = 0.0;
  /// Objective after every block update of the chosen restart.
  std::vector<double> objective_trace;
};

/// Jointly factorizes the observed scores Y ~ T L^T and the pair feature
/// matrix X ~ L F^T, sharing L, by alternating exact ridge updates of T, L
/// and F. Missing cells of Y are excluded from the loss. Runs
/// `opt.restarts` seeded initializations and keeps the lowest objective.
///
/// `tasks` and `pairs` name the rows of T and L; `x` has one row per pair.
CmfModel fit_cmf(const std::vector<TaskId>& tasks, const std::vector<LangPair>& pairs,
                 const std::vector<CmfObservation>& observed, const Matrix& x,
                 const CmfOptions& opt, std::uint64_t seed);

double cmf_objective(const CmfModel& m, const std::vector<CmfObservation>& observed,
                     const Matrix& x);

double predict_cmf(const CmfModel& m, const TaskId& task, const LangPair& pair);
double predict_cmf(const CmfModel& m, const TaskId& task, std::span<const double> pair_factor);

/// Pair factor for an unseen pair from its features alone:
///   argmin_l alpha ||x - F l||^2 + reg ||l||^2
std::vector<double> fold_in_pair(const CmfModel& m, std::span<const double> x_new);

}  // namespace xferlens
