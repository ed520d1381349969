#pragma once

// Common spatial patterns + linear discriminant analysis for two classes.

#include "neurodecode/dataset.hpp"
#include "neurodecode/metrics.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace neurodecode::csp {

struct CspModel {
  Eigen::MatrixXd filters;      // 2m x channels: m largest then m smallest eigenvalues
  Eigen::VectorXd eigenvalues;  // all generalized eigenvalues, descending
  Eigen::MatrixXd all_filters;  // channels x channels, rows in eigenvalue order
  int m = 3;
};

// Per-trial channel covariance of a channels x samples epoch (time mean
// removed), divided by its trace. A zero-variance epoch gives the zero matrix.
Eigen::MatrixXd normalized_covariance(std::span<const float> epoch, std::size_t channels, std::size_t samples);

// Solves sigma1 w = lambda (sigma0 + sigma1) w through a Cholesky factor of the
// composite and a symmetric eigensolver. Filter rows are scaled so that
// W (sigma0 + sigma1) W^T = I. Throws NumericError if the composite stays
// singular after a small ridge.
CspModel fit_csp_covariances(const Eigen::MatrixXd& sigma0, const Eigen::MatrixXd& sigma1, int m = 3);

// Class covariances are the averages of the trace-normalized trial
// covariances. labels are 0/1 and align with `trials`.
CspModel fit_csp(const data::EpochSet& set, std::span<const std::size_t> trials, std::span<const int> labels,
                 int m = 3);

// log(var_j / sum_k var_k) over the 2m spatially filtered signals.
Eigen::VectorXd csp_features(std::span<const float> epoch, std::size_t channels, std::size_t samples,
                             const CspModel& model);

struct LdaModel {
  Eigen::VectorXd weight;
  double bias = 0.0;
  Eigen::VectorXd mean0, mean1;
  Eigen::MatrixXd shared_covariance;  // pooled covariance plus shrinkage
  bool underdetermined = false;       // fewer pooled degrees of freedom than features
};

// features: one row per sample.
LdaModel fit_lda(const Eigen::MatrixXd& features, std::span<const int> labels, double shrinkage_eps = 1e-4);

struct Prediction {
  int label = 0;
  double score = 0.0;
};

Prediction predict(const LdaModel& model, const Eigen::VectorXd& features);

struct PipelineResult {
  CspModel csp;
  LdaModel lda;
  std::vector<int> predictions;  // aligned with the test trials
  std::vector<double> scores;
  ClassificationMetrics metrics;
};

// Fits on the train split and scores the test split of `set`, using the
// animacy labels.
PipelineResult csp_lda_pipeline(const data::EpochSet& set, int m = 3);

// Same with explicit train/test sets.
PipelineResult csp_lda_pipeline(const data::EpochSet& train, const data::EpochSet& test, int m = 3);

}  // namespace neurodecode::csp
