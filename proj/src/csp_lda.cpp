#include "neurodecode/csp_lda.hpp"

#include "neurodecode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace neurodecode::csp {

namespace {

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd epoch_matrix(std::span<const float> epoch, std::size_t channels, std::size_t samples) {
  if (epoch.size() != channels * samples) throw ShapeError("epoch length does not match channels x samples");
  return Eigen::Map<const RowMatF>(epoch.data(), static_cast<Eigen::Index>(channels),
                                   static_cast<Eigen::Index>(samples))
      .cast<double>();
}

}  // namespace

Eigen::MatrixXd normalized_covariance(std::span<const float> epoch, std::size_t channels, std::size_t samples) {
  Eigen::MatrixXd x = epoch_matrix(epoch, channels, samples);
  x.colwise() -= x.rowwise().mean();
  Eigen::MatrixXd c = x * x.transpose();
  const double tr = c.trace();
  if (tr > 0.0) c /= tr;
  return c;
}

CspModel fit_csp_covariances(const Eigen::MatrixXd& sigma0, const Eigen::MatrixXd& sigma1, int m) {
  const auto c = sigma0.rows();
  if (sigma0.cols() != c || sigma1.rows() != c || sigma1.cols() != c) {
    throw ShapeError("class covariances must be square and of equal size");
  }
  if (m < 1 || 2 * m > c) throw ConfigError("CSP needs 1 <= m and 2m <= channels, got m = " + std::to_string(m));
  Eigen::MatrixXd composite = sigma0 + sigma1;
  composite = 0.5 * (composite + composite.transpose());
  if (!(composite.trace() > 0.0)) throw NumericError("composite class covariance is singular");
  Eigen::LLT<Eigen::MatrixXd> llt(composite);
  if (llt.info() != Eigen::Success) {
    const double ridge = 1e-10 * std::max(composite.trace() / static_cast<double>(c), 1e-300);
    llt.compute(composite + ridge * Eigen::MatrixXd::Identity(c, c));
    if (llt.info() != Eigen::Success) throw NumericError("composite class covariance is singular");
  }
  // M = L^-1 sigma1 L^-T; eigenvectors u give filters w = L^-T u.
  const Eigen::MatrixXd l_inv_s1 = llt.matrixL().solve(sigma1);
  Eigen::MatrixXd reduced = llt.matrixL().solve(l_inv_s1.transpose());
  reduced = 0.5 * (reduced + reduced.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
  if (es.info() != Eigen::Success) throw NumericError("CSP eigensolver did not converge");

  // Eigen returns ascending eigenvalues; reverse into descending order.
  const Eigen::VectorXd values = es.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = es.eigenvectors().rowwise().reverse();
  const Eigen::MatrixXd w = llt.matrixU().solve(vectors).transpose();  // rows: w_i^T = u_i^T L^-1

  CspModel model;
  model.m = m;
  model.eigenvalues = values;
  model.all_filters = w;
  model.filters.resize(2 * m, c);
  model.filters.topRows(m) = w.topRows(m);
  model.filters.bottomRows(m) = w.bottomRows(m);
  return model;
}

CspModel fit_csp(const data::EpochSet& set, std::span<const std::size_t> trials, std::span<const int> labels, int m) {
  if (trials.size() != labels.size()) throw DataError("one label per CSP training trial required");
  const auto c = static_cast<Eigen::Index>(set.n_channels);
  Eigen::MatrixXd sum[2] = {Eigen::MatrixXd::Zero(c, c), Eigen::MatrixXd::Zero(c, c)};
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) throw ConfigError("CSP labels must be 0 or 1");
    sum[y] += normalized_covariance(set.trial(trials[i]), set.n_channels, set.n_samples);
    ++count[y];
  }
  if (count[0] == 0 || count[1] == 0) throw DataError("CSP needs trials of both classes");
  return fit_csp_covariances(sum[0] / static_cast<double>(count[0]), sum[1] / static_cast<double>(count[1]), m);
}

Eigen::VectorXd csp_features(std::span<const float> epoch, std::size_t channels, std::size_t samples,
                             const CspModel& model) {
  Eigen::MatrixXd x = epoch_matrix(epoch, channels, samples);
  if (model.filters.cols() != static_cast<Eigen::Index>(channels)) throw ShapeError("CSP filters do not match channels");
  x.colwise() -= x.rowwise().mean();
  const Eigen::MatrixXd z = model.filters * x;
  Eigen::VectorXd var = z.rowwise().squaredNorm() / static_cast<double>(samples);
  const double total = var.sum();
  const auto k = static_cast<double>(var.size());
  if (!(total > 0.0)) return Eigen::VectorXd::Constant(var.size(), -std::log(k));
  // Relative floor keeps the features scale invariant.
  const double eps = 1e-12 * total;
  return ((var.array() + eps) / (total + k * eps)).log().matrix();
}

LdaModel fit_lda(const Eigen::MatrixXd& features, std::span<const int> labels, double shrinkage_eps) {
  const auto n = features.rows();
  const auto p = features.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw DataError("one label per LDA sample required");
  LdaModel model;
  model.mean0 = Eigen::VectorXd::Zero(p);
  model.mean1 = Eigen::VectorXd::Zero(p);
  Eigen::Index n0 = 0, n1 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] == 1) {
      model.mean1 += features.row(i).transpose();
      ++n1;
    } else if (labels[static_cast<std::size_t>(i)] == 0) {
      model.mean0 += features.row(i).transpose();
      ++n0;
    } else {
      throw ConfigError("LDA labels must be 0 or 1");
    }
  }
  if (n0 == 0 || n1 == 0) throw DataError("LDA needs samples of both classes");
  model.mean0 /= static_cast<double>(n0);
  model.mean1 /= static_cast<double>(n1);

  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd d =
        features.row(i).transpose() - (labels[static_cast<std::size_t>(i)] == 1 ? model.mean1 : model.mean0);
    scatter.noalias() += d * d.transpose();
  }
  const Eigen::Index dof = n - 2;
  model.underdetermined = dof < p;
  Eigen::MatrixXd pooled = scatter / static_cast<double>(std::max<Eigen::Index>(dof, 1));
  const double mean_diag = pooled.trace() / static_cast<double>(p);
  const double ridge = shrinkage_eps * (mean_diag > 0.0 ? mean_diag : 1.0);
  model.shared_covariance = pooled + ridge * Eigen::MatrixXd::Identity(p, p);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(model.shared_covariance);
  if (ldlt.info() != Eigen::Success) throw NumericError("LDA covariance factorization failed");
  model.weight = ldlt.solve(model.mean1 - model.mean0);
  model.bias = -0.5 * model.weight.dot(model.mean0 + model.mean1);
  return model;
}

Prediction predict(const LdaModel& model, const Eigen::VectorXd& features) {
  const double score = model.weight.dot(features) + model.bias;
  return {score > 0.0 ? 1 : 0, score};
}

PipelineResult csp_lda_pipeline(const data::EpochSet& train, const data::EpochSet& test, int m) {
  if (train.size() == 0 || test.size() == 0) throw DataError("CSP+LDA needs non-empty train and test sets");
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) labels[i] = train.meta[i].label;

  PipelineResult out;
  out.csp = fit_csp(train, idx, labels, m);
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(train.size()), 2 * m);
  for (std::size_t i = 0; i < train.size(); ++i) {
    feats.row(static_cast<Eigen::Index>(i)) =
        csp_features(train.trial(i), train.n_channels, train.n_samples, out.csp).transpose();
  }
  out.lda = fit_lda(feats, labels);

  std::vector<int> truth(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto pred = predict(out.lda, csp_features(test.trial(i), test.n_channels, test.n_samples, out.csp));
    out.predictions.push_back(pred.label);
    out.scores.push_back(pred.score);
    truth[i] = test.meta[i].label;
  }
  out.metrics = classification_metrics(out.predictions, truth);
  return out;
}

PipelineResult csp_lda_pipeline(const data::EpochSet& set, int m) {
  const auto train_idx = data::indices_of(set, data::Split::train);
  const auto test_idx = data::indices_of(set, data::Split::test);
  if (train_idx.empty() || test_idx.empty()) throw DataError("epoch set has no train/test split assigned");
  return csp_lda_pipeline(data::subset(set, train_idx), data::subset(set, test_idx), m);
}

}  // namespace neurodecode::csp
