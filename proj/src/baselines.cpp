#include "depl/baselines.hpp"

#include "depl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace depl {

namespace {

void check_training_set(const Matrix& x, std::span<const int> labels) {
  if (x.rows() == 0 || x.cols() == 0) throw ArgumentError("training set is empty");
  if (labels.size() != x.rows()) {
    throw ArgumentError("label count " + std::to_string(labels.size()) + " != row count " +
                        std::to_string(x.rows()));
  }
  for (int y : labels) {
    if (y < 0) throw ArgumentError("negative class label " + std::to_string(y));
  }
}

void check_dim(std::size_t got, std::size_t want) {
  if (got != want) {
    throw ArgumentError("sample has " + std::to_string(got) + " features, model expects " +
                        std::to_string(want));
  }
}

template <typename Model>
std::vector<int> predict_rows(const Model& model, const Matrix& x) {
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = model.predict(x.row(r));
  return out;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

// --- k nearest neighbours ---------------------------------------------------

KnnClassifier::KnnClassifier(std::size_t k) : k_(k) {
  if (k == 0) throw ArgumentError("knn: k must be >= 1");
}

void KnnClassifier::fit(const Matrix& x, std::span<const int> labels) {
  check_training_set(x, labels);
  if (k_ > x.rows()) {
    throw ArgumentError("knn: k = " + std::to_string(k_) + " exceeds training size " +
                        std::to_string(x.rows()));
  }
  train_ = x;
  labels_.assign(labels.begin(), labels.end());
  num_classes_ = *std::max_element(labels_.begin(), labels_.end()) + 1;
}

int KnnClassifier::predict(std::span<const double> x) const {
  if (labels_.empty()) throw StateError("knn: predict before fit");
  check_dim(x.size(), train_.cols());

  std::vector<std::pair<double, int>> dist(train_.rows());
  for (std::size_t r = 0; r < train_.rows(); ++r) {
    const auto row = train_.row(r);
    double d2 = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double diff = row[j] - x[j];
      d2 += diff * diff;
    }
    dist[r] = {d2, labels_[r]};
  }
  // Squared distance preserves the ordering; pair order breaks ties by label.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());

  std::vector<std::size_t> votes(static_cast<std::size_t>(num_classes_), 0);
  for (std::size_t i = 0; i < k_; ++i) ++votes[static_cast<std::size_t>(dist[i].second)];
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::vector<int> KnnClassifier::predict(const Matrix& x) const { return predict_rows(*this, x); }

// --- Gaussian naive Bayes ---------------------------------------------------

void GaussianNb::fit(const Matrix& x, std::span<const int> labels, int num_classes) {
  check_training_set(x, labels);
  if (num_classes < 2) throw ArgumentError("naive bayes: need at least two classes");
  const auto nc = static_cast<std::size_t>(num_classes);
  const std::size_t dim = x.cols();

  std::vector<std::size_t> counts(nc, 0);
  for (int y : labels) {
    if (y >= num_classes) {
      throw ArgumentError("naive bayes: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < nc; ++c) {
    if (counts[c] < 2) {
      throw ArgumentError("naive bayes: class " + std::to_string(c) + " has " +
                          std::to_string(counts[c]) + " training samples (need >= 2)");
    }
  }

  means_ = Matrix(nc, dim);
  vars_ = Matrix(nc, dim);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto c = static_cast<std::size_t>(labels[r]);
    for (std::size_t j = 0; j < dim; ++j) means_(c, j) += x(r, j);
  }
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t j = 0; j < dim; ++j) means_(c, j) /= static_cast<double>(counts[c]);
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto c = static_cast<std::size_t>(labels[r]);
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = x(r, j) - means_(c, j);
      vars_(c, j) += d * d;
    }
  }
  priors_.assign(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t j = 0; j < dim; ++j) {
      vars_(c, j) = std::max(vars_(c, j) / static_cast<double>(counts[c]), kVarianceFloor);
    }
    priors_[c] = static_cast<double>(counts[c]) / static_cast<double>(x.rows());
  }
}

std::vector<double> GaussianNb::posterior(std::span<const double> x) const {
  if (priors_.empty()) throw StateError("naive bayes: predict before fit");
  check_dim(x.size(), means_.cols());
  const std::size_t nc = priors_.size();
  std::vector<double> logp(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    double s = std::log(priors_[c]);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double v = vars_(c, j);
      const double d = x[j] - means_(c, j);
      s -= 0.5 * (std::log(2.0 * std::numbers::pi * v) + d * d / v);
    }
    logp[c] = s;
  }
  const double top = *std::max_element(logp.begin(), logp.end());
  double z = 0.0;
  for (double& l : logp) {
    l = std::exp(l - top);
    z += l;
  }
  for (double& l : logp) l /= z;
  return logp;
}

int GaussianNb::predict(std::span<const double> x) const {
  const auto p = posterior(x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<int> GaussianNb::predict(const Matrix& x) const { return predict_rows(*this, x); }

// --- logistic regression ----------------------------------------------------

LogRegGradient logreg_loss_gradient(const Matrix& x, std::span<const int> labels,
                                    std::span<const double> w, double b, double l2) {
  check_training_set(x, labels);
  check_dim(w.size(), x.cols());
  LogRegGradient g;
  g.grad_w.assign(w.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * row[j];
    const double y = labels[r] == 1 ? 1.0 : 0.0;
    g.loss += (softplus(z) - y * z) * inv_n;
    const double err = (logistic(z) - y) * inv_n;
    for (std::size_t j = 0; j < w.size(); ++j) g.grad_w[j] += err * row[j];
    g.grad_b += err;
  }
  double sq = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    sq += w[j] * w[j];
    g.grad_w[j] += l2 * w[j];
  }
  g.loss += 0.5 * l2 * sq;
  return g;
}

LogisticRegression::LogisticRegression(LogRegConfig config) : config_(config) {
  if (!(config_.learning_rate >= 0.0) || !(config_.l2 >= 0.0)) {
    throw ConfigError("logreg: learning rate and l2 must be non-negative");
  }
}

void LogisticRegression::fit(const Matrix& x, std::span<const int> labels) {
  check_training_set(x, labels);
  bool seen[2] = {false, false};
  for (int y : labels) {
    if (y > 1) throw ArgumentError("logreg: binary labels only, got " + std::to_string(y));
    seen[y] = true;
  }
  if (!seen[0] || !seen[1]) throw ArgumentError("logreg: both classes must be present");

  w_.assign(x.cols(), 0.0);
  b_ = 0.0;
  loss_curve_.clear();
  loss_curve_.reserve(config_.epochs);
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    const auto g = logreg_loss_gradient(x, labels, w_, b_, config_.l2);
    if (!std::isfinite(g.loss)) {
      throw NumericError("logreg: loss became non-finite at epoch " + std::to_string(epoch + 1));
    }
    loss_curve_.push_back(g.loss);
    for (std::size_t j = 0; j < w_.size(); ++j) w_[j] -= config_.learning_rate * g.grad_w[j];
    b_ -= config_.learning_rate * g.grad_b;
  }
}

void LogisticRegression::set_weights(std::vector<double> w, double b) {
  w_ = std::move(w);
  b_ = b;
}

double LogisticRegression::decision(std::span<const double> x) const {
  if (w_.empty()) throw StateError("logreg: predict before fit");
  check_dim(x.size(), w_.size());
  double z = b_;
  for (std::size_t j = 0; j < x.size(); ++j) z += w_[j] * x[j];
  return z;
}

std::vector<double> LogisticRegression::posterior(std::span<const double> x) const {
  const double p = logistic(decision(x));
  return {1.0 - p, p};
}

int LogisticRegression::predict(std::span<const double> x) const {
  return logistic(decision(x)) >= 0.5 ? 1 : 0;
}

std::vector<int> LogisticRegression::predict(const Matrix& x) const {
  return predict_rows(*this, x);
}

}  // namespace depl
