#pragma once

#include "depl/signal.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace depl {

// Shallow classifiers over row-major sample matrices (one sample per row).
// Labels are class indices 0 .. num_classes - 1.

class KnnClassifier {
 public:
  explicit KnnClassifier(std::size_t k = 20);

  // Stores the training set. ArgumentError when k exceeds it.
  void fit(const Matrix& x, std::span<const int> labels);

  // Majority vote among the k nearest rows (Euclidean). Distance ties order
  // by label, vote ties go to the lower class.
  int predict(std::span<const double> x) const;
  std::vector<int> predict(const Matrix& x) const;

  std::size_t k() const { return k_; }

 private:
  std::size_t k_;
  Matrix train_;
  std::vector<int> labels_;
  int num_classes_ = 0;
};

class GaussianNb {
 public:
  static constexpr double kVarianceFloor = 1e-9;

  // Every class in [0, num_classes) needs at least two samples.
  void fit(const Matrix& x, std::span<const int> labels, int num_classes = 2);

  std::vector<double> posterior(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
  std::vector<int> predict(const Matrix& x) const;

  const Matrix& means() const { return means_; }
  const Matrix& variances() const { return vars_; }
  const std::vector<double>& priors() const { return priors_; }

 private:
  Matrix means_;
  Matrix vars_;
  std::vector<double> priors_;
};

struct LogRegConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 500;
  double l2 = 1e-4;
};

struct LogRegGradient {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

// Mean negative log-likelihood of binary labels plus (l2 / 2) * ||w||^2, and
// its gradient.
LogRegGradient logreg_loss_gradient(const Matrix& x, std::span<const int> labels,
                                    std::span<const double> w, double b, double l2);

class LogisticRegression {
 public:
  explicit LogisticRegression(LogRegConfig config = {});

  // Full-batch gradient descent from zero weights. Both classes must be
  // present; a non-finite loss throws NumericError with the epoch.
  void fit(const Matrix& x, std::span<const int> labels);

  double decision(std::span<const double> x) const;  // w.x + b
  std::vector<double> posterior(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
  std::vector<int> predict(const Matrix& x) const;

  void set_weights(std::vector<double> w, double b);
  const std::vector<double>& weights() const { return w_; }
  double bias() const { return b_; }
  const std::vector<double>& loss_curve() const { return loss_curve_; }

 private:
  LogRegConfig config_;
  std::vector<double> w_;
  double b_ = 0.0;
  std::vector<double> loss_curve_;
};

}  // namespace depl
