#pragma once

// Exhaustive reference classifiers and random instances for them. Shared by
// the unit tests and the acceptance binary.

#include "depl/baselines.hpp"
#include "depl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

namespace oracle {

struct LabeledSet {
  depl::Matrix x;
  std::vector<int> labels;
  int classes = 2;
};

// n in [6, max_points], 1-6 features, 2-3 classes each with at least two
// members. With `grid`, coordinates are small integers so that distance ties
// are common.
inline LabeledSet random_set(depl::Rng& rng, std::size_t max_points, bool grid) {
  LabeledSet s;
  const std::size_t n = 6 + rng.below(max_points - 5);
  const std::size_t dim = 1 + rng.below(6);
  s.classes = 2 + static_cast<int>(rng.below(2));
  s.x = depl::Matrix(n, dim);
  s.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    s.labels[r] = r < 2 * static_cast<std::size_t>(s.classes)
                      ? static_cast<int>(r) % s.classes
                      : static_cast<int>(rng.below(static_cast<std::uint64_t>(s.classes)));
    for (std::size_t j = 0; j < dim; ++j) {
      s.x(r, j) = grid ? static_cast<double>(rng.below(4))
                       : rng.normal(0.8 * s.labels[r] * (j % 2 ? 1.0 : -1.0), 1.0);
    }
  }
  return s;
}

inline std::vector<double> random_query(depl::Rng& rng, std::size_t dim, bool grid) {
  std::vector<double> q(dim);
  for (double& v : q) v = grid ? static_cast<double>(rng.below(4)) : rng.normal(0.0, 1.5);
  return q;
}

// Sorts every training point by (distance, label), counts the first k.
inline int knn_brute(const LabeledSet& s, std::span<const double> q, std::size_t k) {
  std::vector<std::size_t> idx(s.x.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> d(s.x.rows());
  for (std::size_t r = 0; r < s.x.rows(); ++r) {
    for (std::size_t j = 0; j < q.size(); ++j) d[r] += (s.x(r, j) - q[j]) * (s.x(r, j) - q[j]);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return d[a] != d[b] ? d[a] < d[b] : s.labels[a] < s.labels[b];
  });
  int best = 0;
  std::size_t best_votes = 0;
  for (int c = 0; c < s.classes; ++c) {
    std::size_t v = 0;
    for (std::size_t i = 0; i < k; ++i) v += s.labels[idx[i]] == c;
    if (v > best_votes) {
      best = c;
      best_votes = v;
    }
  }
  return best;
}

// Per-class products of normal densities times the class frequency, in log
// space. Variances are ML estimates floored like the library's.
inline std::vector<double> nb_brute_log_joint(const LabeledSet& s, std::span<const double> q) {
  std::vector<double> out;
  for (int c = 0; c < s.classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t r = 0; r < s.x.rows(); ++r) {
      if (s.labels[r] == c) members.push_back(r);
    }
    const double m = static_cast<double>(members.size());
    double lj = std::log(m / static_cast<double>(s.x.rows()));
    for (std::size_t j = 0; j < q.size(); ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t r : members) mean += s.x(r, j);
      mean /= m;
      for (std::size_t r : members) var += (s.x(r, j) - mean) * (s.x(r, j) - mean);
      var = std::max(var / m, depl::GaussianNb::kVarianceFloor);
      const double z = q[j] - mean;
      lj += -0.5 * z * z / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
    }
    out.push_back(lj);
  }
  return out;
}

inline int nb_brute(const LabeledSet& s, std::span<const double> q) {
  const auto lj = nb_brute_log_joint(s, q);
  return static_cast<int>(std::max_element(lj.begin(), lj.end()) - lj.begin());
}

struct BaselineAgreement {
  std::size_t knn_checked = 0, knn_agree = 0;
  std::size_t nb_checked = 0, nb_agree = 0;
};

// `instances` random sets of at most 50 points, 10 queries each. KNN runs on
// alternating continuous and integer-grid sets.
inline BaselineAgreement baseline_agreement(std::size_t instances, std::uint64_t seed) {
  depl::Rng rng(seed);
  BaselineAgreement a;
  for (std::size_t i = 0; i < instances; ++i) {
    const bool grid = i % 2 == 1;
    const LabeledSet s = random_set(rng, 50, grid);
    const std::size_t k = 1 + rng.below(std::min<std::uint64_t>(s.x.rows(), 25));
    depl::KnnClassifier knn(k);
    knn.fit(s.x, s.labels);
    const LabeledSet t = grid ? random_set(rng, 50, false) : s;
    depl::GaussianNb nb;
    nb.fit(t.x, t.labels, t.classes);
    for (int q = 0; q < 10; ++q) {
      const auto qk = random_query(rng, s.x.cols(), grid);
      ++a.knn_checked;
      a.knn_agree += knn.predict(qk) == knn_brute(s, qk, k);
      const auto qn = random_query(rng, t.x.cols(), false);
      ++a.nb_checked;
      a.nb_agree += nb.predict(qn) == nb_brute(t, qn);
    }
  }
  return a;
}

// Worst relative error of the logistic-regression gradient against central
// differences over `instances` random problems.
inline double logreg_gradient_error(std::size_t instances, std::uint64_t seed) {
  depl::Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    LabeledSet s = random_set(rng, 50, false);
    for (int& y : s.labels) y = y > 0 ? 1 : 0;
    std::vector<double> w(s.x.cols());
    for (double& v : w) v = rng.normal();
    double b = rng.normal();
    const double l2 = rng.uniform(0.0, 0.5);
    const auto g = depl::logreg_loss_gradient(s.x, s.labels, w, b, l2);
    auto loss = [&] { return depl::logreg_loss_gradient(s.x, s.labels, w, b, l2).loss; };
    const double h = 1e-6;
    std::vector<double> analytic = g.grad_w, numeric(w.size() + 1);
    analytic.push_back(g.grad_b);
    for (std::size_t j = 0; j <= w.size(); ++j) {
      double& p = j < w.size() ? w[j] : b;
      const double keep = p;
      p = keep + h;
      const double up = loss();
      p = keep - h;
      const double down = loss();
      p = keep;
      numeric[j] = (up - down) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t j = 0; j < numeric.size(); ++j) {
      diff += (analytic[j] - numeric[j]) * (analytic[j] - numeric[j]);
      na += analytic[j] * analytic[j];
      nn += numeric[j] * numeric[j];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-8));
  }
  return worst;
}

}  // namespace oracle
