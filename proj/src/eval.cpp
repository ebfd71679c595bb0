#include "depl/eval.hpp"

#include "depl/error.hpp"
#include "depl/rng.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

namespace depl {

FoldPlan loso_split(std::span<const std::int32_t> subject_ids) {
  if (subject_ids.size() < 2) {
    throw ArgumentError("leave-one-subject-out needs at least 2 subjects, got " +
                        std::to_string(subject_ids.size()));
  }
  std::set<std::int32_t> seen;
  for (auto s : subject_ids) {
    if (!seen.insert(s).second) throw ArgumentError("duplicate subject id " + std::to_string(s));
  }
  FoldPlan plan;
  plan.subjects.assign(subject_ids.begin(), subject_ids.end());
  for (auto test : subject_ids) {
    Fold f;
    f.test_subject = test;
    for (auto s : subject_ids) {
      if (s != test) f.train_subjects.push_back(s);
    }
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

Confusion confusion_counts(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw ArgumentError("confusion: " + std::to_string(truth.size()) + " labels vs " +
                        std::to_string(predicted.size()) + " predictions");
  }
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pos = predicted[i] == 1;
    if (truth[i] == 1) {
      ++(pos ? c.tp : c.fn);
    } else {
      ++(pos ? c.fp : c.tn);
    }
  }
  return c;
}

Metrics accuracy_f1(const Confusion& c) {
  if (c.total() == 0) throw ArgumentError("accuracy of an empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
  return m;
}

std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Depl: return "depl";
    case ModelKind::Knn: return "knn";
    case ModelKind::Nb: return "nb";
    case ModelKind::LogReg: return "logreg";
  }
  return "?";
}

ModelKind parse_model(std::string_view name) {
  for (auto k : {ModelKind::Depl, ModelKind::Knn, ModelKind::Nb, ModelKind::LogReg}) {
    if (model_name(k) == name) return k;
  }
  throw ConfigError("unknown model '" + std::string(name) + "' (expected depl, knn, nb, logreg)");
}

std::uint64_t fold_seed(std::uint64_t global_seed, std::int32_t test_subject) {
  return mix_seed(global_seed, static_cast<std::uint64_t>(static_cast<std::uint32_t>(test_subject)));
}

nn::Tensor band_planes(std::span<const FeatureEpoch> epochs, Band band, const TopoMapper& mapper) {
  nn::Tensor out({epochs.size(), kGridSize, kGridSize, 1});
  auto dst = out.values();
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto plane = extract_band(mapper.to_frame(epochs[i]), band);
    std::copy(plane.begin(), plane.end(), dst.begin() + static_cast<std::ptrdiff_t>(i * plane.size()));
  }
  return out;
}

namespace {

Matrix design_matrix(std::span<const FeatureEpoch> epochs) {
  Matrix x(epochs.size(), kFeatureDim);
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    std::copy(epochs[i].values.begin(), epochs[i].values.end(), x.row(i).begin());
  }
  return x;
}

std::vector<int> task_labels(std::span<const FeatureEpoch> epochs, Task task) {
  std::vector<int> y(epochs.size());
  for (std::size_t i = 0; i < epochs.size(); ++i) y[i] = epochs[i].labels.get(task);
  return y;
}

double fraction_correct(std::span<const int> truth, std::span<const int> pred) {
  if (truth.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += truth[i] == pred[i];
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

// One vote per epoch, ties to the low class. Trials keep first-seen order.
Confusion trial_vote(std::span<const FeatureEpoch> epochs, std::span<const int> truth,
                     std::span<const int> pred) {
  std::vector<std::int32_t> order;
  std::map<std::int32_t, std::pair<std::size_t, std::size_t>> votes;  // (high, total)
  std::map<std::int32_t, int> label;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto id = epochs[i].trial_id;
    if (!votes.contains(id)) order.push_back(id);
    auto& v = votes[id];
    v.first += pred[i] == 1;
    ++v.second;
    label[id] = truth[i];
  }
  std::vector<int> t, p;
  for (auto id : order) {
    const auto [high, total] = votes[id];
    t.push_back(label[id]);
    p.push_back(2 * high > total ? 1 : 0);
  }
  return confusion_counts(t, p);
}

struct Predictions {
  std::vector<int> test;
  std::vector<int> train;
  std::vector<double> loss_curve;
};

Predictions fit_predict_network(const ModelSpec& model, std::span<const FeatureEpoch> train,
                                std::span<const FeatureEpoch> test, const std::vector<int>& y,
                                const EvalConfig& config, std::uint64_t seed,
                                const FoldProbe* probe) {
  const TopoMapper mapper(config.layout, config.channels);
  const nn::Tensor x_train = band_planes(train, model.band, mapper);
  const nn::Tensor x_test = band_planes(test, model.band, mapper);
  if (probe && probe->on_training_data) probe->on_training_data(x_train.values());

  nn::Network net = nn::build_network(model.network);
  net.initialize(mix_seed(seed, 1));
  nn::TrainConfig tc = model.train;
  tc.seed = mix_seed(seed, 2);
  const nn::BatchObserver observer = probe ? probe->on_batch : nn::BatchObserver{};
  auto result = nn::train(net, x_train, y, tc, observer);

  Predictions p;
  p.test = nn::predict_classes(net, x_test);
  p.train = nn::predict_classes(net, x_train);
  p.loss_curve = std::move(result.loss_curve);
  return p;
}

template <typename Model>
Predictions fit_predict_shallow(Model& m, const Matrix& x_train, const std::vector<int>& y,
                                const Matrix& x_test) {
  m.fit(x_train, y);
  return {m.predict(x_test), m.predict(x_train), {}};
}

}  // namespace

FoldResult run_fold(const Fold& fold, const ModelSpec& model, const EpochsBySubject& data,
                    const EvalConfig& config, const FoldProbe* probe) {
  const auto test_it = data.find(fold.test_subject);
  if (test_it == data.end() || test_it->second.empty()) {
    throw ArgumentError("no epochs for test subject " + std::to_string(fold.test_subject));
  }
  std::vector<FeatureEpoch> train_raw;
  for (auto s : fold.train_subjects) {
    if (s == fold.test_subject) {
      throw ArgumentError("fold trains on its own test subject " + std::to_string(s));
    }
    const auto it = data.find(s);
    if (it == data.end()) throw ArgumentError("no epochs for training subject " + std::to_string(s));
    train_raw.insert(train_raw.end(), it->second.begin(), it->second.end());
  }
  if (train_raw.empty()) throw ArgumentError("fold has no training epochs");

  const Normalizer norm = fit_normalizer(train_raw);
  if (probe && probe->on_normalizer) probe->on_normalizer(train_raw, norm);
  const auto train = apply_normalizer(norm, train_raw);
  const auto test = apply_normalizer(norm, test_it->second);
  const auto y_train = task_labels(train, config.task);
  const auto y_test = task_labels(test, config.task);
  const std::uint64_t seed = fold_seed(config.seed, fold.test_subject);

  Predictions pred;
  if (model.kind == ModelKind::Depl) {
    pred = fit_predict_network(model, train, test, y_train, config, seed, probe);
  } else {
    const Matrix x_train = design_matrix(train);
    const Matrix x_test = design_matrix(test);
    if (probe && probe->on_training_data) probe->on_training_data(x_train.data());
    switch (model.kind) {
      case ModelKind::Knn: {
        KnnClassifier m(model.knn_k);
        pred = fit_predict_shallow(m, x_train, y_train, x_test);
        break;
      }
      case ModelKind::Nb: {
        GaussianNb m;
        pred = fit_predict_shallow(m, x_train, y_train, x_test);
        break;
      }
      default: {
        LogisticRegression m(model.logreg);
        pred = fit_predict_shallow(m, x_train, y_train, x_test);
        pred.loss_curve = m.loss_curve();
        break;
      }
    }
  }

  FoldResult r;
  r.test_subject = fold.test_subject;
  r.task = config.task;
  r.model = std::string(model_name(model.kind));
  r.confusion = confusion_counts(y_test, pred.test);
  const auto m = accuracy_f1(r.confusion);
  r.accuracy = m.accuracy;
  r.f1 = m.f1;
  r.trial_confusion = trial_vote(test, y_test, pred.test);
  const auto tm = accuracy_f1(r.trial_confusion);
  r.trial_accuracy = tm.accuracy;
  r.trial_f1 = tm.f1;
  r.train_accuracy = fraction_correct(y_train, pred.train);
  r.train_size = train.size();
  r.test_size = test.size();
  r.loss_curve = std::move(pred.loss_curve);
  return r;
}

std::vector<FoldResult> run_loso(const FoldPlan& plan, const ModelSpec& model,
                                 const EpochsBySubject& data, const EvalConfig& config,
                                 std::size_t jobs, const FoldCallback& on_done) {
  const std::size_t n = plan.folds.size();
  std::vector<FoldResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        results[i] = run_fold(plan.folds[i], model, data, config);
        if (on_done) {
          std::lock_guard lock(done_mutex);
          on_done(results[i]);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw ArgumentError("t distribution needs df > 0");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  // P(|T| >= |t|) = I_x(df/2, 1/2), x = df / (df + t^2).
  const double x = df / (df + t * t);
  return std::clamp(boost::math::ibeta(0.5 * df, 0.5, x), 0.0, 1.0);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ArgumentError("paired t-test: sample sizes differ (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  }
  const std::size_t n = a.size();
  if (n < 2) throw ArgumentError("paired t-test needs at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double sum = 0.0;
  for (double v : d) sum += v;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  r.df = n - 1;
  if (sd == 0.0) {
    if (mean == 0.0) return r;  // t = 0, p = 1
    r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p = 0.0;
    r.degenerate = true;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_sided(r.t, static_cast<double>(r.df));
  return r;
}

MetricSummary summarize(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("summary of an empty sample");
  MetricSummary s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

RunSummary aggregate(std::span<const FoldResult> folds) {
  if (folds.empty()) throw ArgumentError("aggregate of zero folds");
  RunSummary r;
  r.model = folds.front().model;
  r.task = folds.front().task;
  r.folds = folds.size();
  auto column = [&](double FoldResult::*field) {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.*field);
    return summarize(v);
  };
  r.accuracy = column(&FoldResult::accuracy);
  r.f1 = column(&FoldResult::f1);
  r.trial_accuracy = column(&FoldResult::trial_accuracy);
  r.trial_f1 = column(&FoldResult::trial_f1);
  r.train_accuracy = column(&FoldResult::train_accuracy);
  return r;
}

ComparisonMatrix compare_runs(std::span<const NamedRun> runs) {
  ComparisonMatrix m;
  std::vector<std::map<std::int32_t, double>> acc(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    m.labels.push_back(runs[i].label);
    for (const auto& f : runs[i].folds) acc[i][f.test_subject] = f.accuracy;
  }
  auto aligned = [&](std::size_t i, std::size_t j) {
    if (acc[i].size() != acc[j].size() ||
        !std::equal(acc[i].begin(), acc[i].end(), acc[j].begin(),
                    [](const auto& x, const auto& y) { return x.first == y.first; })) {
      throw ArgumentError("runs '" + runs[i].label + "' and '" + runs[j].label +
                          "' cover different subjects");
    }
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [s, v] : acc[i]) out.first.push_back(v);
    for (const auto& [s, v] : acc[j]) out.second.push_back(v);
    return out;
  };
  m.cells.assign(runs.size(), std::vector<TTestResult>(runs.size()));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = 0; j < runs.size(); ++j) {
      const auto [a, b] = aligned(i, j);
      m.cells[i][j] = paired_t_test(a, b);
    }
  }
  return m;
}

}  // namespace depl
