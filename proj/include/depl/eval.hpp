#pragma once

#include "depl/baselines.hpp"
#include "depl/features.hpp"
#include "depl/nn/network.hpp"
#include "depl/topomap.hpp"
#include "depl/trial.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace depl {

// --- fold planning ----------------------------------------------------------

struct Fold {
  std::int32_t test_subject = 0;
  std::vector<std::int32_t> train_subjects;
};

struct FoldPlan {
  std::vector<std::int32_t> subjects;  // in the order given
  std::vector<Fold> folds;             // one per subject, same order
};

// One fold per subject. ArgumentError on fewer than two subjects or duplicates.
FoldPlan loso_split(std::span<const std::int32_t> subject_ids);

// --- metrics ----------------------------------------------------------------

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

// Class 1 is the positive class.
Confusion confusion_counts(std::span<const int> truth, std::span<const int> predicted);

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
};

// F1 is 0 when 2TP + FP + FN = 0. ArgumentError on an empty confusion.
Metrics accuracy_f1(const Confusion& c);

// --- models -----------------------------------------------------------------

enum class ModelKind { Depl, Knn, Nb, LogReg };

std::string_view model_name(ModelKind kind);
ModelKind parse_model(std::string_view name);

struct ModelSpec {
  ModelKind kind = ModelKind::Depl;
  Band band = Band::Gamma;  // plane fed to the network
  nn::NetworkConfig network = nn::preset_depl_text();
  nn::TrainConfig train;
  std::size_t knn_k = 20;
  LogRegConfig logreg;
};

struct EvalConfig {
  Task task = Task::Valence;
  std::uint64_t seed = 1;
  ElectrodeLayout layout = standard_layout();
  std::vector<std::string> channels = canonical_channels();
};

using EpochsBySubject = std::map<std::int32_t, std::vector<FeatureEpoch>>;

// Instrumentation hooks, used to prove the test subject never reaches the
// training side of a fold.
struct FoldProbe {
  // Epochs the normalizer was fitted on, and the fitted normalizer.
  std::function<void(std::span<const FeatureEpoch>, const Normalizer&)> on_normalizer;
  // Complete training design (rows x features, already normalized).
  std::function<void(std::span<const double>)> on_training_data;
  // Every mini-batch tensor the network trains on.
  nn::BatchObserver on_batch;
};

struct FoldResult {
  std::int32_t test_subject = 0;
  Task task = Task::Valence;
  std::string model;
  Confusion confusion;
  double accuracy = 0.0;
  double f1 = 0.0;
  Confusion trial_confusion;  // majority vote over each trial's epochs
  double trial_accuracy = 0.0;
  double trial_f1 = 0.0;
  double train_accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<double> loss_curve;  // network models only
};

// Seed owned by the fold, independent of scheduling.
std::uint64_t fold_seed(std::uint64_t global_seed, std::int32_t test_subject);

// Fits the normalizer on training subjects, trains the model, scores every
// test epoch. ArgumentError when the test subject has no epochs.
FoldResult run_fold(const Fold& fold, const ModelSpec& model, const EpochsBySubject& data,
                    const EvalConfig& config, const FoldProbe* probe = nullptr);

using FoldCallback = std::function<void(const FoldResult&)>;

// All folds of the plan, `jobs` at a time. Results follow plan order.
// `on_done` runs once per finished fold, serialized, in completion order.
std::vector<FoldResult> run_loso(const FoldPlan& plan, const ModelSpec& model,
                                 const EpochsBySubject& data, const EvalConfig& config,
                                 std::size_t jobs = 1, const FoldCallback& on_done = {});

// Single-band network input [N, 9, 9, 1] from normalized epochs.
nn::Tensor band_planes(std::span<const FeatureEpoch> epochs, Band band,
                       const TopoMapper& mapper);

// --- statistics -------------------------------------------------------------

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t df = 0;
  bool degenerate = false;  // zero-variance differences with nonzero mean
};

// Student paired t-test, two-sided. ArgumentError unless sizes match and n >= 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Two-sided tail probability P(|T| >= |t|) with df degrees of freedom.
double student_t_two_sided(double t, double df);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1); 0 for a single value
};

MetricSummary summarize(std::span<const double> values);

struct RunSummary {
  std::string model;
  Task task = Task::Valence;
  std::size_t folds = 0;
  MetricSummary accuracy, f1, trial_accuracy, trial_f1, train_accuracy;
};

RunSummary aggregate(std::span<const FoldResult> folds);

struct NamedRun {
  std::string label;
  std::vector<FoldResult> folds;
};

struct ComparisonMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<TTestResult>> cells;  // cells[i][j]: run i vs run j
};

// Paired over per-subject epoch accuracy. Runs must cover the same subjects.
ComparisonMatrix compare_runs(std::span<const NamedRun> runs);

}  // namespace depl
