#include "report.hpp"

#include "depl/error.hpp"
#include "depl/hash.hpp"

#include <charconv>
#include <cmath>

namespace depl::cli {

using nlohmann::ordered_json;

std::string format_number(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

namespace {

ordered_json confusion_json(const Confusion& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

Confusion confusion_from_json(const ordered_json& j) {
  return {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
          j.at("tn").get<std::size_t>(), j.at("fn").get<std::size_t>()};
}

ordered_json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

// JSON has no infinity; a degenerate t is written as null.
ordered_json finite_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(); }

}  // namespace

ordered_json fold_json(const FoldResult& f) {
  ordered_json j;
  j["test_subject"] = f.test_subject;
  j["accuracy"] = f.accuracy;
  j["f1"] = f.f1;
  j["confusion"] = confusion_json(f.confusion);
  j["trial_accuracy"] = f.trial_accuracy;
  j["trial_f1"] = f.trial_f1;
  j["trial_confusion"] = confusion_json(f.trial_confusion);
  j["train_accuracy"] = f.train_accuracy;
  j["train_size"] = f.train_size;
  j["test_size"] = f.test_size;
  j["loss_curve"] = f.loss_curve;
  return j;
}

FoldResult fold_from_json(const ordered_json& j) {
  FoldResult f;
  f.test_subject = j.at("test_subject").get<std::int32_t>();
  f.accuracy = j.at("accuracy").get<double>();
  f.f1 = j.at("f1").get<double>();
  f.confusion = confusion_from_json(j.at("confusion"));
  f.trial_accuracy = j.at("trial_accuracy").get<double>();
  f.trial_f1 = j.at("trial_f1").get<double>();
  f.trial_confusion = confusion_from_json(j.at("trial_confusion"));
  f.train_accuracy = j.at("train_accuracy").get<double>();
  f.train_size = j.at("train_size").get<std::size_t>();
  f.test_size = j.at("test_size").get<std::size_t>();
  f.loss_curve = j.at("loss_curve").get<std::vector<double>>();
  return f;
}

ordered_json results_json(const RunInfo& info, const std::vector<FoldResult>& folds) {
  const RunConfig& c = info.config;
  const bool network = c.model == ModelKind::Depl;
  ordered_json j;
  j["format"] = "depl-results";
  j["version"] = 1;
  j["command"] = info.command;
  j["model"] = std::string(model_name(c.model));
  j["preset"] = network ? ordered_json(c.layers.empty() ? c.preset : "custom") : ordered_json();
  j["network"] = network ? ordered_json(network_config(c).layers_string()) : ordered_json();
  j["trainable_parameters"] = network ? ordered_json(info.trainable_parameters) : ordered_json();
  j["band"] = network ? ordered_json(std::string(band_name(c.band))) : ordered_json();
  j["task"] = std::string(task_name(c.task));
  j["seed"] = c.seed;
  j["config_hash"] = hex64(config_hash(c));
  j["preprocess_hash"] = hex64(preprocess_hash(c));
  j["layout_hash"] = hex64(info.layout_hash);
  j["features_hash"] = hex64(info.features_hash);
  j["dataset_hash"] = hex64(info.dataset_hash);
  j["config"] = format_config(c);

  ordered_json fj = ordered_json::array();
  for (const auto& f : folds) fj.push_back(fold_json(f));
  j["folds"] = std::move(fj);

  if (!folds.empty()) {
    const auto s = aggregate(folds);
    j["summary"] = {{"folds", s.folds},
                    {"accuracy", summary_json(s.accuracy)},
                    {"f1", summary_json(s.f1)},
                    {"trial_accuracy", summary_json(s.trial_accuracy)},
                    {"trial_f1", summary_json(s.trial_f1)},
                    {"train_accuracy", summary_json(s.train_accuracy)}};
  }
  return j;
}

std::string folds_csv(const std::vector<FoldResult>& folds) {
  std::string s =
      "test_subject,model,task,accuracy,f1,trial_accuracy,trial_f1,train_accuracy,tp,fp,tn,fn,"
      "train_size,test_size\n";
  for (const auto& f : folds) {
    s += std::to_string(f.test_subject) + "," + f.model + "," + std::string(task_name(f.task)) +
         "," + format_number(f.accuracy) + "," + format_number(f.f1) + "," +
         format_number(f.trial_accuracy) + "," + format_number(f.trial_f1) + "," +
         format_number(f.train_accuracy) + "," + std::to_string(f.confusion.tp) + "," +
         std::to_string(f.confusion.fp) + "," + std::to_string(f.confusion.tn) + "," +
         std::to_string(f.confusion.fn) + "," + std::to_string(f.train_size) + "," +
         std::to_string(f.test_size) + "\n";
  }
  return s;
}

std::string run_label(const ordered_json& r) {
  std::string label = r.at("model").get<std::string>();
  if (r.contains("preset") && r["preset"].is_string()) label = r["preset"].get<std::string>();
  if (r.contains("band") && r["band"].is_string()) label += "/" + r["band"].get<std::string>();
  return label + "/" + r.at("task").get<std::string>();
}

ordered_json comparison_json(const ComparisonMatrix& m) {
  ordered_json j;
  j["labels"] = m.labels;
  ordered_json pairs = ordered_json::array();
  for (std::size_t a = 0; a < m.labels.size(); ++a) {
    for (std::size_t b = 0; b < m.labels.size(); ++b) {
      if (a == b) continue;
      const auto& c = m.cells[a][b];
      pairs.push_back({{"a", m.labels[a]},
                       {"b", m.labels[b]},
                       {"t", finite_or_null(c.t)},
                       {"p", c.p},
                       {"df", c.df},
                       {"degenerate", c.degenerate}});
    }
  }
  j["pairs"] = std::move(pairs);
  return j;
}

}  // namespace depl::cli
