#pragma once

#include "depl/config.hpp"
#include "depl/eval.hpp"
#include "depl/pipeline.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace depl::cli {

// Identity of a run as recorded in its results file.
struct RunInfo {
  std::string command;
  RunConfig config;
  std::uint64_t layout_hash = 0;
  std::uint64_t features_hash = 0;
  std::uint64_t dataset_hash = 0;
  std::size_t trainable_parameters = 0;  // network models only
};

nlohmann::ordered_json fold_json(const FoldResult& f);
FoldResult fold_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json results_json(const RunInfo& info, const std::vector<FoldResult>& folds);

// Flat per-fold table for external plotting.
std::string folds_csv(const std::vector<FoldResult>& folds);

// "depl-text/gamma/valence", "knn/valence", ...
std::string run_label(const nlohmann::ordered_json& results);

nlohmann::ordered_json comparison_json(const ComparisonMatrix& m);

std::string format_number(double v);

}  // namespace depl::cli
