#include "cli.hpp"

#include "report.hpp"

#include "depl/config.hpp"
#include "depl/error.hpp"
#include "depl/hash.hpp"
#include "depl/io.hpp"
#include "depl/pipeline.hpp"
#include "depl/rng.hpp"
#include "depl/synth.hpp"
#include "depl/topomap.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

namespace depl::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Flags shared by the commands that build a RunConfig.
struct RunFlags {
  std::string config;
  std::optional<std::string> model, preset, band, task;
  std::optional<std::size_t> smooth_d;
  std::optional<double> threshold;
  std::optional<std::uint64_t> seed;
};

void add_config_flag(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration file (INI sections)")
      ->check(CLI::ExistingFile);
}

void add_preprocess_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--smooth-d", f.smooth_d, "Smoothing window in epochs (default 3)");
  cmd->add_option("--threshold", f.threshold, "Ratings above this are the high class (default 5)");
}

void add_model_flags(CLI::App* cmd, RunFlags& f, bool with_model) {
  if (with_model) {
    cmd->add_option("--model", f.model, "Classifier")
        ->check(CLI::IsMember({"depl", "knn", "nb", "logreg"}));
  }
  cmd->add_option("--preset", f.preset, "Network preset")
      ->check(CLI::IsMember({"depl-text", "depl-table6"}));
  cmd->add_option("--band", f.band, "Band plane fed to the network")
      ->check(CLI::IsMember({"theta", "alpha", "beta", "gamma"}));
  cmd->add_option("--task", f.task, "Label to predict")->check(CLI::IsMember({"valence", "arousal"}));
  cmd->add_option("--seed", f.seed, "Global seed");
}

RunConfig resolve_config(const RunFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.model) c.model = parse_model(*f.model);
  if (f.preset) {
    c.preset = *f.preset;
    c.layers.clear();
  }
  if (f.band) c.band = parse_band(*f.band);
  if (f.task) c.task = parse_task(*f.task);
  if (f.smooth_d) c.smooth_d = *f.smooth_d;
  if (f.threshold) c.threshold = *f.threshold;
  if (f.seed) c.seed = *f.seed;
  c.validate();
  return c;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void write_json(const fs::path& path, const ordered_json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string thousands(std::size_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- synth ------------------------------------------------------------------

struct SynthFlags {
  std::string out;
  SynthSpec spec;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  const auto m = write_synthetic(f.spec, f.out);
  out << "wrote " << m.files.size() << " trials (" << m.subjects << " subjects x "
      << m.trials_per_subject << ") to " << f.out << "\n";
  return kOk;
}

// --- preprocess -------------------------------------------------------------

int cmd_preprocess(const std::string& data, const std::string& out_dir, const RunFlags& flags,
                   std::ostream& out) {
  const RunConfig c = resolve_config(flags);
  const auto dataset = load_dataset(data, c.threshold);
  FeatureCache cache;
  cache.preprocess_hash = preprocess_hash(c);
  cache.dataset_hash = dataset.content_hash;
  cache.epochs = extract_features(dataset, c);
  ensure_dir(out_dir);
  write_feature_cache(cache, fs::path(out_dir) / kFeatureCacheName);
  const auto fh = features_hash(cache.epochs);
  out << "epochs: " << cache.epochs.size() << "\n"
      << "preprocess hash: " << hex64(cache.preprocess_hash) << "\n"
      << "dataset hash: " << hex64(cache.dataset_hash) << "\n"
      << "features hash: " << hex64(fh) << "\n";
  return kOk;
}

// --- loso -------------------------------------------------------------------

int cmd_loso(const std::string& data, const std::string& out_dir, const RunFlags& flags,
             std::size_t jobs, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(flags);
  const auto features = load_features(data, c);
  err << "features: " << features.epochs.size() << " epochs from " << features.source << "\n";
  const auto by_subject = group_by_subject(features.epochs);
  std::vector<std::int32_t> subjects;
  for (const auto& [s, e] : by_subject) subjects.push_back(s);
  const auto plan = loso_split(subjects);

  const ModelSpec spec = model_spec(c);
  const EvalConfig ec = eval_config(c);
  const auto results = run_loso(plan, spec, by_subject, ec, jobs, [&](const FoldResult& f) {
    err << "  fold subject " << f.test_subject << ": accuracy " << fixed(f.accuracy) << "\n";
  });

  RunInfo info;
  info.command = "loso";
  info.config = c;
  info.layout_hash = ec.layout.hash();
  info.features_hash = features.features_hash;
  info.dataset_hash = features.dataset_hash;
  if (c.model == ModelKind::Depl) info.trainable_parameters = nn::param_count(spec.network).trainable;

  ensure_dir(out_dir);
  write_json(fs::path(out_dir) / "results.json", results_json(info, results));
  write_file_atomic(fs::path(out_dir) / "folds.csv", folds_csv(results));

  const auto s = aggregate(results);
  out << "model " << model_name(c.model) << ", task " << task_name(c.task) << ", "
      << results.size() << " folds\n"
      << "accuracy " << fixed(s.accuracy.mean) << " (" << fixed(s.accuracy.stddev) << "), f1 "
      << fixed(s.f1.mean) << " (" << fixed(s.f1.stddev) << ")\n"
      << "trial-vote accuracy " << fixed(s.trial_accuracy.mean) << ", training accuracy "
      << fixed(s.train_accuracy.mean) << "\n";
  return kOk;
}

// --- train ------------------------------------------------------------------

int cmd_train(const std::string& data, const std::string& out_dir, const RunFlags& flags,
              std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(flags);
  if (c.model != ModelKind::Depl) {
    throw ConfigError("train exports network weights; use --model depl (shallow models are "
                      "evaluated with loso)");
  }
  const auto features = load_features(data, c);
  err << "features: " << features.epochs.size() << " epochs from " << features.source << "\n";
  const Normalizer norm = fit_normalizer(features.epochs);
  const auto epochs = apply_normalizer(norm, features.epochs);
  const ModelSpec spec = model_spec(c);
  const ElectrodeLayout layout = electrode_layout(c);
  const TopoMapper mapper(layout, canonical_channels());
  const auto x = band_planes(epochs, spec.band, mapper);
  std::vector<int> y;
  for (const auto& e : epochs) y.push_back(e.labels.get(c.task));

  nn::Network net = nn::build_network(spec.network);
  net.initialize(mix_seed(c.seed, 1));
  nn::TrainConfig tc = spec.train;
  tc.seed = mix_seed(c.seed, 2);
  const auto result = nn::train(net, x, y, tc);
  const auto pred = nn::predict_classes(net, x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
  const double train_acc = static_cast<double>(ok) / static_cast<double>(y.size());

  nn::ParameterSet params = net.snapshot();
  const auto& mean = norm.mean();
  const auto& sd = norm.stddev();
  params.tensors.push_back({"normalizer/mean", nn::Tensor({kFeatureDim}, {mean.begin(), mean.end()})});
  params.tensors.push_back({"normalizer/std", nn::Tensor({kFeatureDim}, {sd.begin(), sd.end()})});

  ensure_dir(out_dir);
  save_parameters(params, fs::path(out_dir) / "model.depw");
  ordered_json j;
  j["format"] = "depl-train";
  j["version"] = 1;
  j["preset"] = c.layers.empty() ? c.preset : "custom";
  j["network"] = spec.network.layers_string();
  j["band"] = std::string(band_name(c.band));
  j["task"] = std::string(task_name(c.task));
  j["seed"] = c.seed;
  j["config_hash"] = hex64(config_hash(c));
  j["layout_hash"] = hex64(layout.hash());
  j["features_hash"] = hex64(features.features_hash);
  j["config"] = format_config(c);
  j["train_size"] = y.size();
  j["train_accuracy"] = train_acc;
  j["loss_curve"] = result.loss_curve;
  write_json(fs::path(out_dir) / "train.json", j);
  out << "trained on " << y.size() << " epochs, training accuracy " << fixed(train_acc)
      << ", final loss " << fixed(result.loss_curve.back()) << "\n";
  return kOk;
}

// --- compare ----------------------------------------------------------------

int cmd_compare(const std::vector<std::string>& files, const std::string& out_dir,
                std::ostream& out) {
  if (files.size() < 2) throw ArgumentError("compare needs at least two results files");
  std::vector<NamedRun> runs;
  for (const auto& file : files) {
    ordered_json j;
    try {
      j = ordered_json::parse(read_text_file(file));
    } catch (const ordered_json::parse_error& e) {
      throw FormatError(file + ": " + e.what(), e.byte);
    }
    if (j.value("format", "") != "depl-results") {
      throw FormatError(file + ": not a results file", 0);
    }
    NamedRun run;
    run.label = run_label(j);
    for (const auto& f : j.at("folds")) run.folds.push_back(fold_from_json(f));
    runs.push_back(std::move(run));
  }
  // Keep labels unique so the matrix stays readable.
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::size_t dup = 1;
    for (std::size_t k = 0; k < i; ++k) dup += runs[k].label.starts_with(runs[i].label);
    if (dup > 1) runs[i].label += "#" + std::to_string(dup);
  }

  const auto m = compare_runs(runs);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto s = aggregate(runs[i].folds);
    out << runs[i].label << ": accuracy " << fixed(s.accuracy.mean) << " ("
        << fixed(s.accuracy.stddev) << ") over " << s.folds << " subjects\n";
  }
  out << "paired t-tests on per-subject accuracy:\n";
  for (std::size_t a = 0; a < runs.size(); ++a) {
    for (std::size_t b = a + 1; b < runs.size(); ++b) {
      const auto& c = m.cells[a][b];
      out << "  " << m.labels[a] << " vs " << m.labels[b] << ": t = "
          << (std::isfinite(c.t) ? fixed(c.t) : std::string(c.t > 0 ? "+inf" : "-inf"))
          << ", p = " << fixed(c.p, 6) << ", df = " << c.df << (c.degenerate ? " (degenerate)" : "")
          << "\n";
    }
  }
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_json(fs::path(out_dir) / "comparison.json", comparison_json(m));
  }
  return kOk;
}

// --- inspect ----------------------------------------------------------------

void print_param_table(const nn::NetworkConfig& net, std::ostream& out) {
  const auto pc = nn::param_count(net);
  out << "preset " << net.name << "\n"
      << "input " << nn::shape_string(net.input_shape) << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%3s  %-22s %-12s %12s %14s\n", "#", "layer", "output",
                "trainable", "non-trainable");
  out << line;
  for (std::size_t i = 0; i < pc.layers.size(); ++i) {
    const auto& l = pc.layers[i];
    std::snprintf(line, sizeof line, "%3zu  %-22s %-12s %12s %14s\n", i + 1, l.layer.c_str(),
                  nn::shape_string(l.output_shape).c_str(), thousands(l.trainable).c_str(),
                  thousands(l.non_trainable).c_str());
    out << line;
  }
  const long long diff = static_cast<long long>(pc.trainable) -
                         static_cast<long long>(nn::kPublishedParameterCount);
  out << "computed trainable parameters: " << thousands(pc.trainable) << "\n"
      << "computed non-trainable (batch-norm running statistics): " << thousands(pc.non_trainable)
      << "\n"
      << "published parameter count: " << thousands(nn::kPublishedParameterCount) << "\n"
      << "difference (computed trainable - published): " << (diff >= 0 ? "+" : "-")
      << thousands(static_cast<std::size_t>(diff >= 0 ? diff : -diff)) << "\n";
}

int cmd_inspect(const RunFlags& flags, const std::string& data, std::ostream& out) {
  bool did = false;
  if (flags.preset || !flags.config.empty()) {
    const RunConfig c = resolve_config(flags);
    if (!flags.config.empty()) {
      out << "config hash " << hex64(config_hash(c)) << "\n" << format_config(c) << "\n";
    }
    print_param_table(network_config(c), out);
    did = true;
  }
  if (!data.empty()) {
    const fs::path dir(data);
    if (fs::exists(dir / kManifestName)) {
      const auto m = read_manifest(dir / kManifestName);
      out << "dataset " << m.name << ": " << m.subjects << " subjects x " << m.trials_per_subject
          << " trials, " << m.sample_rate_hz << " Hz, baseline " << m.baseline_len_samples
          << " samples, threshold " << m.label_threshold << "\n";
    }
    if (fs::exists(dir / kFeatureCacheName)) {
      const auto c = read_feature_cache(dir / kFeatureCacheName);
      out << "feature cache: " << c.epochs.size() << " epochs, preprocess hash "
          << hex64(c.preprocess_hash) << ", dataset hash " << hex64(c.dataset_hash)
          << ", features hash " << hex64(features_hash(c.epochs)) << "\n";
    }
    if (!fs::exists(dir / kManifestName) && !fs::exists(dir / kFeatureCacheName)) {
      throw IoError("'" + data + "' holds neither " + kManifestName + " nor " + kFeatureCacheName);
    }
    did = true;
  }
  if (!did) throw ArgumentError("inspect needs --preset, --config or --data");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"EEG emotion recognition: features, topographic CNN, LOSO evaluation", "depl"};
  app.require_subcommand(1);

  SynthFlags synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--subjects", synth.spec.subjects, "Number of subjects")->capture_default_str();
  c_synth->add_option("--trials", synth.spec.trials, "Trials per subject")->capture_default_str();
  c_synth->add_option("--duration", synth.spec.duration_s, "Stimulus seconds per trial")->capture_default_str();
  c_synth->add_option("--baseline", synth.spec.baseline_s, "Baseline seconds per trial")->capture_default_str();
  c_synth->add_option("--effect", synth.spec.effect, "Gamma amplitude multiplier for the high class")->capture_default_str();
  c_synth->add_option("--seed", synth.spec.seed, "Seed")->capture_default_str();

  std::string data, out_dir;
  std::size_t jobs = 1;
  RunFlags pre_flags, train_flags, loso_flags, inspect_flags;

  auto* c_pre = app.add_subcommand("preprocess", "Extract DE features into a feature cache");
  c_pre->add_option("--data", data, "Dataset directory (manifest.ini)")->required();
  c_pre->add_option("--out", out_dir, "Output directory")->required();
  add_config_flag(c_pre, pre_flags);
  add_preprocess_flags(c_pre, pre_flags);

  auto* c_train = app.add_subcommand("train", "Train a network on every subject and export it");
  c_train->add_option("--data", data, "Dataset or feature-cache directory")->required();
  c_train->add_option("--out", out_dir, "Output directory")->required();
  add_config_flag(c_train, train_flags);
  add_model_flags(c_train, train_flags, true);
  add_preprocess_flags(c_train, train_flags);

  auto* c_loso = app.add_subcommand("loso", "Leave-one-subject-out evaluation");
  c_loso->add_option("--data", data, "Dataset or feature-cache directory")->required();
  c_loso->add_option("--out", out_dir, "Output directory")->required();
  add_config_flag(c_loso, loso_flags);
  add_model_flags(c_loso, loso_flags, true);
  add_preprocess_flags(c_loso, loso_flags);
  c_loso->add_option("--jobs", jobs, "Folds run in parallel")->check(CLI::PositiveNumber);

  std::vector<std::string> compare_files;
  auto* c_cmp = app.add_subcommand("compare", "Paired t-tests between results files");
  c_cmp->add_option("results", compare_files, "results.json files")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--out", out_dir, "Write comparison.json here");

  auto* c_inspect = app.add_subcommand("inspect", "Show parameter counts, configs and datasets");
  add_config_flag(c_inspect, inspect_flags);
  c_inspect->add_option("--preset", inspect_flags.preset, "Network preset")
      ->check(CLI::IsMember({"depl-text", "depl-table6"}));
  c_inspect->add_option("--data", data, "Dataset or feature-cache directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_synth->parsed()) return cmd_synth(synth, out);
    if (c_pre->parsed()) return cmd_preprocess(data, out_dir, pre_flags, out);
    if (c_train->parsed()) return cmd_train(data, out_dir, train_flags, out, err);
    if (c_loso->parsed()) return cmd_loso(data, out_dir, loso_flags, jobs, out, err);
    if (c_cmp->parsed()) return cmd_compare(compare_files, out_dir, out);
    if (c_inspect->parsed()) return cmd_inspect(inspect_flags, data, out);
  } catch (const ConfigError& e) {
    err << "error (config): " << e.what() << "\n";
    return kConfig;
  } catch (const ArgumentError& e) {
    err << "error (usage): " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "error (io): " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "error (format): " << e.what() << "\n";
    return kFormat;
  } catch (const NumericError& e) {
    err << "error (numeric): " << e.what() << "\n";
    return kNumeric;
  } catch (const DegenerateInputError& e) {
    err << "error (numeric): " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error (internal): " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

}  // namespace depl::cli
