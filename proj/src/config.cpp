#include "depl/config.hpp"

#include "depl/error.hpp"
#include "depl/hash.hpp"
#include "depl/io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace depl {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v, const char* want) {
  throw ConfigError("config: '" + key + "' = '" + v + "' is not " + want);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) {
    bad_value(key, v, std::is_floating_point_v<T> ? "a number" : "a non-negative integer");
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Key table: one reader and one writer per "section.key".
struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> read;
  std::function<std::string(const RunConfig&)> write;
};

template <typename T>
Field number_field(T RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_number<T>(k, v); },
          [m](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*m);
            } else {
              return std::to_string(c.*m);
            }
          }};
}

template <typename S, typename T>
Field nested_number(S RunConfig::*outer, T S::*inner) {
  return {[=](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*outer).*inner = parse_number<T>(k, v);
          },
          [=](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double((c.*outer).*inner);
            } else {
              return std::to_string((c.*outer).*inner);
            }
          }};
}

// Ordered so that format_config emits a stable layout.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"preprocess.filter_order", number_field(&RunConfig::filter_order)},
      {"preprocess.window_len", number_field(&RunConfig::window_len)},
      {"preprocess.smooth_d", number_field(&RunConfig::smooth_d)},
      {"preprocess.threshold", number_field(&RunConfig::threshold)},
      {"model.kind",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.model = parse_model(v); },
        [](const RunConfig& c) { return std::string(model_name(c.model)); }}},
      {"model.preset",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.preset = v; },
        [](const RunConfig& c) { return c.preset; }}},
      {"model.band",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.band = parse_band(v); },
        [](const RunConfig& c) { return std::string(band_name(c.band)); }}},
      {"model.se_ratio", number_field(&RunConfig::se_ratio)},
      {"model.keep_prob", number_field(&RunConfig::keep_prob)},
      {"model.layers",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.layers = v; },
        [](const RunConfig& c) { return c.layers; }}},
      {"model.knn_k", number_field(&RunConfig::knn_k)},
      {"model.layout",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.layout = v; },
        [](const RunConfig& c) { return c.layout; }}},
      {"train.learning_rate", nested_number(&RunConfig::train, &nn::TrainConfig::learning_rate)},
      {"train.batch_size", nested_number(&RunConfig::train, &nn::TrainConfig::batch_size)},
      {"train.epochs", nested_number(&RunConfig::train, &nn::TrainConfig::epochs)},
      {"train.beta1", nested_number(&RunConfig::train, &nn::TrainConfig::beta1)},
      {"train.beta2", nested_number(&RunConfig::train, &nn::TrainConfig::beta2)},
      {"train.epsilon", nested_number(&RunConfig::train, &nn::TrainConfig::epsilon)},
      {"train.l2", nested_number(&RunConfig::train, &nn::TrainConfig::l2)},
      {"logreg.learning_rate", nested_number(&RunConfig::logreg, &LogRegConfig::learning_rate)},
      {"logreg.epochs", nested_number(&RunConfig::logreg, &LogRegConfig::epochs)},
      {"logreg.l2", nested_number(&RunConfig::logreg, &LogRegConfig::l2)},
      {"eval.task",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.task = parse_task(v); },
        [](const RunConfig& c) { return std::string(task_name(c.task)); }}},
      {"eval.seed", number_field(&RunConfig::seed)},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return &f;
  }
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  if (filter_order < 2 || filter_order % 2 != 0) {
    throw ConfigError("config: preprocess.filter_order must be even and >= 2");
  }
  if (window_len < 2) throw ConfigError("config: preprocess.window_len must be >= 2");
  if (smooth_d < 1) throw ConfigError("config: preprocess.smooth_d must be >= 1");
  if (!std::isfinite(threshold)) throw ConfigError("config: preprocess.threshold must be finite");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ConfigError("config: model.keep_prob must be in (0, 1]");
  }
  if (knn_k < 1) throw ConfigError("config: model.knn_k must be >= 1");
  train.validate();
  if (!(logreg.learning_rate >= 0.0) || !(logreg.l2 >= 0.0) || logreg.epochs == 0) {
    throw ConfigError("config: logreg settings must be non-negative with epochs >= 1");
  }
  if (model == ModelKind::Depl) nn::param_count(network_config(*this));
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig c;
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw ConfigError("config: key '" + section + "' must be inside a section");
    }
    for (const auto& [key, value] : entries) {
      const std::string full = section + "." + key;
      const Field* f = find_field(full);
      if (!f) throw ConfigError("config: unknown key '" + full + "'");
      f->read(c, full, trim(value.data()));
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_text_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const RunConfig& c) {
  std::string out;
  std::string section;
  for (const auto& [key, f] : fields()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out += "\n";
      out += "[" + s + "]\n";
      section = s;
    }
    out += key.substr(dot + 1) + " = " + f.write(c) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& c) { return fnv1a(format_config(c)); }

std::uint64_t preprocess_hash(const RunConfig& c) {
  std::string text;
  for (const auto& [key, f] : fields()) {
    if (key.starts_with("preprocess.")) text += key + "=" + f.write(c) + "\n";
  }
  return fnv1a(text);
}

PreprocessConfig preprocess_config(const RunConfig& c, double sample_rate_hz) {
  PreprocessConfig p;
  p.filters = design_filter_bank(sample_rate_hz, c.filter_order);
  p.window_len = c.window_len;
  p.smooth_d = c.smooth_d;
  return p;
}

nn::NetworkConfig network_config(const RunConfig& c) {
  if (!c.layers.empty()) return nn::parse_layers("custom", {kGridSize, kGridSize, 1}, c.layers);
  return nn::preset(c.preset, 1, c.keep_prob, c.se_ratio);
}

ModelSpec model_spec(const RunConfig& c) {
  ModelSpec m;
  m.kind = c.model;
  m.band = c.band;
  m.network = network_config(c);
  m.train = c.train;
  m.knn_k = c.knn_k;
  m.logreg = c.logreg;
  return m;
}

ElectrodeLayout electrode_layout(const RunConfig& c) {
  return c.layout.empty() ? standard_layout() : load_layout(c.layout);
}

EvalConfig eval_config(const RunConfig& c) {
  EvalConfig e;
  e.task = c.task;
  e.seed = c.seed;
  e.layout = electrode_layout(c);
  return e;
}

}  // namespace depl
