#include "depl/io.hpp"

#include "depl/error.hpp"
#include "depl/hash.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace depl {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

// Little-endian encoder into a byte string.
class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                      std::conditional_t<sizeof(T) == 8,
                                                                         std::int64_t,
                                                                         std::int32_t>,
                                                      T>>;
    auto u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<char>(u & 0xff));
      u = static_cast<U>(u >> 8);
    }
  }

  void put_raw(std::string_view s) { bytes_.append(s); }

  void put_string16(std::string_view s) {
    if (s.size() > 0xffff) throw ArgumentError("string too long for file header");
    put(static_cast<std::uint16_t>(s.size()));
    put_raw(s);
  }

  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

// Little-endian decoder that reports the offset of every failure.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get(std::string_view field) {
    using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                      std::conditional_t<sizeof(T) == 8,
                                                                         std::int64_t,
                                                                         std::int32_t>,
                                                      T>>;
    need(sizeof(T), field);
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u = static_cast<U>(u | static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i]))
                                 << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(u);
  }

  std::string_view get_raw(std::size_t n, std::string_view field) {
    need(n, field);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string get_string16(std::string_view field) {
    const auto n = get<std::uint16_t>(field);
    return std::string(get_raw(n, field));
  }

  void expect_magic(std::string_view magic) {
    const std::size_t at = pos_;
    if (get_raw(magic.size(), "magic") != magic) {
      throw FormatError(what_ + ": bad magic, expected '" + std::string(magic) + "'", at);
    }
  }

  void expect_version(std::uint16_t want) {
    const std::size_t at = pos_;
    const auto v = get<std::uint16_t>("version");
    if (v != want) {
      throw FormatError(what_ + ": unsupported version " + std::to_string(v) + " (expected " +
                            std::to_string(want) + ")",
                        at);
    }
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw FormatError(what_ + ": " + msg, at);
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) {
      fail(std::to_string(bytes_.size() - pos_) + " trailing bytes after the last field", pos_);
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, std::string_view field) const {
    if (bytes_.size() - pos_ < n) {
      fail("truncated while reading field '" + std::string(field) + "' (needs " +
               std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) + " left)",
           pos_);
    }
  }

  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string slurp(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

EegTrial decode_trial(std::string_view bytes, double threshold) {
  ByteReader r(bytes, "trial file");
  r.expect_magic("EEGT");
  r.expect_version(kTrialFormatVersion);

  EegTrial t;
  t.subject_id = r.get<std::int32_t>("subject_id");
  t.trial_id = r.get<std::int32_t>("trial_id");
  std::size_t at = r.pos();
  t.sample_rate_hz = r.get<double>("sample_rate_hz");
  if (!(t.sample_rate_hz > 0.0) || !std::isfinite(t.sample_rate_hz)) {
    r.fail("field 'sample_rate_hz' must be positive", at);
  }
  const auto baseline = r.get<std::uint64_t>("baseline_len_samples");
  t.ratings.valence = r.get<double>("valence");
  t.ratings.arousal = r.get<double>("arousal");

  at = r.pos();
  const auto channels = r.get<std::uint32_t>("channel_count");
  if (channels != kNumChannels) {
    r.fail("field 'channel_count' must be " + std::to_string(kNumChannels) + ", got " +
               std::to_string(channels),
           at);
  }
  for (std::uint32_t c = 0; c < channels; ++c) t.channel_names.push_back(r.get_string16("channel_name"));

  at = r.pos();
  const auto n = r.get<std::uint64_t>("sample_count");
  if (n == 0) r.fail("field 'sample_count' is zero", at);
  if (baseline >= n) {
    r.fail("field 'baseline_len_samples' (" + std::to_string(baseline) +
               ") must be below sample_count (" + std::to_string(n) + ")",
           at);
  }
  if (r.remaining() / 8 / channels < n) {
    r.fail("truncated sample block: header declares " + std::to_string(channels) + " x " +
               std::to_string(n) + " samples, " + std::to_string(r.remaining()) +
               " bytes remain",
           r.pos());
  }
  t.baseline_len_samples = static_cast<std::size_t>(baseline);
  t.samples = Matrix(channels, static_cast<std::size_t>(n));
  for (double& v : t.samples.data()) v = r.get<double>("samples");
  r.expect_end();
  t.labels = derive_labels(t.ratings, threshold);
  return t;
}

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return slurp(in);
}

}  // namespace

std::string read_text_file(const fs::path& path) { return read_file_bytes(path); }

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

// --- trials -----------------------------------------------------------------

void write_trial(std::ostream& out, const EegTrial& trial) {
  trial.validate();
  ByteWriter w;
  w.put_raw("EEGT");
  w.put(kTrialFormatVersion);
  w.put(trial.subject_id);
  w.put(trial.trial_id);
  w.put(trial.sample_rate_hz);
  w.put(static_cast<std::uint64_t>(trial.baseline_len_samples));
  w.put(trial.ratings.valence);
  w.put(trial.ratings.arousal);
  w.put(static_cast<std::uint32_t>(trial.channel_names.size()));
  for (const auto& name : trial.channel_names) w.put_string16(name);
  w.put(static_cast<std::uint64_t>(trial.num_samples()));
  for (double v : trial.samples.data()) w.put(v);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("trial write failed");
}

EegTrial read_trial(std::istream& in, double threshold) { return decode_trial(slurp(in), threshold); }

void export_trial(const EegTrial& trial, const fs::path& path) {
  std::ostringstream buf;
  write_trial(buf, trial);
  write_file_atomic(path, buf.str());
}

EegTrial import_trial(const fs::path& path, double threshold) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_trial(bytes, threshold);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

// --- manifest ---------------------------------------------------------------

namespace {

std::string join(const std::vector<std::string>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += v[i];
  }
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
T manifest_value(const pt::ptree& section, const std::string& key) {
  const auto v = section.get_optional<std::string>(key);
  if (!v) throw ConfigError("manifest: missing key 'dataset." + key + "'");
  std::istringstream in(*v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) {
    throw ConfigError("manifest: key 'dataset." + key + "' has invalid value '" + *v + "'");
  }
  return out;
}

}  // namespace

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out.precision(17);
  out << "[dataset]\n"
      << "name = " << m.name << "\n"
      << "subjects = " << m.subjects << "\n"
      << "trials_per_subject = " << m.trials_per_subject << "\n"
      << "sample_rate_hz = " << m.sample_rate_hz << "\n"
      << "baseline_len_samples = " << m.baseline_len_samples << "\n"
      << "label_threshold = " << m.label_threshold << "\n"
      << "channels = " << join(m.channels, ',') << "\n"
      << "\n[files]\n";
  for (std::size_t i = 0; i < m.files.size(); ++i) {
    char key[16];
    std::snprintf(key, sizeof key, "f%05zu", i);
    out << key << " = " << m.files[i] << "\n";
  }
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("manifest: " + e.message() + " at line " + std::to_string(e.line()));
  }
  static const std::set<std::string> known = {"name", "subjects", "trials_per_subject",
                                              "sample_rate_hz", "baseline_len_samples",
                                              "label_threshold", "channels"};
  for (const auto& [name, section] : tree) {
    if (name != "dataset" && name != "files") {
      throw ConfigError("manifest: unknown section [" + name + "]");
    }
  }
  const auto ds = tree.get_child_optional("dataset");
  if (!ds) throw ConfigError("manifest: missing [dataset] section");
  for (const auto& [key, v] : *ds) {
    if (!known.contains(key)) throw ConfigError("manifest: unknown key 'dataset." + key + "'");
  }
  DatasetManifest m;
  m.name = ds->get<std::string>("name", "dataset");
  m.subjects = manifest_value<std::size_t>(*ds, "subjects");
  m.trials_per_subject = manifest_value<std::size_t>(*ds, "trials_per_subject");
  m.sample_rate_hz = manifest_value<double>(*ds, "sample_rate_hz");
  m.baseline_len_samples = manifest_value<std::size_t>(*ds, "baseline_len_samples");
  m.label_threshold = manifest_value<double>(*ds, "label_threshold");
  m.channels = split_list(manifest_value<std::string>(*ds, "channels"));
  if (m.channels != canonical_channels()) {
    throw ConfigError("manifest: channel list must be the 32 canonical electrodes in order (got " +
                      std::to_string(m.channels.size()) + " entries)");
  }
  m.files.clear();
  if (const auto files = tree.get_child_optional("files")) {
    for (const auto& [key, v] : *files) m.files.push_back(v.data());
  }
  if (m.files.size() != m.subjects * m.trials_per_subject) {
    throw ConfigError("manifest: " + std::to_string(m.files.size()) + " files listed, expected " +
                      std::to_string(m.subjects) + " subjects x " +
                      std::to_string(m.trials_per_subject) + " trials");
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  write_file_atomic(path, format_manifest(m));
}

DatasetManifest read_manifest(const fs::path& path) {
  try {
    return parse_manifest(read_file_bytes(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Dataset load_dataset(const fs::path& dir, std::optional<double> threshold) {
  Dataset d;
  d.manifest = read_manifest(dir / kManifestName);
  if (threshold) d.manifest.label_threshold = *threshold;
  std::uint64_t h = kFnvOffset;
  std::set<std::pair<std::int32_t, std::int32_t>> ids;
  for (const auto& file : d.manifest.files) {
    const fs::path p = dir / file;
    const auto bytes = read_file_bytes(p);
    h = fnv1a(bytes, h);
    EegTrial t;
    try {
      t = decode_trial(bytes, d.manifest.label_threshold);
    } catch (const FormatError& e) {
      throw FormatError(p.string() + ": " + e.what(), e.offset());
    }
    auto mismatch = [&](const std::string& what) {
      throw ConfigError(p.string() + ": " + what + " disagrees with the manifest");
    };
    if (t.sample_rate_hz != d.manifest.sample_rate_hz) mismatch("sample rate");
    if (t.baseline_len_samples != d.manifest.baseline_len_samples) mismatch("baseline length");
    if (t.channel_names != d.manifest.channels) mismatch("channel list");
    if (!ids.insert({t.subject_id, t.trial_id}).second) {
      throw ConfigError(p.string() + ": duplicate (subject " + std::to_string(t.subject_id) +
                        ", trial " + std::to_string(t.trial_id) + ")");
    }
    d.trials.push_back(std::move(t));
  }
  d.content_hash = h;
  return d;
}

// --- feature cache ----------------------------------------------------------

namespace {

inline constexpr std::uint16_t kFeatureCacheVersion = 1;

void put_epochs(ByteWriter& w, std::span<const FeatureEpoch> epochs) {
  for (const auto& e : epochs) {
    w.put(e.subject_id);
    w.put(e.trial_id);
    w.put(e.epoch_index);
    w.put(static_cast<std::uint8_t>(e.labels.valence));
    w.put(static_cast<std::uint8_t>(e.labels.arousal));
    for (double v : e.values) w.put(v);
  }
}

}  // namespace

std::uint64_t features_hash(std::span<const FeatureEpoch> epochs) {
  ByteWriter w;
  put_epochs(w, epochs);
  return fnv1a(w.bytes());
}

void write_feature_cache(const FeatureCache& cache, const fs::path& path) {
  ByteWriter w;
  w.put_raw("DEPF");
  w.put(kFeatureCacheVersion);
  w.put(cache.preprocess_hash);
  w.put(cache.dataset_hash);
  w.put(static_cast<std::uint64_t>(cache.epochs.size()));
  ByteWriter body;
  put_epochs(body, cache.epochs);
  w.put_raw(body.bytes());
  w.put(fnv1a(body.bytes()));
  write_file_atomic(path, w.bytes());
}

FeatureCache read_feature_cache(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path.string());
  r.expect_magic("DEPF");
  r.expect_version(kFeatureCacheVersion);
  FeatureCache c;
  c.preprocess_hash = r.get<std::uint64_t>("preprocess_hash");
  c.dataset_hash = r.get<std::uint64_t>("dataset_hash");
  const auto n = r.get<std::uint64_t>("epoch_count");
  constexpr std::size_t kRecord = 3 * 4 + 2 + kFeatureDim * 8;
  if (r.remaining() < 8 || (r.remaining() - 8) / kRecord < n) {
    r.fail("truncated: " + std::to_string(n) + " epochs declared", r.pos());
  }
  const std::size_t body_start = r.pos();
  c.epochs.resize(static_cast<std::size_t>(n));
  for (auto& e : c.epochs) {
    e.subject_id = r.get<std::int32_t>("subject_id");
    e.trial_id = r.get<std::int32_t>("trial_id");
    e.epoch_index = r.get<std::int32_t>("epoch_index");
    e.labels.valence = r.get<std::uint8_t>("valence_label");
    e.labels.arousal = r.get<std::uint8_t>("arousal_label");
    for (double& v : e.values) v = r.get<double>("values");
  }
  const std::size_t body_end = r.pos();
  const auto stored = r.get<std::uint64_t>("content_hash");
  const auto actual =
      fnv1a(std::string_view(bytes).substr(body_start, body_end - body_start));
  if (stored != actual) {
    r.fail("content hash mismatch (stored " + hex64(stored) + ", computed " + hex64(actual) + ")",
           body_end);
  }
  r.expect_end();
  return c;
}

// --- parameters -------------------------------------------------------------

namespace {
inline constexpr std::uint16_t kParameterVersion = 1;
}

void write_parameters(std::ostream& out, const nn::ParameterSet& params) {
  ByteWriter w;
  w.put_raw("DEPW");
  w.put(kParameterVersion);
  w.put(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    w.put_string16(t.name);
    w.put(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.put(static_cast<std::uint64_t>(d));
  }
  for (const auto& t : params.tensors) {
    for (double v : t.value.values()) w.put(v);
  }
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("parameter write failed");
}

nn::ParameterSet read_parameters(std::istream& in) {
  const auto bytes = slurp(in);
  ByteReader r(bytes, "parameter file");
  r.expect_magic("DEPW");
  r.expect_version(kParameterVersion);
  const auto count = r.get<std::uint32_t>("tensor_count");
  std::vector<std::pair<std::string, nn::Shape>> table;
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.get_string16("tensor_name");
    const std::size_t at = r.pos();
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0 || rank > 4) r.fail("tensor '" + name + "' has rank " + std::to_string(rank), at);
    nn::Shape shape;
    for (unsigned k = 0; k < rank; ++k) shape.push_back(r.get<std::uint64_t>("dim"));
    total += nn::shape_size(shape);
    table.emplace_back(std::move(name), std::move(shape));
  }
  if (r.remaining() != total * 8) {
    r.fail("value block holds " + std::to_string(r.remaining()) + " bytes, shape table needs " +
               std::to_string(total * 8),
           r.pos());
  }
  nn::ParameterSet ps;
  for (auto& [name, shape] : table) {
    std::vector<double> values(nn::shape_size(shape));
    for (double& v : values) v = r.get<double>("values");
    ps.tensors.push_back({std::move(name), nn::Tensor(std::move(shape), std::move(values))});
  }
  return ps;
}

void save_parameters(const nn::ParameterSet& params, const fs::path& path) {
  std::ostringstream buf;
  write_parameters(buf, params);
  write_file_atomic(path, buf.str());
}

nn::ParameterSet load_parameters(const fs::path& path) {
  std::istringstream in(read_file_bytes(path));
  return read_parameters(in);
}

}  // namespace depl
