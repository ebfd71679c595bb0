#include "depl/topomap.hpp"

#include "depl/error.hpp"
#include "depl/hash.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace depl {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

ElectrodeLayout::ElectrodeLayout(std::map<std::string, GridCell> cells) {
  std::set<GridCell> used;
  for (const auto& [label, cell] : cells) {
    if (cell.row < 0 || cell.row >= static_cast<int>(kGridSize) || cell.col < 0 ||
        cell.col >= static_cast<int>(kGridSize)) {
      throw ConfigError("layout: cell for " + label + " lies outside the 9x9 grid");
    }
    if (!used.insert(cell).second) {
      throw ConfigError("layout: two electrodes map to cell (" + std::to_string(cell.row) +
                        "," + std::to_string(cell.col) + "), second is " + label);
    }
    if (!cells_.emplace(upper(label), cell).second) {
      throw ConfigError("layout: duplicate electrode label " + label);
    }
  }
}

GridCell ElectrodeLayout::cell(std::string_view label) const {
  const auto it = cells_.find(upper(label));
  if (it == cells_.end()) {
    throw ConfigError("layout: no grid cell for electrode '" + std::string(label) + "'");
  }
  return it->second;
}

bool ElectrodeLayout::contains(std::string_view label) const {
  return cells_.count(upper(label)) != 0;
}

std::string ElectrodeLayout::serialize() const {
  std::ostringstream os;
  for (const auto& [label, cell] : cells_) {
    os << label << " = " << cell.row << "," << cell.col << "\n";
  }
  return os.str();
}

std::uint64_t ElectrodeLayout::hash() const { return fnv1a(serialize()); }

const ElectrodeLayout& standard_layout() {
  static const ElectrodeLayout layout({
      {"FP1", {0, 3}}, {"FP2", {0, 5}},
      {"AF3", {1, 3}}, {"AF4", {1, 5}},
      {"F7", {2, 0}},  {"F3", {2, 2}},  {"FZ", {2, 4}},  {"F4", {2, 6}},  {"F8", {2, 8}},
      {"FC5", {3, 1}}, {"FC1", {3, 3}}, {"FC2", {3, 5}}, {"FC6", {3, 7}},
      {"T7", {4, 0}},  {"C3", {4, 2}},  {"CZ", {4, 4}},  {"C4", {4, 6}},  {"T8", {4, 8}},
      {"CP5", {5, 1}}, {"CP1", {5, 3}}, {"CP2", {5, 5}}, {"CP6", {5, 7}},
      {"P7", {6, 0}},  {"P3", {6, 2}},  {"PZ", {6, 4}},  {"P4", {6, 6}},  {"P8", {6, 8}},
      {"PO3", {7, 3}}, {"PO4", {7, 5}},
      {"O1", {8, 3}},  {"OZ", {8, 4}},  {"O2", {8, 5}},
  });
  return layout;
}

ElectrodeLayout parse_layout(std::string_view text) {
  std::map<std::string, GridCell> cells;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  while (offset <= text.size()) {
    const std::size_t end = std::min(text.find('\n', offset), text.size());
    std::string_view line = text.substr(offset, end - offset);
    ++line_no;
    offset = end + 1;
    if (const auto hash_pos = line.find('#'); hash_pos != std::string_view::npos) {
      line = line.substr(0, hash_pos);
    }
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    const auto comma = line.find(',', eq == std::string_view::npos ? 0 : eq);
    if (eq == std::string_view::npos || comma == std::string_view::npos) {
      throw ConfigError("layout line " + std::to_string(line_no) +
                        ": expected 'LABEL = row,col'");
    }
    const std::string label = upper(trim(line.substr(0, eq)));
    GridCell cell;
    try {
      cell.row = std::stoi(std::string(trim(line.substr(eq + 1, comma - eq - 1))));
      cell.col = std::stoi(std::string(trim(line.substr(comma + 1))));
    } catch (const std::exception&) {
      throw ConfigError("layout line " + std::to_string(line_no) + ": bad row/col for " +
                        label);
    }
    if (label.empty() || !cells.emplace(label, cell).second) {
      throw ConfigError("layout line " + std::to_string(line_no) +
                        ": empty or duplicate label '" + label + "'");
    }
  }
  return ElectrodeLayout(std::move(cells));
}

ElectrodeLayout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layout file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_layout(ss.str());
}

TopoMapper::TopoMapper(const ElectrodeLayout& layout, std::span<const std::string> channels) {
  if (channels.size() != kNumChannels) {
    throw ConfigError("topomap: expected 32 channels, got " + std::to_string(channels.size()));
  }
  std::set<GridCell> used;
  for (const auto& name : channels) {
    const GridCell c = layout.cell(name);
    if (!used.insert(c).second) throw ConfigError("topomap: channel " + name + " listed twice");
    cells_.push_back(c);
  }
}

TopoFrame TopoMapper::to_frame(const FeatureEpoch& epoch) const {
  TopoFrame frame;
  frame.subject_id = epoch.subject_id;
  frame.trial_id = epoch.trial_id;
  frame.epoch_index = epoch.epoch_index;
  for (Band b : kAllBands) {
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
      const GridCell c = cells_[ch];
      frame.values[TopoFrame::index(c.row, c.col, b)] = epoch.values[feature_index(b, ch)];
    }
  }
  return frame;
}

FeatureVector TopoMapper::from_frame(const TopoFrame& frame) const {
  FeatureVector v;
  for (Band b : kAllBands) {
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
      const GridCell c = cells_[ch];
      v[feature_index(b, ch)] = frame.values[TopoFrame::index(c.row, c.col, b)];
    }
  }
  return v;
}

TopoFrame to_topoframe(const FeatureEpoch& epoch, const ElectrodeLayout& layout) {
  return to_topoframe(epoch, layout, canonical_channels());
}

TopoFrame to_topoframe(const FeatureEpoch& epoch, const ElectrodeLayout& layout,
                       std::span<const std::string> channels) {
  return TopoMapper(layout, channels).to_frame(epoch);
}

FeatureVector from_topoframe(const TopoFrame& frame, const ElectrodeLayout& layout) {
  return TopoMapper(layout, canonical_channels()).from_frame(frame);
}

BandPlane extract_band(const TopoFrame& frame, Band band) {
  BandPlane plane;
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t c = 0; c < kGridSize; ++c) plane[r * kGridSize + c] = frame.at(r, c, band);
  }
  return plane;
}

void insert_band(TopoFrame& frame, Band band, const BandPlane& plane) {
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t c = 0; c < kGridSize; ++c) {
      frame.values[TopoFrame::index(r, c, band)] = plane[r * kGridSize + c];
    }
  }
}

}  // namespace depl
