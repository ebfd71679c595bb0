#pragma once

#include "depl/features.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace depl {

inline constexpr std::size_t kGridSize = 9;

struct GridCell {
  int row = 0;  // front (0) to back (8)
  int col = 0;  // left (0) to right (8)

  auto operator<=>(const GridCell&) const = default;
};

// Electrode label -> cell on the 9x9 scalp grid. Labels are matched
// case-insensitively (stored upper case).
class ElectrodeLayout {
 public:
  ElectrodeLayout() = default;

  // Throws ConfigError on out-of-grid cells, duplicate labels or two labels
  // sharing a cell.
  explicit ElectrodeLayout(std::map<std::string, GridCell> cells);

  GridCell cell(std::string_view label) const;  // ConfigError if unknown
  bool contains(std::string_view label) const;
  std::size_t size() const { return cells_.size(); }
  const std::map<std::string, GridCell>& cells() const { return cells_; }

  // One "LABEL = row,col" line per electrode, sorted by label.
  std::string serialize() const;
  std::uint64_t hash() const;

 private:
  std::map<std::string, GridCell> cells_;
};

// The 32-electrode 10-20 projection onto the 9x9 grid.
const ElectrodeLayout& standard_layout();

// Parses "LABEL = row,col" lines; '#' starts a comment.
ElectrodeLayout parse_layout(std::string_view text);
ElectrodeLayout load_layout(const std::string& path);

// 9 x 9 x 4 tensor stored as (row, col, band), band fastest.
struct TopoFrame {
  std::int32_t subject_id = 0;
  std::int32_t trial_id = 0;
  std::int32_t epoch_index = 0;
  std::array<double, kGridSize * kGridSize * kNumBands> values{};

  static constexpr std::size_t index(std::size_t row, std::size_t col, Band band) {
    return (row * kGridSize + col) * kNumBands + static_cast<std::size_t>(band);
  }
  double at(std::size_t row, std::size_t col, Band band) const {
    return values[index(row, col, band)];
  }

  bool operator==(const TopoFrame&) const = default;
};

using BandPlane = std::array<double, kGridSize * kGridSize>;  // row-major

// Resolves a channel list against a layout once so that many epochs can be
// mapped cheaply.
class TopoMapper {
 public:
  TopoMapper(const ElectrodeLayout& layout, std::span<const std::string> channels);

  TopoFrame to_frame(const FeatureEpoch& epoch) const;
  FeatureVector from_frame(const TopoFrame& frame) const;
  std::span<const GridCell> channel_cells() const { return cells_; }

 private:
  std::vector<GridCell> cells_;
};

// Channel order defaults to canonical_channels().
TopoFrame to_topoframe(const FeatureEpoch& epoch, const ElectrodeLayout& layout);
TopoFrame to_topoframe(const FeatureEpoch& epoch, const ElectrodeLayout& layout,
                       std::span<const std::string> channels);
FeatureVector from_topoframe(const TopoFrame& frame, const ElectrodeLayout& layout);

BandPlane extract_band(const TopoFrame& frame, Band band);
void insert_band(TopoFrame& frame, Band band, const BandPlane& plane);

}  // namespace depl
