#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <string>

namespace ventlab {

struct IeRatio {
  int insp = 1;
  int exp = 2;
  bool operator==(const IeRatio&) const = default;
};

inline constexpr std::array<double, 6> kPeepGrid{5, 8, 10, 12, 15, 18};
inline constexpr std::array<double, 8> kFio2Grid{0.30, 0.40, 0.45, 0.50, 0.55, 0.60, 0.80, 1.00};
inline constexpr std::array<double, 7> kRrGrid{10, 12, 14, 16, 18, 20, 22};
inline constexpr std::array<IeRatio, 5> kIeGrid{{{1, 4}, {1, 3}, {1, 2}, {1, 1}, {2, 1}}};
inline constexpr std::array<double, 8> kPventGrid{5, 8, 10, 12, 15, 18, 22, 25};

/// Bin counts per dimension in codec order (peep, fio2, rr, ie, pvent).
inline constexpr std::array<int, 5> kActionRadix{6, 8, 7, 5, 8};
inline constexpr int kNumActions = 6 * 8 * 7 * 5 * 8;
static_assert(kNumActions == 13440);

enum class ActionDim : int { peep = 0, fio2 = 1, rr = 2, ie = 3, pvent = 4 };

/// Ventilator settings for one 2-hour step, as grid values.
struct Action {
  double peep_cmH2O = kPeepGrid[0];
  double fio2 = kFio2Grid[0];
  double rr_per_min = kRrGrid[0];
  IeRatio ie = kIeGrid[0];
  double pvent_cmH2O = kPventGrid[0];

  double pip_cmH2O() const { return peep_cmH2O + pvent_cmH2O; }
  bool operator==(const Action&) const = default;
};

/// Flat index into the 13,440-cell action grid.
struct ActionIndex {
  int value = 0;
  auto operator<=>(const ActionIndex&) const = default;
};

/// Per-dimension bin indices of an action.
using ActionBins = std::array<int, 5>;

ActionBins to_bins(const Action& a);           // throws CodecError when off-grid
Action from_bins(const ActionBins& bins);      // throws CodecError when out of range

ActionIndex encode_action(const Action& a);
Action decode_action(ActionIndex i);

ActionIndex encode_bins(const ActionBins& bins);
ActionBins decode_bins(ActionIndex i);

std::string to_string(const Action& a);

}  // namespace ventlab
