#include "ventlab/action.hpp"

#include <cmath>
#include <sstream>

#include "ventlab/error.hpp"

namespace ventlab {
namespace {

template <std::size_t N>
int find_bin(const std::array<double, N>& grid, double v, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (std::abs(grid[i] - v) <= 1e-9) return static_cast<int>(i);
  throw CodecError(std::string("off-grid ") + what + " value " + std::to_string(v));
}

int find_ie(const IeRatio& r) {
  for (std::size_t i = 0; i < kIeGrid.size(); ++i)
    if (kIeGrid[i] == r) return static_cast<int>(i);
  throw CodecError("off-grid I:E ratio " + std::to_string(r.insp) + ":" + std::to_string(r.exp));
}

}  // namespace

ActionBins to_bins(const Action& a) {
  return {find_bin(kPeepGrid, a.peep_cmH2O, "PEEP"), find_bin(kFio2Grid, a.fio2, "FiO2"),
          find_bin(kRrGrid, a.rr_per_min, "RR"), find_ie(a.ie),
          find_bin(kPventGrid, a.pvent_cmH2O, "Pvent")};
}

Action from_bins(const ActionBins& b) {
  for (std::size_t d = 0; d < b.size(); ++d)
    if (b[d] < 0 || b[d] >= kActionRadix[d])
      throw CodecError("bin index out of range in dimension " + std::to_string(d));
  Action a;
  a.peep_cmH2O = kPeepGrid[b[0]];
  a.fio2 = kFio2Grid[b[1]];
  a.rr_per_min = kRrGrid[b[2]];
  a.ie = kIeGrid[b[3]];
  a.pvent_cmH2O = kPventGrid[b[4]];
  return a;
}

ActionIndex encode_bins(const ActionBins& b) {
  int idx = 0;
  for (std::size_t d = 0; d < b.size(); ++d) {
    if (b[d] < 0 || b[d] >= kActionRadix[d])
      throw CodecError("bin index out of range in dimension " + std::to_string(d));
    idx = idx * kActionRadix[d] + b[d];
  }
  return ActionIndex{idx};
}

ActionBins decode_bins(ActionIndex i) {
  if (i.value < 0 || i.value >= kNumActions)
    throw CodecError("action index " + std::to_string(i.value) + " outside [0, 13440)");
  ActionBins b{};
  int rem = i.value;
  for (int d = static_cast<int>(b.size()) - 1; d >= 0; --d) {
    b[d] = rem % kActionRadix[d];
    rem /= kActionRadix[d];
  }
  return b;
}

ActionIndex encode_action(const Action& a) { return encode_bins(to_bins(a)); }
Action decode_action(ActionIndex i) { return from_bins(decode_bins(i)); }

std::string to_string(const Action& a) {
  std::ostringstream os;
  os << "PEEP=" << a.peep_cmH2O << " FiO2=" << a.fio2 << " RR=" << a.rr_per_min
     << " I:E=" << a.ie.insp << ":" << a.ie.exp << " Pvent=" << a.pvent_cmH2O;
  return os.str();
}

}  // namespace ventlab
