#include "ventlab/clinician.hpp"

#include <algorithm>

#include "ventlab/error.hpp"

namespace ventlab {
namespace {

void nudge(ActionBins& b, ActionDim dim, int delta) {
  const auto d = static_cast<std::size_t>(dim);
  b[d] = std::clamp(b[d] + delta, 0, kActionRadix[d] - 1);
}

}  // namespace

ActionBins clinician_ladder(const PatientState& s, const MechanicsObservation& mech,
                            const ClinicianTargets& t) {
  ActionBins b = to_bins(mech.settings);

  const double spo2 = s[Channel::spo2];
  if (spo2 < t.spo2_low) {
    nudge(b, ActionDim::fio2, +1);
    nudge(b, ActionDim::peep, +1);
  } else if (spo2 > t.spo2_high) {
    nudge(b, ActionDim::fio2, -1);
    nudge(b, ActionDim::peep, -1);
  }

  const double paco2 = s[Channel::paco2];
  if (paco2 > t.paco2_high) nudge(b, ActionDim::rr, +1);
  else if (paco2 < t.paco2_low) nudge(b, ActionDim::rr, -1);

  // Weight stands in for predicted body weight (no height channel).
  const double vt_per_kg = mech.tidal_volume_mL / std::max(s[Channel::weight], 1.0);
  if (vt_per_kg > t.vt_high_mL_per_kg) nudge(b, ActionDim::pvent, -1);
  else if (vt_per_kg < t.vt_low_mL_per_kg) nudge(b, ActionDim::pvent, +1);
  return b;
}

ActionIndex scripted_clinician(const PatientState& s, const MechanicsObservation& mech, double eps,
                               Rng& rng, const ClinicianTargets& t) {
  if (!(eps >= 0 && eps <= 1)) throw ContractError("clinician eps must lie in [0, 1]");
  ActionBins b = clinician_ladder(s, mech, t);
  // Both draws are always taken so the stream position does not depend on eps.
  const double u = uniform01(rng);
  const auto dim = std::uniform_int_distribution<int>(0, 4)(rng);
  const bool up = uniform01(rng) < 0.5;
  if (u < eps) {
    const int radix = kActionRadix[static_cast<std::size_t>(dim)];
    int& bin = b[static_cast<std::size_t>(dim)];
    if (bin == 0) bin = 1;
    else if (bin == radix - 1) bin = radix - 2;
    else bin += up ? 1 : -1;
  }
  return encode_bins(b);
}

}  // namespace ventlab
