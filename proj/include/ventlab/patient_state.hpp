#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

namespace ventlab {

/// Observed clinical channels, in storage order. Ventilator settings are not
/// channels; they live in MechanicsObservation.
enum class Channel : std::size_t {
  age, sex, weight,
  hr, sbp, dbp, map, temp, spo2, rr_measured,
  ph, pao2, paco2,
  lactate, na, k, cl, hco3, creatinine, bun, hb, wbc, platelets, gcs,
};

inline constexpr std::size_t kStateDim = 24;

struct ChannelInfo {
  std::string_view name;
  double normal_lo;  // textbook normal band, used for default noise scale
  double normal_hi;
  double clamp_lo;   // physiologic bounds applied after noise
  double clamp_hi;
  bool noisy;        // demographics carry no process noise
};

inline constexpr std::array<ChannelInfo, kStateDim> kChannels{{
    {"age", 18, 90, 18, 100, false},
    {"sex", 0, 1, 0, 1, false},
    {"weight", 50, 100, 30, 200, false},
    {"hr", 60, 100, 20, 220, true},
    {"sbp", 90, 140, 40, 260, true},
    {"dbp", 60, 90, 20, 160, true},
    {"map", 70, 105, 25, 200, true},
    {"temp", 36.1, 37.8, 30, 43, true},
    {"spo2", 0.94, 1.0, 0.01, 1.0, true},
    {"rr_measured", 12, 20, 4, 60, true},
    {"ph", 7.35, 7.45, 6.7, 7.8, true},
    {"pao2", 80, 100, 15, 700, true},
    {"paco2", 35, 45, 10, 150, true},
    {"lactate", 0.5, 2.0, 0.1, 25, true},
    {"na", 135, 145, 100, 190, true},
    {"k", 3.5, 5.0, 1.5, 9, true},
    {"cl", 98, 106, 70, 140, true},
    {"hco3", 22, 28, 5, 60, true},
    {"creatinine", 0.6, 1.2, 0.1, 15, true},
    {"bun", 7, 20, 1, 200, true},
    {"hb", 12, 17, 3, 22, true},
    {"wbc", 4, 11, 0.1, 100, true},
    {"platelets", 150, 400, 5, 1200, true},
    {"gcs", 3, 15, 3, 15, true},
}};

constexpr std::size_t index_of(Channel c) { return static_cast<std::size_t>(c); }

/// 24-channel observed clinical state vector.
struct PatientState {
  std::array<double, kStateDim> values{};

  double& operator[](Channel c) { return values[index_of(c)]; }
  double operator[](Channel c) const { return values[index_of(c)]; }
  std::span<const double, kStateDim> span() const { return values; }

  bool operator==(const PatientState&) const = default;
};

/// Default per-channel noise std: 2% of each channel's normal band.
inline std::array<double, kStateDim> default_noise_std() {
  std::array<double, kStateDim> out{};
  for (std::size_t i = 0; i < kStateDim; ++i) {
    const auto& c = kChannels[i];
    out[i] = c.noisy ? 0.02 * (c.normal_hi - c.normal_lo) : 0.0;
  }
  return out;
}

}  // namespace ventlab
