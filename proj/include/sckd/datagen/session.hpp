#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sckd/datagen/fraction.hpp"
#include "sckd/datagen/profile.hpp"

namespace sckd::datagen {

inline constexpr double kInsoleMaxPsi = 30.0;
inline constexpr double kDefaultRateHz = 200.0;

/// One treadmill session: paired GRF (Newtons) and insole frames (psi).
/// Layouts are foot-major: grf[f * samples + n], insole[(f * samples + n) * 128 + pixel].
struct RawSession {
  double rate_hz = kDefaultRateHz;
  double speed = 1.0;  // m/s
  SubjectProfile profile;
  int samples = 0;
  std::vector<double> grf;
  std::vector<float> insole;
  std::vector<std::uint8_t> stance;  // ground-contact indicator, same layout as grf

  std::span<const double> grf_foot(int foot) const {
    return {grf.data() + static_cast<std::size_t>(foot) * samples, static_cast<std::size_t>(samples)};
  }
  std::span<const float> frame(int foot, int n) const {
    return {insole.data() + (static_cast<std::size_t>(foot) * samples + n) * kPixels, kPixels};
  }
};

/// Walking speeds of the four recorded conditions (m/s).
inline constexpr double kSpeedSlow = 0.88;
inline constexpr double kSpeedRegular = 1.00;
inline constexpr double kSpeedBrisk = 1.25;
inline constexpr double kSpeedFast = 1.50;

/// Steps per second for a profile at a walking speed; increasing in speed.
double cadence_at(const SubjectProfile& profile, double speed);

/// Fraction of the gait cycle spent in stance; decreasing in speed, below 0.6.
double stance_fraction_at(double speed);

/// Synthesizes a session. Throws std::invalid_argument for speed outside
/// [0.5, 2.0] m/s, non-positive rate, or a duration shorter than one gait cycle.
RawSession synth_session(const SubjectProfile& profile, double speed, double duration_s,
                         double rate_hz = kDefaultRateHz);

}  // namespace sckd::datagen
