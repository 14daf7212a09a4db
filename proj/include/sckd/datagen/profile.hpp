#pragma once

#include <cstdint>

namespace sckd::datagen {

inline constexpr double kGravity = 9.81;

/// Per-subject generator parameters. Same (seed, subject_id) always yields the same profile.
struct SubjectProfile {
  int subject_id = 0;
  double body_weight = 64.0;   // kg, in [45, 95]
  double cadence_base = 1.8;   // steps/s at 1.0 m/s
  double asymmetry = 0.0;      // [-0.2, 0.2], left/right load imbalance
  double noise_level = 0.3;    // psi, additive sensor noise sigma
  double drift_rate = 0.0;     // fractional gain drift per minute
  std::uint64_t rng_seed = 0;

  friend bool operator==(const SubjectProfile&, const SubjectProfile&) = default;
};

SubjectProfile make_profile(std::uint64_t seed, int subject_id);

}  // namespace sckd::datagen
