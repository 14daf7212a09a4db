#include "sckd/datagen/profile.hpp"

#include <algorithm>
#include <random>

namespace sckd::datagen {

SubjectProfile make_profile(std::uint64_t seed, int subject_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(subject_id), 0x9e3779b9u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> weight(64.0, 6.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SubjectProfile p;
  p.subject_id = subject_id;
  p.body_weight = std::clamp(weight(rng), 45.0, 95.0);
  p.cadence_base = 1.65 + 0.30 * unit(rng);
  p.asymmetry = -0.08 + 0.16 * unit(rng);
  p.noise_level = 0.2 + 0.4 * unit(rng);
  p.drift_rate = 0.02 * unit(rng);
  p.rng_seed = rng();
  return p;
}

}  // namespace sckd::datagen
