#include "sckd/datagen/session.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace sckd::datagen {

namespace {

constexpr double kBlobSigma = 1.2;       // cells
constexpr double kHeelRow = 13.0;
constexpr double kToeRow = 2.5;
constexpr double kBlobCol = 3.5;
constexpr double kPsiPerNewton = 0.026;  // peak-pixel pressure per Newton of GRF
constexpr int kDropoutCells = 4;

// Raised-cosine bump of half-width w centred at c.
double hump(double s, double c, double w) {
  const double d = std::abs(s - c);
  return d >= w ? 0.0 : 0.5 * (1.0 + std::cos(std::numbers::pi * d / w));
}

double speed_progress(double speed) { return (speed - kSpeedSlow) / (kSpeedFast - kSpeedSlow); }

// Stance-normalized vertical GRF profile in body weights: heel-strike and
// push-off peaks at 25% / 75% of stance bridged by a mid-stance valley.
double stance_shape(double s, double peak, double valley) {
  return peak * hump(s, 0.25, 0.25) + valley * hump(s, 0.5, 0.25) + 0.97 * peak * hump(s, 0.75, 0.25);
}

struct Step {
  double start = 0;   // s
  double stance = 0;  // s
  double amplitude = 1;
};

// Heel strikes for both feet; the right foot trails by half a stride.
std::array<std::vector<Step>, 2> plan_steps(const SubjectProfile& p, double speed, double duration_s,
                                            std::mt19937_64& rng) {
  const double stride = 2.0 / cadence_at(p, speed);
  const double stance_frac = stance_fraction_at(speed);
  const double peak_base = std::clamp(1.06 + 0.08 * speed_progress(speed), 1.06, 1.15);
  std::normal_distribution<double> jitter(0.0, 0.015);
  std::uniform_real_distribution<double> amp_jitter(-0.02, 0.02);
  std::uniform_real_distribution<double> phase(0.0, 1.0);

  std::array<std::vector<Step>, 2> steps;
  double t = -phase(rng) * stride;
  while (t < duration_s) {
    const double dur = stride * (1.0 + std::clamp(jitter(rng), -0.05, 0.05));
    const double stance = stance_frac * dur;
    const double left_amp = peak_base * (1.0 + p.asymmetry / 4.0) * (1.0 + amp_jitter(rng));
    const double right_amp = peak_base * (1.0 - p.asymmetry / 4.0) * (1.0 + amp_jitter(rng));
    steps[0].push_back({t, stance, left_amp});
    steps[1].push_back({t + 0.5 * dur, stance, right_amp});
    t += dur;
  }
  return steps;
}

std::array<std::uint8_t, kPixels> support_of(const FractionMask& m) {
  std::array<std::uint8_t, kPixels> s{};
  for (int i = 0; i < kPixels; ++i) s[i] = m.grid[i] > 0.0f ? 1 : 0;
  return s;
}

}  // namespace

double cadence_at(const SubjectProfile& profile, double speed) {
  return profile.cadence_base * std::pow(speed / 1.0, 0.35);
}

double stance_fraction_at(double speed) { return std::clamp(0.58 * std::pow(1.0 / speed, 0.05), 0.55, 0.59); }

RawSession synth_session(const SubjectProfile& profile, double speed, double duration_s, double rate_hz) {
  if (!(speed >= 0.5 && speed <= 2.0)) {
    throw std::invalid_argument("synth_session: speed " + std::to_string(speed) + " m/s outside [0.5, 2.0]");
  }
  if (!(rate_hz > 0.0)) throw std::invalid_argument("synth_session: rate must be positive");
  const double cycle_s = 2.0 / cadence_at(profile, speed);
  if (duration_s * rate_hz < cycle_s * rate_hz) {
    throw std::invalid_argument("synth_session: duration " + std::to_string(duration_s) +
                                " s is shorter than one gait cycle (" + std::to_string(cycle_s) + " s)");
  }

  std::mt19937_64 rng(profile.rng_seed ^ static_cast<std::uint64_t>(std::llround(speed * 1000.0)));
  const auto steps = plan_steps(profile, speed, duration_s, rng);

  RawSession s;
  s.rate_hz = rate_hz;
  s.speed = speed;
  s.profile = profile;
  s.samples = static_cast<int>(std::llround(duration_s * rate_hz));
  const auto n_samples = static_cast<std::size_t>(s.samples);
  s.grf.assign(2 * n_samples, 0.0);
  s.stance.assign(2 * n_samples, 0);
  s.insole.assign(2 * n_samples * kPixels, 0.0f);

  const double weight_n = profile.body_weight * kGravity;
  for (int foot = 0; foot < 2; ++foot) {
    std::size_t k = 0;
    const auto& plan = steps[foot];
    for (std::size_t n = 0; n < n_samples; ++n) {
      const double t = static_cast<double>(n) / rate_hz;
      while (k + 1 < plan.size() && plan[k + 1].start <= t) ++k;
      const Step& st = plan[k];
      const double s_phase = (t - st.start) / st.stance;
      if (t >= st.start && s_phase < 1.0) {
        const double valley = 0.76 - 0.08 * speed_progress(speed);
        s.grf[foot * n_samples + n] = weight_n * stance_shape(s_phase, st.amplitude, valley);
        s.stance[foot * n_samples + n] = 1;
      }
    }
  }

  // Insole rendering: pressure blob travelling heel -> toe, scaled by GRF.
  const FractionMask left = fraction_mask();
  const std::array<FractionMask, 2> masks{left, left.mirrored()};
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int foot = 0; foot < 2; ++foot) {
    const auto support = support_of(masks[foot]);
    std::vector<int> candidates;
    for (int r = 0; r < kRows; ++r) {
      for (int c : {0, 1, 6, 7}) {
        if (support[r * kCols + c]) candidates.push_back(r * kCols + c);
      }
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    std::array<std::uint8_t, kPixels> dropped{};
    for (int i = 0; i < kDropoutCells && i < static_cast<int>(candidates.size()); ++i) dropped[candidates[i]] = 1;

    const auto& plan = steps[foot];
    std::size_t k = 0;
    for (std::size_t n = 0; n < n_samples; ++n) {
      const double t = static_cast<double>(n) / rate_hz;
      while (k + 1 < plan.size() && plan[k + 1].start <= t) ++k;
      const double force = s.grf[foot * n_samples + n];
      const double s_phase = std::clamp((t - plan[k].start) / plan[k].stance, 0.0, 1.0);
      const double row_c = kHeelRow + (kToeRow - kHeelRow) * s_phase;
      const double gain = 1.0 + profile.drift_rate * t / 60.0;
      float* frame = s.insole.data() + (foot * n_samples + n) * kPixels;
      for (int r = 0; r < kRows; ++r) {
        for (int c = 0; c < kCols; ++c) {
          const int idx = r * kCols + c;
          if (!support[idx]) continue;
          double v = 0.0;
          if (force > 0.0) {
            const double d2 = (r - row_c) * (r - row_c) + (c - kBlobCol) * (c - kBlobCol);
            v = kPsiPerNewton * force * std::exp(-d2 / (2.0 * kBlobSigma * kBlobSigma));
          }
          v = v * gain + (profile.noise_level > 0.0 ? profile.noise_level * noise(rng) : 0.0);
          if (dropped[idx]) v = 0.0;
          frame[idx] = static_cast<float>(std::clamp(v, 0.0, kInsoleMaxPsi));
        }
      }
    }
  }
  return s;
}

}  // namespace sckd::datagen
