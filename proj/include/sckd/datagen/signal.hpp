#pragma once

#include <span>
#include <vector>

namespace sckd::datagen {

/// Second-order section in transposed direct form II, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

/// Second-order Butterworth low-pass via the bilinear transform with prewarping.
/// Throws std::invalid_argument unless 0 < cutoff < rate / 2.
Biquad butterworth_lowpass(double cutoff_hz, double rate_hz);

/// Causal single pass with the given initial state.
std::vector<double> biquad_filter(const Biquad& f, std::span<const double> x, double z1, double z2);

/// Forward-backward (zero net phase) second-order Butterworth low-pass.
/// Edges are extended by odd reflection and the filter state starts at its
/// step-response steady state, so a constant input is returned unchanged.
std::vector<double> zero_lag_lowpass(std::span<const double> signal, double cutoff_hz, double rate_hz);

/// Rate conversion to a lower (or equal) rate. Output length is
/// floor(len * to / from); samples are linearly interpolated. An anti-aliasing
/// zero-lag low-pass at 0.4 * to_rate is applied first when from > 2 * to.
std::vector<double> resample_to(std::span<const double> signal, double from_rate, double to_rate);

}  // namespace sckd::datagen
