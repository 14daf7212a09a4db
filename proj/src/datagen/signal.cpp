#include "sckd/datagen/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sckd::datagen {

Biquad butterworth_lowpass(double cutoff_hz, double rate_hz) {
  if (!(rate_hz > 0.0) || !(cutoff_hz > 0.0) || cutoff_hz >= 0.5 * rate_hz) {
    throw std::invalid_argument("butterworth_lowpass: cutoff " + std::to_string(cutoff_hz) +
                                " Hz must lie in (0, Nyquist) for rate " + std::to_string(rate_hz) + " Hz");
  }
  const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
  const double k2 = k * k;
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k2);
  Biquad f;
  f.b0 = k2 * norm;
  f.b1 = 2.0 * f.b0;
  f.b2 = f.b0;
  f.a1 = 2.0 * (k2 - 1.0) * norm;
  f.a2 = (1.0 - std::numbers::sqrt2 * k + k2) * norm;
  return f;
}

std::vector<double> biquad_filter(const Biquad& f, std::span<const double> x, double z1, double z2) {
  std::vector<double> y(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double out = f.b0 * x[n] + z1;
    z1 = f.b1 * x[n] - f.a1 * out + z2;
    z2 = f.b2 * x[n] - f.a2 * out;
    y[n] = out;
  }
  return y;
}

namespace {

// Steady-state TDF-II state for a unit step (unity DC gain assumed).
std::pair<double, double> step_state(const Biquad& f) {
  const double z2 = f.b2 - f.a2;
  const double z1 = f.b1 - f.a1 + z2;
  return {z1, z2};
}

}  // namespace

std::vector<double> zero_lag_lowpass(std::span<const double> signal, double cutoff_hz, double rate_hz) {
  const Biquad f = butterworth_lowpass(cutoff_hz, rate_hz);
  const std::size_t n = signal.size();
  if (n < 2) return {signal.begin(), signal.end()};

  // Odd reflection about each endpoint: 3 * (order + 1) samples, fewer for short inputs.
  const std::size_t pad = std::min<std::size_t>(9, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  const auto [s1, s2] = step_state(f);
  std::vector<double> fwd = biquad_filter(f, ext, s1 * ext.front(), s2 * ext.front());
  std::reverse(fwd.begin(), fwd.end());
  std::vector<double> bwd = biquad_filter(f, fwd, s1 * fwd.front(), s2 * fwd.front());
  std::reverse(bwd.begin(), bwd.end());
  return {bwd.begin() + static_cast<std::ptrdiff_t>(pad), bwd.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> resample_to(std::span<const double> signal, double from_rate, double to_rate) {
  if (!(from_rate > 0.0) || !(to_rate > 0.0)) {
    throw std::invalid_argument("resample_to: rates must be positive");
  }
  if (to_rate > from_rate) {
    throw std::invalid_argument("resample_to: upsampling is not supported (" + std::to_string(from_rate) +
                                " -> " + std::to_string(to_rate) + " Hz)");
  }
  if (to_rate == from_rate) return {signal.begin(), signal.end()};

  std::vector<double> src(signal.begin(), signal.end());
  if (from_rate > 2.0 * to_rate) src = zero_lag_lowpass(src, 0.4 * to_rate, from_rate);

  const double ratio = from_rate / to_rate;
  const auto count = static_cast<std::size_t>(
      std::floor(static_cast<double>(signal.size()) * (to_rate / from_rate) + 1e-9));
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto lo = static_cast<std::size_t>(std::floor(pos + 1e-9));
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= src.size() || frac < 1e-9) {
      out[i] = src[std::min(lo, src.size() - 1)];
    } else {
      out[i] = (1.0 - frac) * src[lo] + frac * src[lo + 1];
    }
  }
  return out;
}

}  // namespace sckd::datagen
