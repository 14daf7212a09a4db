#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sckd/losses/losses.hpp"

namespace gradcheck {

using sckd::TensorD;
using sckd::losses::Features;
using sckd::losses::Tap;

// ||a - n|| / max(||a||, ||n||), with n the central difference of f around x.
template <class F>
double rel_error(TensorD& x, const TensorD& analytic, F&& f, double h = 1e-5) {
  double num = 0, da = 0, dn = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    const double g = (up - down) / (2 * h);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    num += (a - g) * (a - g);
    da += a * a;
    dn += g * g;
  }
  const double scale = std::max(std::sqrt(std::max(da, dn)), 1e-8);
  return std::sqrt(num) / scale;
}

struct TapDims {
  int c, t, h, w;
};

// E1/E2 rank 5, Mid/D1/D2 rank 3; y_hat b x 2 x t_out
inline Features random_features(std::mt19937_64& rng, int b, const TapDims& enc, const TapDims& dec, int t_out) {
  Features f;
  f[Tap::E1] = oracle::random_tensor(rng, {b, enc.c, enc.t, enc.h, enc.w});
  f[Tap::E2] = oracle::random_tensor(rng, {b, enc.c, enc.t, enc.h, enc.w});
  f[Tap::Mid] = oracle::random_tensor(rng, {b, dec.c, dec.t});
  f[Tap::D1] = oracle::random_tensor(rng, {b, dec.c, dec.t});
  f[Tap::D2] = oracle::random_tensor(rng, {b, dec.c, dec.t});
  f.y_hat = oracle::random_tensor(rng, {b, 2, t_out}, 0.0, 1.0);
  return f;
}

}  // namespace gradcheck
