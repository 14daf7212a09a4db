#pragma once

#include <cmath>
#include <cstddef>

#include "sckd/tensor.hpp"

namespace sckd::models {

/// Mean over the trailing spatial axes: b x c x t x h x w -> b x c x t.
template <typename T>
BasicTensor<T> spatial_average_pool(const BasicTensor<T>& x) {
  if (x.rank() == 3) return x;
  if (x.rank() != 5) throw ShapeError("spatial_average_pool: expected rank 5, got " + shape_str(x.shape()));
  const int b = x.dim(0), c = x.dim(1), t = x.dim(2);
  const std::size_t hw = static_cast<std::size_t>(x.dim(3)) * x.dim(4);
  if (hw == 0) throw ShapeError("spatial_average_pool: empty spatial extent");
  BasicTensor<T> out({b, c, t});
  const T* src = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    T acc = 0;
    for (std::size_t k = 0; k < hw; ++k) acc += src[i * hw + k];
    out[i] = acc / static_cast<T>(hw);
  }
  return out;
}

/// Adjoint of spatial_average_pool: spreads each b x c x t gradient evenly over h x w.
template <typename T>
BasicTensor<T> spatial_average_pool_backward(const BasicTensor<T>& grad, const Shape& input_shape) {
  if (input_shape.size() == 3) return grad;
  BasicTensor<T> out(input_shape);
  const std::size_t hw = static_cast<std::size_t>(input_shape[3]) * input_shape[4];
  const T scale = T(1) / static_cast<T>(hw);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    for (std::size_t k = 0; k < hw; ++k) out[i * hw + k] = grad[i] * scale;
  }
  return out;
}

namespace detail {

struct ResizeTap {
  int lo;
  int hi;
  double frac;
};

inline ResizeTap resize_tap(int j, int t_in, int t_out) {
  const double pos = t_out == 1 ? 0.0 : static_cast<double>(j) * (t_in - 1) / (t_out - 1);
  int lo = static_cast<int>(std::floor(pos));
  if (lo >= t_in - 1) return {t_in - 1, t_in - 1, 0.0};
  return {lo, lo + 1, pos - lo};
}

}  // namespace detail

/// Linear interpolation along axis 2 with endpoints preserved. Accepts
/// b x c x t or b x c x t x h x w (each (h, w) position resized independently).
template <typename T>
BasicTensor<T> temporal_resize(const BasicTensor<T>& x, int t_new) {
  if (x.rank() != 3 && x.rank() != 5) throw ShapeError("temporal_resize: expected rank 3 or 5, got " + shape_str(x.shape()));
  const int t = x.dim(2);
  if (t_new < 2 || t < 2) throw std::invalid_argument("temporal_resize: temporal lengths must be >= 2");
  if (t_new == t) return x;
  Shape s = x.shape();
  s[2] = t_new;
  BasicTensor<T> out(s);
  const std::size_t outer = static_cast<std::size_t>(x.dim(0)) * x.dim(1);
  const std::size_t inner = x.rank() == 5 ? static_cast<std::size_t>(x.dim(3)) * x.dim(4) : 1;
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = x.data() + o * t * inner;
    T* dst = out.data() + o * t_new * inner;
    for (int j = 0; j < t_new; ++j) {
      const auto tap = detail::resize_tap(j, t, t_new);
      const T f = static_cast<T>(tap.frac);
      for (std::size_t k = 0; k < inner; ++k) {
        dst[j * inner + k] = (T(1) - f) * src[tap.lo * inner + k] + f * src[tap.hi * inner + k];
      }
    }
  }
  return out;
}

/// Adjoint of temporal_resize for a gradient of the resized tensor.
template <typename T>
BasicTensor<T> temporal_resize_backward(const BasicTensor<T>& grad, int t_in) {
  const int t_new = grad.dim(2);
  if (t_new == t_in) return grad;
  Shape s = grad.shape();
  s[2] = t_in;
  BasicTensor<T> out(s);
  const std::size_t outer = static_cast<std::size_t>(grad.dim(0)) * grad.dim(1);
  const std::size_t inner = grad.rank() == 5 ? static_cast<std::size_t>(grad.dim(3)) * grad.dim(4) : 1;
  for (std::size_t o = 0; o < outer; ++o) {
    const T* g = grad.data() + o * t_new * inner;
    T* dst = out.data() + o * t_in * inner;
    for (int j = 0; j < t_new; ++j) {
      const auto tap = detail::resize_tap(j, t_in, t_new);
      const T f = static_cast<T>(tap.frac);
      for (std::size_t k = 0; k < inner; ++k) {
        dst[tap.lo * inner + k] += (T(1) - f) * g[j * inner + k];
        dst[tap.hi * inner + k] += f * g[j * inner + k];
      }
    }
  }
  return out;
}

}  // namespace sckd::models
