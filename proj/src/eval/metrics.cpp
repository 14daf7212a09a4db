#include "sckd/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sckd/losses/losses.hpp"

namespace sckd::eval {

namespace {

std::vector<double> to_double(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<double> channel(const Tensor& x, int ch) {
  const int b = x.dim(0), c = x.dim(1), t = x.dim(2);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(b) * t);
  for (int i = 0; i < b; ++i) {
    const float* src = x.data() + (static_cast<std::size_t>(i) * c + ch) * t;
    out.insert(out.end(), src, src + t);
  }
  return out;
}

}  // namespace

PointMetrics point_metrics(std::span<const double> y_hat, std::span<const double> y_gt) {
  if (y_hat.size() != y_gt.size()) throw ShapeError("point_metrics: length mismatch");
  if (y_hat.empty()) throw ShapeError("point_metrics: empty input");
  const double n = static_cast<double>(y_hat.size());
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    const double d = y_hat[i] - y_gt[i];
    se += d * d;
    ae += std::abs(d);
  }
  return {std::sqrt(se / n) * 100.0, ae / n * 100.0, losses::pearson(y_hat, y_gt) * 100.0};
}

PointMetrics point_metrics(const Tensor& y_hat, const Tensor& y_gt) {
  require_same_shape(y_hat.shape(), y_gt.shape(), "point_metrics");
  const auto a = to_double(y_hat), b = to_double(y_gt);
  return point_metrics(a, b);
}

double per_window_r(const Tensor& y_hat, const Tensor& y_gt) {
  require_same_shape(y_hat.shape(), y_gt.shape(), "per_window_r");
  if (y_hat.rank() != 3 || y_hat.empty()) throw ShapeError("per_window_r: expected non-empty b x c x t");
  const int t = y_hat.dim(2);
  const std::size_t rows = y_hat.size() / static_cast<std::size_t>(t);
  double acc = 0.0;
  std::vector<double> a(t), b(t);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(y_hat.data() + r * t, y_hat.data() + (r + 1) * t, a.begin());
    std::copy(y_gt.data() + r * t, y_gt.data() + (r + 1) * t, b.begin());
    acc += losses::pearson(a, b);
  }
  return acc / static_cast<double>(rows) * 100.0;
}

double ece(std::span<const double> pred, std::span<const double> truth, int bins) {
  if (pred.size() != truth.size()) throw ShapeError("ece: length mismatch");
  if (pred.empty()) throw std::invalid_argument("ece: empty input");
  if (bins < 1) throw std::invalid_argument("ece: bins must be >= 1");
  std::vector<double> sp(bins, 0.0), st(bins, 0.0);
  std::vector<std::size_t> n(bins, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int b = std::clamp(static_cast<int>(std::floor(pred[i] * bins)), 0, bins - 1);
    sp[b] += pred[i];
    st[b] += truth[i];
    ++n[b];
  }
  double e = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (n[b] == 0) continue;
    const double nb = static_cast<double>(n[b]);
    e += nb / static_cast<double>(pred.size()) * std::abs(sp[b] / nb - st[b] / nb);
  }
  return e * 100.0;
}

Calibration calibration_error(const Tensor& y_hat, const Tensor& y_gt, int bins) {
  require_same_shape(y_hat.shape(), y_gt.shape(), "calibration_error");
  if (y_hat.rank() != 3 || y_hat.dim(1) != 2) throw ShapeError("calibration_error: expected b x 2 x t");
  if (y_hat.empty()) throw std::invalid_argument("calibration_error: empty input");
  Calibration c;
  c.left = ece(channel(y_hat, 0), channel(y_gt, 0), bins);
  c.right = ece(channel(y_hat, 1), channel(y_gt, 1), bins);
  c.avg = 0.5 * (c.left + c.right);
  return c;
}

}  // namespace sckd::eval
