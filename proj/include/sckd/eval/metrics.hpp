#pragma once

#include <span>

#include "sckd/tensor.hpp"

namespace sckd::eval {

/// rmse and mae in x 10^-2 normalized units, r (Pearson over all elements) x 10^-2.
struct PointMetrics {
  double rmse = 0;
  double mae = 0;
  double r = 0;
};

/// Throws ShapeError on a length mismatch or empty input.
PointMetrics point_metrics(std::span<const double> y_hat, std::span<const double> y_gt);
PointMetrics point_metrics(const Tensor& y_hat, const Tensor& y_gt);

/// Mean over windows and channels of the per-row Pearson r (x 10^-2), b x c x t inputs.
double per_window_r(const Tensor& y_hat, const Tensor& y_gt);

/// Expected calibration error (percent) of one channel: predictions binned into
/// `bins` equal-width bins over [0, 1]; sum_b (n_b / N) |mean pred_b - mean true_b| * 100.
double ece(std::span<const double> pred, std::span<const double> truth, int bins = 10);

struct Calibration {
  double left = 0;
  double right = 0;
  double avg = 0;
};

/// ECE per foot for b x 2 x t tensors; avg is the mean of the two.
Calibration calibration_error(const Tensor& y_hat, const Tensor& y_gt, int bins = 10);

}  // namespace sckd::eval
