#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sckd/datagen/dataset.hpp"
#include "sckd/models/network.hpp"
#include "sckd/training/config.hpp"

namespace sckd::eval {

/// Reads <run_dir>/config.resolved.json. Throws std::runtime_error if absent.
training::TrainConfig load_run_config(const std::filesystem::path& run_dir);

struct EvalOptions {
  std::filesystem::path run_dir;
  std::filesystem::path out_dir;  // receives report.json, report.md, predictions/
  /// Second run evaluated on the same folds for a per-subject paired comparison.
  std::optional<std::filesystem::path> compare_run;
  int batch_size = 64;
  int ece_bins = 10;
};

/// Evaluates every fold checkpoint of a run on its held-out subject. Writes
/// report.json, report.md and f32le predictions (n x 2 x t per fold/seed, plus
/// the ground truth per fold), and returns the report document. Throws
/// std::runtime_error when a fold checkpoint is missing.
nlohmann::json loso_evaluate(const EvalOptions& opts, const datagen::WindowedDataset& dataset);

/// Rebuilds the metric block of one (fold, seed) entry from stored prediction files.
nlohmann::json metrics_from_predictions(const std::filesystem::path& prediction, const std::filesystem::path& truth,
                                        int window, double grf_scale_bw, int ece_bins = 10);

struct LatencyResult {
  int n_samples = 0;
  int batch = 1;
  double total_s = 0;
  double avg_ms = 0;
  bool empty = false;  // n_samples == 0; avg reported as 0
};

/// Serial wall-clock timing of n_samples forward passes (batch samples per call) on
/// deterministic random inputs, after a short warm-up.
LatencyResult latency_bench(models::Network& net, int n_samples, int batch = 1, int warmup = 3);
LatencyResult latency_bench(const std::filesystem::path& checkpoint, int n_samples, int batch = 1, int warmup = 3);

/// Float32 little-endian tensor I/O used for predictions.
void write_f32(const std::filesystem::path& p, const Tensor& t);
Tensor read_f32(const std::filesystem::path& p, const Shape& shape);

}  // namespace sckd::eval
