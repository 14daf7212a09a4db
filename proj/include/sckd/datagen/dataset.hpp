#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sckd/datagen/session.hpp"

namespace sckd::datagen {

// ---- preprocessing ---------------------------------------------------------

struct PreprocessConfig {
  double target_rate_hz = 200.0;
  double cutoff_hz = 10.0;
  double warmup_s = 10.0;  // leading segment excluded from analysis
};

/// Brings a session to the target rate, low-passes the GRF, applies the
/// fraction mask (mirrored for the right foot) and drops the warm-up segment.
/// Filtered GRF is clamped at zero.
RawSession preprocess_session(const RawSession& raw, const PreprocessConfig& cfg = {});

/// Largest GRF sample in body weights.
double grf_peak_bw(const RawSession& session);

/// Session mapped to [0, 1]: GRF / (bw * g) / grf_ceiling_bw and insole / 30 psi.
struct NormalizedSession {
  int subject_id = 0;
  double body_weight = 0;
  double speed = 0;
  double rate_hz = 0;
  int samples = 0;
  double grf_ceiling_bw = 1.0;  // normalized value * ceiling = body weights
  double insole_scale_psi = kInsoleMaxPsi;
  std::vector<float> grf;     // 2 x N
  std::vector<float> insole;  // 2 x N x 128
};

/// Throws std::invalid_argument when the ceiling or body weight is not
/// positive, or when the session's GRF is identically zero.
NormalizedSession normalize_pair(const RawSession& session, double grf_ceiling_bw);

// ---- windowed dataset -------------------------------------------------------

struct SubjectInfo {
  int subject_id = 0;
  double body_weight = 0;
};

/// Non-overlapping windows. Per sample: insole clip 2 x t x 16 x 8 and GRF
/// window 2 x t, both in [0, 1], plus the subject id and walking speed.
struct WindowedDataset {
  int window = 100;
  int count = 0;
  std::vector<float> insole;
  std::vector<float> grf;
  std::vector<int> subject;
  std::vector<double> speed;
  double grf_scale_bw = 1.0;  // stored GRF * scale = body weights
  std::vector<SubjectInfo> subjects;

  std::size_t clip_size() const { return static_cast<std::size_t>(2) * window * kPixels; }
  std::size_t series_size() const { return static_cast<std::size_t>(2) * window; }
  std::span<const float> clip(int i) const { return {insole.data() + i * clip_size(), clip_size()}; }
  std::span<const float> series(int i) const { return {grf.data() + i * series_size(), series_size()}; }

  /// Copies sample `i` of `other` (same window) to the end of this dataset.
  void push_from(const WindowedDataset& other, int i);
  /// Sorted distinct subject ids present in the samples.
  std::vector<int> subject_ids() const;
  std::optional<SubjectInfo> subject_info(int subject_id) const;
  /// Empty dataset sharing window, scale and subject table.
  WindowedDataset empty_like() const;
};

/// floor(N / window) disjoint windows; the remainder is dropped.
WindowedDataset window_samples(const NormalizedSession& session, int window);

/// (train, test) partition with the held-out subject's samples in test.
/// Throws std::invalid_argument for an unknown subject id.
std::pair<WindowedDataset, WindowedDataset> loso_split(const WindowedDataset& dataset, int held_out);

/// One leave-one-subject-out fold with a rotating validation subject.
/// GRF is rescaled so the training maximum maps to 1; validation and test
/// values are clipped to [0, 1] afterwards.
struct Fold {
  int test_subject = 0;
  int val_subject = -1;  // -1: no validation split
  WindowedDataset train, val, test;
  double grf_scale_bw = 1.0;
};

/// Validation subject defaults to the next subject id after the test subject
/// (cyclic). Pass `no_validation` to train on every remaining subject.
Fold make_fold(const WindowedDataset& dataset, int test_subject, std::optional<int> val_subject = std::nullopt,
               bool no_validation = false);

// ---- synthetic corpus -------------------------------------------------------

struct DatasetConfig {
  std::uint64_t seed = 7;
  int subjects = 4;
  std::vector<double> speeds{kSpeedSlow, kSpeedFast};
  int window = 100;
  double duration_s = 130.0;  // includes warm-up
  double rate_hz = 200.0;     // synthesis rate; resampled to 200 Hz when higher
  PreprocessConfig preprocess{};
};

/// Session length (s, warm-up included) whose usable part yields 559 windows
/// of 100 samples and 279 windows of 200 samples at 200 Hz.
inline constexpr double kTableSessionSeconds = 10.0 + 55950.0 / 200.0;

/// Full pipeline: profile -> session -> preprocess -> normalize -> window.
/// The GRF ceiling is the largest per-session peak (body weights).
WindowedDataset build_dataset(const DatasetConfig& cfg);

// ---- on-disk format ---------------------------------------------------------
//
// <dir>/manifest.json plus one <split>.f32 per subject. Each .f32 file holds
// `count` records of little-endian float32; a record is the insole clip
// (2 x t x 16 x 8, C order) followed by the GRF window (2 x t).

void write_dataset(const std::filesystem::path& dir, const WindowedDataset& dataset, const DatasetConfig* cfg = nullptr);
WindowedDataset read_dataset(const std::filesystem::path& dir);

}  // namespace sckd::datagen
