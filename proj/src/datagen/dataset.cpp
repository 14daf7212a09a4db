#include "sckd/datagen/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "sckd/datagen/signal.hpp"
#include "sckd/tensor.hpp"

namespace sckd::datagen {

using nlohmann::json;

// ---- preprocessing ---------------------------------------------------------

RawSession preprocess_session(const RawSession& raw, const PreprocessConfig& cfg) {
  RawSession out = raw;
  const auto n_in = static_cast<std::size_t>(raw.samples);

  if (raw.rate_hz > cfg.target_rate_hz) {
    std::vector<double> buf(n_in);
    std::vector<double> grf;
    for (int f = 0; f < 2; ++f) {
      auto r = resample_to(raw.grf_foot(f), raw.rate_hz, cfg.target_rate_hz);
      grf.insert(grf.end(), r.begin(), r.end());
    }
    const std::size_t n_out = grf.size() / 2;
    std::vector<float> insole(2 * n_out * kPixels);
    std::vector<std::uint8_t> stance(2 * n_out);
    for (int f = 0; f < 2; ++f) {
      for (int p = 0; p < kPixels; ++p) {
        for (std::size_t n = 0; n < n_in; ++n) buf[n] = raw.insole[(f * n_in + n) * kPixels + p];
        auto r = resample_to(buf, raw.rate_hz, cfg.target_rate_hz);
        for (std::size_t n = 0; n < n_out; ++n) {
          insole[(f * n_out + n) * kPixels + p] = static_cast<float>(std::clamp(r[n], 0.0, kInsoleMaxPsi));
        }
      }
      const double step = raw.rate_hz / cfg.target_rate_hz;
      for (std::size_t n = 0; n < n_out; ++n) {
        stance[f * n_out + n] = raw.stance[f * n_in + static_cast<std::size_t>(std::floor(n * step + 1e-9))];
      }
    }
    out.grf = std::move(grf);
    out.insole = std::move(insole);
    out.stance = std::move(stance);
    out.samples = static_cast<int>(n_out);
    out.rate_hz = cfg.target_rate_hz;
  }

  const auto n = static_cast<std::size_t>(out.samples);
  for (int f = 0; f < 2; ++f) {
    auto filtered = zero_lag_lowpass(out.grf_foot(f), cfg.cutoff_hz, out.rate_hz);
    for (std::size_t i = 0; i < n; ++i) out.grf[f * n + i] = std::max(0.0, filtered[i]);
  }

  const FractionMask left = fraction_mask();
  apply_fraction(std::span<float>(out.insole.data(), n * kPixels), left);
  apply_fraction(std::span<float>(out.insole.data() + n * kPixels, n * kPixels), left.mirrored());

  const auto skip = static_cast<std::size_t>(std::llround(cfg.warmup_s * out.rate_hz));
  if (skip > 0) {
    if (skip >= n) throw std::invalid_argument("preprocess_session: session shorter than the warm-up period");
    const std::size_t keep = n - skip;
    RawSession trimmed = out;
    trimmed.samples = static_cast<int>(keep);
    trimmed.grf.assign(2 * keep, 0.0);
    trimmed.stance.assign(2 * keep, 0);
    trimmed.insole.assign(2 * keep * kPixels, 0.0f);
    for (int f = 0; f < 2; ++f) {
      std::copy_n(out.grf.begin() + f * n + skip, keep, trimmed.grf.begin() + f * keep);
      std::copy_n(out.stance.begin() + f * n + skip, keep, trimmed.stance.begin() + f * keep);
      std::copy_n(out.insole.begin() + (f * n + skip) * kPixels, keep * kPixels,
                  trimmed.insole.begin() + f * keep * kPixels);
    }
    out = std::move(trimmed);
  }
  return out;
}

double grf_peak_bw(const RawSession& session) {
  const double bw = session.profile.body_weight * kGravity;
  const double peak = session.grf.empty() ? 0.0 : *std::max_element(session.grf.begin(), session.grf.end());
  return peak / bw;
}

NormalizedSession normalize_pair(const RawSession& session, double grf_ceiling_bw) {
  if (!(session.profile.body_weight > 0.0)) throw std::invalid_argument("normalize_pair: body weight must be positive");
  if (!(grf_ceiling_bw > 0.0)) throw std::invalid_argument("normalize_pair: GRF ceiling must be positive");
  if (grf_peak_bw(session) <= 0.0) throw std::invalid_argument("normalize_pair: session GRF is identically zero");

  NormalizedSession out;
  out.subject_id = session.profile.subject_id;
  out.body_weight = session.profile.body_weight;
  out.speed = session.speed;
  out.rate_hz = session.rate_hz;
  out.samples = session.samples;
  out.grf_ceiling_bw = grf_ceiling_bw;
  const double to_unit = 1.0 / (session.profile.body_weight * kGravity * grf_ceiling_bw);
  out.grf.resize(session.grf.size());
  for (std::size_t i = 0; i < session.grf.size(); ++i) {
    out.grf[i] = static_cast<float>(std::clamp(session.grf[i] * to_unit, 0.0, 1.0));
  }
  out.insole.resize(session.insole.size());
  for (std::size_t i = 0; i < session.insole.size(); ++i) {
    out.insole[i] = static_cast<float>(std::clamp(session.insole[i] / kInsoleMaxPsi, 0.0, 1.0));
  }
  return out;
}

// ---- windowed dataset -------------------------------------------------------

void WindowedDataset::push_from(const WindowedDataset& other, int i) {
  if (other.window != window) throw ShapeError("push_from: window length mismatch");
  const auto c = other.clip(i);
  const auto s = other.series(i);
  insole.insert(insole.end(), c.begin(), c.end());
  grf.insert(grf.end(), s.begin(), s.end());
  subject.push_back(other.subject[i]);
  speed.push_back(other.speed[i]);
  ++count;
}

std::vector<int> WindowedDataset::subject_ids() const {
  std::set<int> ids(subject.begin(), subject.end());
  return {ids.begin(), ids.end()};
}

std::optional<SubjectInfo> WindowedDataset::subject_info(int subject_id) const {
  for (const auto& s : subjects) {
    if (s.subject_id == subject_id) return s;
  }
  return std::nullopt;
}

WindowedDataset WindowedDataset::empty_like() const {
  WindowedDataset out;
  out.window = window;
  out.grf_scale_bw = grf_scale_bw;
  out.subjects = subjects;
  return out;
}

WindowedDataset window_samples(const NormalizedSession& session, int window) {
  if (window <= 0) throw std::invalid_argument("window_samples: window must be positive");
  WindowedDataset ds;
  ds.window = window;
  ds.grf_scale_bw = session.grf_ceiling_bw;
  ds.subjects.push_back({session.subject_id, session.body_weight});
  const int windows = session.samples / window;
  const auto n = static_cast<std::size_t>(session.samples);
  ds.insole.reserve(windows * ds.clip_size());
  ds.grf.reserve(windows * ds.series_size());
  for (int w = 0; w < windows; ++w) {
    const std::size_t start = static_cast<std::size_t>(w) * window;
    for (int f = 0; f < 2; ++f) {
      const auto* src = session.insole.data() + (f * n + start) * kPixels;
      ds.insole.insert(ds.insole.end(), src, src + static_cast<std::size_t>(window) * kPixels);
    }
    for (int f = 0; f < 2; ++f) {
      const auto* src = session.grf.data() + f * n + start;
      ds.grf.insert(ds.grf.end(), src, src + window);
    }
    ds.subject.push_back(session.subject_id);
    ds.speed.push_back(session.speed);
  }
  ds.count = windows;
  return ds;
}

std::pair<WindowedDataset, WindowedDataset> loso_split(const WindowedDataset& dataset, int held_out) {
  if (std::find(dataset.subject.begin(), dataset.subject.end(), held_out) == dataset.subject.end()) {
    throw std::invalid_argument("loso_split: subject " + std::to_string(held_out) + " not present in dataset");
  }
  WindowedDataset train = dataset.empty_like();
  WindowedDataset test = dataset.empty_like();
  for (int i = 0; i < dataset.count; ++i) {
    (dataset.subject[i] == held_out ? test : train).push_from(dataset, i);
  }
  return {std::move(train), std::move(test)};
}

namespace {

void rescale_grf(WindowedDataset& ds, double factor) {
  for (float& v : ds.grf) v = static_cast<float>(std::clamp(static_cast<double>(v) * factor, 0.0, 1.0));
}

}  // namespace

Fold make_fold(const WindowedDataset& dataset, int test_subject, std::optional<int> val_subject, bool no_validation) {
  auto [rest, test] = loso_split(dataset, test_subject);
  Fold fold;
  fold.test_subject = test_subject;
  fold.test = std::move(test);

  const auto remaining = rest.subject_ids();
  if (remaining.empty()) throw std::invalid_argument("make_fold: no training subjects left");
  if (no_validation) {
    fold.train = std::move(rest);
  } else {
    int val = -1;
    if (val_subject) {
      val = *val_subject;
    } else {
      const auto all = dataset.subject_ids();
      const auto it = std::find(all.begin(), all.end(), test_subject);
      val = all[(static_cast<std::size_t>(it - all.begin()) + 1) % all.size()];
    }
    if (val == test_subject) throw std::invalid_argument("make_fold: validation subject equals test subject");
    if (remaining.size() < 2) throw std::invalid_argument("make_fold: need at least two non-test subjects for validation");
    auto [train, valset] = loso_split(rest, val);
    fold.val_subject = val;
    fold.train = std::move(train);
    fold.val = std::move(valset);
  }

  const float train_max = fold.train.grf.empty() ? 0.0f : *std::max_element(fold.train.grf.begin(), fold.train.grf.end());
  if (!(train_max > 0.0f)) throw std::invalid_argument("make_fold: training GRF is identically zero");
  const double factor = 1.0 / static_cast<double>(train_max);
  fold.grf_scale_bw = dataset.grf_scale_bw * static_cast<double>(train_max);
  for (WindowedDataset* ds : {&fold.train, &fold.val, &fold.test}) {
    rescale_grf(*ds, factor);
    ds->grf_scale_bw = fold.grf_scale_bw;
  }
  return fold;
}

// ---- synthetic corpus -------------------------------------------------------

WindowedDataset build_dataset(const DatasetConfig& cfg) {
  if (cfg.subjects <= 0) throw std::invalid_argument("build_dataset: need at least one subject");
  if (cfg.speeds.empty()) throw std::invalid_argument("build_dataset: need at least one speed");
  if (cfg.window != 100 && cfg.window != 200) throw std::invalid_argument("build_dataset: window must be 100 or 200");

  std::vector<RawSession> sessions;
  double ceiling = 0.0;
  for (int s = 0; s < cfg.subjects; ++s) {
    const SubjectProfile profile = make_profile(cfg.seed, s);
    for (double speed : cfg.speeds) {
      RawSession raw = synth_session(profile, speed, cfg.duration_s, cfg.rate_hz);
      sessions.push_back(preprocess_session(raw, cfg.preprocess));
      ceiling = std::max(ceiling, grf_peak_bw(sessions.back()));
    }
  }

  WindowedDataset ds;
  ds.window = cfg.window;
  ds.grf_scale_bw = ceiling;
  for (const RawSession& session : sessions) {
    const WindowedDataset part = window_samples(normalize_pair(session, ceiling), cfg.window);
    for (int i = 0; i < part.count; ++i) ds.push_from(part, i);
    if (!ds.subject_info(session.profile.subject_id)) {
      ds.subjects.push_back({session.profile.subject_id, session.profile.body_weight});
    }
  }
  return ds;
}

// ---- on-disk format ---------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "f32le I/O assumes a little-endian host");

std::string split_name(int subject_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subject_%02d", subject_id);
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const WindowedDataset& ds, const DatasetConfig* cfg) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "sckd-windowed-dataset";
  manifest["version"] = 1;
  manifest["dtype"] = "f32le";
  manifest["window"] = ds.window;
  manifest["channels"] = 2;
  manifest["frame"] = {kRows, kCols};
  manifest["record"] = {
      {{"name", "insole"}, {"shape", {2, ds.window, kRows, kCols}}},
      {{"name", "grf"}, {"shape", {2, ds.window}}},
  };
  manifest["scaling"] = {{"grf_scale_bw", ds.grf_scale_bw},
                         {"insole_scale_psi", kInsoleMaxPsi},
                         {"gravity", kGravity}};
  if (cfg) {
    manifest["generator"] = {{"seed", cfg->seed},
                             {"subjects", cfg->subjects},
                             {"speeds", cfg->speeds},
                             {"duration_s", cfg->duration_s},
                             {"rate_hz", cfg->rate_hz},
                             {"cutoff_hz", cfg->preprocess.cutoff_hz},
                             {"warmup_s", cfg->preprocess.warmup_s}};
  }
  json splits = json::array();
  for (int sid : ds.subject_ids()) {
    const std::string name = split_name(sid);
    std::ofstream out(dir / (name + ".f32"), std::ios::binary);
    if (!out) throw std::runtime_error("write_dataset: cannot open " + (dir / (name + ".f32")).string());
    std::vector<double> speeds;
    int count = 0;
    for (int i = 0; i < ds.count; ++i) {
      if (ds.subject[i] != sid) continue;
      const auto c = ds.clip(i);
      const auto s = ds.series(i);
      out.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(c.size_bytes()));
      out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size_bytes()));
      speeds.push_back(ds.speed[i]);
      ++count;
    }
    if (!out) throw std::runtime_error("write_dataset: write failed for " + name);
    const auto info = ds.subject_info(sid);
    splits.push_back({{"name", name},
                      {"file", name + ".f32"},
                      {"subject_id", sid},
                      {"body_weight", info ? info->body_weight : 0.0},
                      {"count", count},
                      {"speeds", speeds}});
  }
  manifest["splits"] = splits;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

WindowedDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("read_dataset: missing " + (dir / "manifest.json").string());
  const json manifest = json::parse(in);
  if (manifest.value("dtype", "") != "f32le") throw std::runtime_error("read_dataset: unsupported dtype");

  WindowedDataset ds;
  ds.window = manifest.at("window").get<int>();
  ds.grf_scale_bw = manifest.at("scaling").at("grf_scale_bw").get<double>();
  for (const auto& split : manifest.at("splits")) {
    const int sid = split.at("subject_id").get<int>();
    const int count = split.at("count").get<int>();
    const auto speeds = split.at("speeds").get<std::vector<double>>();
    ds.subjects.push_back({sid, split.at("body_weight").get<double>()});
    std::ifstream f(dir / split.at("file").get<std::string>(), std::ios::binary);
    if (!f) throw std::runtime_error("read_dataset: missing split file " + split.at("file").get<std::string>());
    std::vector<float> clip(ds.clip_size());
    std::vector<float> series(ds.series_size());
    for (int i = 0; i < count; ++i) {
      f.read(reinterpret_cast<char*>(clip.data()), static_cast<std::streamsize>(clip.size() * sizeof(float)));
      f.read(reinterpret_cast<char*>(series.data()), static_cast<std::streamsize>(series.size() * sizeof(float)));
      if (!f) throw std::runtime_error("read_dataset: truncated split file for subject " + std::to_string(sid));
      ds.insole.insert(ds.insole.end(), clip.begin(), clip.end());
      ds.grf.insert(ds.grf.end(), series.begin(), series.end());
      ds.subject.push_back(sid);
      ds.speed.push_back(speeds.at(static_cast<std::size_t>(i)));
    }
    ds.count += count;
  }
  return ds;
}

}  // namespace sckd::datagen
