#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "sckd/datagen/dataset.hpp"
#include "sckd/datagen/fraction.hpp"
#include "sckd/datagen/profile.hpp"
#include "sckd/datagen/session.hpp"
#include "sckd/datagen/signal.hpp"

using namespace sckd;
using namespace sckd::datagen;
namespace fs = std::filesystem;

namespace {

DatasetConfig tiny_config(int subjects, double seconds = 20.0) {
  DatasetConfig c;
  c.subjects = subjects;
  c.duration_s = seconds;
  return c;
}

double pearson_d(const std::vector<double>& a, const std::vector<double>& b) { return oracle::pearson(a, b); }

}  // namespace

TEST_CASE("profiles are a pure function of (seed, id)") {
  CHECK(make_profile(7, 0) == make_profile(7, 0));
  CHECK(make_profile(7, 0).cadence_base != make_profile(7, 1).cadence_base);
  for (int k = 0; k < 8; ++k) {
    const auto p = make_profile(7, k);
    CHECK(p.body_weight >= 45.0);
    CHECK(p.body_weight <= 95.0);
    CHECK(p.subject_id == k);
  }
}

TEST_CASE("session length and cadence") {
  const auto p = make_profile(7, 0);
  const auto s = synth_session(p, kSpeedSlow, 10.0, 200.0);
  CHECK(s.samples == 2000);
  CHECK(s.grf.size() == 4000);
  CHECK(s.insole.size() == 4000u * kPixels);
  CHECK(cadence_at(p, kSpeedFast) >= cadence_at(p, kSpeedSlow));
  CHECK(stance_fraction_at(kSpeedFast) < stance_fraction_at(kSpeedSlow));
  CHECK(stance_fraction_at(kSpeedSlow) <= 0.6);
  CHECK_THROWS_AS(synth_session(p, 3.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(synth_session(p, 1.0, 0.1), std::invalid_argument);
}

TEST_CASE("noise-free insole frame sums track GRF") {
  auto p = make_profile(7, 2);
  p.noise_level = 0.0;
  p.drift_rate = 0.0;
  const auto s = synth_session(p, 1.0, 20.0);
  for (int foot = 0; foot < 2; ++foot) {
    std::vector<double> sums(s.samples), grf(s.samples);
    for (int n = 0; n < s.samples; ++n) {
      const auto f = s.frame(foot, n);
      sums[n] = std::accumulate(f.begin(), f.end(), 0.0);
      grf[n] = s.grf_foot(foot)[n];
    }
    CHECK(pearson_d(sums, grf) > 0.99);
  }
}

TEST_CASE("GRF has the double-hump stance shape and alternating feet") {
  auto p = make_profile(7, 1);
  p.noise_level = 0.0;
  const auto s = synth_session(p, 1.0, 12.0);
  // both feet load, and they are not in phase
  std::vector<double> l(s.grf_foot(0).begin(), s.grf_foot(0).end()), r(s.grf_foot(1).begin(), s.grf_foot(1).end());
  CHECK(*std::max_element(l.begin(), l.end()) > 0.5 * p.body_weight * kGravity);
  CHECK(pearson_d(l, r) < 0.5);
  int stance = 0;
  for (auto v : s.stance) stance += v;
  const double frac = static_cast<double>(stance) / s.stance.size();
  CHECK(frac > 0.4);
  CHECK(frac < 0.7);
}

TEST_CASE("fraction mask examples") {
  const auto m = fraction_mask();
  std::set<float> values(m.grid.begin(), m.grid.end());
  for (float v : values) CHECK((v == 0.0f || v == 0.33f || v == 0.67f || v == 1.0f));

  std::vector<float> ones(kPixels, 1.0f);
  apply_fraction(ones, m);
  CHECK(std::equal(ones.begin(), ones.end(), m.grid.begin()));

  std::vector<float> zeros(kPixels, 0.0f);
  apply_fraction(zeros, m);
  CHECK(std::all_of(zeros.begin(), zeros.end(), [](float v) { return v == 0.0f; }));

  const auto edge = std::find(m.grid.begin(), m.grid.end(), 0.33f);
  REQUIRE(edge != m.grid.end());
  const auto cell = static_cast<std::size_t>(edge - m.grid.begin());
  std::vector<float> frame(kPixels, 0.0f);
  frame[cell] = 3.0f;
  apply_fraction(frame, m);
  CHECK(frame[cell] == 3.0f * 0.33f);
  CHECK(frame[cell] == doctest::Approx(0.99).epsilon(1e-7));

  std::vector<float> bad(kPixels + 1, 1.0f);
  CHECK_THROWS_AS(apply_fraction(bad, m), ShapeError);

  const auto mir = m.mirrored();
  for (int r = 0; r < kRows; ++r)
    for (int c = 0; c < kCols; ++c) CHECK(mir.at(r, c) == m.at(r, kCols - 1 - c));
}

TEST_CASE("zero-lag low-pass") {
  SUBCASE("DC gain") {
    const std::vector<double> x(1000, 0.5);
    for (double v : zero_lag_lowpass(x, 10.0, 200.0)) CHECK(std::abs(v - 0.5) < 1e-9);
  }
  SUBCASE("50 Hz tone attenuation beyond the two-pass analytic bound") {
    std::vector<double> x(4000);
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2 * std::numbers::pi * 50.0 * n / 200.0 + 0.3);
    const auto y = zero_lag_lowpass(x, 10.0, 200.0);
    double peak = 0;
    for (std::size_t n = 500; n < 3500; ++n) peak = std::max(peak, std::abs(y[n]));
    CHECK(peak < 1.0 / 500.0);
    CHECK(-20 * std::log10(peak) > 54.0);
  }
  SUBCASE("triangular pulse keeps its phase") {
    std::vector<double> x(401, 0.0);
    for (int k = -40; k <= 40; ++k) x[200 + k] = 1.0 - std::abs(k) / 40.0;
    const auto y = zero_lag_lowpass(x, 10.0, 200.0);
    int best_lag = 999;
    double best = -1e300;
    for (int lag = -20; lag <= 20; ++lag) {
      double s = 0;
      for (int n = 0; n < 401; ++n)
        if (n + lag >= 0 && n + lag < 401) s += x[n] * y[n + lag];
      if (s > best) {
        best = s;
        best_lag = lag;
      }
    }
    CHECK(best_lag == 0);
  }
  SUBCASE("mean preserved on long constant-plus-noise signals") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.1);
    std::vector<double> x(1000000);
    double mi = 0;
    for (double& v : x) mi += (v = 0.5 + g(rng));
    mi /= x.size();
    const auto y = zero_lag_lowpass(x, 10.0, 200.0);
    const double mo = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    CHECK(std::abs(mo - mi) < 1e-6);
  }
  CHECK_THROWS_AS(butterworth_lowpass(100.0, 200.0), std::invalid_argument);
}

TEST_CASE("resampling") {
  std::vector<double> x(20000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.001 * i);
  CHECK(resample_to(x, 2000.0, 200.0).size() == 2000);
  const auto same = resample_to(x, 200.0, 200.0);
  CHECK(same == x);
  const std::vector<double> c(20000, 0.7);
  for (double v : resample_to(c, 2000.0, 200.0)) CHECK(std::abs(v - 0.7) < 1e-9);
}

TEST_CASE("normalization") {
  RawSession s;
  s.profile.body_weight = 70.0;
  s.samples = 3;
  s.grf = {70.0 * kGravity, 0.0, 10.0, 70.0 * kGravity, 0.0, 10.0};
  s.insole.assign(6 * kPixels, 0.0f);
  s.insole[0] = 30.0f;
  s.insole[1] = 15.0f;
  const auto n = normalize_pair(s, 1.25);
  CHECK(n.grf[0] == doctest::Approx(0.8).epsilon(1e-7));
  CHECK(n.grf[1] == 0.0f);
  CHECK(n.insole[0] == 1.0f);
  CHECK(n.insole[1] == 0.5f);
  CHECK_THROWS_AS(normalize_pair(s, 0.0), std::invalid_argument);
  s.profile.body_weight = 0.0;
  CHECK_THROWS_AS(normalize_pair(s, 1.25), std::invalid_argument);
}

TEST_CASE("windowing") {
  NormalizedSession n;
  n.samples = 2000;
  n.body_weight = 60;
  n.grf.assign(4000, 0.25f);
  n.insole.assign(4000u * kPixels, 0.5f);
  for (int i = 0; i < 2000; ++i) n.grf[i] = static_cast<float>(i);
  const auto w = window_samples(n, 200);
  CHECK(w.count == 10);
  CHECK(w.series(3)[0] == 600.0f);
  CHECK(w.series(3)[199] == 799.0f);
  CHECK(w.series(3)[200] == 0.25f);
  n.samples = 2150;
  n.grf.assign(4300, 0.0f);
  n.insole.assign(4300u * kPixels, 0.0f);
  CHECK(window_samples(n, 200).count == 10);

  // the table-sized session yields 559 / 279 windows
  const auto p = make_profile(7, 0);
  const auto pre = preprocess_session(synth_session(p, kSpeedSlow, kTableSessionSeconds));
  const auto norm = normalize_pair(pre, grf_peak_bw(pre));
  CHECK(window_samples(norm, 100).count == 559);
  CHECK(window_samples(norm, 200).count == 279);
}

TEST_CASE("leave-one-subject-out partition") {
  const auto ds = build_dataset(tiny_config(8));
  REQUIRE(ds.subject_ids().size() == 8);
  for (int s : ds.subject_ids()) {
    const auto [train, test] = loso_split(ds, s);
    CHECK(train.count + test.count == ds.count);
    CHECK(train.subject_ids().size() == 7);
    CHECK(std::find(train.subject.begin(), train.subject.end(), s) == train.subject.end());
    CHECK(std::all_of(test.subject.begin(), test.subject.end(), [&](int v) { return v == s; }));
  }
  CHECK_THROWS_AS(loso_split(ds, 99), std::invalid_argument);

  const auto fold = make_fold(ds, 3);
  CHECK(fold.val_subject == 4);
  CHECK(fold.train.count + fold.val.count + fold.test.count == ds.count);
  CHECK(*std::max_element(fold.train.grf.begin(), fold.train.grf.end()) == 1.0f);
  CHECK(*std::max_element(fold.test.grf.begin(), fold.test.grf.end()) <= 1.0f);
  CHECK(make_fold(ds, 7).val_subject == 0);
  CHECK(make_fold(ds, 7, std::nullopt, true).val.count == 0);
}

TEST_CASE("dataset build is deterministic and round-trips through disk") {
  const auto cfg = tiny_config(2);
  const auto a = build_dataset(cfg);
  const auto b = build_dataset(cfg);
  CHECK(a.insole == b.insole);
  CHECK(a.grf == b.grf);
  CHECK(a.count == 2 * 2 * 20);  // (20 s - 10 s warm-up) * 200 Hz / 100
  for (float v : a.grf) CHECK((v >= 0.0f && v <= 1.0f));

  const fs::path dir = fs::temp_directory_path() / "sckd_test_dataset";
  fs::remove_all(dir);
  write_dataset(dir, a, &cfg);
  CHECK(fs::exists(dir / "manifest.json"));
  const auto c = read_dataset(dir);
  CHECK(c.count == a.count);
  CHECK(c.window == a.window);
  CHECK(c.insole == a.insole);
  CHECK(c.grf == a.grf);
  CHECK(c.subject == a.subject);
  CHECK(c.speed == a.speed);
  CHECK(c.grf_scale_bw == a.grf_scale_bw);
  fs::remove_all(dir);

  auto other = cfg;
  other.seed = 8;
  CHECK(build_dataset(other).grf != a.grf);
}
