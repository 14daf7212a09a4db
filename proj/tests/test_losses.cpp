#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sckd/losses/losses.hpp"

using namespace sckd;
using namespace sckd::losses;
using gradcheck::random_features;
using gradcheck::rel_error;
using gradcheck::TapDims;

namespace {

TensorD from_rows(const std::vector<std::vector<double>>& rows) {
  const int b = static_cast<int>(rows.size()), t = static_cast<int>(rows[0].size());
  TensorD F({b, t});
  for (int i = 0; i < b; ++i)
    for (int k = 0; k < t; ++k) F[static_cast<std::size_t>(i) * t + k] = rows[i][k];
  return F;
}

std::vector<std::vector<double>> rows_of(const TensorD& F) {
  std::vector<std::vector<double>> r(F.dim(0), std::vector<double>(F.dim(1)));
  for (int i = 0; i < F.dim(0); ++i)
    for (int k = 0; k < F.dim(1); ++k) r[i][k] = F[static_cast<std::size_t>(i) * F.dim(1) + k];
  return r;
}

double max_abs_diff(const TensorD& a, const std::vector<std::vector<double>>& b) {
  double m = 0;
  const int n = a.dim(1);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b[i].size(); ++j) m = std::max(m, std::abs(a[i * n + j] - b[i][j]));
  return m;
}

int rand_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace

TEST_CASE("ground truth loss") {
  TensorD y({1, 2, 3}, 0.4);
  CHECK(ground_truth_loss(y, y).value == 0.0);
  TensorD off = y;
  for (double& v : off.values()) v += 0.1;
  CHECK(ground_truth_loss(off, y).value == doctest::Approx(0.01).epsilon(1e-12));
  const TensorD a({1, 1, 2}, std::vector<double>{0, 1}), b({1, 1, 2}, std::vector<double>{1, 0});
  CHECK(ground_truth_loss(a, b).value == 1.0);
  CHECK_THROWS_AS(ground_truth_loss(a, y), ShapeError);
}

TEST_CASE("temporal softmax") {
  const TensorD c({1, 1, 4}, 2.0);
  const auto u = temporal_softmax(c);
  for (double v : u.values()) CHECK(v == doctest::Approx(0.25));
  const TensorD r({1, 1, 2}, std::vector<double>{0.0, std::log(3.0)});
  const auto h = temporal_softmax(r);
  CHECK(h[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(h[1] == doctest::Approx(0.75).epsilon(1e-14));
  std::mt19937_64 rng(1);
  const auto x = oracle::random_tensor(rng, {3, 2, 5});
  auto shifted = x;
  for (int k = 0; k < 5; ++k) shifted[k] += 7.0;  // row (0, 0)
  const auto hx = temporal_softmax(x), hs = temporal_softmax(shifted);
  for (std::size_t i = 0; i < hx.size(); ++i) CHECK(hx[i] == doctest::Approx(hs[i]).epsilon(1e-12));
  const auto ref = oracle::softmax_t(x);
  for (std::size_t i = 0; i < hx.size(); ++i) CHECK(std::abs(hx[i] - ref[i]) < 1e-14);
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3}, y{3, 2, 1}, z{0.3, -1, 4, 2};
  CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-14));
  std::vector<double> w;
  for (double v : z) w.push_back(2 * v + 5);
  CHECK(pearson(z, w) == doctest::Approx(1.0).epsilon(1e-14));
  const std::vector<double> flat{0.5, 0.5, 0.5};
  CHECK(pearson(x, flat) == 0.0);
  std::vector<double> g(3, 1.0);
  CHECK(pearson_grad(x, flat, g) == 0.0);
  CHECK(g == std::vector<double>{0, 0, 0});
}

TEST_CASE("inter/intra Pearson loss") {
  std::mt19937_64 rng(2);
  const auto h = oracle::random_tensor(rng, {3, 2, 6});
  CHECK(std::abs(inter_intra_kd_loss(h, h).value) < 1e-12);

  SUBCASE("per-row positive affine maps leave the inter term at 0") {
    auto one = oracle::random_tensor(rng, {1, 2, 6});
    auto aff = one;
    for (int k = 0; k < 6; ++k) {
      aff[k] = 3.0 * aff[k] - 1.0;
      aff[6 + k] = 0.2 * aff[6 + k] + 4.0;
    }
    CHECK(std::abs(inter_intra_kd_loss(one, aff).value) < 1e-12);
    const auto s = oracle::random_tensor(rng, {1, 2, 6});
    auto s_aff = s;
    for (int k = 0; k < 6; ++k) s_aff[k] = 5.0 * s_aff[k] + 2.0;
    CHECK(inter_intra_kd_loss(one, s).value == doctest::Approx(inter_intra_kd_loss(one, s_aff).value).epsilon(1e-12));
  }
  SUBCASE("batch-wide positive affine map is invisible to both terms") {
    const auto s = oracle::random_tensor(rng, {3, 2, 6});
    auto s_aff = s;
    for (double& v : s_aff.values()) v = 0.5 * v + 0.25;
    CHECK(inter_intra_kd_loss(h, s).value == doctest::Approx(inter_intra_kd_loss(h, s_aff).value).epsilon(1e-12));
  }
  SUBCASE("b=2, t=2 hand-built case") {
    const TensorD t({2, 2, 2}, std::vector<double>{0.1, 0.9, 0.6, 0.4, 0.3, 0.7, 0.2, 0.8});
    const TensorD s({2, 2, 2}, std::vector<double>{0.8, 0.2, 0.5, 0.5, 0.4, 0.6, 0.9, 0.1});
    // ch0: inter rho = -1, +1 -> 1; intra rho at k=0: (0.1,0.3) vs (0.8,0.4) = -1, k=1 = -1 -> 2
    // ch1: inter rho = 0 (flat), -1 -> 1.5; intra k=0: (0.6,0.2) vs (0.5,0.9) = -1, k=1 = -1 -> 2
    CHECK(inter_intra_kd_loss(t, s).value == doctest::Approx((3.0 + 3.5) / 2).epsilon(1e-12));
    CHECK(inter_intra_kd_loss(t, s).value == doctest::Approx(oracle::inter_intra(t, s)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(inter_intra_kd_loss(h, TensorD({3, 2, 5})), ShapeError);
}

TEST_CASE("channel selection") {
  CHECK(select_channel_indices(64, 8) == std::vector<int>{0, 8, 16, 24, 32, 40, 48, 56});
  CHECK(select_channel_indices(8, 8) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(select_channel_indices(3, 8) == std::vector<int>{0, 1, 2});
  CHECK(select_channel_indices(10, 4) == std::vector<int>{0, 3, 6, 9});
  bool ok = true;
  for (int c = 1; c <= 256; ++c)
    for (int q = 1; q <= c; ++q) {
      const auto k = select_channel_indices(c, q);
      ok = ok && !k.empty() && static_cast<int>(k.size()) <= q && k.front() == 0 && k.back() < c;
      for (std::size_t i = 1; i < k.size(); ++i) ok = ok && k[i] > k[i - 1];
      ok = ok && k == oracle::channels(c, q);
    }
  CHECK(ok);
}

TEST_CASE("RBF correlation map") {
  SUBCASE("closed forms") {
    const auto same = rbf_correlation_map(from_rows({{1, 2, 3}, {2, 4, 6}}), 0.4, KernelMode::Exact, 0);
    for (double v : same.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    const auto orth = from_rows({{1, 0}, {0, 1}});
    const auto ge = rbf_correlation_map(orth, 0.4, KernelMode::Exact, 0);
    const auto gt = rbf_correlation_map(orth, 0.4, KernelMode::Taylor, 2);
    CHECK(ge[1] == doctest::Approx(std::exp(-0.8)).epsilon(1e-14));
    CHECK(gt[1] == doctest::Approx(std::exp(-0.8)).epsilon(1e-14));
    CHECK(std::abs(gt[0] - 0.9526) < 1e-4);
    CHECK(gt[0] == doctest::Approx(std::exp(-0.8) * 2.12).epsilon(1e-14));
    CHECK(ge[0] == 1.0);
  }
  SUBCASE("zero rows become the uniform unit vector") {
    const auto g = rbf_correlation_map(from_rows({{0, 0, 0, 0}, {1, 1, 1, 1}}), 0.4, KernelMode::Exact, 0);
    CHECK(g[1] == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("random unit-row matrices: symmetry, PSD, Taylor convergence, oracle") {
    std::mt19937_64 rng(4);
    double worst_sym = 0, worst_eig = 1, worst_taylor = 0, worst_oracle = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const int b = rand_int(rng, 1, 8), t = rand_int(rng, 1, 16);
      const auto F = oracle::random_tensor(rng, {b, t});
      const auto ge = rbf_correlation_map(F, 0.4, KernelMode::Exact, 0);
      const auto g20 = rbf_correlation_map(F, 0.4, KernelMode::Taylor, 20);
      Eigen::MatrixXd M(b, b);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
          M(i, j) = ge[static_cast<std::size_t>(i) * b + j];
          worst_sym = std::max(worst_sym, std::abs(M(i, j) - ge[static_cast<std::size_t>(j) * b + i]));
          worst_taylor = std::max(worst_taylor, std::abs(M(i, j) - g20[static_cast<std::size_t>(i) * b + j]));
        }
      for (int i = 0; i < b; ++i) CHECK(M(i, i) == doctest::Approx(1.0).epsilon(1e-14));
      worst_eig = std::min(worst_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().minCoeff());
      worst_oracle = std::max(worst_oracle, max_abs_diff(ge, oracle::rbf_exact(rows_of(F), 0.4)));
      const auto g2 = rbf_correlation_map(F, 0.4, KernelMode::Taylor, 2);
      worst_oracle = std::max(worst_oracle, max_abs_diff(g2, oracle::rbf_taylor(rows_of(F), 0.4, 2)));
    }
    CHECK(worst_sym == 0.0);
    CHECK(worst_eig > -1e-8);
    CHECK(worst_taylor < 1e-8);
    CHECK(worst_oracle < 1e-12);
  }
  SUBCASE("Taylor error shrinks with order") {
    std::mt19937_64 rng(5);
    const auto F = oracle::random_tensor(rng, {6, 5});
    const auto ge = rbf_correlation_map(F, 0.4, KernelMode::Exact, 0);
    double prev = 1e9;
    for (int P : {0, 1, 2, 4, 8, 16}) {
      const auto g = rbf_correlation_map(F, 0.4, KernelMode::Taylor, P);
      double e = 0;
      for (std::size_t i = 0; i < g.size(); ++i) e = std::max(e, std::abs(g[i] - ge[i]));
      CHECK(e < prev);
      prev = e;
    }
  }
}

TEST_CASE("selective correlation loss") {
  std::mt19937_64 rng(6);
  SckdParams p;
  const auto T = random_features(rng, 4, {6, 5, 2, 2}, {6, 5, 1, 1}, 8);
  const auto S = random_features(rng, 4, {4, 3, 2, 1}, {6, 3, 1, 1}, 8);
  CHECK(selective_correlation_loss(T, T, p.layers, p).value == 0.0);
  const double one = selective_correlation_loss(T, S, {{Tap::Mid, Tap::Mid}}, p).value;
  CHECK(one > 0.0);
  CHECK(selective_correlation_loss(T, S, {{Tap::Mid, Tap::Mid}, {Tap::Mid, Tap::Mid}}, p).value ==
        doctest::Approx(one).epsilon(1e-14));
  CHECK_THROWS_AS(selective_correlation_loss(T, S, {}, p), std::invalid_argument);
}

TEST_CASE("SP and AT losses") {
  SUBCASE("orthonormal rows give the identity similarity map") {
    const auto M = sp_map(from_rows({{0, 3, 0}, {2, 0, 0}, {0, 0, -1}}));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(M[i * 3 + j] == (i == j ? 1.0 : 0.0));
  }
  SUBCASE("b=2 hand case") {
    Features T, S;
    T[Tap::Mid] = TensorD({2, 1, 2}, std::vector<double>{1, 0, 1, 1});
    S[Tap::Mid] = TensorD({2, 1, 2}, std::vector<double>{1, 0, 0, 1});
    // off-diagonals 1/sqrt(2) vs 0
    CHECK(sp_loss(T, S, {Tap::Mid, Tap::Mid}).value == doctest::Approx(2 * 0.5 / 4).epsilon(1e-14));
    CHECK(sp_loss(T, T, {Tap::Mid, Tap::Mid}).value == 0.0);
  }
  SUBCASE("AT: identity and channel permutation") {
    std::mt19937_64 rng(7);
    Features T, S;
    T[Tap::E2] = oracle::random_tensor(rng, {2, 2, 3, 2, 2});
    S[Tap::E2] = T[Tap::E2];
    CHECK(at_loss(T, S, {Tap::E2, Tap::E2}).value == 0.0);
    // swap the two channels
    const std::size_t blk = 3 * 2 * 2;
    for (int i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < blk; ++k) {
        S[Tap::E2][(i * 2 + 0) * blk + k] = T[Tap::E2][(i * 2 + 1) * blk + k];
        S[Tap::E2][(i * 2 + 1) * blk + k] = T[Tap::E2][(i * 2 + 0) * blk + k];
      }
    CHECK(std::abs(at_loss(T, S, {Tap::E2, Tap::E2}).value) < 1e-15);
    // hand 2 x 2 x 3 case
    Features A, B;
    A[Tap::Mid] = TensorD({2, 2, 3}, std::vector<double>{1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0});
    B[Tap::Mid] = TensorD({2, 2, 3}, std::vector<double>{0, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0});
    CHECK(at_loss(A, B, {Tap::Mid, Tap::Mid}).value == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(at_loss(A, B, {Tap::Mid, Tap::Mid}).value ==
          doctest::Approx(oracle::at(A[Tap::Mid], B[Tap::Mid])).epsilon(1e-14));
  }
}

TEST_CASE("vanilla KD") {
  std::mt19937_64 rng(8);
  const auto y = oracle::random_tensor(rng, {2, 2, 5});
  CHECK(std::abs(vanilla_kd_loss(y, y, 4.0).value) < 1e-15);
  SUBCASE("two-outcome closed form at tau = 4") {
    const TensorD yT({1, 1, 2}, std::vector<double>{0.0, 4.0 * std::log(3.0)});
    const TensorD yS({1, 1, 2}, 0.0);
    const double kl = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
    CHECK(vanilla_kd_loss(yT, yS, 4.0).value == doctest::Approx(16.0 * kl).epsilon(1e-12));
  }
  SUBCASE("large temperature tends to half the temporal variance of the logit gap") {
    const auto yS = oracle::random_tensor(rng, {2, 2, 5});
    double limit = 0;
    for (int r = 0; r < 4; ++r) {
      double m = 0, v = 0;
      for (int k = 0; k < 5; ++k) m += (y[r * 5 + k] - yS[r * 5 + k]) / 5;
      for (int k = 0; k < 5; ++k) v += std::pow(y[r * 5 + k] - yS[r * 5 + k] - m, 2) / 5;
      limit += 0.5 * v / 4;
    }
    const double at1e3 = vanilla_kd_loss(y, yS, 1e3).value;
    CHECK(at1e3 > 0.0);
    CHECK(std::abs(at1e3 - limit) < 1e-3 * limit);
    CHECK(std::abs(vanilla_kd_loss(y, yS, 1e2).value - limit) > std::abs(at1e3 - limit));
  }
}

TEST_CASE("representation-learning terms") {
  const std::vector<double> zero{0.0}, one{1.0};
  CHECK(gaussian_kl(zero, zero).value == 0.0);
  CHECK(gaussian_kl(one, zero).value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(gaussian_kl(one, std::vector<double>{0.0, 0.0}), ShapeError);
  const TensorD z({4}, 0.0);
  CHECK(bce_with_logits(z, 1.0).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const TensorD big({1}, 800.0);
  CHECK(std::isfinite(bce_with_logits(big, 0.0).value));
  CHECK(bce_with_logits(big, 0.0).value == doctest::Approx(800.0));
}

TEST_CASE("total objective composes its terms") {
  std::mt19937_64 rng(9);
  SckdParams p;
  const auto T = random_features(rng, 4, {6, 5, 2, 2}, {6, 5, 1, 1}, 8);
  const auto S = random_features(rng, 4, {4, 3, 2, 1}, {6, 3, 1, 1}, 8);
  const auto gt = oracle::random_tensor(rng, {4, 2, 8}, 0.0, 1.0);
  const auto r = total_sckd_loss(S.y_hat, gt, T.y_hat, T, S, p);
  const double kd = inter_intra_kd_loss(temporal_softmax(T.y_hat), temporal_softmax(S.y_hat)).value;
  const double scr = selective_correlation_loss(T, S, {{Tap::Mid, Tap::Mid}}, p).value;
  const double scf = selective_correlation_loss(T, S, {{Tap::E2, Tap::E2}, {Tap::D1, Tap::D1}}, p).value;
  CHECK(r.L_gt == doctest::Approx(oracle::mse(S.y_hat, gt)).epsilon(1e-12));
  CHECK(r.L_KD_c == kd);
  CHECK(r.L_sc_r == scr);
  CHECK(r.L_sc_f == scf);
  CHECK(std::abs(r.total - (r.L_gt + kd + 10 * scr + scf)) < 1e-9);

  SckdParams off = p;
  off.lambda1 = off.lambda2 = off.lambda3 = 0;
  const auto z = total_sckd_loss(S.y_hat, gt, T.y_hat, T, S, off);
  CHECK(z.total == ground_truth_loss(S.y_hat, gt).value);
  for (const auto& g : z.grad_taps) CHECK(g.empty());

  const auto fixed = total_sckd_loss(T.y_hat, T.y_hat, T.y_hat, T, T, p);
  CHECK(std::abs(fixed.total) < 1e-9);
}

TEST_CASE("vectorized losses match scalar-loop oracles") {
  std::mt19937_64 rng(10);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int b = rand_int(rng, 1, 3), t = rand_int(rng, 2, 4), c = rand_int(rng, 1, 4);
    const int tT = rand_int(rng, 2, 4), cT = rand_int(rng, 1, 4);
    const auto T = random_features(rng, b, {cT, tT, 2, 2}, {cT, tT, 1, 1}, t);
    const auto S = random_features(rng, b, {c, t, 2, 1}, {c, t, 1, 1}, t);
    const auto gt = oracle::random_tensor(rng, {b, 2, t}, 0.0, 1.0);
    SckdParams p;
    p.q = rand_int(rng, 1, 4);
    const bool taylor = trial % 2 == 0;
    p.kernel_mode = taylor ? KernelMode::Taylor : KernelMode::Exact;

    worst = std::max(worst, std::abs(ground_truth_loss(S.y_hat, gt).value - oracle::mse(S.y_hat, gt)));
    const auto hT = temporal_softmax(T.y_hat), hS = temporal_softmax(S.y_hat);
    worst = std::max(worst, std::abs(inter_intra_kd_loss(hT, hS).value - oracle::inter_intra(hT, hS)));
    std::vector<std::pair<TensorD, TensorD>> pairs;
    for (const auto& [lt, ls] : p.layers) pairs.emplace_back(T[lt], S[ls]);
    worst = std::max(worst, std::abs(selective_correlation_loss(T, S, p.layers, p).value -
                                     oracle::selective_correlation(pairs, p.q, p.gamma, taylor, p.order)));
    worst = std::max(worst, std::abs(sp_loss(T, S, {Tap::E2, Tap::E2}).value - oracle::sp(T[Tap::E2], S[Tap::E2])));
    worst = std::max(worst, std::abs(sp_loss(T, S, {Tap::Mid, Tap::Mid}).value - oracle::sp(T[Tap::Mid], S[Tap::Mid])));
    worst = std::max(worst, std::abs(at_loss(T, S, {Tap::E1, Tap::E1}).value - oracle::at(T[Tap::E1], S[Tap::E1])));
    worst = std::max(worst, std::abs(at_loss(T, S, {Tap::D1, Tap::D1}).value - oracle::at(T[Tap::D1], S[Tap::D1])));
    const double tau = 1.5 + trial % 5;
    worst = std::max(worst, std::abs(vanilla_kd_loss(T.y_hat, S.y_hat, tau).value - oracle::vanilla_kd(T.y_hat, S.y_hat, tau)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(11);
  const double tol = 1e-4;
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    const int b = rand_int(rng, 2, 3), t = rand_int(rng, 3, 5), c = rand_int(rng, 2, 4);
    const auto T = random_features(rng, b, {c + 1, t + 1, 2, 2}, {c, t + 1, 1, 1}, t);
    auto S = random_features(rng, b, {c, t, 2, 1}, {c, t, 1, 1}, t);
    const auto gt = oracle::random_tensor(rng, {b, 2, t}, 0.0, 1.0);
    SckdParams p;
    p.q = 2;
    p.kernel_mode = trial % 2 ? KernelMode::Exact : KernelMode::Taylor;

    {
      const auto a = ground_truth_loss(S.y_hat, gt);
      CHECK(rel_error(S.y_hat, a.grad, [&] { return ground_truth_loss(S.y_hat, gt).value; }) < tol);
    }
    {
      auto hS = temporal_softmax(S.y_hat);
      const auto hT = temporal_softmax(T.y_hat);
      const auto a = inter_intra_kd_loss(hT, hS);
      CHECK(rel_error(hS, a.grad, [&] { return inter_intra_kd_loss(hT, hS).value; }) < tol);
    }
    {
      auto F = oracle::random_tensor(rng, {b, t});
      const auto W = oracle::random_tensor(rng, {b, b});
      const auto G = rbf_correlation_map(F, 0.4, p.kernel_mode, 2);
      const auto a = rbf_correlation_map_backward(F, 0.4, p.kernel_mode, 2, W);
      CHECK(rel_error(F, a, [&] {
              const auto g = rbf_correlation_map(F, 0.4, p.kernel_mode, 2);
              return std::inner_product(g.values().begin(), g.values().end(), W.values().begin(), 0.0);
            }) < tol);
    }
    {
      const auto a = selective_correlation_loss(T, S, p.layers, p);
      for (Tap tap : {Tap::E2, Tap::Mid, Tap::D1}) {
        CAPTURE(static_cast<int>(tap));
        CHECK(rel_error(S[tap], a.grads[static_cast<int>(tap)],
                        [&] { return selective_correlation_loss(T, S, p.layers, p).value; }) < tol);
      }
    }
    for (Tap tap : {Tap::E1, Tap::Mid}) {
      const auto a = sp_loss(T, S, {tap, tap});
      CHECK(rel_error(S[tap], a.grads[static_cast<int>(tap)], [&] { return sp_loss(T, S, {tap, tap}).value; }) < tol);
      const auto at = at_loss(T, S, {tap, tap});
      CHECK(rel_error(S[tap], at.grads[static_cast<int>(tap)], [&] { return at_loss(T, S, {tap, tap}).value; }) < tol);
    }
    {
      const auto a = vanilla_kd_loss(T.y_hat, S.y_hat, 3.0);
      CHECK(rel_error(S.y_hat, a.grad, [&] { return vanilla_kd_loss(T.y_hat, S.y_hat, 3.0).value; }) < tol);
    }
    {
      const auto r = total_sckd_loss(S.y_hat, gt, T.y_hat, T, S, p);
      auto f = [&] { return total_sckd_loss(S.y_hat, gt, T.y_hat, T, S, p).total; };
      CHECK(rel_error(S.y_hat, r.grad_y, f) < tol);
      for (Tap tap : {Tap::E2, Tap::Mid, Tap::D1}) CHECK(rel_error(S[tap], r.grad_taps[static_cast<int>(tap)], f) < tol);
    }
    {
      auto mu = oracle::random_tensor(rng, {5}), lv = oracle::random_tensor(rng, {5});
      const auto a = gaussian_kl(mu.values(), lv.values());
      auto f = [&] { return gaussian_kl(mu.values(), lv.values()).value; };
      CHECK(rel_error(mu, TensorD({5}, a.grad_mu), f) < tol);
      CHECK(rel_error(lv, TensorD({5}, a.grad_logvar), f) < tol);
    }
    {
      auto z = oracle::random_tensor(rng, {2, 3}, -3.0, 3.0);
      const double target = trial % 2;
      const auto a = bce_with_logits(z, target);
      CHECK(rel_error(z, a.grad, [&] { return bce_with_logits(z, target).value; }) < tol);
    }
  }
}
