#pragma once

// Naive reference implementations written from the definitions, used to check
// the vectorized library code. Everything is plain loops over doubles.

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "sckd/tensor.hpp"

namespace oracle {

using sckd::TensorD;

inline double at3(const TensorD& x, int i, int c, int k) {
  return x[(static_cast<std::size_t>(i) * x.dim(1) + c) * x.dim(2) + k];
}

inline double mse(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline std::vector<double> softmax(std::vector<double> z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0;
  for (double& v : z) s += (v = std::exp(v - m));
  for (double& v : z) v /= s;
  return z;
}

// population statistics, 0 when either variance is below 1e-8
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx / n < 1e-8 || syy / n < 1e-8) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline TensorD softmax_t(const TensorD& y) {
  TensorD h(y.shape());
  const int b = y.dim(0), c = y.dim(1), t = y.dim(2);
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch) {
      std::vector<double> row(t);
      for (int k = 0; k < t; ++k) row[k] = at3(y, i, ch, k);
      row = softmax(row);
      for (int k = 0; k < t; ++k) h[(static_cast<std::size_t>(i) * c + ch) * t + k] = row[k];
    }
  return h;
}

// Mean over channels of [ (1 - mean_i rho_inter) + (1 - mean_k rho_intra) ].
inline double inter_intra(const TensorD& hT, const TensorD& hS) {
  const int b = hS.dim(0), c = hS.dim(1), t = hS.dim(2);
  double total = 0;
  for (int ch = 0; ch < c; ++ch) {
    double inter = 0;
    for (int i = 0; i < b; ++i) {
      std::vector<double> x(t), y(t);
      for (int k = 0; k < t; ++k) {
        x[k] = at3(hT, i, ch, k);
        y[k] = at3(hS, i, ch, k);
      }
      inter += pearson(x, y);
    }
    total += 1.0 - inter / b;
    if (b < 2) continue;
    double intra = 0;
    for (int k = 0; k < t; ++k) {
      std::vector<double> x(b), y(b);
      for (int i = 0; i < b; ++i) {
        x[i] = at3(hT, i, ch, k);
        y[i] = at3(hS, i, ch, k);
      }
      intra += pearson(x, y);
    }
    total += 1.0 - intra / t;
  }
  return total / c;
}

inline std::vector<std::vector<double>> unit_rows(const std::vector<std::vector<double>>& F) {
  std::vector<std::vector<double>> U = F;
  for (auto& row : U) {
    double n = 0;
    for (double v : row) n += v * v;
    n = std::sqrt(n);
    if (n < 1e-12) {
      for (double& v : row) v = 1.0 / std::sqrt(static_cast<double>(row.size()));
    } else {
      for (double& v : row) v /= n;
    }
  }
  return U;
}

inline std::vector<std::vector<double>> rbf_exact(const std::vector<std::vector<double>>& F, double gamma) {
  const auto U = unit_rows(F);
  const std::size_t b = U.size();
  std::vector<std::vector<double>> G(b, std::vector<double>(b));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < U[i].size(); ++k) d += (U[i][k] - U[j][k]) * (U[i][k] - U[j][k]);
      G[i][j] = std::exp(-gamma * d);
    }
  return G;
}

// exp(-2 gamma) * sum_{p <= P} (2 gamma)^p / p! * (u_i . u_j)^p
inline std::vector<std::vector<double>> rbf_taylor(const std::vector<std::vector<double>>& F, double gamma, int P) {
  const auto U = unit_rows(F);
  const std::size_t b = U.size();
  std::vector<std::vector<double>> G(b, std::vector<double>(b));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < U[i].size(); ++k) dot += U[i][k] * U[j][k];
      double s = 0, fact = 1;
      for (int p = 0; p <= P; ++p) {
        if (p > 0) fact *= p;
        s += std::pow(2 * gamma, p) / fact * std::pow(dot, p);
      }
      G[i][j] = std::exp(-2 * gamma) * s;
    }
  return G;
}

// b x c x t[x h x w] -> b x c x t
inline TensorD pool(const TensorD& x) {
  if (x.rank() == 3) return x;
  const int b = x.dim(0), c = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  TensorD out({b, c, t});
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int k = 0; k < t; ++k) {
        double s = 0;
        for (int r = 0; r < h; ++r)
          for (int q = 0; q < w; ++q) s += x[((((static_cast<std::size_t>(i) * c + ch) * t + k) * h + r) * w) + q];
        out[(static_cast<std::size_t>(i) * c + ch) * t + k] = s / (h * w);
      }
  return out;
}

// endpoint-preserving linear interpolation along t
inline TensorD resize(const TensorD& x, int t_new) {
  const int b = x.dim(0), c = x.dim(1), t = x.dim(2);
  if (t == t_new) return x;
  TensorD out({b, c, t_new});
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int j = 0; j < t_new; ++j) {
        const double pos = static_cast<double>(j) * (t - 1) / (t_new - 1);
        const int lo = std::min(static_cast<int>(std::floor(pos)), t - 1);
        const int hi = std::min(lo + 1, t - 1);
        const double f = pos - lo;
        out[(static_cast<std::size_t>(i) * c + ch) * t_new + j] = (1 - f) * at3(x, i, ch, lo) + f * at3(x, i, ch, hi);
      }
  return out;
}

inline std::vector<int> channels(int c, int q) {
  q = std::min(q, c);
  const int m = (c + q - 1) / q;
  std::vector<int> k;
  for (int i = 0; i < c && static_cast<int>(k.size()) < q; i += m) k.push_back(i);
  return k;
}

// (1 / (b^2 q |pairs|)) sum_pairs sum_k ||G_T^k - G_S^k||_F^2 over teacher/student tap lists
inline double selective_correlation(const std::vector<std::pair<TensorD, TensorD>>& pairs, int q, double gamma,
                                    bool taylor, int P) {
  double total = 0;
  for (const auto& [tapT, tapS] : pairs) {
    const TensorD fs = pool(tapS);
    const int b = fs.dim(0), t = fs.dim(2);
    const TensorD ft = resize(pool(tapT), t);
    const auto ks = channels(std::min(ft.dim(1), fs.dim(1)), q);
    double sum = 0;
    for (int k : ks) {
      std::vector<std::vector<double>> A(b, std::vector<double>(t)), B(b, std::vector<double>(t));
      for (int i = 0; i < b; ++i)
        for (int s = 0; s < t; ++s) {
          A[i][s] = at3(ft, i, k, s);
          B[i][s] = at3(fs, i, k, s);
        }
      const auto GA = taylor ? rbf_taylor(A, gamma, P) : rbf_exact(A, gamma);
      const auto GB = taylor ? rbf_taylor(B, gamma, P) : rbf_exact(B, gamma);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) sum += (GA[i][j] - GB[i][j]) * (GA[i][j] - GB[i][j]);
    }
    total += sum / (static_cast<double>(b) * b * static_cast<double>(ks.size()));
  }
  return total / static_cast<double>(pairs.size());
}

inline std::vector<std::vector<double>> flat_rows(const TensorD& x) {
  const int b = x.dim(0);
  const std::size_t d = x.size() / b;
  std::vector<std::vector<double>> F(b, std::vector<double>(d));
  for (int i = 0; i < b; ++i)
    for (std::size_t k = 0; k < d; ++k) F[i][k] = x[i * d + k];
  return F;
}

inline std::vector<std::vector<double>> similarity(const TensorD& x) {
  const auto U = unit_rows(flat_rows(x));
  const std::size_t b = U.size();
  std::vector<std::vector<double>> M(b, std::vector<double>(b));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < U[i].size(); ++k) s += U[i][k] * U[j][k];
      M[i][j] = s;
    }
  return M;
}

inline double sp(const TensorD& tapT, const TensorD& tapS) {
  const auto MT = similarity(tapT), MS = similarity(tapS);
  const std::size_t b = MT.size();
  double s = 0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) s += (MT[i][j] - MS[i][j]) * (MT[i][j] - MS[i][j]);
  return s / static_cast<double>(b * b);
}

inline std::vector<std::vector<double>> attention(const TensorD& pooled) {
  const int b = pooled.dim(0), c = pooled.dim(1), t = pooled.dim(2);
  std::vector<std::vector<double>> a(b, std::vector<double>(t, 0.0));
  for (int i = 0; i < b; ++i)
    for (int k = 0; k < t; ++k) {
      for (int ch = 0; ch < c; ++ch) a[i][k] += at3(pooled, i, ch, k) * at3(pooled, i, ch, k);
      a[i][k] /= c;
    }
  return unit_rows(a);
}

inline double at(const TensorD& tapT, const TensorD& tapS) {
  const TensorD fs = pool(tapS);
  const auto aS = attention(fs);
  const auto aT = attention(resize(pool(tapT), fs.dim(2)));
  double s = 0;
  for (std::size_t i = 0; i < aS.size(); ++i)
    for (std::size_t k = 0; k < aS[i].size(); ++k) s += (aT[i][k] - aS[i][k]) * (aT[i][k] - aS[i][k]);
  return s / static_cast<double>(aS.size());
}

inline double vanilla_kd(const TensorD& yT, const TensorD& yS, double tau) {
  const int b = yS.dim(0), c = yS.dim(1), t = yS.dim(2);
  double total = 0;
  for (int i = 0; i < b; ++i)
    for (int ch = 0; ch < c; ++ch) {
      std::vector<double> zt(t), zs(t);
      for (int k = 0; k < t; ++k) {
        zt[k] = at3(yT, i, ch, k) / tau;
        zs[k] = at3(yS, i, ch, k) / tau;
      }
      const auto pt = softmax(zt), ps = softmax(zs);
      double kl = 0;
      for (int k = 0; k < t; ++k) kl += pt[k] * std::log(pt[k] / ps[k]);
      total += tau * tau * kl;
    }
  return total / (static_cast<double>(b) * c);
}

inline double rmse(const std::vector<double>& p, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  return std::sqrt(s / p.size()) * 100;
}

inline double mae(const std::vector<double>& p, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - y[i]);
  return s / p.size() * 100;
}

inline double ece(const std::vector<double>& p, const std::vector<double>& y, int bins) {
  double total = 0;
  for (int bin = 0; bin < bins; ++bin) {
    double sp = 0, sy = 0;
    int n = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      int idx = static_cast<int>(std::floor(p[i] * bins));
      idx = std::clamp(idx, 0, bins - 1);
      if (idx != bin) continue;
      sp += p[i];
      sy += y[i];
      ++n;
    }
    if (n > 0) total += static_cast<double>(n) / p.size() * std::abs(sp / n - sy / n);
  }
  return total * 100;
}

inline TensorD random_tensor(std::mt19937_64& rng, sckd::Shape shape, double lo = -1.0, double hi = 1.0) {
  TensorD x(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : x.values()) v = u(rng);
  return x;
}

}  // namespace oracle
