#include "sckd/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sckd/log.hpp"
#include "sckd/models/ops.hpp"

namespace sckd::losses {

namespace {

constexpr double kNormFloor = 1e-12;

void require_rank3(const TensorD& x, const char* who) {
  if (x.rank() != 3) throw ShapeError(std::string(who) + ": expected b x c x t, got " + shape_str(x.shape()));
}

TensorD pool(const TensorD& tap) { return models::spatial_average_pool(tap); }

// Row-normalized copy of a b x n matrix; zero rows become the uniform unit vector.
struct UnitRows {
  int rows = 0, cols = 0;
  std::vector<double> u;
  std::vector<double> norm;  // 0 marks a replaced row
};

UnitRows unit_rows(const double* F, int rows, int cols) {
  UnitRows r{rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols), std::vector<double>(rows)};
  for (int i = 0; i < rows; ++i) {
    const double* f = F + static_cast<std::size_t>(i) * cols;
    double ss = 0.0;
    for (int j = 0; j < cols; ++j) ss += f[j] * f[j];
    const double n = std::sqrt(ss);
    double* u = r.u.data() + static_cast<std::size_t>(i) * cols;
    if (n < kNormFloor) {
      log::write(log::Level::Debug, "losses", "zero-norm feature row replaced by uniform unit vector");
      std::fill(u, u + cols, 1.0 / std::sqrt(static_cast<double>(cols)));
      r.norm[i] = 0.0;
    } else {
      for (int j = 0; j < cols; ++j) u[j] = f[j] / n;
      r.norm[i] = n;
    }
  }
  return r;
}

// dL/dF from dL/du through u = F / ||F|| (zero for replaced rows).
void unit_rows_backward(const UnitRows& r, const double* grad_u, double* grad_F) {
  for (int i = 0; i < r.rows; ++i) {
    const double* u = r.u.data() + static_cast<std::size_t>(i) * r.cols;
    const double* gu = grad_u + static_cast<std::size_t>(i) * r.cols;
    double* gf = grad_F + static_cast<std::size_t>(i) * r.cols;
    if (r.norm[i] == 0.0) {
      std::fill(gf, gf + r.cols, 0.0);
      continue;
    }
    double dot = 0.0;
    for (int j = 0; j < r.cols; ++j) dot += u[j] * gu[j];
    for (int j = 0; j < r.cols; ++j) gf[j] = (gu[j] - dot * u[j]) / r.norm[i];
  }
}

double dot_rows(const UnitRows& r, int i, int j) {
  const double* a = r.u.data() + static_cast<std::size_t>(i) * r.cols;
  const double* b = r.u.data() + static_cast<std::size_t>(j) * r.cols;
  double s = 0.0;
  for (int k = 0; k < r.cols; ++k) s += a[k] * b[k];
  return s;
}

double sqdist_rows(const UnitRows& r, int i, int j) {
  const double* a = r.u.data() + static_cast<std::size_t>(i) * r.cols;
  const double* b = r.u.data() + static_cast<std::size_t>(j) * r.cols;
  double s = 0.0;
  for (int k = 0; k < r.cols; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

struct TaylorKernel {
  std::vector<double> coef;  // e^{-2g} (2g)^p / p!
  explicit TaylorKernel(double gamma, int order) : coef(static_cast<std::size_t>(std::max(order, 0)) + 1) {
    double c = std::exp(-2.0 * gamma);
    for (int p = 0; p <= order; ++p) {
      coef[p] = c;
      c *= 2.0 * gamma / (p + 1);
    }
  }
  double value(double s) const {
    double acc = 0.0;
    for (std::size_t p = coef.size(); p-- > 0;) acc = acc * s + coef[p];
    return acc;
  }
  double derivative(double s) const {
    double acc = 0.0;
    for (std::size_t p = coef.size(); p-- > 1;) acc = acc * s + static_cast<double>(p) * coef[p];
    return acc;
  }
};

TensorD kernel_matrix(const UnitRows& r, double gamma, KernelMode mode, int order) {
  const int b = r.rows;
  TensorD G({b, b});
  const TaylorKernel taylor(gamma, order);
  for (int i = 0; i < b; ++i) {
    for (int j = i; j < b; ++j) {
      const double v = mode == KernelMode::Exact ? std::exp(-gamma * sqdist_rows(r, i, j)) : taylor.value(dot_rows(r, i, j));
      G[static_cast<std::size_t>(i) * b + j] = v;
      G[static_cast<std::size_t>(j) * b + i] = v;
    }
  }
  return G;
}

// Copies channel k of a b x c x t tensor into a b x t row block.
std::vector<double> channel_rows(const TensorD& x, int k) {
  const int b = x.dim(0), c = x.dim(1), t = x.dim(2);
  std::vector<double> rows(static_cast<std::size_t>(b) * t);
  for (int i = 0; i < b; ++i) {
    const double* src = x.data() + (static_cast<std::size_t>(i) * c + k) * t;
    std::copy(src, src + t, rows.data() + static_cast<std::size_t>(i) * t);
  }
  return rows;
}

bool is_mid_pair(const TapPair& p) { return p.first == Tap::Mid || p.second == Tap::Mid; }

}  // namespace

// ---- plumbing -----------------------------------------------------------------

Features to_features(const models::TapBundle& bundle) {
  Features f;
  for (int i = 0; i < models::kTapCount; ++i) f.taps[i] = bundle.taps[i].cast<double>();
  f.y_hat = bundle.y_hat.cast<double>();
  return f;
}

models::TapGrads to_float(const TapGradsD& grads) {
  models::TapGrads out;
  for (int i = 0; i < models::kTapCount; ++i) {
    if (!grads[i].empty()) out[i] = grads[i].cast<float>();
  }
  return out;
}

void accumulate(TapGradsD& dst, const TapGradsD& src, double scale) {
  for (int i = 0; i < models::kTapCount; ++i) {
    if (src[i].empty()) continue;
    if (dst[i].empty()) dst[i] = TensorD(src[i].shape());
    require_same_shape(dst[i].shape(), src[i].shape(), "accumulate");
    for (std::size_t k = 0; k < src[i].size(); ++k) dst[i][k] += scale * src[i][k];
  }
}

// ---- output-level objectives -------------------------------------------------

LossGrad ground_truth_loss(const TensorD& y_hat, const TensorD& y_gt) {
  require_same_shape(y_hat.shape(), y_gt.shape(), "ground_truth_loss");
  if (y_hat.empty()) throw ShapeError("ground_truth_loss: empty input");
  LossGrad r{0.0, TensorD(y_hat.shape())};
  const double n = static_cast<double>(y_hat.size());
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    const double d = y_hat[i] - y_gt[i];
    r.value += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.value /= n;
  return r;
}

TensorD temporal_softmax(const TensorD& y) {
  require_rank3(y, "temporal_softmax");
  TensorD h(y.shape());
  const int t = y.dim(2);
  const std::size_t rows = y.size() / static_cast<std::size_t>(t);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = y.data() + r * t;
    double* dst = h.data() + r * t;
    const double m = *std::max_element(src, src + t);
    double z = 0.0;
    for (int i = 0; i < t; ++i) z += (dst[i] = std::exp(src[i] - m));
    for (int i = 0; i < t; ++i) dst[i] /= z;
  }
  return h;
}

TensorD temporal_softmax_backward(const TensorD& h, const TensorD& grad_h) {
  require_same_shape(h.shape(), grad_h.shape(), "temporal_softmax_backward");
  TensorD g(h.shape());
  const int t = h.dim(2);
  const std::size_t rows = h.size() / static_cast<std::size_t>(t);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* hh = h.data() + r * t;
    const double* gh = grad_h.data() + r * t;
    double dot = 0.0;
    for (int i = 0; i < t; ++i) dot += gh[i] * hh[i];
    for (int i = 0; i < t; ++i) g[r * t + i] = hh[i] * (gh[i] - dot);
  }
  return g;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  std::vector<double> unused(y.size());
  return pearson_grad(x, y, unused);
}

double pearson_grad(std::span<const double> x, std::span<const double> y, std::span<double> grad_y) {
  if (x.size() != y.size() || grad_y.size() != y.size()) throw ShapeError("pearson: length mismatch");
  const std::size_t n = x.size();
  std::fill(grad_y.begin(), grad_y.end(), 0.0);
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx / static_cast<double>(n) < kPearsonEps || syy / static_cast<double>(n) < kPearsonEps) return 0.0;
  const double denom = std::sqrt(sxx * syy);
  const double rho = sxy / denom;
  for (std::size_t i = 0; i < n; ++i) grad_y[i] = (x[i] - mx) / denom - rho * (y[i] - my) / syy;
  return rho;
}

LossGrad inter_intra_kd_loss(const TensorD& h_T, const TensorD& h_S) {
  require_rank3(h_S, "inter_intra_kd_loss");
  require_same_shape(h_T.shape(), h_S.shape(), "inter_intra_kd_loss");
  const int b = h_S.dim(0), c = h_S.dim(1), t = h_S.dim(2);
  LossGrad r{0.0, TensorD(h_S.shape())};
  std::vector<double> g(static_cast<std::size_t>(std::max(b, t)));
  std::vector<double> xs(b), ys(b);
  for (int ch = 0; ch < c; ++ch) {
    double inter = 0.0;
    for (int i = 0; i < b; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * t;
      const double rho = pearson_grad({h_T.data() + off, static_cast<std::size_t>(t)},
                                      {h_S.data() + off, static_cast<std::size_t>(t)}, {g.data(), static_cast<std::size_t>(t)});
      inter += rho;
      for (int k = 0; k < t; ++k) r.grad[off + k] -= g[k] / (static_cast<double>(b) * c);
    }
    r.value += 1.0 - inter / b;
    if (b < 2) continue;
    double intra = 0.0;
    for (int k = 0; k < t; ++k) {
      for (int i = 0; i < b; ++i) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * t + k;
        xs[i] = h_T[off];
        ys[i] = h_S[off];
      }
      intra += pearson_grad(xs, ys, {g.data(), static_cast<std::size_t>(b)});
      for (int i = 0; i < b; ++i) r.grad[(static_cast<std::size_t>(i) * c + ch) * t + k] -= g[i] / (static_cast<double>(t) * c);
    }
    r.value += 1.0 - intra / t;
  }
  r.value /= c;
  return r;
}

// ---- correlation maps ----------------------------------------------------------

std::vector<int> select_channel_indices(int c, int q) {
  if (c < 1 || q < 1) throw std::invalid_argument("select_channel_indices: c and q must be >= 1");
  if (q > c) {
    log::warn("losses", "q=" + std::to_string(q) + " exceeds channel count " + std::to_string(c) + "; clamped");
    q = c;
  }
  const int m = (c + q - 1) / q;
  std::vector<int> k;
  for (int i = 0; i < c && static_cast<int>(k.size()) < q; i += m) k.push_back(i);
  return k;
}

TensorD rbf_correlation_map(const TensorD& F, double gamma, KernelMode mode, int order) {
  if (F.rank() != 2 || F.dim(0) < 1 || F.dim(1) < 1) throw ShapeError("rbf_correlation_map: expected b x t, got " + shape_str(F.shape()));
  if (!(gamma > 0.0)) throw std::invalid_argument("rbf_correlation_map: gamma must be positive");
  return kernel_matrix(unit_rows(F.data(), F.dim(0), F.dim(1)), gamma, mode, order);
}

TensorD rbf_correlation_map_backward(const TensorD& F, double gamma, KernelMode mode, int order, const TensorD& grad_G) {
  const int b = F.dim(0), t = F.dim(1);
  require_same_shape(grad_G.shape(), {b, b}, "rbf_correlation_map_backward");
  const UnitRows r = unit_rows(F.data(), b, t);
  const TaylorKernel taylor(gamma, order);
  std::vector<double> gu(static_cast<std::size_t>(b) * t, 0.0);
  for (int i = 0; i < b; ++i) {
    const double* ui = r.u.data() + static_cast<std::size_t>(i) * t;
    double* gi = gu.data() + static_cast<std::size_t>(i) * t;
    for (int j = 0; j < b; ++j) {
      const double w = grad_G[static_cast<std::size_t>(i) * b + j] + grad_G[static_cast<std::size_t>(j) * b + i];
      if (w == 0.0) continue;
      const double* uj = r.u.data() + static_cast<std::size_t>(j) * t;
      if (mode == KernelMode::Exact) {
        if (i == j) continue;
        const double g = std::exp(-gamma * sqdist_rows(r, i, j));
        const double s = -2.0 * gamma * g * w;
        for (int k = 0; k < t; ++k) gi[k] += s * (ui[k] - uj[k]);
      } else {
        const double s = w * taylor.derivative(dot_rows(r, i, j));
        for (int k = 0; k < t; ++k) gi[k] += s * uj[k];
      }
    }
  }
  TensorD out({b, t});
  unit_rows_backward(r, gu.data(), out.data());
  return out;
}

TensorD align_teacher(const TensorD& tap_T, int t_student) {
  TensorD f = pool(tap_T);
  if (f.dim(2) != t_student) f = models::temporal_resize(f, t_student);
  return f;
}

TapLoss selective_correlation_loss(const Features& T, const Features& S, const std::vector<TapPair>& pairs,
                                   const SckdParams& params) {
  if (pairs.empty()) throw std::invalid_argument("selective_correlation_loss: empty layer-pair set");
  TapLoss out;
  for (const auto& [lt, ls] : pairs) {
    const TensorD& tap_S = S[ls];
    if (T[lt].empty() || tap_S.empty()) {
      throw std::invalid_argument("selective_correlation_loss: tap pair (" + std::string(models::tap_name(lt)) + ", " +
                                  std::string(models::tap_name(ls)) + ") missing from a feature bundle");
    }
    const TensorD fs = pool(tap_S);
    const int b = fs.dim(0), cs = fs.dim(1), t = fs.dim(2);
    const TensorD ft = align_teacher(T[lt], t);
    if (ft.dim(0) != b) throw ShapeError("selective_correlation_loss: teacher/student batch mismatch");
    const auto ks = select_channel_indices(std::min(ft.dim(1), cs), params.q);
    const double norm = 1.0 / (static_cast<double>(b) * b * static_cast<double>(ks.size()) * static_cast<double>(pairs.size()));

    TensorD grad_pooled(fs.shape());
    for (int k : ks) {
      const TensorD rows_T({b, t}, channel_rows(ft, k));
      const TensorD rows_S({b, t}, channel_rows(fs, k));
      const TensorD GT = rbf_correlation_map(rows_T, params.gamma, params.kernel_mode, params.order);
      const TensorD GS = rbf_correlation_map(rows_S, params.gamma, params.kernel_mode, params.order);
      TensorD dG({b, b});
      for (std::size_t e = 0; e < GS.size(); ++e) {
        const double d = GS[e] - GT[e];
        out.value += norm * d * d;
        dG[e] = 2.0 * norm * d;
      }
      const TensorD dF = rbf_correlation_map_backward(rows_S, params.gamma, params.kernel_mode, params.order, dG);
      for (int i = 0; i < b; ++i) {
        for (int j = 0; j < t; ++j) grad_pooled[(static_cast<std::size_t>(i) * cs + k) * t + j] += dF[static_cast<std::size_t>(i) * t + j];
      }
    }
    TapGradsD g;
    g[static_cast<int>(ls)] = models::spatial_average_pool_backward(grad_pooled, tap_S.shape());
    accumulate(out.grads, g);
  }
  return out;
}

SckdBreakdown total_sckd_loss(const TensorD& y_hat_S, const TensorD& y_gt, const TensorD& y_hat_T, const Features& T,
                              const Features& S, const SckdParams& params) {
  SckdBreakdown r;
  auto gt = ground_truth_loss(y_hat_S, y_gt);
  r.L_gt = gt.value;
  r.grad_y = std::move(gt.grad);

  if (params.lambda1 != 0.0) {
    const TensorD h_T = temporal_softmax(y_hat_T);
    const TensorD h_S = temporal_softmax(y_hat_S);
    const auto kd = inter_intra_kd_loss(h_T, h_S);
    r.L_KD_c = kd.value;
    const TensorD gy = temporal_softmax_backward(h_S, kd.grad);
    for (std::size_t i = 0; i < gy.size(); ++i) r.grad_y[i] += params.lambda1 * gy[i];
  }

  std::vector<TapPair> mid, feat;
  for (const auto& p : params.layers) (is_mid_pair(p) ? mid : feat).push_back(p);
  if (params.lambda2 != 0.0 && !mid.empty()) {
    const auto sc = selective_correlation_loss(T, S, mid, params);
    r.L_sc_r = sc.value;
    accumulate(r.grad_taps, sc.grads, params.lambda2);
  }
  if (params.lambda3 != 0.0 && !feat.empty()) {
    const auto sc = selective_correlation_loss(T, S, feat, params);
    r.L_sc_f = sc.value;
    accumulate(r.grad_taps, sc.grads, params.lambda3);
  }
  r.total = r.L_gt + params.lambda1 * r.L_KD_c + params.lambda2 * r.L_sc_r + params.lambda3 * r.L_sc_f;
  return r;
}

// ---- baseline distillers -------------------------------------------------------

TensorD sp_map(const TensorD& flat) {
  if (flat.rank() != 2) throw ShapeError("sp_map: expected b x D, got " + shape_str(flat.shape()));
  const int b = flat.dim(0), d = flat.dim(1);
  const UnitRows r = unit_rows(flat.data(), b, d);
  TensorD M({b, b});
  for (int i = 0; i < b; ++i) {
    for (int j = i; j < b; ++j) M[static_cast<std::size_t>(i) * b + j] = M[static_cast<std::size_t>(j) * b + i] = dot_rows(r, i, j);
  }
  return M;
}

TapLoss sp_loss(const Features& T, const Features& S, TapPair pair) {
  const TensorD& tap_T = T[pair.first];
  const TensorD& tap_S = S[pair.second];
  const int b = tap_S.dim(0);
  if (tap_T.dim(0) != b) throw ShapeError("sp_loss: teacher/student batch mismatch");
  const int dt = static_cast<int>(tap_T.size() / b), ds = static_cast<int>(tap_S.size() / b);
  const UnitRows rt = unit_rows(tap_T.data(), b, dt);
  const UnitRows rs = unit_rows(tap_S.data(), b, ds);
  std::vector<double> dM(static_cast<std::size_t>(b) * b);
  TapLoss out;
  const double norm = 1.0 / (static_cast<double>(b) * b);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      const double d = dot_rows(rs, i, j) - dot_rows(rt, i, j);
      out.value += norm * d * d;
      dM[static_cast<std::size_t>(i) * b + j] = 2.0 * norm * d;
    }
  }
  // dL/du_i = sum_j (dM_ij + dM_ji) u_j
  std::vector<double> gu(static_cast<std::size_t>(b) * ds, 0.0);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      const double w = dM[static_cast<std::size_t>(i) * b + j] + dM[static_cast<std::size_t>(j) * b + i];
      const double* uj = rs.u.data() + static_cast<std::size_t>(j) * ds;
      double* gi = gu.data() + static_cast<std::size_t>(i) * ds;
      for (int k = 0; k < ds; ++k) gi[k] += w * uj[k];
    }
  }
  TensorD g(tap_S.shape());
  unit_rows_backward(rs, gu.data(), g.data());
  out.grads[static_cast<int>(pair.second)] = std::move(g);
  return out;
}

TensorD attention_map(const TensorD& pooled) {
  require_rank3(pooled, "attention_map");
  const int b = pooled.dim(0), c = pooled.dim(1), t = pooled.dim(2);
  TensorD a({b, t});
  for (int i = 0; i < b; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double* f = pooled.data() + (static_cast<std::size_t>(i) * c + ch) * t;
      for (int k = 0; k < t; ++k) a[static_cast<std::size_t>(i) * t + k] += f[k] * f[k] / c;
    }
  }
  const UnitRows r = unit_rows(a.data(), b, t);
  return TensorD({b, t}, r.u);
}

TapLoss at_loss(const Features& T, const Features& S, TapPair pair) {
  const TensorD& tap_S = S[pair.second];
  const TensorD fs = pool(tap_S);
  const int b = fs.dim(0), c = fs.dim(1), t = fs.dim(2);
  const TensorD aT = attention_map(align_teacher(T[pair.first], t));
  if (aT.dim(0) != b) throw ShapeError("at_loss: teacher/student batch mismatch");

  TensorD raw({b, t});
  for (int i = 0; i < b; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double* f = fs.data() + (static_cast<std::size_t>(i) * c + ch) * t;
      for (int k = 0; k < t; ++k) raw[static_cast<std::size_t>(i) * t + k] += f[k] * f[k] / c;
    }
  }
  const UnitRows rs = unit_rows(raw.data(), b, t);
  TapLoss out;
  std::vector<double> gu(static_cast<std::size_t>(b) * t);
  for (std::size_t e = 0; e < gu.size(); ++e) {
    const double d = rs.u[e] - aT[e];
    out.value += d * d / b;
    gu[e] = 2.0 * d / b;
  }
  std::vector<double> ga(gu.size());
  unit_rows_backward(rs, gu.data(), ga.data());
  TensorD gp(fs.shape());
  for (int i = 0; i < b; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * t;
      for (int k = 0; k < t; ++k) gp[off + k] = ga[static_cast<std::size_t>(i) * t + k] * 2.0 * fs[off + k] / c;
    }
  }
  out.grads[static_cast<int>(pair.second)] = models::spatial_average_pool_backward(gp, tap_S.shape());
  return out;
}

LossGrad vanilla_kd_loss(const TensorD& y_T, const TensorD& y_S, double tau) {
  require_rank3(y_S, "vanilla_kd_loss");
  require_same_shape(y_T.shape(), y_S.shape(), "vanilla_kd_loss");
  if (!(tau > 0.0)) throw std::invalid_argument("vanilla_kd_loss: tau must be positive");
  TensorD zt(y_T.shape()), zs(y_S.shape());
  for (std::size_t i = 0; i < y_T.size(); ++i) {
    zt[i] = y_T[i] / tau;
    zs[i] = y_S[i] / tau;
  }
  const TensorD pt = temporal_softmax(zt), ps = temporal_softmax(zs);
  const int t = y_S.dim(2);
  const std::size_t rows = y_S.size() / static_cast<std::size_t>(t);
  LossGrad r{0.0, TensorD(y_S.shape())};
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t off = row * t;
    // log-softmax via the max-shifted logits keeps tiny probabilities exact
    const double mt = *std::max_element(zt.data() + off, zt.data() + off + t);
    const double ms = *std::max_element(zs.data() + off, zs.data() + off + t);
    double lt = 0.0, ls = 0.0;
    for (int k = 0; k < t; ++k) {
      lt += std::exp(zt[off + k] - mt);
      ls += std::exp(zs[off + k] - ms);
    }
    lt = std::log(lt) + mt;
    ls = std::log(ls) + ms;
    double kl = 0.0;
    for (int k = 0; k < t; ++k) kl += pt[off + k] * ((zt[off + k] - lt) - (zs[off + k] - ls));
    r.value += tau * tau * kl / static_cast<double>(rows);
    for (int k = 0; k < t; ++k) r.grad[off + k] = tau * (ps[off + k] - pt[off + k]) / static_cast<double>(rows);
  }
  return r;
}

// ---- representation-learning terms ----------------------------------------------

GaussianKl gaussian_kl(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size() || mu.empty()) throw ShapeError("gaussian_kl: mu/logvar length mismatch or empty");
  const double n = static_cast<double>(mu.size());
  GaussianKl r{0.0, std::vector<double>(mu.size()), std::vector<double>(mu.size())};
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double ev = std::exp(logvar[i]);
    r.value += 0.5 * (mu[i] * mu[i] + ev - logvar[i] - 1.0) / n;
    r.grad_mu[i] = mu[i] / n;
    r.grad_logvar[i] = 0.5 * (ev - 1.0) / n;
  }
  return r;
}

LossGrad bce_with_logits(const TensorD& logits, double target) {
  if (logits.empty()) throw ShapeError("bce_with_logits: empty input");
  const double n = static_cast<double>(logits.size());
  LossGrad r{0.0, TensorD(logits.shape())};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    // softplus(z) - target * z, written to avoid overflow
    const double sp = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    r.value += (sp - target * z) / n;
    r.grad[i] = (1.0 / (1.0 + std::exp(-z)) - target) / n;
  }
  return r;
}

}  // namespace sckd::losses
