#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "sckd/models/network.hpp"
#include "sckd/tensor.hpp"

namespace sckd::losses {

using models::Tap;

/// Loss value with its gradient w.r.t. the (student / prediction) argument.
struct LossGrad {
  double value = 0.0;
  TensorD grad;
};

/// Features of one forward pass in 64-bit. Layout matches models::TapBundle.
struct Features {
  std::array<TensorD, models::kTapCount> taps;
  TensorD y_hat;

  const TensorD& operator[](Tap t) const { return taps[static_cast<int>(t)]; }
  TensorD& operator[](Tap t) { return taps[static_cast<int>(t)]; }
};

/// Per-tap gradients; empty tensors mean "no gradient for this tap".
using TapGradsD = std::array<TensorD, models::kTapCount>;

Features to_features(const models::TapBundle& bundle);
models::TapGrads to_float(const TapGradsD& grads);
/// Adds `src` into `dst`, allocating `dst` on first use.
void accumulate(TapGradsD& dst, const TapGradsD& src, double scale = 1.0);

using TapPair = std::pair<Tap, Tap>;  // (teacher tap, student tap)

// ---- output-level objectives -------------------------------------------------

/// Mean squared error over all elements.
LossGrad ground_truth_loss(const TensorD& y_hat, const TensorD& y_gt);

/// Softmax along the temporal (last) axis of b x c x t.
TensorD temporal_softmax(const TensorD& y);
/// Given h = temporal_softmax(y) and dL/dh, returns dL/dy.
TensorD temporal_softmax_backward(const TensorD& h, const TensorD& grad_h);

/// Population variance below this counts as degenerate.
inline constexpr double kPearsonEps = 1e-8;

/// Pearson correlation; 0 when either vector has variance below kPearsonEps.
double pearson(std::span<const double> x, std::span<const double> y);
/// As pearson(), writing d rho / d y into grad_y (zeros in the degenerate case).
double pearson_grad(std::span<const double> x, std::span<const double> y, std::span<double> grad_y);

/// Inter (per-row over t) plus intra (per-time-step over the batch) Pearson
/// mismatch, averaged over channels; range [0, 4]. With b < 2 only the inter term
/// is used. Gradient is w.r.t. h_S.
LossGrad inter_intra_kd_loss(const TensorD& h_T, const TensorD& h_S);

// ---- correlation maps ----------------------------------------------------------

/// Indices {0, m, 2m, ...} below c with m = ceil(c / q). q > c is clamped to c.
std::vector<int> select_channel_indices(int c, int q);

enum class KernelMode { Exact, Taylor };

/// b x b RBF correlation map over L2-normalized rows of F (b x t). Zero rows are
/// replaced by the uniform unit vector.
TensorD rbf_correlation_map(const TensorD& F, double gamma, KernelMode mode, int order);
/// dL/dF given dL/dG for G = rbf_correlation_map(F, ...).
TensorD rbf_correlation_map_backward(const TensorD& F, double gamma, KernelMode mode, int order,
                                     const TensorD& grad_G);

struct SckdParams {
  double lambda1 = 1.0;
  double lambda2 = 10.0;
  double lambda3 = 1.0;
  double gamma = 0.4;
  int order = 2;  // Taylor order P
  int q = 8;
  std::vector<TapPair> layers{{Tap::E2, Tap::E2}, {Tap::Mid, Tap::Mid}, {Tap::D1, Tap::D1}};
  KernelMode kernel_mode = KernelMode::Taylor;
};

/// Teacher feature aligned to a student feature: spatially pooled to b x c x t
/// and resized to the student's temporal length.
TensorD align_teacher(const TensorD& tap_T, int t_student);

/// Mean over `pairs` of (1 / (b^2 q_k)) sum_k ||G_T^k - G_S^k||_F^2 with channel
/// indices from select_channel_indices(min(c_T, c_S), q). Gradients are w.r.t. the
/// student taps. Throws std::invalid_argument on an empty pair list.
struct TapLoss {
  double value = 0.0;
  TapGradsD grads;
};
TapLoss selective_correlation_loss(const Features& T, const Features& S, const std::vector<TapPair>& pairs,
                                   const SckdParams& params);

struct SckdBreakdown {
  double L_gt = 0, L_KD_c = 0, L_sc_r = 0, L_sc_f = 0, total = 0;
  TensorD grad_y;     // d total / d y_hat_S
  TapGradsD grad_taps;  // d total / d student taps
};

/// L_gt + lambda1 L_KD_c + lambda2 L_sc_r (Mid pairs) + lambda3 L_sc_f (other pairs).
/// Terms with zero weight are skipped entirely.
SckdBreakdown total_sckd_loss(const TensorD& y_hat_S, const TensorD& y_gt, const TensorD& y_hat_T,
                              const Features& T, const Features& S, const SckdParams& params);

// ---- baseline distillers -------------------------------------------------------

/// b x b similarity map of row-normalized flattened features (b x D).
TensorD sp_map(const TensorD& flat);
/// (1 / b^2) ||M_T - M_S||_F^2 over the pair's flattened taps.
TapLoss sp_loss(const Features& T, const Features& S, TapPair pair);

/// Attention vector per sample: mean over channels of F^2, L2-normalized over t.
TensorD attention_map(const TensorD& pooled);
/// Batch mean of ||a_T - a_S||^2 on pooled (and temporally aligned) taps.
TapLoss at_loss(const Features& T, const Features& S, TapPair pair);

/// tau^2 KL(softmax(y_T / tau) || softmax(y_S / tau)) along t, averaged over b and channels.
LossGrad vanilla_kd_loss(const TensorD& y_T, const TensorD& y_S, double tau);

// ---- representation-learning terms ----------------------------------------------

/// KL(N(mu, exp(logvar)) || N(0, 1)) averaged over elements, with gradients.
struct GaussianKl {
  double value = 0.0;
  std::vector<double> grad_mu, grad_logvar;
};
GaussianKl gaussian_kl(std::span<const double> mu, std::span<const double> logvar);

/// Mean binary cross-entropy on logits against a constant target in {0, 1}.
LossGrad bce_with_logits(const TensorD& logits, double target);

}  // namespace sckd::losses
