#include "sckd/models/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "sckd/models/ops.hpp"

namespace sckd::models {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

Parameter make_param(std::string name, Shape shape) {
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(shape);
  p.grad = Tensor(std::move(shape));
  return p;
}

void init_uniform(Tensor& t, int fan_in, double gain, std::mt19937_64& rng) {
  const double bound = std::sqrt(gain * 3.0 / std::max(1, fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (float& v : t.values()) v = static_cast<float>(dist(rng));
}

std::string dims_str(Dims3 d) {
  return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + ")";
}

void require_rank5(const Tensor& x, const char* who) {
  if (x.rank() != 5) throw ShapeError(std::string(who) + ": expected b x c x t x h x w, got " + shape_str(x.shape()));
}

}  // namespace

// ---- Conv3d -------------------------------------------------------------------

Conv3d::Conv3d(std::string name, int in_ch, int out_ch, Dims3 kernel, Dims3 stride, Dims3 padding,
               std::mt19937_64& rng, double gain)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(padding) {
  const int k = in_ch * kernel[0] * kernel[1] * kernel[2];
  weight_ = make_param(name + ".weight", {out_ch, k});
  bias_ = make_param(name + ".bias", {out_ch});
  init_uniform(weight_.value, k, gain, rng);
}

Dims3 Conv3d::output_dims(Dims3 in) const {
  Dims3 out{};
  for (int i = 0; i < 3; ++i) out[i] = (in[i] + 2 * pad_[i] - kernel_[i]) / stride_[i] + 1;
  return out;
}

// Per kernel tap, the flat input offset (within one channel plane) read by each output
// position, or -1 where the tap lands in padding.
void Conv3d::build_gather(Dims3 in) {
  if (in == gather_in_ && !gather_.empty()) return;
  gather_in_ = in;
  const auto [to, ho, wo] = out_dims_;
  const std::size_t p = static_cast<std::size_t>(to) * ho * wo;
  const int taps = kernel_[0] * kernel_[1] * kernel_[2];
  gather_.assign(static_cast<std::size_t>(taps) * p, -1);
  int tap = 0;
  for (int a = 0; a < kernel_[0]; ++a) {
    for (int bb = 0; bb < kernel_[1]; ++bb) {
      for (int cc = 0; cc < kernel_[2]; ++cc, ++tap) {
        std::int32_t* idx = gather_.data() + static_cast<std::size_t>(tap) * p;
        for (int ot = 0; ot < to; ++ot) {
          const int it = ot * stride_[0] - pad_[0] + a;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride_[1] - pad_[1] + bb;
            for (int ow = 0; ow < wo; ++ow, ++idx) {
              const int iw = ow * stride_[2] - pad_[2] + cc;
              if (it >= 0 && it < in[0] && ih >= 0 && ih < in[1] && iw >= 0 && iw < in[2]) {
                *idx = (it * in[1] + ih) * in[2] + iw;
              }
            }
          }
        }
      }
    }
  }
}

// Column matrix for samples [s0, s0 + nb): row = (ci, kernel tap), column = (sample, output position).
void Conv3d::im2col(const Tensor& x, int s0, int nb, float* col) const {
  const std::size_t p = static_cast<std::size_t>(out_dims_[0]) * out_dims_[1] * out_dims_[2];
  const std::size_t n = static_cast<std::size_t>(nb) * p;
  const std::size_t in_plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3) * x.dim(4);
  const int taps = kernel_[0] * kernel_[1] * kernel_[2];
  for (int ci = 0; ci < in_ch_; ++ci) {
    for (int tap = 0; tap < taps; ++tap) {
      const std::int32_t* idx = gather_.data() + static_cast<std::size_t>(tap) * p;
      float* d = col + (static_cast<std::size_t>(ci) * taps + tap) * n;
      for (int s = s0; s < s0 + nb; ++s, d += p) {
        const float* src = x.data() + (static_cast<std::size_t>(s) * in_ch_ + ci) * in_plane;
        for (std::size_t i = 0; i < p; ++i) d[i] = idx[i] >= 0 ? src[idx[i]] : 0.0f;
      }
    }
  }
}

void Conv3d::col2im(const float* col, int s0, int nb, Tensor& dx) const {
  const std::size_t p = static_cast<std::size_t>(out_dims_[0]) * out_dims_[1] * out_dims_[2];
  const std::size_t n = static_cast<std::size_t>(nb) * p;
  const std::size_t in_plane = static_cast<std::size_t>(dx.dim(2)) * dx.dim(3) * dx.dim(4);
  const int taps = kernel_[0] * kernel_[1] * kernel_[2];
  for (int ci = 0; ci < in_ch_; ++ci) {
    for (int tap = 0; tap < taps; ++tap) {
      const std::int32_t* idx = gather_.data() + static_cast<std::size_t>(tap) * p;
      const float* g = col + (static_cast<std::size_t>(ci) * taps + tap) * n;
      for (int s = s0; s < s0 + nb; ++s, g += p) {
        float* dst = dx.data() + (static_cast<std::size_t>(s) * in_ch_ + ci) * in_plane;
        for (std::size_t i = 0; i < p; ++i) {
          if (idx[i] >= 0) dst[idx[i]] += g[i];
        }
      }
    }
  }
}

int Conv3d::chunk_samples(std::size_t p, int b) const {
  constexpr std::size_t kTargetColumns = 4096;
  return static_cast<int>(std::clamp<std::size_t>((kTargetColumns + p - 1) / p, 1, static_cast<std::size_t>(b)));
}

Tensor Conv3d::forward(const Tensor& x, bool /*training*/) {
  require_rank5(x, "Conv3d");
  if (x.dim(1) != in_ch_) {
    throw ShapeError("Conv3d: expected " + std::to_string(in_ch_) + " input channels, got " + shape_str(x.shape()));
  }
  const int b = x.dim(0);
  out_dims_ = output_dims({x.dim(2), x.dim(3), x.dim(4)});
  const auto [to, ho, wo] = out_dims_;
  if (to <= 0 || ho <= 0 || wo <= 0) throw ShapeError("Conv3d: input " + shape_str(x.shape()) + " too small for kernel");
  input_ = x;
  build_gather({x.dim(2), x.dim(3), x.dim(4)});
  const auto p = static_cast<Eigen::Index>(to) * ho * wo;
  const auto k = static_cast<Eigen::Index>(weight_.value.size() / out_ch_);
  const int chunk = chunk_samples(static_cast<std::size_t>(p), b);
  std::vector<float> col(static_cast<std::size_t>(k * p * chunk));
  MatR y;
  const CMapR w(weight_.value.data(), out_ch_, k);

  Tensor out({b, out_ch_, to, ho, wo});
  for (int s0 = 0; s0 < b; s0 += chunk) {
    const int nb = std::min(chunk, b - s0);
    const Eigen::Index n = nb * p;
    im2col(x, s0, nb, col.data());
    const CMapR c(col.data(), k, n);
    if (nb == 1) {
      MapR(out.data() + static_cast<std::size_t>(s0) * out_ch_ * p, out_ch_, p).noalias() = w * c;
    } else {
      y.resize(out_ch_, n);
      y.noalias() = w * c;
      for (int s = 0; s < nb; ++s) {
        for (int co = 0; co < out_ch_; ++co) {
          const float* src = y.data() + co * n + s * p;
          std::copy(src, src + p, out.data() + (static_cast<std::size_t>(s0 + s) * out_ch_ + co) * p);
        }
      }
    }
  }
  for (int s = 0; s < b; ++s) {
    for (int co = 0; co < out_ch_; ++co) {
      float* dst = out.data() + (static_cast<std::size_t>(s) * out_ch_ + co) * p;
      const float bias = bias_.value[co];
      for (Eigen::Index i = 0; i < p; ++i) dst[i] += bias;
    }
  }
  return out;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  const int b = input_.dim(0);
  const auto [to, ho, wo] = out_dims_;
  const auto p = static_cast<Eigen::Index>(to) * ho * wo;
  const auto k = static_cast<Eigen::Index>(weight_.value.size() / out_ch_);
  if (grad_out.size() != static_cast<std::size_t>(b * p * out_ch_)) {
    throw ShapeError("Conv3d::backward: gradient shape mismatch");
  }
  const int chunk = chunk_samples(static_cast<std::size_t>(p), b);
  std::vector<float> col(static_cast<std::size_t>(k * p * chunk));
  MatR dy, dcol;
  const CMapR w(weight_.value.data(), out_ch_, k);
  MapR dw(weight_.grad.data(), out_ch_, k);

  Tensor dx(input_.shape());
  for (int s0 = 0; s0 < b; s0 += chunk) {
    const int nb = std::min(chunk, b - s0);
    const Eigen::Index n = nb * p;
    im2col(input_, s0, nb, col.data());
    const CMapR c(col.data(), k, n);
    const float* gptr = grad_out.data() + static_cast<std::size_t>(s0) * out_ch_ * p;
    if (nb > 1) {
      dy.resize(out_ch_, n);
      for (int s = 0; s < nb; ++s) {
        for (int co = 0; co < out_ch_; ++co) {
          const float* src = gptr + (static_cast<std::size_t>(s) * out_ch_ + co) * p;
          std::copy(src, src + p, dy.data() + co * n + s * p);
        }
      }
      gptr = dy.data();
    }
    const CMapR g(gptr, out_ch_, n);
    dw.noalias() += g * c.transpose();
    for (int co = 0; co < out_ch_; ++co) bias_.grad[co] += g.row(co).sum();
    if (input_grad_) {
      dcol.resize(k, n);
      dcol.noalias() = w.transpose() * g;
      col2im(dcol.data(), s0, nb, dx);
    }
  }
  return dx;
}

void Conv3d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

std::string Conv3d::describe() const {
  return "conv3d " + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) + " k" + dims_str(kernel_) + " s" +
         dims_str(stride_) + " p" + dims_str(pad_);
}

// ---- activations -----------------------------------------------------------------

Tensor Relu::forward(const Tensor& x, bool /*training*/) {
  shape_ = x.shape();
  Tensor out(x.shape());
  mask_.resize(x.size());
  const float* src = x.data();
  float* dst = out.data();
  std::uint8_t* m = mask_.data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float v = src[i];
    m[i] = v > 0.0f;
    dst[i] = v > 0.0f ? v : 0.0f;
  }
  return out;
}

Tensor Relu::backward(const Tensor& grad_out) {
  Tensor g(grad_out.shape());
  const float* src = grad_out.data();
  float* dst = g.data();
  const std::uint8_t* m = mask_.data();
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] = m[i] ? src[i] : 0.0f;
  return g;
}

Tensor Sigmoid::forward(const Tensor& x, bool /*training*/) {
  out_ = x;
  for (float& v : out_.values()) v = 1.0f / (1.0f + std::exp(-v));
  return out_;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= out_[i] * (1.0f - out_[i]);
  return g;
}

// ---- pooling / resampling ---------------------------------------------------

Tensor MaxPool3d::forward(const Tensor& x, bool /*training*/) {
  require_rank5(x, "MaxPool3d");
  in_shape_ = x.shape();
  const int b = x.dim(0), c = x.dim(1), ti = x.dim(2), hi = x.dim(3), wi = x.dim(4);
  Dims3 o{};
  const Dims3 in{ti, hi, wi};
  for (int i = 0; i < 3; ++i) o[i] = (in[i] + 2 * pad_[i] - kernel_[i]) / stride_[i] + 1;
  Tensor out({b, c, o[0], o[1], o[2]});
  argmax_.assign(out.size(), -1);
  const std::size_t plane = static_cast<std::size_t>(ti) * hi * wi;
  std::size_t idx = 0;
  for (int s = 0; s < b * c; ++s) {
    const float* src = x.data() + s * plane;
    for (int ot = 0; ot < o[0]; ++ot) {
      for (int oh = 0; oh < o[1]; ++oh) {
        for (int ow = 0; ow < o[2]; ++ow, ++idx) {
          float best = -std::numeric_limits<float>::infinity();
          std::int32_t arg = -1;
          for (int a = 0; a < kernel_[0]; ++a) {
            const int it = ot * stride_[0] - pad_[0] + a;
            if (it < 0 || it >= ti) continue;
            for (int bb = 0; bb < kernel_[1]; ++bb) {
              const int ih = oh * stride_[1] - pad_[1] + bb;
              if (ih < 0 || ih >= hi) continue;
              for (int cc = 0; cc < kernel_[2]; ++cc) {
                const int iw = ow * stride_[2] - pad_[2] + cc;
                if (iw < 0 || iw >= wi) continue;
                const auto off = static_cast<std::int32_t>((it * hi + ih) * wi + iw);
                if (src[off] > best) {
                  best = src[off];
                  arg = off;
                }
              }
            }
          }
          out[idx] = best;
          argmax_[idx] = arg;
        }
      }
    }
  }
  return out;
}

Tensor MaxPool3d::backward(const Tensor& grad_out) {
  Tensor dx(in_shape_);
  const std::size_t plane = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3] * in_shape_[4];
  const std::size_t out_plane = grad_out.size() / (static_cast<std::size_t>(in_shape_[0]) * in_shape_[1]);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const std::size_t s = i / out_plane;
    dx[s * plane + static_cast<std::size_t>(argmax_[i])] += grad_out[i];
  }
  return dx;
}

std::string MaxPool3d::describe() const { return "maxpool3d k" + dims_str(kernel_) + " s" + dims_str(stride_); }

Tensor TemporalUpsample::forward(const Tensor& x, bool /*training*/) {
  t_in_ = x.dim(2);
  return temporal_resize(x, t_in_ * factor_);
}

Tensor TemporalUpsample::backward(const Tensor& grad_out) { return temporal_resize_backward(grad_out, t_in_); }

// ---- Linear -------------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features, std::mt19937_64& rng, double gain)
    : in_(in_features), out_(out_features) {
  weight_ = make_param(name + ".weight", {out_features, in_features});
  bias_ = make_param(name + ".bias", {out_features});
  init_uniform(weight_.value, in_features, gain, rng);
}

Tensor Linear::forward(const Tensor& x, bool /*training*/) {
  if (x.rank() != 2 || x.dim(1) != in_) throw ShapeError("Linear: expected b x " + std::to_string(in_) + ", got " + shape_str(x.shape()));
  input_ = x;
  const int b = x.dim(0);
  Tensor out({b, out_});
  MapR(out.data(), b, out_).noalias() = CMapR(x.data(), b, in_) * CMapR(weight_.value.data(), out_, in_).transpose();
  for (int s = 0; s < b; ++s) {
    for (int o = 0; o < out_; ++o) out[static_cast<std::size_t>(s) * out_ + o] += bias_.value[o];
  }
  return out;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const int b = input_.dim(0);
  CMapR g(grad_out.data(), b, out_);
  MapR(weight_.grad.data(), out_, in_).noalias() += g.transpose() * CMapR(input_.data(), b, in_);
  for (int o = 0; o < out_; ++o) bias_.grad[o] += g.col(o).sum();
  Tensor dx({b, in_});
  MapR(dx.data(), b, in_).noalias() = g * CMapR(weight_.value.data(), out_, in_);
  return dx;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

std::string Linear::describe() const { return "linear " + std::to_string(in_) + "->" + std::to_string(out_); }

// ---- Sequential -----------------------------------------------------------------

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Tensor Sequential::forward(const Tensor& x, bool training) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, training);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers_) l->collect(out);
}

std::string Sequential::describe() const {
  std::string s;
  for (const auto& l : layers_) s += (s.empty() ? "" : " | ") + l->describe();
  return s;
}

// ---- Inception3d ---------------------------------------------------------------

Inception3d::Inception3d(const std::string& name, int in_ch, Widths w, std::mt19937_64& rng)
    : widths_{w.b0, w.b1, w.b2, w.b3} {
  const Dims3 one{1, 1, 1}, zero{0, 0, 0}, three{3, 3, 3};
  branches_[0].emplace<Conv3d>(name + ".b0", in_ch, w.b0, one, one, zero, rng);
  branches_[0].emplace<Relu>();
  branches_[1].emplace<Conv3d>(name + ".b1a", in_ch, w.b1_reduce, one, one, zero, rng);
  branches_[1].emplace<Relu>();
  branches_[1].emplace<Conv3d>(name + ".b1b", w.b1_reduce, w.b1, three, one, one, rng);
  branches_[1].emplace<Relu>();
  branches_[2].emplace<Conv3d>(name + ".b2a", in_ch, w.b2_reduce, one, one, zero, rng);
  branches_[2].emplace<Relu>();
  branches_[2].emplace<Conv3d>(name + ".b2b", w.b2_reduce, w.b2, three, one, one, rng);
  branches_[2].emplace<Relu>();
  branches_[3].emplace<MaxPool3d>(three, one, one);
  branches_[3].emplace<Conv3d>(name + ".b3", in_ch, w.b3, one, one, zero, rng);
  branches_[3].emplace<Relu>();
}

Tensor Inception3d::forward(const Tensor& x, bool training) {
  require_rank5(x, "Inception3d");
  in_shape_ = x.shape();
  std::array<Tensor, 4> outs;
  for (int i = 0; i < 4; ++i) outs[i] = branches_[i].forward(x, training);
  const int b = x.dim(0);
  int total = 0;
  for (int w : widths_) total += w;
  Tensor out({b, total, x.dim(2), x.dim(3), x.dim(4)});
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3) * x.dim(4);
  for (int s = 0; s < b; ++s) {
    int offset = 0;
    for (int i = 0; i < 4; ++i) {
      const float* src = outs[i].data() + static_cast<std::size_t>(s) * widths_[i] * plane;
      std::copy(src, src + widths_[i] * plane, out.data() + (static_cast<std::size_t>(s) * total + offset) * plane);
      offset += widths_[i];
    }
  }
  return out;
}

Tensor Inception3d::backward(const Tensor& grad_out) {
  const int b = in_shape_[0];
  const std::size_t plane = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3] * in_shape_[4];
  int total = 0;
  for (int w : widths_) total += w;
  Tensor dx(in_shape_);
  int offset = 0;
  for (int i = 0; i < 4; ++i) {
    Tensor g({b, widths_[i], in_shape_[2], in_shape_[3], in_shape_[4]});
    for (int s = 0; s < b; ++s) {
      const float* src = grad_out.data() + (static_cast<std::size_t>(s) * total + offset) * plane;
      std::copy(src, src + widths_[i] * plane, g.data() + static_cast<std::size_t>(s) * widths_[i] * plane);
    }
    const Tensor gi = branches_[i].backward(g);
    for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += gi[k];
    offset += widths_[i];
  }
  return dx;
}

void Inception3d::collect(std::vector<Parameter*>& out) {
  for (auto& br : branches_) br.collect(out);
}

std::string Inception3d::describe() const {
  return "inception3d [" + branches_[0].describe() + "] [" + branches_[1].describe() + "] [" +
         branches_[2].describe() + "] [" + branches_[3].describe() + "]";
}

// ---- GaussianLatent -------------------------------------------------------------

Tensor GaussianLatent::forward(const Tensor& x, bool training) {
  require_rank5(x, "GaussianLatent");
  if (x.dim(1) % 2 != 0) throw ShapeError("GaussianLatent: channel count must be even");
  input_ = x;
  const int b = x.dim(0), c = x.dim(1) / 2;
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3) * x.dim(4);
  Tensor out({b, c, x.dim(2), x.dim(3), x.dim(4)});
  sampled_ = training;
  eps_.assign(out.size(), 0.0f);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  double kl = 0.0;
  for (int s = 0; s < b; ++s) {
    const float* mu = x.data() + static_cast<std::size_t>(s) * 2 * c * plane;
    const float* lv = mu + static_cast<std::size_t>(c) * plane;
    float* dst = out.data() + static_cast<std::size_t>(s) * c * plane;
    float* eps = eps_.data() + static_cast<std::size_t>(s) * c * plane;
    for (std::size_t i = 0; i < c * plane; ++i) {
      kl += 0.5 * (static_cast<double>(mu[i]) * mu[i] + std::exp(static_cast<double>(lv[i])) - lv[i] - 1.0);
      if (training) {
        eps[i] = normal(rng_);
        dst[i] = mu[i] + std::exp(0.5f * lv[i]) * eps[i];
      } else {
        dst[i] = mu[i];
      }
    }
  }
  last_kl_ = kl / static_cast<double>(out.size());
  return out;
}

Tensor GaussianLatent::backward(const Tensor& grad_out) {
  const int b = input_.dim(0), c = input_.dim(1) / 2;
  const std::size_t plane = static_cast<std::size_t>(input_.dim(2)) * input_.dim(3) * input_.dim(4);
  const double per = kl_weight_ / static_cast<double>(grad_out.size());
  Tensor dx(input_.shape());
  for (int s = 0; s < b; ++s) {
    const float* mu = input_.data() + static_cast<std::size_t>(s) * 2 * c * plane;
    const float* lv = mu + static_cast<std::size_t>(c) * plane;
    float* dmu = dx.data() + static_cast<std::size_t>(s) * 2 * c * plane;
    float* dlv = dmu + static_cast<std::size_t>(c) * plane;
    const float* g = grad_out.data() + static_cast<std::size_t>(s) * c * plane;
    const float* eps = eps_.data() + static_cast<std::size_t>(s) * c * plane;
    for (std::size_t i = 0; i < c * plane; ++i) {
      dmu[i] = g[i] + static_cast<float>(per * mu[i]);
      const float sample_term = sampled_ ? g[i] * eps[i] * 0.5f * std::exp(0.5f * lv[i]) : 0.0f;
      dlv[i] = sample_term + static_cast<float>(per * 0.5 * (std::exp(static_cast<double>(lv[i])) - 1.0));
    }
  }
  return dx;
}

}  // namespace sckd::models
