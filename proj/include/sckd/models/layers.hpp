#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sckd/tensor.hpp"

namespace sckd::models {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// A differentiable stage. forward() caches what backward() needs; backward()
/// accumulates parameter gradients and returns the input gradient.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(std::vector<Parameter*>& /*out*/) {}
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string describe() const = 0;
};

using Dims3 = std::array<int, 3>;  // (t, h, w)

/// 3-D convolution over b x c x t x h x w via im2col + GEMM. Weights are
/// initialized uniformly in +-sqrt(gain * 3 / fan_in).
class Conv3d final : public Layer {
 public:
  Conv3d(std::string name, int in_ch, int out_ch, Dims3 kernel, Dims3 stride, Dims3 padding, std::mt19937_64& rng,
         double gain = 2.0);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv3d>(*this); }
  std::string describe() const override;

  /// First layers may skip computing the (unused) input gradient.
  void set_input_grad(bool on) { input_grad_ = on; }
  Dims3 output_dims(Dims3 in) const;

 private:
  void build_gather(Dims3 in);
  void im2col(const Tensor& x, int s0, int nb, float* col) const;
  void col2im(const float* col, int s0, int nb, Tensor& dx) const;
  int chunk_samples(std::size_t p, int b) const;

  int in_ch_, out_ch_;
  Dims3 kernel_, stride_, pad_;
  Parameter weight_, bias_;
  bool input_grad_ = true;
  Tensor input_;
  Dims3 out_dims_{};
  Dims3 gather_in_{};
  std::vector<std::int32_t> gather_;
};

class Relu final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
  std::string describe() const override { return "relu"; }

 private:
  std::vector<std::uint8_t> mask_;
  Shape shape_;
};

class Sigmoid final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }
  std::string describe() const override { return "sigmoid"; }

 private:
  Tensor out_;
};

class MaxPool3d final : public Layer {
 public:
  MaxPool3d(Dims3 kernel, Dims3 stride, Dims3 padding) : kernel_(kernel), stride_(stride), pad_(padding) {}
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool3d>(*this); }
  std::string describe() const override;

 private:
  Dims3 kernel_, stride_, pad_;
  Shape in_shape_;
  std::vector<std::int32_t> argmax_;
};

/// Temporal up-sampling by an integer factor with endpoint-preserving linear interpolation.
class TemporalUpsample final : public Layer {
 public:
  explicit TemporalUpsample(int factor) : factor_(factor) {}
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<TemporalUpsample>(*this); }
  std::string describe() const override { return "upsample_t x" + std::to_string(factor_); }

 private:
  int factor_;
  int t_in_ = 0;
};

/// Fully connected layer on b x n inputs.
class Linear final : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features, std::mt19937_64& rng, double gain = 2.0);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }
  std::string describe() const override;

 private:
  int in_, out_;
  Parameter weight_, bias_;
  Tensor input_;
};

/// Runs child layers in order.
class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  Sequential& add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }
  std::string describe() const override;
  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Inflated inception block: parallel 1x1x1, 1x1x1->3x3x3 (two of them) and
/// maxpool->1x1x1 branches concatenated along channels. Stride 1, same size.
class Inception3d final : public Layer {
 public:
  struct Widths {
    int b0, b1_reduce, b1, b2_reduce, b2, b3;
    int out() const { return b0 + b1 + b2 + b3; }
  };
  Inception3d(const std::string& name, int in_ch, Widths w, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Inception3d>(*this); }
  std::string describe() const override;

 private:
  std::array<Sequential, 4> branches_;
  std::array<int, 4> widths_{};
  Shape in_shape_;
};

/// Reparameterized Gaussian latent. Input b x 2c x t x 1 x 1 holds (mean, log-variance);
/// output is mean + exp(logvar / 2) * eps when training, the mean otherwise. backward()
/// adds the gradient of kl_weight * KL(q || N(0, I)) (KL averaged per latent element).
class GaussianLatent final : public Layer {
 public:
  explicit GaussianLatent(std::uint64_t seed) : rng_(seed) {}
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GaussianLatent>(*this); }
  std::string describe() const override { return "gaussian_latent"; }

  void set_kl_weight(double w) { kl_weight_ = w; }
  double last_kl() const { return last_kl_; }

 private:
  std::mt19937_64 rng_;
  double kl_weight_ = 0.0;
  double last_kl_ = 0.0;
  bool sampled_ = false;
  Tensor input_;
  std::vector<float> eps_;
};

}  // namespace sckd::models
