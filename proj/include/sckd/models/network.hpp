#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sckd/models/layers.hpp"
#include "sckd/tensor.hpp"

namespace sckd::models {

enum class EncoderKind { C3D, I3D, R2Plus1D };
enum class Scale { Teacher, Student };

std::string_view to_string(EncoderKind k);
std::string_view to_string(Scale s);
/// Accepts "c3d", "i3d", "r2plus1d" / "r(2+1)d" (case-insensitive). Throws std::invalid_argument.
EncoderKind parse_encoder_kind(std::string_view s);
Scale parse_scale(std::string_view s);

struct NetworkSpec {
  EncoderKind encoder_kind = EncoderKind::C3D;
  Scale scale = Scale::Teacher;
  int mid_channels = 64;
  int window = 100;
  int out_channels = 2;
  /// Multiplier on hidden channel widths (1 = reference sizing).
  double width = 1.0;
  /// Mid head emits (mean, log-variance) followed by a reparameterized sample.
  bool variational = false;

  static constexpr int temporal_stride_total = 4;
  static constexpr int in_channels = 2;
  static constexpr int frame_rows = 16;
  static constexpr int frame_cols = 8;

  bool operator==(const NetworkSpec&) const = default;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const NetworkSpec& spec);

enum class Tap { E1 = 0, E2 = 1, Mid = 2, D1 = 3, D2 = 4 };
inline constexpr int kTapCount = 5;
inline constexpr std::array<Tap, kTapCount> kAllTaps{Tap::E1, Tap::E2, Tap::Mid, Tap::D1, Tap::D2};

std::string_view tap_name(Tap t);
Tap parse_tap(std::string_view s);

/// Intermediate features of one pass. E1/E2 are b x c x t x h x w; Mid, D1, D2 are b x c x t.
struct TapBundle {
  std::array<Tensor, kTapCount> taps;
  Tensor y_hat;

  const Tensor& operator[](Tap t) const { return taps[static_cast<int>(t)]; }
  Tensor& operator[](Tap t) { return taps[static_cast<int>(t)]; }
};

/// Gradients w.r.t. taps, shaped like the corresponding TapBundle entries. Empty tensors mean "none".
using TapGrads = std::array<Tensor, kTapCount>;

/// Encoder-decoder regressor from b x 2 x t x 16 x 8 pressure clips to b x 2 x t force series.
class Network {
 public:
  Network(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }

  Tensor forward(const Tensor& x, bool training = false);
  TapBundle forward_with_taps(const Tensor& x, bool training = false);
  /// Back-propagates from the output gradient plus optional tap gradients; accumulates parameter grads.
  void backward(const Tensor& grad_y, const TapGrads* tap_grads = nullptr);

  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
  void zero_grad();

  std::vector<float> flat_weights();
  void set_flat_weights(const std::vector<float>& w);
  /// FNV-1a over the raw weight bytes.
  std::uint64_t weight_checksum();

  void set_kl_weight(double w);
  /// Mean per-element KL of the last forward (0 for deterministic networks).
  double last_kl();

  std::string describe() const;

 private:
  void check_input(const Tensor& x) const;
  Tensor run(const Tensor& x, bool training, TapBundle* taps);
  GaussianLatent* latent();

  NetworkSpec spec_;
  // input->E1, E1->E2, E2->Mid, Mid->D1, D1->D2, D2->y
  std::array<Sequential, 6> stages_;
  std::array<Shape, 6> stage_out_shapes_;
};

}  // namespace sckd::models
