#include "sckd/models/network.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace sckd::models {

namespace {

constexpr Dims3 kOne{1, 1, 1};
constexpr Dims3 kZero{0, 0, 0};
constexpr Dims3 kCube{3, 3, 3};
constexpr Dims3 kTime3{3, 1, 1};
constexpr Dims3 kTimePad{1, 0, 0};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Builder {
  std::mt19937_64& rng;
  double width;

  int w(int ch) const { return std::max(1, static_cast<int>(std::lround(ch * width))); }

  void conv_relu(Sequential& s, const std::string& name, int in, int out, Dims3 k, Dims3 st, Dims3 pad) {
    s.emplace<Conv3d>(name, in, out, k, st, pad, rng);
    s.emplace<Relu>();
  }
};

// Temporal stack after the spatial extent has been collapsed to 1x1: ReLU convs
// through `widths`, then a linear projection to the Mid channel count.
void temporal_stack(Builder& b, Sequential& s, int in, const std::vector<int>& widths, int mid_out) {
  int c = in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    b.conv_relu(s, "enc.t" + std::to_string(i), c, widths[i], kTime3, kOne, kTimePad);
    c = widths[i];
  }
  s.emplace<Conv3d>("enc.mid", c, mid_out, kTime3, kOne, kTimePad, b.rng, 1.0);
}

// Factorized (2+1)D block: spatial (1, kh, kw) conv then temporal (3, 1, 1) conv,
// with the intermediate width chosen to match a full kt x kh x kw conv's parameter budget.
void factorized_block(Builder& b, Sequential& s, const std::string& name, int in, int out, Dims3 spatial_k,
                      int spatial_stride, int temporal_stride, Dims3 spatial_pad) {
  const int area = spatial_k[1] * spatial_k[2];
  const int mid = std::max(1, (3 * area * in * out) / (area * in + 3 * out));
  b.conv_relu(s, name + ".s", in, mid, spatial_k, {1, spatial_stride, spatial_stride}, spatial_pad);
  b.conv_relu(s, name + ".t", mid, out, kTime3, {temporal_stride, 1, 1}, kTimePad);
}

void build_c3d(Builder& b, std::array<Sequential, 6>& st, bool student, int mid_out) {
  const int c1 = b.w(student ? 8 : 16), c2 = b.w(student ? 16 : 32), c3 = b.w(student ? 32 : 64);
  auto& s0 = st[0];
  b.conv_relu(s0, "enc.b1", NetworkSpec::in_channels, c1, kCube, {1, 2, 2}, kOne);
  b.conv_relu(s0, "enc.b2", c1, c2, kCube, {2, 2, 2}, kOne);
  b.conv_relu(st[1], "enc.b3", c2, c3, kCube, {2, 2, 2}, kOne);
  const int collapse = b.w(student ? 128 : 256);
  b.conv_relu(st[2], "enc.b4", c3, collapse, {3, 2, 1}, kOne, kTimePad);
  const std::vector<int> widths = student ? std::vector<int>{b.w(336)} : std::vector<int>{b.w(384), b.w(384)};
  temporal_stack(b, st[2], collapse, widths, mid_out);
}

void build_r2plus1d(Builder& b, std::array<Sequential, 6>& st, bool student, int mid_out) {
  const int c1 = b.w(student ? 8 : 16), c2 = b.w(student ? 16 : 32), c3 = b.w(student ? 32 : 64);
  const Dims3 k{1, 3, 3}, pad{0, 1, 1};
  factorized_block(b, st[0], "enc.b1", NetworkSpec::in_channels, c1, k, 2, 1, pad);
  factorized_block(b, st[0], "enc.b2", c1, c2, k, 2, 2, pad);
  factorized_block(b, st[1], "enc.b3", c2, c3, k, 2, 2, pad);
  const int collapse = b.w(student ? 128 : 256);
  factorized_block(b, st[2], "enc.b4", c3, collapse, {1, 2, 1}, 1, 1, kZero);
  const std::vector<int> widths = student ? std::vector<int>{b.w(336)} : std::vector<int>{b.w(544), b.w(544)};
  temporal_stack(b, st[2], collapse, widths, mid_out);
}

void build_i3d(Builder& b, std::array<Sequential, 6>& st, bool student, int mid_out) {
  const double f = student ? 0.5 : 1.0;
  auto w = [&](int ch) { return b.w(static_cast<int>(std::lround(ch * f))); };
  const int c1 = w(16), c2 = w(32);
  b.conv_relu(st[0], "enc.stem1", NetworkSpec::in_channels, c1, kCube, {1, 2, 2}, kOne);
  b.conv_relu(st[0], "enc.stem2", c1, c2, kCube, {2, 2, 2}, kOne);
  const Inception3d::Widths i1{w(16), w(24), w(32), w(4), w(8), w(8)};
  const Inception3d::Widths i2{w(32), w(48), w(64), w(8), w(16), w(16)};
  st[1].emplace<Inception3d>("enc.mix1", c2, i1, b.rng);
  st[1].emplace<MaxPool3d>(kCube, Dims3{2, 2, 2}, kOne);
  st[1].emplace<Inception3d>("enc.mix2", i1.out(), i2, b.rng);
  const int collapse = w(256);
  b.conv_relu(st[2], "enc.b4", i2.out(), collapse, {3, 2, 1}, kOne, kTimePad);
  const std::vector<int> widths = student ? std::vector<int>{w(672)} : std::vector<int>{w(384), w(384)};
  temporal_stack(b, st[2], collapse, widths, mid_out);
}

void build_decoder(Builder& b, std::array<Sequential, 6>& st, int mid, int out) {
  const Dims3 k{5, 1, 1}, pad{2, 0, 0};
  const int d1 = b.w(32), d2 = b.w(16);
  st[3].emplace<TemporalUpsample>(2);
  b.conv_relu(st[3], "dec.b1", mid, d1, k, kOne, pad);
  st[4].emplace<TemporalUpsample>(2);
  b.conv_relu(st[4], "dec.b2", d1, d2, k, kOne, pad);
  st[5].emplace<Conv3d>("dec.out", d2, out, k, kOne, pad, b.rng, 1.0);
  st[5].emplace<Sigmoid>();
}

}  // namespace

std::string_view to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::C3D: return "c3d";
    case EncoderKind::I3D: return "i3d";
    case EncoderKind::R2Plus1D: return "r2plus1d";
  }
  return "?";
}

std::string_view to_string(Scale s) { return s == Scale::Teacher ? "teacher" : "student"; }

EncoderKind parse_encoder_kind(std::string_view s) {
  const std::string l = lower(s);
  if (l == "c3d") return EncoderKind::C3D;
  if (l == "i3d") return EncoderKind::I3D;
  if (l == "r2plus1d" || l == "r(2+1)d" || l == "r21d") return EncoderKind::R2Plus1D;
  throw std::invalid_argument("unknown encoder_kind '" + std::string(s) + "' (expected c3d, i3d or r2plus1d)");
}

Scale parse_scale(std::string_view s) {
  const std::string l = lower(s);
  if (l == "teacher") return Scale::Teacher;
  if (l == "student") return Scale::Student;
  throw std::invalid_argument("unknown scale '" + std::string(s) + "' (expected teacher or student)");
}

void validate(const NetworkSpec& spec) {
  if (spec.mid_channels < 1) throw std::invalid_argument("mid_channels must be >= 1");
  if (spec.out_channels != 2) throw std::invalid_argument("out_channels must be 2 (left and right foot)");
  if (spec.window < 8 || spec.window % NetworkSpec::temporal_stride_total != 0) {
    throw std::invalid_argument("window must be a multiple of 4 and >= 8, got " + std::to_string(spec.window));
  }
  if (!(spec.width > 0.0) || spec.width > 8.0) throw std::invalid_argument("width must be in (0, 8]");
}

std::string_view tap_name(Tap t) {
  static constexpr std::array<std::string_view, kTapCount> names{"E1", "E2", "Mid", "D1", "D2"};
  return names[static_cast<int>(t)];
}

Tap parse_tap(std::string_view s) {
  for (Tap t : kAllTaps) {
    if (lower(tap_name(t)) == lower(s)) return t;
  }
  throw std::invalid_argument("unknown tap '" + std::string(s) + "' (expected E1, E2, Mid, D1 or D2)");
}

Network::Network(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
  validate(spec);
  std::mt19937_64 rng(seed);
  Builder b{rng, spec.width};
  const bool student = spec.scale == Scale::Student;
  const int mid_out = spec.variational ? 2 * spec.mid_channels : spec.mid_channels;
  switch (spec.encoder_kind) {
    case EncoderKind::C3D: build_c3d(b, stages_, student, mid_out); break;
    case EncoderKind::I3D: build_i3d(b, stages_, student, mid_out); break;
    case EncoderKind::R2Plus1D: build_r2plus1d(b, stages_, student, mid_out); break;
  }
  if (spec.variational) stages_[2].emplace<GaussianLatent>(rng());
  build_decoder(b, stages_, spec.mid_channels, spec.out_channels);
  if (auto* first = dynamic_cast<Conv3d*>(&stages_[0].at(0))) first->set_input_grad(false);
}

void Network::check_input(const Tensor& x) const {
  const Shape want{x.rank() > 0 ? x.dim(0) : 0, NetworkSpec::in_channels, spec_.window, NetworkSpec::frame_rows,
                   NetworkSpec::frame_cols};
  if (x.rank() != 5 || x.dim(0) < 1 || x.shape() != want) {
    throw ShapeError("network input must be b x 2 x " + std::to_string(spec_.window) + " x 16 x 8, got " +
                     shape_str(x.shape()));
  }
}

Tensor Network::run(const Tensor& x, bool training, TapBundle* taps) {
  check_input(x);
  Tensor h = x;
  for (int i = 0; i < 6; ++i) {
    h = stages_[i].forward(h, training);
    stage_out_shapes_[i] = h.shape();
    if (taps && i < kTapCount) {
      if (i <= 1) {
        taps->taps[i] = h;
      } else {
        taps->taps[i] = h.reshaped({h.dim(0), h.dim(1), h.dim(2)});
      }
    }
  }
  Tensor y = h.reshaped({h.dim(0), h.dim(1), h.dim(2)});
  if (taps) taps->y_hat = y;
  return y;
}

Tensor Network::forward(const Tensor& x, bool training) { return run(x, training, nullptr); }

TapBundle Network::forward_with_taps(const Tensor& x, bool training) {
  TapBundle b;
  run(x, training, &b);
  return b;
}

void Network::backward(const Tensor& grad_y, const TapGrads* tap_grads) {
  if (grad_y.size() != shape_numel(stage_out_shapes_[5])) {
    throw ShapeError("backward: output gradient " + shape_str(grad_y.shape()) + " does not match forward output");
  }
  Tensor g = stages_[5].backward(grad_y.reshaped(stage_out_shapes_[5]));
  for (int i = kTapCount - 1; i >= 0; --i) {
    if (tap_grads && !(*tap_grads)[i].storage().empty()) {
      const Tensor& tg = (*tap_grads)[i];
      if (tg.size() != g.size()) {
        throw ShapeError("backward: gradient for tap " + std::string(tap_name(static_cast<Tap>(i))) + " has shape " +
                         shape_str(tg.shape()) + ", expected " + shape_str(stage_out_shapes_[i]));
      }
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += tg[k];
    }
    g = stages_[i].backward(g);
  }
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& s : stages_) s.collect(out);
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0f);
}

std::vector<float> Network::flat_weights() {
  std::vector<float> out;
  for (const Parameter* p : parameters()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

void Network::set_flat_weights(const std::vector<float>& w) {
  auto params = parameters();
  std::size_t need = 0;
  for (const Parameter* p : params) need += p->value.size();
  if (w.size() != need) {
    throw std::invalid_argument("set_flat_weights: expected " + std::to_string(need) + " values, got " +
                                std::to_string(w.size()));
  }
  std::size_t off = 0;
  for (Parameter* p : params) {
    std::copy(w.begin() + static_cast<std::ptrdiff_t>(off), w.begin() + static_cast<std::ptrdiff_t>(off + p->value.size()),
              p->value.data());
    off += p->value.size();
  }
}

std::uint64_t Network::weight_checksum() {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Parameter* p : parameters()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

GaussianLatent* Network::latent() {
  if (!spec_.variational || stages_[2].size() == 0) return nullptr;
  return dynamic_cast<GaussianLatent*>(&stages_[2].at(stages_[2].size() - 1));
}

void Network::set_kl_weight(double w) {
  if (auto* l = latent()) l->set_kl_weight(w);
}

double Network::last_kl() {
  const auto* l = latent();
  return l ? l->last_kl() : 0.0;
}

std::string Network::describe() const {
  static constexpr std::array<const char*, 6> names{"input->E1", "E1->E2", "E2->Mid", "Mid->D1", "D1->D2", "D2->y"};
  std::string s = std::string(to_string(spec_.encoder_kind)) + "/" + std::string(to_string(spec_.scale)) + "\n";
  for (int i = 0; i < 6; ++i) s += std::string("  ") + names[i] + ": " + stages_[i].describe() + "\n";
  return s;
}

}  // namespace sckd::models
