#include "sckd/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "sckd/eval/metrics.hpp"
#include "sckd/log.hpp"
#include "sckd/losses/losses.hpp"
#include "sckd/models/checkpoint.hpp"

namespace sckd::training {

namespace fs = std::filesystem;
using datagen::Fold;
using datagen::WindowedDataset;
using losses::Features;
using models::Network;
using models::Parameter;
using models::Tap;
using nlohmann::json;

// ---- optimization ----------------------------------------------------------------

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  double ss = 0.0;
  for (const Parameter* p : params) {
    for (float g : p->grad.values()) ss += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(ss);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (Parameter* p : params) {
      for (float& g : p->grad.values()) g *= scale;
    }
  }
  return norm;
}

Adam::Adam(std::vector<Parameter*> params, double lr, const OptimizerConfig& cfg)
    : params_(std::move(params)), lr_(lr), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = beta1_ * m[i] + (1.0 - beta1_) * g;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p.value[i] -= static_cast<float>(lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_));
    }
  }
}

// ---- batching ------------------------------------------------------------------

Tensor batch_insole(const WindowedDataset& ds, std::span<const int> idx) {
  Tensor x({static_cast<int>(idx.size()), 2, ds.window, datagen::kRows, datagen::kCols});
  const std::size_t n = ds.clip_size();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto clip = ds.clip(idx[i]);
    std::copy(clip.begin(), clip.end(), x.data() + i * n);
  }
  return x;
}

Tensor batch_grf(const WindowedDataset& ds, std::span<const int> idx) {
  Tensor y({static_cast<int>(idx.size()), 2, ds.window});
  const std::size_t n = ds.series_size();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto s = ds.series(idx[i]);
    std::copy(s.begin(), s.end(), y.data() + i * n);
  }
  return y;
}

Tensor predict(Network& net, const WindowedDataset& ds, int batch_size) {
  Tensor out({ds.count, 2, ds.window});
  std::vector<int> idx;
  for (int start = 0; start < ds.count; start += batch_size) {
    const int n = std::min(batch_size, ds.count - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor y = net.forward(batch_insole(ds, idx), false);
    std::copy(y.values().begin(), y.values().end(), out.data() + static_cast<std::size_t>(start) * ds.series_size());
  }
  return out;
}

models::Sequential make_discriminator(int code_dim, int hidden, int layers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  models::Sequential d;
  int in = code_dim;
  for (int i = 0; i + 1 < layers; ++i) {
    d.emplace<models::Linear>("disc.l" + std::to_string(i), in, hidden, rng);
    d.emplace<models::Relu>();
    in = hidden;
  }
  d.emplace<models::Linear>("disc.out", in, 1, rng, 1.0);
  return d;
}

namespace {

constexpr std::uint64_t kOrderSalt = 0x6a09e667f3bcc908ULL;
constexpr std::uint64_t kPriorSalt = 0xbb67ae8584caa73bULL;
constexpr std::uint64_t kDiscSalt = 0x3c6ef372fe94f82bULL;

double mse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(std::max<std::size_t>(a.size(), 1));
}

std::unique_ptr<Network> snapshot(const models::NetworkSpec& spec, std::uint64_t seed, const std::vector<float>& w) {
  auto net = std::make_unique<Network>(spec, seed);
  net->set_flat_weights(w);
  return net;
}

using Objective = std::function<StepLog(std::span<const int>, Network&)>;

TrainResult run_loop(const TrainConfig& cfg, Network& net, const Fold& fold, double lr, const Objective& objective,
                     const char* stage) {
  if (fold.train.count == 0) throw std::invalid_argument(std::string(stage) + ": empty training split");
  const WindowedDataset& val = fold.val.count > 0 ? fold.val : fold.train;
  const Tensor val_y = batch_grf(val, [&] {
    std::vector<int> all(val.count);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }());

  std::mt19937_64 order_rng(cfg.seed ^ kOrderSalt);
  const auto params = net.parameters();
  Adam adam(params, lr, cfg.optimizer);
  std::vector<int> order(fold.train.count);
  std::iota(order.begin(), order.end(), 0);

  TrainResult r;
  double best = std::numeric_limits<double>::infinity();
  std::vector<float> best_w = net.flat_weights();
  int step = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double sum = 0.0;
    int batches = 0;
    for (int start = 0; start < fold.train.count; start += cfg.batch_size) {
      const int n = std::min(cfg.batch_size, fold.train.count - start);
      net.zero_grad();
      StepLog s = objective(std::span<const int>(order.data() + start, static_cast<std::size_t>(n)), net);
      if (!std::isfinite(s.total)) {
        throw DivergenceError(std::string(stage) + ": non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step + 1));
      }
      clip_grad_norm(params, cfg.optimizer.clip_norm);
      adam.step();
      s.step = ++step;
      s.epoch = epoch;
      r.steps.push_back(s);
      sum += s.total;
      ++batches;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    const double vl = mse(predict(net, val), val_y);
    if (!std::isfinite(vl)) throw DivergenceError(std::string(stage) + ": non-finite validation loss at epoch " + std::to_string(epoch));
    r.epochs.push_back({epoch, sum / std::max(batches, 1), vl, std::sqrt(vl) * 100.0});
    log::write(log::Level::Debug, stage,
               "epoch " + std::to_string(epoch) + " train " + std::to_string(sum / std::max(batches, 1)) + " val " +
                   std::to_string(vl));
    if (vl < best) {
      best = vl;
      best_w = net.flat_weights();
      r.best_epoch = epoch;
    }
  }
  r.best_val_loss = best;
  r.best = snapshot(net.spec(), cfg.seed, best_w);
  r.last = snapshot(net.spec(), cfg.seed, net.flat_weights());
  return r;
}

TensorD to_d(const Tensor& t) { return t.cast<double>(); }

// Teacher outputs and taps for every training sample, computed once.
struct TeacherCache {
  std::array<bool, models::kTapCount> want{};
  bool want_y = false;
  std::array<Shape, models::kTapCount> shape;  // per-sample
  std::array<std::vector<float>, models::kTapCount> taps;
  std::vector<float> y;
  int window = 0;

  void build(Network& teacher, const WindowedDataset& ds) {
    window = ds.window;
    std::vector<int> idx;
    for (int start = 0; start < ds.count; start += 64) {
      const int n = std::min(64, ds.count - start);
      idx.resize(n);
      std::iota(idx.begin(), idx.end(), start);
      const auto b = teacher.forward_with_taps(batch_insole(ds, idx), false);
      for (int t = 0; t < models::kTapCount; ++t) {
        if (!want[t]) continue;
        shape[t] = Shape(b.taps[t].shape().begin() + 1, b.taps[t].shape().end());
        taps[t].insert(taps[t].end(), b.taps[t].values().begin(), b.taps[t].values().end());
      }
      if (want_y) y.insert(y.end(), b.y_hat.values().begin(), b.y_hat.values().end());
    }
  }

  Features gather(std::span<const int> idx) const {
    Features f;
    const int b = static_cast<int>(idx.size());
    for (int t = 0; t < models::kTapCount; ++t) {
      if (!want[t]) continue;
      Shape s{b};
      s.insert(s.end(), shape[t].begin(), shape[t].end());
      const std::size_t per = shape_numel(shape[t]);
      TensorD x(s);
      for (int i = 0; i < b; ++i) {
        const float* src = taps[t].data() + static_cast<std::size_t>(idx[i]) * per;
        std::copy(src, src + per, x.data() + static_cast<std::size_t>(i) * per);
      }
      f.taps[t] = std::move(x);
    }
    if (want_y) {
      const std::size_t per = static_cast<std::size_t>(2) * window;
      TensorD x({b, 2, window});
      for (int i = 0; i < b; ++i) {
        const float* src = y.data() + static_cast<std::size_t>(idx[i]) * per;
        std::copy(src, src + per, x.data() + static_cast<std::size_t>(i) * per);
      }
      f.y_hat = std::move(x);
    }
    return f;
  }
};

Features student_features(const models::TapBundle& b, const std::array<bool, models::kTapCount>& want) {
  Features f;
  for (int t = 0; t < models::kTapCount; ++t) {
    if (want[t]) f.taps[t] = to_d(b.taps[t]);
  }
  f.y_hat = to_d(b.y_hat);
  return f;
}

void mark_pairs(std::array<bool, models::kTapCount>& teacher, std::array<bool, models::kTapCount>& student,
                const std::vector<losses::TapPair>& pairs) {
  for (const auto& [lt, ls] : pairs) {
    teacher[static_cast<int>(lt)] = true;
    student[static_cast<int>(ls)] = true;
  }
}

}  // namespace

// ---- training loops ----------------------------------------------------------------

TrainResult train_teacher(const TrainConfig& cfg, const Fold& fold) {
  validate(cfg);
  models::NetworkSpec spec = cfg.teacher;
  spec.window = fold.train.window;
  spec.variational = cfg.mode == Mode::VAE;
  Network net(spec, cfg.seed);
  const double lr = effective_lr(cfg, spec);

  if (cfg.mode == Mode::AE || cfg.mode == Mode::VAE) {
    const double beta = cfg.mode == Mode::VAE ? cfg.vae_beta : 0.0;
    net.set_kl_weight(beta);
    auto objective = [&](std::span<const int> idx, Network& n) {
      const Tensor out = n.forward(batch_insole(fold.train, idx), true);
      const auto gt = losses::ground_truth_loss(to_d(out), to_d(batch_grf(fold.train, idx)));
      n.backward(gt.grad.cast<float>());
      StepLog s;
      s.L_gt = gt.value;
      s.kl = n.last_kl();
      s.total = gt.value + beta * s.kl;
      return s;
    };
    return run_loop(cfg, net, fold, lr, objective, "train-teacher");
  }

  // WAE: discriminator on Mid codes pooled over t, prior N(0, I).
  models::Sequential disc = make_discriminator(spec.mid_channels, cfg.wae.hidden, cfg.wae.layers, cfg.seed ^ kDiscSalt);
  std::vector<Parameter*> dparams;
  disc.collect(dparams);
  Adam dopt(dparams, cfg.wae.lr, cfg.optimizer);
  std::mt19937_64 prior_rng(cfg.seed ^ kPriorSalt);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto zero_disc = [&] {
    for (Parameter* p : dparams) p->grad.fill(0.0f);
  };

  auto objective = [&](std::span<const int> idx, Network& n) {
    const auto bundle = n.forward_with_taps(batch_insole(fold.train, idx), true);
    const Tensor& mid = bundle[Tap::Mid];
    const int b = mid.dim(0), c = mid.dim(1), t = mid.dim(2);
    Tensor z({b, c});
    for (std::size_t i = 0; i < z.size(); ++i) {
      double acc = 0.0;
      for (int k = 0; k < t; ++k) acc += mid[i * t + k];
      z[i] = static_cast<float>(acc / t);
    }

    // discriminator step: prior codes are "real", encoded codes "fake"
    zero_disc();
    Tensor prior({b, c});
    for (float& v : prior.values()) v = normal(prior_rng);
    const auto real = losses::bce_with_logits(to_d(disc.forward(prior, true)), 1.0);
    disc.backward(real.grad.cast<float>());
    const auto fake = losses::bce_with_logits(to_d(disc.forward(z, true)), 0.0);
    disc.backward(fake.grad.cast<float>());
    clip_grad_norm(dparams, cfg.optimizer.clip_norm);
    dopt.step();

    // encoder-decoder step: reconstruction plus fooling the updated discriminator
    zero_disc();
    const auto adv = losses::bce_with_logits(to_d(disc.forward(z, true)), 1.0);
    TensorD gz = adv.grad;
    for (double& v : gz.values()) v *= cfg.wae.lambda_adv;
    const Tensor dz = disc.backward(gz.cast<float>());
    zero_disc();

    models::TapGrads tg;
    Tensor gmid(mid.shape());
    for (std::size_t i = 0; i < dz.size(); ++i) {
      for (int k = 0; k < t; ++k) gmid[i * t + k] = dz[i] / static_cast<float>(t);
    }
    tg[static_cast<int>(Tap::Mid)] = std::move(gmid);
    const auto gt = losses::ground_truth_loss(to_d(bundle.y_hat), to_d(batch_grf(fold.train, idx)));
    n.backward(gt.grad.cast<float>(), &tg);

    StepLog s;
    s.L_gt = gt.value;
    s.L_disc = real.value + fake.value;
    s.total = gt.value + cfg.wae.lambda_adv * adv.value;
    return s;
  };
  return run_loop(cfg, net, fold, lr, objective, "train-teacher");
}

TrainResult distill_student(const TrainConfig& cfg, Network& teacher, const Fold& fold) {
  validate(cfg);
  if (teacher.spec().window != fold.train.window) {
    throw std::invalid_argument("distill: teacher window " + std::to_string(teacher.spec().window) +
                                " does not match dataset window " + std::to_string(fold.train.window));
  }
  models::NetworkSpec spec = cfg.student;
  spec.window = fold.train.window;
  spec.variational = false;
  const std::uint64_t checksum_before = teacher.weight_checksum();

  TeacherCache cache;
  std::array<bool, models::kTapCount> student_taps{};
  const auto& sp = cfg.sckd;
  const auto& bl = cfg.baseline;
  switch (cfg.distiller) {
    case Distiller::Scratch: break;
    case Distiller::SCKD: {
      cache.want_y = sp.lambda1 != 0.0;
      std::vector<losses::TapPair> used;
      for (const auto& p : sp.layers) {
        const bool mid = p.first == Tap::Mid || p.second == Tap::Mid;
        if ((mid && sp.lambda2 != 0.0) || (!mid && sp.lambda3 != 0.0)) used.push_back(p);
      }
      mark_pairs(cache.want, student_taps, used);
      break;
    }
    case Distiller::KD:
    case Distiller::DIST: cache.want_y = true; break;
    case Distiller::AT:
    case Distiller::SP: mark_pairs(cache.want, student_taps, {bl.pair}); break;
    case Distiller::KDSP:
      cache.want_y = true;
      mark_pairs(cache.want, student_taps, {bl.pair});
      break;
  }
  const bool need_teacher = cache.want_y || std::any_of(cache.want.begin(), cache.want.end(), [](bool b) { return b; });
  const bool need_student_taps = std::any_of(student_taps.begin(), student_taps.end(), [](bool b) { return b; });
  if (need_teacher) cache.build(teacher, fold.train);

  Network net(spec, cfg.seed);
  const double lr = effective_lr(cfg, spec);

  auto objective = [&](std::span<const int> idx, Network& n) {
    const Tensor x = batch_insole(fold.train, idx);
    const TensorD y = to_d(batch_grf(fold.train, idx));
    StepLog s;
    if (cfg.distiller == Distiller::Scratch) {
      const Tensor out = n.forward(x, true);
      const auto gt = losses::ground_truth_loss(to_d(out), y);
      n.backward(gt.grad.cast<float>());
      s.L_gt = s.total = gt.value;
      return s;
    }

    models::TapBundle bundle;
    if (need_student_taps) {
      bundle = n.forward_with_taps(x, true);
    } else {
      bundle.y_hat = n.forward(x, true);
    }
    const Features S = student_features(bundle, student_taps);
    const Features T = cache.gather(idx);
    const auto gt = losses::ground_truth_loss(S.y_hat, y);
    s.L_gt = gt.value;
    TensorD grad_y = gt.grad;
    losses::TapGradsD grad_taps;

    switch (cfg.distiller) {
      case Distiller::SCKD: {
        auto r = losses::total_sckd_loss(S.y_hat, y, T.y_hat, T, S, sp);
        s.L_KD_c = r.L_KD_c;
        s.L_sc_r = r.L_sc_r;
        s.L_sc_f = r.L_sc_f;
        s.total = r.total;
        grad_y = std::move(r.grad_y);
        grad_taps = std::move(r.grad_taps);
        break;
      }
      case Distiller::KD:
      case Distiller::KDSP: {
        const auto kd = losses::vanilla_kd_loss(T.y_hat, S.y_hat, bl.tau);
        s.L_kd = kd.value;
        for (std::size_t i = 0; i < grad_y.size(); ++i) grad_y[i] = bl.alpha * gt.grad[i] + (1.0 - bl.alpha) * kd.grad[i];
        s.total = bl.alpha * gt.value + (1.0 - bl.alpha) * kd.value;
        if (cfg.distiller == Distiller::KDSP) {
          const auto f = losses::sp_loss(T, S, bl.pair);
          s.L_feat = f.value;
          s.total += bl.sp_weight * f.value;
          losses::accumulate(grad_taps, f.grads, bl.sp_weight);
        }
        break;
      }
      case Distiller::AT:
      case Distiller::SP: {
        const bool at = cfg.distiller == Distiller::AT;
        const auto f = at ? losses::at_loss(T, S, bl.pair) : losses::sp_loss(T, S, bl.pair);
        const double w = at ? bl.at_weight : bl.sp_weight;
        s.L_feat = f.value;
        s.total = gt.value + w * f.value;
        losses::accumulate(grad_taps, f.grads, w);
        break;
      }
      case Distiller::DIST: {
        const TensorD hT = losses::temporal_softmax(T.y_hat);
        const TensorD hS = losses::temporal_softmax(S.y_hat);
        const auto ii = losses::inter_intra_kd_loss(hT, hS);
        const TensorD g = losses::temporal_softmax_backward(hS, ii.grad);
        for (std::size_t i = 0; i < grad_y.size(); ++i) grad_y[i] += g[i];
        s.L_KD_c = ii.value;
        s.total = gt.value + ii.value;
        break;
      }
      case Distiller::Scratch: break;
    }
    const models::TapGrads tg = losses::to_float(grad_taps);
    n.backward(grad_y.cast<float>(), &tg);
    return s;
  };
  TrainResult r = run_loop(cfg, net, fold, lr, objective, "distill");
  r.teacher_checksum_before = checksum_before;
  r.teacher_checksum_after = teacher.weight_checksum();
  if (r.teacher_checksum_after != checksum_before) throw std::logic_error("distill: teacher weights changed");
  return r;
}

void write_log(std::ostream& os, const TrainResult& r, Distiller distiller, Mode mode, bool distill) {
  const bool baseline = distill && (distiller == Distiller::KD || distiller == Distiller::AT ||
                                    distiller == Distiller::SP || distiller == Distiller::KDSP);
  for (const StepLog& s : r.steps) {
    json j{{"step", s.step}, {"L_gt", s.L_gt}, {"L_KD_c", s.L_KD_c}, {"L_sc_r", s.L_sc_r},
           {"L_sc_f", s.L_sc_f}, {"total", s.total}, {"epoch", s.epoch}};
    if (baseline) {
      j["L_kd"] = s.L_kd;
      j["L_feat"] = s.L_feat;
    }
    if (!distill && mode == Mode::VAE) j["kl"] = s.kl;
    if (!distill && mode == Mode::WAE) j["L_disc"] = s.L_disc;
    os << j.dump() << '\n';
  }
  for (const EpochLog& e : r.epochs) {
    os << json{{"event", "epoch"}, {"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
               {"val_rmse", e.val_rmse}}
              .dump()
       << '\n';
  }
}

// ---- repeat protocol -------------------------------------------------------------------

fs::path resolve_teacher_checkpoint(const fs::path& teacher, int fold_subject, bool loso, int seed_index) {
  if (teacher.empty()) throw std::invalid_argument("distill: no teacher checkpoint given");
  if (fs::is_regular_file(teacher)) return teacher;
  if (!fs::is_directory(teacher)) throw std::runtime_error("teacher checkpoint not found: " + teacher.string());
  const std::string seed_dir = "seed_" + std::to_string(seed_index);
  std::vector<fs::path> candidates;
  if (loso) {
    const fs::path f = teacher / ("fold_" + std::to_string(fold_subject));
    candidates = {f / seed_dir / "checkpoint.bin", f / "seed_0" / "checkpoint.bin"};
  }
  candidates.push_back(teacher / seed_dir / "checkpoint.bin");
  candidates.push_back(teacher / "seed_0" / "checkpoint.bin");
  for (const auto& c : candidates) {
    if (fs::is_regular_file(c)) return c;
  }
  throw std::runtime_error("no teacher checkpoint for fold " + std::to_string(fold_subject) + " under " + teacher.string());
}

namespace {

json mean_std(const std::vector<double>& v) {
  if (v.empty()) return {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {{"mean", m}, {"std", sd}, {"n", v.size()}};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << s;
}

}  // namespace

json seeded_run(const TrainConfig& cfg, RunKind kind, const WindowedDataset& dataset, const fs::path& out_dir,
                const fs::path& teacher) {
  validate(cfg);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    throw std::runtime_error("run directory " + out_dir.string() + " exists and is not empty");
  }
  if (dataset.window != cfg.window) {
    throw std::invalid_argument("dataset window " + std::to_string(dataset.window) + " differs from config window " +
                                std::to_string(cfg.window));
  }
  fs::create_directories(out_dir);
  json resolved = to_json(cfg);
  resolved["kind"] = kind == RunKind::Teacher ? "teacher" : "distill";
  write_text(out_dir / "config.resolved.json", resolved.dump(2) + "\n");

  const bool distill = kind == RunKind::Distill;
  const std::vector<int> subjects = cfg.fold.loso ? dataset.subject_ids() : std::vector<int>{cfg.fold.test_subject};
  std::map<fs::path, std::unique_ptr<Network>> teachers;

  json folds = json::array();
  std::vector<double> all_rmse, all_mae, all_r;
  for (int subject : subjects) {
    const Fold fold = datagen::make_fold(dataset, subject, cfg.fold.loso ? std::nullopt : cfg.fold.val_subject);
    const fs::path fold_dir = cfg.fold.loso ? out_dir / ("fold_" + std::to_string(subject)) : out_dir;
    std::vector<double> rmse, mae, r;
    json seeds = json::array();
    for (int k = 0; k < cfg.seeds; ++k) {
      TrainConfig c = cfg;
      c.seed = cfg.seed + static_cast<std::uint64_t>(k);
      const auto t0 = std::chrono::steady_clock::now();
      TrainResult res;
      json extra{{"kind", resolved["kind"]}, {"test_subject", subject}, {"val_subject", fold.val_subject}};
      if (distill) {
        const fs::path tp = resolve_teacher_checkpoint(teacher, subject, cfg.fold.loso, k);
        auto& slot = teachers[tp];
        if (!slot) slot = models::load_checkpoint(tp).network;
        res = distill_student(c, *slot, fold);
        extra["distiller"] = std::string(to_string(c.distiller));
        extra["teacher_checkpoint"] = tp.string();
        extra["teacher_checksum"] = res.teacher_checksum_before;
      } else {
        res = train_teacher(c, fold);
        extra["mode"] = std::string(to_string(c.mode));
      }
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      const fs::path seed_dir = fold_dir / ("seed_" + std::to_string(k));
      fs::create_directories(seed_dir);
      extra["best_epoch"] = res.best_epoch;
      models::save_checkpoint(seed_dir / "checkpoint.bin", *res.best, {res.best->spec(), c.seed, res.best_epoch, extra});
      models::save_checkpoint(seed_dir / "checkpoint_last.bin", *res.last,
                              {res.last->spec(), c.seed, static_cast<int>(res.epochs.size()), extra});
      {
        std::ofstream log(seed_dir / "log.jsonl", std::ios::binary | std::ios::trunc);
        write_log(log, res, c.distiller, c.mode, distill);
      }

      const WindowedDataset& val = fold.val.count > 0 ? fold.val : fold.train;
      std::vector<int> all(val.count);
      std::iota(all.begin(), all.end(), 0);
      const Tensor truth = batch_grf(val, all);
      const auto best_m = eval::point_metrics(predict(*res.best, val), truth);
      const auto last_m = eval::point_metrics(predict(*res.last, val), truth);
      json metrics{{"seed", c.seed},
                   {"test_subject", subject},
                   {"val_subject", fold.val_subject},
                   {"best_epoch", res.best_epoch},
                   {"epochs_run", res.epochs.size()},
                   {"best_val_loss", res.best_val_loss},
                   {"val_rmse", best_m.rmse},
                   {"val_mae", best_m.mae},
                   {"val_r", best_m.r},
                   {"last",
                    {{"val_loss", res.epochs.empty() ? 0.0 : res.epochs.back().val_loss},
                     {"val_rmse", last_m.rmse},
                     {"val_mae", last_m.mae},
                     {"val_r", last_m.r}}},
                   {"final_train_loss", res.steps.empty() ? 0.0 : res.steps.back().total},
                   {"parameter_count", res.best->parameter_count()}};
      if (distill) metrics["teacher_checksum_unchanged"] = res.teacher_checksum_before == res.teacher_checksum_after;
      write_text(seed_dir / "metrics.json", metrics.dump(2) + "\n");
      write_text(seed_dir / "timing.json", json{{"train_seconds", seconds}}.dump(2) + "\n");
      log::info(distill ? "distill" : "train-teacher",
                "fold " + std::to_string(subject) + " seed " + std::to_string(c.seed) + ": val rmse " +
                    std::to_string(best_m.rmse) + " (best epoch " + std::to_string(res.best_epoch) + ", " +
                    std::to_string(seconds) + " s)");
      rmse.push_back(best_m.rmse);
      mae.push_back(best_m.mae);
      r.push_back(best_m.r);
      seeds.push_back(metrics);
    }
    all_rmse.insert(all_rmse.end(), rmse.begin(), rmse.end());
    all_mae.insert(all_mae.end(), mae.begin(), mae.end());
    all_r.insert(all_r.end(), r.begin(), r.end());
    folds.push_back({{"test_subject", subject},
                     {"val_subject", fold.val_subject},
                     {"val_rmse", mean_std(rmse)},
                     {"val_mae", mean_std(mae)},
                     {"val_r", mean_std(r)},
                     {"seeds", seeds}});
  }
  json aggregate{{"kind", resolved["kind"]},
                 {"seeds", cfg.seeds},
                 {"folds", folds},
                 {"val_rmse", mean_std(all_rmse)},
                 {"val_mae", mean_std(all_mae)},
                 {"val_r", mean_std(all_r)}};
  write_text(out_dir / "aggregate.json", aggregate.dump(2) + "\n");
  return aggregate;
}

}  // namespace sckd::training
