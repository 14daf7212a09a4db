#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "sckd/losses/losses.hpp"
#include "sckd/models/checkpoint.hpp"
#include "sckd/training/config.hpp"
#include "sckd/training/trainer.hpp"

using namespace sckd;
using namespace sckd::training;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.data.subjects = 3;
  c.data.duration_s = 20.0;
  c.window = 100;
  c.epochs = 2;
  c.batch_size = 8;
  c.seeds = 1;
  c.optimizer.lr = 1e-3;
  c.teacher.width = 0.25;
  c.teacher.mid_channels = 16;
  c.student.width = 0.5;
  c.student.mid_channels = 16;
  c.sckd.q = 4;
  return c;
}

const datagen::WindowedDataset& tiny_dataset() {
  static const auto ds = datagen::build_dataset(tiny_config().data);
  return ds;
}

const datagen::Fold& tiny_fold() {
  static const auto fold = datagen::make_fold(tiny_dataset(), 0);
  return fold;
}

models::Network& tiny_teacher() {
  static auto res = [] {
    auto c = tiny_config();
    c.epochs = 3;
    return train_teacher(c, tiny_fold());
  }();
  return *res.best;
}

std::vector<double> totals(const TrainResult& r) {
  std::vector<double> t;
  for (const auto& s : r.steps) t.push_back(s.total);
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// median of the last 10% of steps below the median of the first 10%
bool loss_decreases(const TrainResult& r) {
  const auto t = totals(r);
  const std::size_t k = std::max<std::size_t>(1, t.size() / 10);
  const double first = median(std::vector<double>(t.begin(), t.begin() + static_cast<long>(k)));
  const double last = median(std::vector<double>(t.end() - static_cast<long>(k), t.end()));
  INFO("steps " << t.size() << " first " << first << " last " << last);
  return last < first;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("config round trip, overrides and validation") {
  const TrainConfig base = tiny_config();
  CHECK(to_json(from_json(to_json(base))) == to_json(base));

  json j = to_json(base);
  apply_override(j, "sckd.lambda2=20");
  apply_override(j, "teacher.encoder_kind=i3d");
  apply_override(j, "distiller=sckd");
  const auto c = from_json(j);
  CHECK(c.sckd.lambda2 == 20.0);
  CHECK(c.teacher.encoder_kind == models::EncoderKind::I3D);
  CHECK(c.distiller == Distiller::SCKD);
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(from_json(json{{"epochz", 3}}), ConfigError);

  const TrainConfig d;
  CHECK(d.sckd.lambda1 == 1.0);
  CHECK(d.sckd.lambda2 == 10.0);
  CHECK(d.sckd.lambda3 == 1.0);
  CHECK(d.sckd.gamma == 0.4);
  CHECK(d.sckd.order == 2);
  CHECK(d.sckd.q == 8);
  CHECK(d.epochs == 200);
  CHECK(d.batch_size == 128);
  CHECK(effective_lr(d, d.teacher) == 0.01);
  models::NetworkSpec r21;
  r21.encoder_kind = models::EncoderKind::R2Plus1D;
  CHECK(effective_lr(d, r21) == 0.001);

  const auto desk = desk_scale_config();
  CHECK(desk.data.subjects == 4);
  CHECK(desk.window == 100);
  CHECK(desk.epochs == 30);
  CHECK(desk.batch_size == 32);
  CHECK_NOTHROW(validate(desk));

  auto bad = base;
  bad.epochs = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = base;
  bad.window = 150;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = base;
  bad.baseline.tau = 1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = base;
  bad.sckd.q = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = base;
  bad.fold.test_subject = 5;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("batching and the optimizer") {
  const auto& ds = tiny_dataset();
  const std::vector<int> idx{3, 0};
  const Tensor x = batch_insole(ds, idx), y = batch_grf(ds, idx);
  CHECK(x.shape() == Shape{2, 2, 100, 16, 8});
  CHECK(y.shape() == Shape{2, 2, 100});
  CHECK(y[0] == ds.grf[3u * 2 * 100]);

  models::Parameter p{"w", Tensor({2}, std::vector<float>{1.0f, -1.0f}), Tensor({2}, std::vector<float>{3.0f, 4.0f})};
  CHECK(clip_grad_norm({&p}, 1.0) == doctest::Approx(5.0));
  CHECK(p.grad[0] == doctest::Approx(0.6f));
  CHECK(p.grad[1] == doctest::Approx(0.8f));
  Adam adam({&p}, 0.1, OptimizerConfig{});
  adam.step();
  // first Adam step moves each weight by lr against the gradient sign
  CHECK(p.value[0] == doctest::Approx(0.9f).epsilon(1e-5));
  CHECK(p.value[1] == doctest::Approx(-1.1f).epsilon(1e-5));
}

TEST_CASE("teacher training is deterministic and logs every step") {
  auto c = tiny_config();
  const auto a = train_teacher(c, tiny_fold());
  const auto b = train_teacher(c, tiny_fold());
  CHECK(totals(a) == totals(b));
  CHECK(a.best->weight_checksum() == b.best->weight_checksum());
  CHECK(a.epochs.size() == 2);
  CHECK(a.steps.size() == 2 * ((tiny_fold().train.count + 7) / 8));
  for (const auto& s : a.steps) CHECK(std::isfinite(s.total));
  c.seed = 1;
  CHECK(train_teacher(c, tiny_fold()).best->weight_checksum() != a.best->weight_checksum());
  c = tiny_config();
  c.max_steps = 3;
  CHECK(train_teacher(c, tiny_fold()).steps.size() == 3);
}

TEST_CASE("VAE and WAE teachers") {
  auto c = tiny_config();
  c.mode = Mode::VAE;
  c.teacher.variational = true;
  const auto v = train_teacher(c, tiny_fold());
  CHECK(std::all_of(v.steps.begin(), v.steps.end(), [](const StepLog& s) { return s.kl > 0.0; }));
  CHECK(std::all_of(v.steps.begin(), v.steps.end(), [](const StepLog& s) { return s.total > s.L_gt; }));
  c = tiny_config();
  c.mode = Mode::WAE;
  c.wae.hidden = 16;
  const auto w = train_teacher(c, tiny_fold());
  CHECK(std::all_of(w.steps.begin(), w.steps.end(), [](const StepLog& s) { return std::isfinite(s.L_disc) && s.L_disc > 0; }));
  std::ostringstream os;
  write_log(os, w, Distiller::Scratch, Mode::WAE, false);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    CHECK(json::parse(line).is_object());
    ++lines;
  }
  CHECK(lines == static_cast<int>(w.steps.size() + w.epochs.size()));
}

TEST_CASE("divergence is reported") {
  auto c = tiny_config();
  c.optimizer.lr = 1e39;  // overflows float weights
  c.optimizer.clip_norm = 0;
  CHECK_THROWS_AS(train_teacher(c, tiny_fold()), DivergenceError);
}

TEST_CASE("SCKD with zero weights reduces to scratch training") {
  auto c = tiny_config();
  c.distiller = Distiller::Scratch;
  const auto scratch = distill_student(c, tiny_teacher(), tiny_fold());
  c.distiller = Distiller::SCKD;
  c.sckd.lambda1 = c.sckd.lambda2 = c.sckd.lambda3 = 0;
  const auto sckd = distill_student(c, tiny_teacher(), tiny_fold());
  REQUIRE(scratch.steps.size() == sckd.steps.size());
  CHECK(totals(scratch) == totals(sckd));
  CHECK(scratch.last->weight_checksum() == sckd.last->weight_checksum());
}

TEST_CASE("every distiller trains a student against a frozen teacher") {
  for (auto d : {Distiller::Scratch, Distiller::KD, Distiller::AT, Distiller::SP, Distiller::KDSP, Distiller::DIST,
                 Distiller::SCKD}) {
    CAPTURE(to_string(d));
    auto c = tiny_config();
    c.distiller = d;
    c.epochs = 8;
    const std::uint64_t before = tiny_teacher().weight_checksum();
    const auto r = distill_student(c, tiny_teacher(), tiny_fold());
    CHECK(r.teacher_checksum_before == before);
    CHECK(r.teacher_checksum_after == before);
    CHECK(tiny_teacher().weight_checksum() == before);
    CHECK(loss_decreases(r));
    if (d == Distiller::SCKD) {
      CHECK(std::any_of(r.steps.begin(), r.steps.end(), [](const StepLog& s) { return s.L_sc_r > 0 && s.L_KD_c > 0; }));
    }
  }
}

TEST_CASE("teacher training lowers the loss in every mode") {
  for (auto m : {Mode::AE, Mode::VAE, Mode::WAE}) {
    CAPTURE(to_string(m));
    auto c = tiny_config();
    c.mode = m;
    c.teacher.variational = m == Mode::VAE;
    c.epochs = 8;
    c.wae.hidden = 16;
    CHECK(loss_decreases(train_teacher(c, tiny_fold())));
  }
}

TEST_CASE("self-distillation fixed point") {
  auto& teacher = tiny_teacher();
  models::Network student(teacher.spec(), 99);
  student.set_flat_weights(teacher.flat_weights());
  const std::vector<int> idx{0, 1, 2, 3};
  const Tensor x = batch_insole(tiny_fold().train, idx);
  const auto T = losses::to_features(teacher.forward_with_taps(x, false));
  const auto S = losses::to_features(student.forward_with_taps(x, false));
  losses::SckdParams p;
  p.q = 4;
  const auto r = losses::total_sckd_loss(S.y_hat, T.y_hat, T.y_hat, T, S, p);
  CHECK(std::abs(r.total) < 1e-9);
  student.zero_grad();
  const auto grads = losses::to_float(r.grad_taps);
  student.backward(r.grad_y.cast<float>(), &grads);
  const auto before = student.flat_weights();
  Adam adam(student.parameters(), 1e-3, OptimizerConfig{});
  adam.step();
  const auto after = student.flat_weights();
  double worst = 0;
  for (std::size_t i = 0; i < before.size(); ++i) worst = std::max(worst, std::abs(double(after[i]) - before[i]));
  CHECK(worst < 1e-7);
}

TEST_CASE("seeded runs write the documented layout") {
  auto c = tiny_config();
  c.seeds = 2;
  c.epochs = 1;
  const fs::path dir = fresh_dir("sckd_test_run_teacher");
  const json agg = seeded_run(c, RunKind::Teacher, tiny_dataset(), dir);
  for (const char* f : {"config.resolved.json", "aggregate.json"}) CHECK(fs::exists(dir / f));
  std::vector<double> rmse;
  for (int k = 0; k < 2; ++k) {
    const fs::path s = dir / ("seed_" + std::to_string(k));
    for (const char* f : {"checkpoint.bin", "checkpoint_last.bin", "log.jsonl", "metrics.json"}) CHECK(fs::exists(s / f));
    std::ifstream is(s / "metrics.json");
    rmse.push_back(json::parse(is).at("val_rmse").get<double>());
    CHECK(models::load_checkpoint(s / "checkpoint.bin").meta.seed == static_cast<std::uint64_t>(k));
  }
  CHECK(agg.at("val_rmse").at("mean").get<double>() == doctest::Approx((rmse[0] + rmse[1]) / 2).epsilon(1e-12));
  std::ifstream rc(dir / "config.resolved.json");
  const json resolved = json::parse(rc);
  CHECK(resolved.at("kind") == "teacher");
  CHECK(resolved.at("epochs") == 1);
  CHECK_THROWS_AS(seeded_run(c, RunKind::Teacher, tiny_dataset(), dir), std::runtime_error);

  c.distiller = Distiller::SCKD;
  const fs::path sdir = fresh_dir("sckd_test_run_student");
  CHECK(resolve_teacher_checkpoint(dir, 0, false, 1) == dir / "seed_1" / "checkpoint.bin");
  const json sagg = seeded_run(c, RunKind::Distill, tiny_dataset(), sdir, dir);
  CHECK(sagg.at("kind") == "distill");
  std::ifstream ms(sdir / "seed_1" / "metrics.json");
  CHECK(json::parse(ms).at("teacher_checksum_unchanged") == true);
  fs::remove_all(dir);
  fs::remove_all(sdir);
}
