#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "sckd/datagen/dataset.hpp"
#include "sckd/models/layers.hpp"
#include "sckd/models/network.hpp"
#include "sckd/training/config.hpp"

namespace sckd::training {

/// Non-finite loss during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- optimization ----------------------------------------------------------------

/// Scales all gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(const std::vector<models::Parameter*>& params, double max_norm);

class Adam {
 public:
  Adam(std::vector<models::Parameter*> params, double lr, const OptimizerConfig& cfg);
  void step();
  double lr() const { return lr_; }

 private:
  std::vector<models::Parameter*> params_;
  std::vector<std::vector<float>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
};

// ---- batching ------------------------------------------------------------------

/// b x 2 x t x 16 x 8 insole clips for the given sample indices.
Tensor batch_insole(const datagen::WindowedDataset& ds, std::span<const int> idx);
/// b x 2 x t GRF windows for the given sample indices.
Tensor batch_grf(const datagen::WindowedDataset& ds, std::span<const int> idx);
/// Evaluation-mode predictions for the whole dataset, n x 2 x t.
Tensor predict(models::Network& net, const datagen::WindowedDataset& ds, int batch_size = 64);

// ---- WAE discriminator -----------------------------------------------------------

/// Linear/ReLU stack mapping c-dimensional codes to one logit.
models::Sequential make_discriminator(int code_dim, int hidden, int layers, std::uint64_t seed);

// ---- training loops ----------------------------------------------------------------

struct StepLog {
  int step = 0;
  int epoch = 0;
  double L_gt = 0, L_KD_c = 0, L_sc_r = 0, L_sc_f = 0, total = 0;
  double L_kd = 0, L_feat = 0;  // baseline distiller terms
  double kl = 0;                // VAE
  double L_disc = 0;            // WAE discriminator
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;  // MSE on the validation split (train split if none)
  double val_rmse = 0;  // x 10^-2
};

struct TrainResult {
  std::unique_ptr<models::Network> best;  // best validation epoch
  std::unique_ptr<models::Network> last;
  int best_epoch = 0;
  double best_val_loss = 0;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  std::uint64_t teacher_checksum_before = 0, teacher_checksum_after = 0;
};

/// Supervised teacher training in AE, VAE or WAE mode. Weight init and batch
/// order derive from cfg.seed only.
TrainResult train_teacher(const TrainConfig& cfg, const datagen::Fold& fold);

/// Trains cfg.student under cfg.distiller against a frozen teacher. The teacher's
/// outputs and taps are computed once in evaluation mode and reused every epoch.
TrainResult distill_student(const TrainConfig& cfg, models::Network& teacher, const datagen::Fold& fold);

/// One JSON object per step: {step, L_gt, L_KD_c, L_sc_r, L_sc_f, total, ...} then one per epoch.
void write_log(std::ostream& os, const TrainResult& r, Distiller distiller, Mode mode, bool distill);

// ---- repeat protocol -------------------------------------------------------------------

enum class RunKind { Teacher, Distill };

/// Where distillation takes its teacher: one checkpoint file for every fold/seed,
/// or a teacher run directory searched as fold_<s>/seed_<k>, seed_<k>, then seed_0.
std::filesystem::path resolve_teacher_checkpoint(const std::filesystem::path& teacher, int fold_subject, bool loso,
                                                 int seed_index);

/// Trains seeds {s, s+1, ...} (cfg.seeds of them) for one fold or, with cfg.fold.loso,
/// for every subject. Layout: config.resolved.json, [fold_<s>/]seed_<k>/{checkpoint.bin,
/// checkpoint_last.bin, log.jsonl, metrics.json}, aggregate.json. Throws std::runtime_error if
/// out_dir exists and is not empty. Returns the aggregate document.
nlohmann::json seeded_run(const TrainConfig& cfg, RunKind kind, const datagen::WindowedDataset& dataset,
                          const std::filesystem::path& out_dir, const std::filesystem::path& teacher = {});

}  // namespace sckd::training
