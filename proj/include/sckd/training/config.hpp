#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sckd/datagen/dataset.hpp"
#include "sckd/losses/losses.hpp"
#include "sckd/models/network.hpp"

namespace sckd::training {

/// Raised for invalid or inconsistent configuration values (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { AE, VAE, WAE };
enum class Distiller { Scratch, KD, AT, SP, KDSP, DIST, SCKD };

std::string_view to_string(Mode m);
std::string_view to_string(Distiller d);
Mode parse_mode(std::string_view s);
Distiller parse_distiller(std::string_view s);

struct OptimizerConfig {
  /// <= 0 selects the encoder default: 0.01 for C3D / I3D, 0.001 for (2+1)D.
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
};

struct WaeConfig {
  double lambda_adv = 1.0;
  int hidden = 128;
  int layers = 3;  // linear layers in the discriminator
  double lr = 1e-3;
};

struct BaselineConfig {
  double tau = 4.0;
  double alpha = 0.5;
  double sp_weight = 1.0;
  double at_weight = 1.0;
  losses::TapPair pair{models::Tap::Mid, models::Tap::Mid};
};

struct FoldConfig {
  int test_subject = 0;
  std::optional<int> val_subject;  // default: next subject id (cyclic)
  bool loso = false;               // run every subject as the test fold
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  std::uint64_t seed = 0;
  int seeds = 3;
  int window = 100;
  OptimizerConfig optimizer;
  Mode mode = Mode::AE;
  double vae_beta = 1e-3;
  WaeConfig wae;
  Distiller distiller = Distiller::Scratch;
  losses::SckdParams sckd;
  BaselineConfig baseline;
  models::NetworkSpec teacher{};
  models::NetworkSpec student{models::EncoderKind::C3D, models::Scale::Student};
  datagen::DatasetConfig data;
  FoldConfig fold;
  /// Stop after this many optimizer steps in total (0 = no limit); testing aid.
  int max_steps = 0;
};

/// Desk-scale preset: 4 subjects x 2 speeds x 2 min, window 100, 30 epochs, batch 32.
TrainConfig desk_scale_config();

double effective_lr(const TrainConfig& cfg, const models::NetworkSpec& spec);

nlohmann::json to_json(const TrainConfig& cfg);
/// Starts from `base` and applies every key present in `j`. Unknown keys throw ConfigError.
TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base = TrainConfig{});
/// Applies a dotted override such as "sckd.lambda2=20" or "teacher.encoder_kind=i3d".
/// The value is parsed as JSON when possible and as a string otherwise.
void apply_override(nlohmann::json& j, std::string_view assignment);
/// Range and consistency checks; throws ConfigError.
void validate(const TrainConfig& cfg);

}  // namespace sckd::training
