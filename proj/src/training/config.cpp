#include "sckd/training/config.hpp"

#include <algorithm>
#include <cctype>

#include "sckd/models/checkpoint.hpp"

namespace sckd::training {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

json pair_json(const losses::TapPair& p) {
  return json::array({std::string(models::tap_name(p.first)), std::string(models::tap_name(p.second))});
}

losses::TapPair parse_pair(const json& j) {
  if (j.is_string()) {
    const auto t = models::parse_tap(j.get<std::string>());
    return {t, t};
  }
  if (!j.is_array() || j.size() != 2) throw ConfigError("tap pair must be a tap name or a [teacher, student] array");
  return {models::parse_tap(j[0].get<std::string>()), models::parse_tap(j[1].get<std::string>())};
}

// Overlays `patch` onto `base`, rejecting keys that `base` does not define.
void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it->is_object()) {
      merge_checked(slot, *it, key);
    } else {
      slot = *it;
    }
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& section) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + section + key + "': " + e.what());
  }
}

models::NetworkSpec parse_spec(const json& j, const char* section) {
  try {
    return models::spec_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::AE: return "AE";
    case Mode::VAE: return "VAE";
    case Mode::WAE: return "WAE";
  }
  return "?";
}

std::string_view to_string(Distiller d) {
  switch (d) {
    case Distiller::Scratch: return "scratch";
    case Distiller::KD: return "KD";
    case Distiller::AT: return "AT";
    case Distiller::SP: return "SP";
    case Distiller::KDSP: return "KD+SP";
    case Distiller::DIST: return "DIST";
    case Distiller::SCKD: return "SCKD";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  const std::string l = lower(s);
  if (l == "ae") return Mode::AE;
  if (l == "vae") return Mode::VAE;
  if (l == "wae") return Mode::WAE;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected AE, VAE or WAE)");
}

Distiller parse_distiller(std::string_view s) {
  const std::string l = lower(s);
  if (l == "scratch" || l == "student") return Distiller::Scratch;
  if (l == "kd") return Distiller::KD;
  if (l == "at") return Distiller::AT;
  if (l == "sp") return Distiller::SP;
  if (l == "kd+sp" || l == "kdsp") return Distiller::KDSP;
  if (l == "dist") return Distiller::DIST;
  if (l == "sckd") return Distiller::SCKD;
  throw ConfigError("unknown distiller '" + std::string(s) + "' (expected scratch, KD, AT, SP, KD+SP, DIST or SCKD)");
}

TrainConfig desk_scale_config() {
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 32;
  c.window = 100;
  c.data.subjects = 4;
  c.data.speeds = {datagen::kSpeedSlow, datagen::kSpeedFast};
  c.data.duration_s = 130.0;  // 10 s warm-up + 2 min
  c.data.window = 100;
  c.optimizer.lr = 1e-3;
  return c;
}

double effective_lr(const TrainConfig& cfg, const models::NetworkSpec& spec) {
  if (cfg.optimizer.lr > 0.0) return cfg.optimizer.lr;
  return spec.encoder_kind == models::EncoderKind::R2Plus1D ? 1e-3 : 1e-2;
}

json to_json(const TrainConfig& c) {
  json layers = json::array();
  for (const auto& p : c.sckd.layers) layers.push_back(pair_json(p));
  json speeds = c.data.speeds;
  return {
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"seeds", c.seeds},
      {"window", c.window},
      {"max_steps", c.max_steps},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"clip_norm", c.optimizer.clip_norm}}},
      {"mode", std::string(to_string(c.mode))},
      {"vae_beta", c.vae_beta},
      {"wae", {{"lambda_adv", c.wae.lambda_adv}, {"hidden", c.wae.hidden}, {"layers", c.wae.layers}, {"lr", c.wae.lr}}},
      {"distiller", std::string(to_string(c.distiller))},
      {"sckd",
       {{"lambda1", c.sckd.lambda1},
        {"lambda2", c.sckd.lambda2},
        {"lambda3", c.sckd.lambda3},
        {"gamma", c.sckd.gamma},
        {"P", c.sckd.order},
        {"q", c.sckd.q},
        {"layers", layers},
        {"kernel_mode", c.sckd.kernel_mode == losses::KernelMode::Exact ? "exact" : "taylor"}}},
      {"baseline",
       {{"tau", c.baseline.tau},
        {"alpha", c.baseline.alpha},
        {"sp_weight", c.baseline.sp_weight},
        {"at_weight", c.baseline.at_weight},
        {"pair", pair_json(c.baseline.pair)}}},
      {"teacher", models::spec_to_json(c.teacher)},
      {"student", models::spec_to_json(c.student)},
      {"data",
       {{"seed", c.data.seed},
        {"subjects", c.data.subjects},
        {"speeds", speeds},
        {"duration_s", c.data.duration_s},
        {"rate_hz", c.data.rate_hz},
        {"preprocess",
         {{"target_rate_hz", c.data.preprocess.target_rate_hz},
          {"cutoff_hz", c.data.preprocess.cutoff_hz},
          {"warmup_s", c.data.preprocess.warmup_s}}}}},
      {"fold",
       {{"test_subject", c.fold.test_subject},
        {"val_subject", c.fold.val_subject ? json(*c.fold.val_subject) : json(nullptr)},
        {"loso", c.fold.loso}}},
  };
}

TrainConfig from_json(const json& patch, const TrainConfig& base) {
  json j = to_json(base);
  merge_checked(j, patch, "");
  // keys whose value is fixed by construction
  j["teacher"].erase("temporal_stride_total");
  j["student"].erase("temporal_stride_total");

  TrainConfig c;
  c.epochs = get<int>(j, "epochs", "");
  c.batch_size = get<int>(j, "batch_size", "");
  c.seed = get<std::uint64_t>(j, "seed", "");
  c.seeds = get<int>(j, "seeds", "");
  c.window = get<int>(j, "window", "");
  c.max_steps = get<int>(j, "max_steps", "");
  const json& o = j.at("optimizer");
  c.optimizer.lr = get<double>(o, "lr", "optimizer.");
  c.optimizer.beta1 = get<double>(o, "beta1", "optimizer.");
  c.optimizer.beta2 = get<double>(o, "beta2", "optimizer.");
  c.optimizer.eps = get<double>(o, "eps", "optimizer.");
  c.optimizer.clip_norm = get<double>(o, "clip_norm", "optimizer.");
  c.mode = parse_mode(get<std::string>(j, "mode", ""));
  c.vae_beta = get<double>(j, "vae_beta", "");
  const json& w = j.at("wae");
  c.wae.lambda_adv = get<double>(w, "lambda_adv", "wae.");
  c.wae.hidden = get<int>(w, "hidden", "wae.");
  c.wae.layers = get<int>(w, "layers", "wae.");
  c.wae.lr = get<double>(w, "lr", "wae.");
  c.distiller = parse_distiller(get<std::string>(j, "distiller", ""));
  const json& s = j.at("sckd");
  c.sckd.lambda1 = get<double>(s, "lambda1", "sckd.");
  c.sckd.lambda2 = get<double>(s, "lambda2", "sckd.");
  c.sckd.lambda3 = get<double>(s, "lambda3", "sckd.");
  c.sckd.gamma = get<double>(s, "gamma", "sckd.");
  c.sckd.order = get<int>(s, "P", "sckd.");
  c.sckd.q = get<int>(s, "q", "sckd.");
  const std::string km = lower(get<std::string>(s, "kernel_mode", "sckd."));
  if (km != "exact" && km != "taylor") throw ConfigError("sckd.kernel_mode must be 'exact' or 'taylor'");
  c.sckd.kernel_mode = km == "exact" ? losses::KernelMode::Exact : losses::KernelMode::Taylor;
  c.sckd.layers.clear();
  try {
    for (const auto& p : s.at("layers")) c.sckd.layers.push_back(parse_pair(p));
    c.baseline.pair = parse_pair(j.at("baseline").at("pair"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const json& b = j.at("baseline");
  c.baseline.tau = get<double>(b, "tau", "baseline.");
  c.baseline.alpha = get<double>(b, "alpha", "baseline.");
  c.baseline.sp_weight = get<double>(b, "sp_weight", "baseline.");
  c.baseline.at_weight = get<double>(b, "at_weight", "baseline.");
  c.teacher = parse_spec(j.at("teacher"), "teacher");
  c.student = parse_spec(j.at("student"), "student");
  const json& d = j.at("data");
  c.data.seed = get<std::uint64_t>(d, "seed", "data.");
  c.data.subjects = get<int>(d, "subjects", "data.");
  c.data.speeds = get<std::vector<double>>(d, "speeds", "data.");
  c.data.duration_s = get<double>(d, "duration_s", "data.");
  c.data.rate_hz = get<double>(d, "rate_hz", "data.");
  const json& pp = d.at("preprocess");
  c.data.preprocess.target_rate_hz = get<double>(pp, "target_rate_hz", "data.preprocess.");
  c.data.preprocess.cutoff_hz = get<double>(pp, "cutoff_hz", "data.preprocess.");
  c.data.preprocess.warmup_s = get<double>(pp, "warmup_s", "data.preprocess.");
  const json& f = j.at("fold");
  c.fold.test_subject = get<int>(f, "test_subject", "fold.");
  c.fold.val_subject = f.at("val_subject").is_null() ? std::nullopt : std::optional<int>(get<int>(f, "val_subject", "fold."));
  c.fold.loso = get<bool>(f, "loso", "fold.");

  // the window is a single knob shared by data and both networks
  c.data.window = c.window;
  c.teacher.window = c.window;
  c.student.window = c.window;
  validate(c);
  return c;
}

void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must have the form key.path=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + std::string(assignment) + "' has an empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override path '" + path + "' descends into a non-object");
    node = &next;
    start = dot + 1;
  }
}

void validate(const TrainConfig& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.epochs >= 1, "epochs must be >= 1");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.seeds >= 1, "seeds must be >= 1");
  need(c.window == 100 || c.window == 200, "window must be 100 or 200");
  need(c.max_steps >= 0, "max_steps must be >= 0");
  need(c.optimizer.beta1 >= 0 && c.optimizer.beta1 < 1, "optimizer.beta1 must be in [0, 1)");
  need(c.optimizer.beta2 >= 0 && c.optimizer.beta2 < 1, "optimizer.beta2 must be in [0, 1)");
  need(c.optimizer.eps > 0, "optimizer.eps must be positive");
  need(c.vae_beta >= 0, "vae_beta must be >= 0");
  need(c.wae.lambda_adv >= 0, "wae.lambda_adv must be >= 0");
  need(c.wae.hidden >= 1 && c.wae.layers >= 2, "wae.hidden must be >= 1 and wae.layers >= 2");
  need(c.wae.lr > 0, "wae.lr must be positive");
  need(c.sckd.lambda1 >= 0 && c.sckd.lambda2 >= 0 && c.sckd.lambda3 >= 0, "sckd lambdas must be >= 0");
  need(c.sckd.gamma > 0, "sckd.gamma must be positive");
  need(c.sckd.order >= 0, "sckd.P must be >= 0");
  need(c.sckd.q >= 1, "sckd.q must be >= 1");
  need(!c.sckd.layers.empty(), "sckd.layers must not be empty");
  need(c.baseline.tau > 1, "baseline.tau must be > 1");
  need(c.baseline.alpha >= 0 && c.baseline.alpha <= 1, "baseline.alpha must be in [0, 1]");
  need(c.baseline.sp_weight >= 0 && c.baseline.at_weight >= 0, "baseline weights must be >= 0");
  need(c.data.subjects >= 2, "data.subjects must be >= 2");
  need(!c.data.speeds.empty(), "data.speeds must not be empty");
  for (double s : c.data.speeds) need(s >= 0.5 && s <= 2.0, "data.speeds must lie in [0.5, 2.0] m/s");
  need(c.data.duration_s > c.data.preprocess.warmup_s, "data.duration_s must exceed the warm-up");
  need(c.fold.test_subject >= 0 && c.fold.test_subject < c.data.subjects, "fold.test_subject out of range");
  if (c.fold.val_subject) {
    need(*c.fold.val_subject >= 0 && *c.fold.val_subject < c.data.subjects && *c.fold.val_subject != c.fold.test_subject,
         "fold.val_subject must be a valid subject other than the test subject");
  }
}

}  // namespace sckd::training
