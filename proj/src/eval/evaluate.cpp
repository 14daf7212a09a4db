#include "sckd/eval/evaluate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "sckd/eval/metrics.hpp"
#include "sckd/log.hpp"
#include "sckd/models/checkpoint.hpp"
#include "sckd/training/trainer.hpp"

namespace sckd::eval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kMetricKeys{"rmse",    "mae",       "r",         "r_window_mean", "ece_left",
                                           "ece_right", "ece_avg", "rmse_bw_pct", "mae_bw_pct"};

json summarize(const std::vector<double>& v) {
  if (v.empty()) return {{"mean", nullptr}, {"std", nullptr}};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {{"mean", m}, {"std", v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0}};
}

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

struct RunEval {
  json folds = json::array();
  // metric -> [seed][fold]
  std::map<std::string, std::vector<std::vector<double>>> by_seed;
};

RunEval evaluate_run(const fs::path& run_dir, const training::TrainConfig& cfg, const datagen::WindowedDataset& ds,
                     const fs::path& pred_dir, const std::string& prefix, int batch, int bins) {
  RunEval out;
  const std::vector<int> subjects = cfg.fold.loso ? ds.subject_ids() : std::vector<int>{cfg.fold.test_subject};
  for (const auto& key : kMetricKeys) out.by_seed[key].assign(cfg.seeds, {});
  for (int subject : subjects) {
    const auto fold = datagen::make_fold(ds, subject, cfg.fold.loso ? std::nullopt : cfg.fold.val_subject);
    std::vector<int> all(fold.test.count);
    std::iota(all.begin(), all.end(), 0);
    const fs::path truth_path = pred_dir / (prefix + "fold_" + std::to_string(subject) + "_truth.f32");
    write_f32(truth_path, training::batch_grf(fold.test, all));

    const fs::path fold_dir = cfg.fold.loso ? run_dir / ("fold_" + std::to_string(subject)) : run_dir;
    json seeds = json::array();
    std::map<std::string, std::vector<double>> per_metric;
    for (int k = 0; k < cfg.seeds; ++k) {
      const fs::path ckpt = fold_dir / ("seed_" + std::to_string(k)) / "checkpoint.bin";
      if (!fs::is_regular_file(ckpt)) {
        throw std::runtime_error("missing fold checkpoint " + ckpt.string() + " (fold " + std::to_string(subject) + ")");
      }
      auto loaded = models::load_checkpoint(ckpt);
      const fs::path pred_path =
          pred_dir / (prefix + "fold_" + std::to_string(subject) + "_seed_" + std::to_string(k) + ".f32");
      write_f32(pred_path, training::predict(*loaded.network, fold.test, batch));
      json m = metrics_from_predictions(pred_path, truth_path, fold.test.window, fold.grf_scale_bw, bins);
      for (const auto& key : kMetricKeys) {
        per_metric[key].push_back(m.at(key).get<double>());
        out.by_seed[key][k].push_back(m.at(key).get<double>());
      }
      m["seed"] = loaded.meta.seed;
      m["checkpoint"] = ckpt.lexically_relative(run_dir).generic_string();
      m["prediction_file"] = pred_path.filename().string();
      seeds.push_back(m);
    }
    json summary = json::object();
    for (const auto& key : kMetricKeys) summary[key] = summarize(per_metric[key]);
    const auto info = ds.subject_info(subject);
    out.folds.push_back({{"test_subject", subject},
                         {"val_subject", fold.val_subject},
                         {"body_weight_kg", info ? info->body_weight : 0.0},
                         {"grf_scale_bw", fold.grf_scale_bw},
                         {"windows", fold.test.count},
                         {"truth_file", truth_path.filename().string()},
                         {"summary", summary},
                         {"seeds", seeds}});
  }
  return out;
}

// Aggregate: unweighted mean over folds of fold means; std over repeats uses the
// per-repeat mean across folds, std over folds uses the per-fold means.
json aggregate(const RunEval& r) {
  json agg = json::object();
  for (const auto& key : kMetricKeys) {
    std::vector<double> fold_means;
    for (const auto& f : r.folds) fold_means.push_back(f.at("summary").at(key).at("mean").get<double>());
    std::vector<double> repeat_means;
    for (const auto& per_fold : r.by_seed.at(key)) {
      if (!per_fold.empty()) repeat_means.push_back(std::accumulate(per_fold.begin(), per_fold.end(), 0.0) / per_fold.size());
    }
    const json fm = summarize(fold_means);
    agg[key] = {{"mean", fm.at("mean")}, {"std_repeats", summarize(repeat_means).at("std")}, {"std_folds", fm.at("std")}};
  }
  return agg;
}

std::string describe_run(const json& resolved) {
  std::string s = resolved.value("kind", "?");
  if (s == "teacher") {
    s += " " + resolved.at("teacher").value("encoder_kind", "?") + " (" + resolved.value("mode", "?") + ")";
  } else {
    s += " " + resolved.value("distiller", "?") + " -> " + resolved.at("student").value("encoder_kind", "?") + " student";
  }
  return s;
}

std::string render_markdown(const json& report) {
  std::ostringstream md;
  md << "# Evaluation report\n\n";
  md << "Run: `" << report.at("run").get<std::string>() << "` (" << report.at("model").get<std::string>() << ")\n\n";
  md << "Window " << report.at("window").get<int>() << ", " << report.at("folds").size() << " fold(s), "
     << report.at("seeds").get<int>() << " repeat(s). RMSE and MAE in 10^-2 normalized units, r in 10^-2, ECE in %.\n\n";
  md << "## Aggregate\n\n| Metric | Mean | Std (repeats) | Std (folds) |\n|---|---:|---:|---:|\n";
  for (const auto& key : kMetricKeys) {
    const auto& a = report.at("aggregate").at(key);
    md << "| " << key << " | " << fmt(a.at("mean").get<double>()) << " | " << fmt(a.at("std_repeats").get<double>())
       << " | " << fmt(a.at("std_folds").get<double>()) << " |\n";
  }
  md << "\n## Per subject\n\n| Subject | Windows | RMSE | MAE | r | ECE avg | RMSE %BW | MAE %BW |\n"
        "|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& f : report.at("folds")) {
    const auto& s = f.at("summary");
    auto cell = [&](const char* k) {
      return fmt(s.at(k).at("mean").get<double>()) + " ± " + fmt(s.at(k).at("std").get<double>());
    };
    md << "| " << f.at("test_subject").get<int>() << " | " << f.at("windows").get<int>() << " | " << cell("rmse") << " | "
       << cell("mae") << " | " << cell("r") << " | " << cell("ece_avg") << " | " << cell("rmse_bw_pct") << " | "
       << cell("mae_bw_pct") << " |\n";
  }
  if (report.contains("paired_comparison")) {
    const auto& pc = report.at("paired_comparison");
    md << "\n## Paired comparison\n\nAgainst `" << pc.at("other_run").get<std::string>() << "` ("
       << pc.at("other_model").get<std::string>() << "). Negative delta means this run has lower RMSE.\n\n"
       << "| Subject | RMSE (this) | RMSE (other) | Delta |\n|---:|---:|---:|---:|\n";
    for (const auto& row : pc.at("subjects")) {
      md << "| " << row.at("test_subject").get<int>() << " | " << fmt(row.at("rmse_this").get<double>()) << " | "
         << fmt(row.at("rmse_other").get<double>()) << " | " << fmt(row.at("delta").get<double>()) << " |\n";
    }
    md << "\nMean delta " << fmt(pc.at("mean_delta").get<double>()) << "; this run better on "
       << pc.at("wins").get<int>() << " of " << pc.at("subjects").size() << " subjects.\n";
  }
  return md.str();
}

}  // namespace

training::TrainConfig load_run_config(const fs::path& run_dir) {
  const fs::path p = run_dir / "config.resolved.json";
  std::ifstream is(p);
  if (!is) throw std::runtime_error("missing " + p.string());
  json j = json::parse(is);
  j.erase("kind");
  return training::from_json(j);
}

void write_f32(const fs::path& p, const Tensor& t) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}

Tensor read_f32(const fs::path& p, const Shape& shape) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(t.size() * sizeof(float)) || is.peek() != EOF) {
    throw std::runtime_error(p.string() + " does not hold a " + shape_str(shape) + " float32 tensor");
  }
  return t;
}

json metrics_from_predictions(const fs::path& prediction, const fs::path& truth, int window, double grf_scale_bw,
                              int ece_bins) {
  const auto bytes = fs::file_size(truth);
  const int n = static_cast<int>(bytes / (sizeof(float) * 2 * static_cast<std::size_t>(window)));
  const Shape shape{n, 2, window};
  const Tensor y = read_f32(truth, shape);
  const Tensor p = read_f32(prediction, shape);
  const auto pm = point_metrics(p, y);
  const auto ce = calibration_error(p, y, ece_bins);
  return {{"rmse", pm.rmse},
          {"mae", pm.mae},
          {"r", pm.r},
          {"r_window_mean", per_window_r(p, y)},
          {"ece_left", ce.left},
          {"ece_right", ce.right},
          {"ece_avg", ce.avg},
          {"rmse_bw_pct", pm.rmse * grf_scale_bw},
          {"mae_bw_pct", pm.mae * grf_scale_bw}};
}

json loso_evaluate(const EvalOptions& opts, const datagen::WindowedDataset& dataset) {
  const auto cfg = load_run_config(opts.run_dir);
  json resolved = json::parse(std::ifstream(opts.run_dir / "config.resolved.json"));
  if (dataset.window != cfg.window) {
    throw std::runtime_error("dataset window " + std::to_string(dataset.window) + " differs from run window " +
                             std::to_string(cfg.window));
  }
  const fs::path pred_dir = opts.out_dir / "predictions";
  fs::create_directories(pred_dir);
  const RunEval run = evaluate_run(opts.run_dir, cfg, dataset, pred_dir, "", opts.batch_size, opts.ece_bins);

  json report{{"run", opts.run_dir.generic_string()},
              {"model", describe_run(resolved)},
              {"window", cfg.window},
              {"seeds", cfg.seeds},
              {"loso", cfg.fold.loso},
              {"ece_bins", opts.ece_bins},
              {"units", {{"rmse", "1e-2 normalized"}, {"mae", "1e-2 normalized"}, {"r", "1e-2"}, {"ece", "percent"},
                         {"bw_pct", "percent of body weight"}}},
              {"prediction_layout", "f32le, windows x 2 x t, C order"},
              {"folds", run.folds},
              {"aggregate", aggregate(run)}};

  if (opts.compare_run) {
    const auto ocfg = load_run_config(*opts.compare_run);
    json oresolved = json::parse(std::ifstream(*opts.compare_run / "config.resolved.json"));
    if (ocfg.window != cfg.window || ocfg.fold.loso != cfg.fold.loso ||
        (!cfg.fold.loso && ocfg.fold.test_subject != cfg.fold.test_subject)) {
      throw std::runtime_error("comparison run does not share this run's folds and window");
    }
    const RunEval other =
        evaluate_run(*opts.compare_run, ocfg, dataset, pred_dir, "compare_", opts.batch_size, opts.ece_bins);
    json rows = json::array();
    double sum = 0.0;
    int wins = 0;
    for (std::size_t i = 0; i < run.folds.size(); ++i) {
      const double a = run.folds[i].at("summary").at("rmse").at("mean").get<double>();
      const double b = other.folds[i].at("summary").at("rmse").at("mean").get<double>();
      rows.push_back({{"test_subject", run.folds[i].at("test_subject")}, {"rmse_this", a}, {"rmse_other", b}, {"delta", a - b}});
      sum += a - b;
      wins += a < b ? 1 : 0;
    }
    report["paired_comparison"] = {{"other_run", opts.compare_run->generic_string()},
                                   {"other_model", describe_run(oresolved)},
                                   {"subjects", rows},
                                   {"mean_delta", rows.empty() ? 0.0 : sum / static_cast<double>(rows.size())},
                                   {"wins", wins},
                                   {"other_aggregate", aggregate(other)}};
  }

  std::ofstream(opts.out_dir / "report.json", std::ios::binary | std::ios::trunc) << report.dump(2) << "\n";
  std::ofstream(opts.out_dir / "report.md", std::ios::binary | std::ios::trunc) << render_markdown(report);
  return report;
}

LatencyResult latency_bench(models::Network& net, int n_samples, int batch, int warmup) {
  LatencyResult r;
  r.n_samples = std::max(n_samples, 0);
  r.batch = std::max(batch, 1);
  if (r.n_samples == 0) {
    r.empty = true;
    return r;
  }
  const auto& spec = net.spec();
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor x({r.batch, models::NetworkSpec::in_channels, spec.window, models::NetworkSpec::frame_rows,
            models::NetworkSpec::frame_cols});
  for (float& v : x.values()) v = u(rng);
  for (int i = 0; i < warmup; ++i) net.forward(x, false);
  const int calls = (r.n_samples + r.batch - 1) / r.batch;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < calls; ++i) net.forward(x, false);
  r.total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.avg_ms = r.total_s * 1000.0 / (static_cast<double>(calls) * r.batch);
  return r;
}

LatencyResult latency_bench(const fs::path& checkpoint, int n_samples, int batch, int warmup) {
  auto loaded = models::load_checkpoint(checkpoint);
  return latency_bench(*loaded.network, n_samples, batch, warmup);
}

}  // namespace sckd::eval
