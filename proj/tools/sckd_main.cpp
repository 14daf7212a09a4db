#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sckd/datagen/dataset.hpp"
#include "sckd/eval/evaluate.hpp"
#include "sckd/eval/plot.hpp"
#include "sckd/log.hpp"
#include "sckd/models/checkpoint.hpp"
#include "sckd/runtime.hpp"
#include "sckd/training/config.hpp"
#include "sckd/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sckd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Carries the failing stage name to the top-level handler.
struct StageError : std::runtime_error {
  std::string stage;
  bool config;
  StageError(std::string s, const std::string& what, bool is_config)
      : std::runtime_error(what), stage(std::move(s)), config(is_config) {}
};

template <class F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const training::ConfigError& e) {
    throw StageError(name, e.what(), true);
  } catch (const std::invalid_argument& e) {
    throw StageError(name, e.what(), true);
  } catch (const json::exception& e) {
    throw StageError(name, e.what(), true);
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), false);
  }
}

struct ConfigArgs {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::string data;
  std::string out;
};

void add_config_options(CLI::App* sub, ConfigArgs& a) {
  sub->add_option("--config", a.config, "JSON config merged over the defaults")->check(CLI::ExistingFile);
  sub->add_option("--preset", a.preset, "Start from a named preset")->check(CLI::IsMember({"full", "desk"}));
  sub->add_option("--set", a.sets, "Dotted override key=value (repeatable)");
  sub->add_option("--data", a.data, "Dataset directory written by synth (default: synthesize from config)");
  sub->add_option("--out", a.out, "Output directory");
}

fs::path default_out(const std::string& out, const std::string& leaf) {
  if (!out.empty()) return out;
  const char* root = std::getenv("SCKD_RUNS_DIR");
  return fs::path(root && *root ? root : "runs") / leaf;
}

training::TrainConfig resolve_config(const ConfigArgs& a) {
  return stage("config", [&] {
    training::TrainConfig base = a.preset == "desk" ? training::desk_scale_config() : training::TrainConfig{};
    if (!a.config.empty()) {
      std::ifstream is(a.config);
      base = training::from_json(json::parse(is), base);
    }
    json j = training::to_json(base);
    for (const auto& s : a.sets) training::apply_override(j, s);
    training::TrainConfig cfg = training::from_json(j);
    training::validate(cfg);
    return cfg;
  });
}

datagen::WindowedDataset load_data(const std::string& dir, const datagen::DatasetConfig& dc, int window) {
  return stage("data", [&] {
    datagen::WindowedDataset ds;
    if (dir.empty()) {
      log::info("data", "synthesizing " + std::to_string(dc.subjects) + " subjects, window " + std::to_string(dc.window));
      ds = datagen::build_dataset(dc);
    } else {
      ds = datagen::read_dataset(dir);
    }
    if (ds.window != window) {
      throw training::ConfigError("dataset window " + std::to_string(ds.window) + " does not match config window " +
                                  std::to_string(window));
    }
    return ds;
  });
}

void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary | std::ios::trunc) << j.dump(2) << "\n";
}

Tensor window_slice(const Tensor& all, int index) {
  const int t = all.dim(2);
  if (index < 0 || index >= all.dim(0)) throw std::invalid_argument("window index out of range");
  Tensor w({2, t});
  std::copy_n(all.data() + static_cast<std::size_t>(index) * 2 * t, 2 * t, w.data());
  return w;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Selective correlation knowledge distillation for insole-based GRF estimation"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize a windowed insole/GRF dataset");
  ConfigArgs synth_args;
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> synth_subjects, synth_window;
  add_config_options(synth, synth_args);
  synth->add_option("--seed", synth_seed, "Data seed");
  synth->add_option("--subjects", synth_subjects, "Number of subjects");
  synth->add_option("--window", synth_window, "Window length (100 or 200)");

  // train-teacher
  auto* teach = app.add_subcommand("train-teacher", "Train teacher networks (all seeds, optionally all LOSO folds)");
  ConfigArgs teach_args;
  add_config_options(teach, teach_args);

  // distill
  auto* distill = app.add_subcommand("distill", "Train student networks against a frozen teacher");
  ConfigArgs distill_args;
  std::string teacher_path;
  add_config_options(distill, distill_args);
  distill->add_option("--teacher", teacher_path, "Teacher checkpoint or teacher run directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate every fold checkpoint of a run on its held-out subject");
  std::string eval_run, eval_compare, eval_data, eval_out;
  int eval_bins = 10, eval_batch = 64;
  eval->add_option("--run", eval_run, "Run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--compare", eval_compare, "Second run for a paired per-subject comparison")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--data", eval_data, "Dataset directory (default: synthesize from the run config)");
  eval->add_option("--out", eval_out, "Report directory (default: <run>/eval)");
  eval->add_option("--bins", eval_bins, "ECE bins")->check(CLI::PositiveNumber);
  eval->add_option("--batch", eval_batch, "Inference batch size")->check(CLI::PositiveNumber);

  // bench
  auto* bench = app.add_subcommand("bench", "Per-sample inference latency");
  std::vector<std::string> bench_ckpts, bench_models;
  int bench_samples = 200, bench_batch = 1, bench_window = 100;
  std::string bench_out;
  bench->add_option("--checkpoint", bench_ckpts, "Checkpoint files (repeatable)");
  bench->add_option("--model", bench_models, "Freshly initialized encoder:scale, e.g. C3D:teacher (repeatable)");
  bench->add_option("--samples", bench_samples, "Number of samples")->check(CLI::NonNegativeNumber);
  bench->add_option("--batch", bench_batch, "Samples per forward call")->check(CLI::PositiveNumber);
  bench->add_option("--window", bench_window, "Window length for --model networks");
  bench->add_option("--out", bench_out, "Output directory for bench.json");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Render figures as SVG and PNG");
  ConfigArgs plot_args;
  std::string plot_kind, plot_report, plot_tap = "Mid", plot_param = "sckd.lambda2", plot_metric = "rmse";
  std::vector<std::string> plot_models, plot_runs;
  int plot_fold = -1, plot_seed = 0, plot_window = 0, plot_batch = 16;
  plot_cmd->add_option("--kind", plot_kind, "estimation, corrmap or sensitivity")
      ->required()
      ->check(CLI::IsMember({"estimation", "corrmap", "sensitivity"}));
  plot_cmd->add_option("--report", plot_report, "Evaluation directory (estimation)");
  plot_cmd->add_option("--fold", plot_fold, "Held-out subject (estimation, corrmap)");
  plot_cmd->add_option("--seed-index", plot_seed, "Repeat index (estimation)");
  plot_cmd->add_option("--window-index", plot_window, "Window within the held-out subject (estimation)");
  plot_cmd->add_option("--model", plot_models, "name=checkpoint, first one is the teacher (corrmap, repeatable)");
  plot_cmd->add_option("--tap", plot_tap, "Tap to visualize (corrmap)");
  plot_cmd->add_option("--batch", plot_batch, "Samples in the correlation maps (corrmap)")->check(CLI::PositiveNumber);
  plot_cmd->add_option("--runs", plot_runs, "Run or evaluation directories (sensitivity)");
  plot_cmd->add_option("--param", plot_param, "Dotted config key on the x axis (sensitivity)");
  plot_cmd->add_option("--metric", plot_metric, "Metric on the y axis (sensitivity)");
  add_config_options(plot_cmd, plot_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  log::set_level(log::parse_level(log_level));

  try {
    if (synth->parsed()) {
      auto cfg = resolve_config(synth_args);
      stage("config", [&] {
        if (synth_seed) cfg.data.seed = *synth_seed;
        if (synth_subjects) cfg.data.subjects = *synth_subjects;
        if (synth_window) {
          json j = training::to_json(cfg);
          j["window"] = *synth_window;
          cfg = training::from_json(j);
        }
        training::validate(cfg);
        return 0;
      });
      const fs::path out = default_out(synth_args.out, "data");
      stage("synth", [&] {
        const auto ds = datagen::build_dataset(cfg.data);
        datagen::write_dataset(out, ds, &cfg.data);
        write_json(out / "config.resolved.json", training::to_json(cfg));
        log::info("synth", std::to_string(ds.count) + " windows written to " + out.string());
        return 0;
      });
    } else if (teach->parsed() || distill->parsed()) {
      const bool is_teacher = teach->parsed();
      const ConfigArgs& a = is_teacher ? teach_args : distill_args;
      const auto cfg = resolve_config(a);
      const auto ds = load_data(a.data, cfg.data, cfg.window);
      const fs::path out = default_out(a.out, is_teacher ? "teacher" : "student");
      const auto agg = stage(is_teacher ? "train-teacher" : "distill", [&] {
        return training::seeded_run(cfg, is_teacher ? training::RunKind::Teacher : training::RunKind::Distill, ds, out,
                                    is_teacher ? fs::path{} : fs::path(teacher_path));
      });
      std::cout << agg.at("val_rmse").dump() << "\n";
    } else if (eval->parsed()) {
      const auto cfg = stage("config", [&] { return eval::load_run_config(eval_run); });
      const auto ds = load_data(eval_data, cfg.data, cfg.window);
      eval::EvalOptions opts;
      opts.run_dir = eval_run;
      opts.out_dir = eval_out.empty() ? fs::path(eval_run) / "eval" : fs::path(eval_out);
      if (!eval_compare.empty()) opts.compare_run = fs::path(eval_compare);
      opts.batch_size = eval_batch;
      opts.ece_bins = eval_bins;
      const auto report = stage("eval", [&] {
        write_json(opts.out_dir / "config.resolved.json",
                   {{"command", "eval"}, {"run", eval_run}, {"compare", eval_compare}, {"data", eval_data},
                    {"ece_bins", eval_bins}, {"batch", eval_batch}, {"run_config", training::to_json(cfg)}});
        return eval::loso_evaluate(opts, ds);
      });
      std::cout << report.at("aggregate").at("rmse").dump() << "\n";
    } else if (bench->parsed()) {
      if (bench_ckpts.empty() && bench_models.empty()) {
        throw StageError("config", "bench needs --checkpoint or --model", true);
      }
      json rows = json::array();
      const fs::path out = default_out(bench_out, "bench");
      write_json(out / "config.resolved.json", {{"command", "bench"}, {"checkpoints", bench_ckpts},
                                                {"models", bench_models}, {"samples", bench_samples},
                                                {"batch", bench_batch}, {"window", bench_window}});
      for (const auto& c : bench_ckpts) {
        const auto r = stage("bench", [&] { return eval::latency_bench(fs::path(c), bench_samples, bench_batch); });
        rows.push_back({{"model", c}, {"samples", r.n_samples}, {"batch", r.batch}, {"total_s", r.total_s},
                        {"avg_ms", r.avg_ms}});
      }
      for (const auto& m : bench_models) {
        const auto spec = stage("config", [&] {
          const auto colon = m.find(':');
          if (colon == std::string::npos) throw std::invalid_argument("--model expects encoder:scale, got " + m);
          models::NetworkSpec s;
          s.encoder_kind = models::parse_encoder_kind(m.substr(0, colon));
          s.scale = models::parse_scale(m.substr(colon + 1));
          s.window = bench_window;
          models::validate(s);
          return s;
        });
        const auto r = stage("bench", [&] {
          models::Network net(spec, 0);
          return eval::latency_bench(net, bench_samples, bench_batch);
        });
        rows.push_back({{"model", m}, {"samples", r.n_samples}, {"batch", r.batch}, {"total_s", r.total_s},
                        {"avg_ms", r.avg_ms}});
      }
      write_json(out / "bench.json", rows);
      for (const auto& r : rows) {
        std::cout << r.at("model").get<std::string>() << "\t" << r.at("avg_ms").get<double>() << " ms/sample\n";
      }
    } else if (plot_cmd->parsed()) {
      const fs::path out = default_out(plot_args.out, "plots");
      write_json(out / "config.resolved.json",
                 {{"command", "plot"}, {"kind", plot_kind}, {"report", plot_report}, {"fold", plot_fold},
                  {"seed_index", plot_seed}, {"window_index", plot_window}, {"models", plot_models},
                  {"tap", plot_tap}, {"batch", plot_batch}, {"runs", plot_runs}, {"param", plot_param},
                  {"metric", plot_metric}});
      plot::PlotSummary summary;
      if (plot_kind == "estimation") {
        summary = stage("plot", [&] {
          if (plot_report.empty()) throw std::invalid_argument("estimation plot needs --report");
          std::ifstream is(fs::path(plot_report) / "report.json");
          if (!is) throw std::runtime_error("missing " + (fs::path(plot_report) / "report.json").string());
          const json report = json::parse(is);
          const int window = report.at("window").get<int>();
          const json* fold = nullptr;
          for (const auto& f : report.at("folds")) {
            if (plot_fold < 0 || f.at("test_subject").get<int>() == plot_fold) {
              fold = &f;
              break;
            }
          }
          if (!fold) throw std::runtime_error("fold " + std::to_string(plot_fold) + " not in report");
          const int n = fold->at("windows").get<int>();
          const auto& seeds = fold->at("seeds");
          if (plot_seed < 0 || plot_seed >= static_cast<int>(seeds.size())) throw std::invalid_argument("seed index out of range");
          const fs::path pred_dir = fs::path(plot_report) / "predictions";
          const Tensor pred = eval::read_f32(pred_dir / seeds[plot_seed].at("prediction_file").get<std::string>(), {n, 2, window});
          const Tensor truth = eval::read_f32(pred_dir / fold->at("truth_file").get<std::string>(), {n, 2, window});
          const int subject = fold->at("test_subject").get<int>();
          return plot::plot_estimation(window_slice(pred, plot_window), window_slice(truth, plot_window),
                                       "Subject " + std::to_string(subject) + ", window " + std::to_string(plot_window),
                                       out / ("estimation_s" + std::to_string(subject) + "_w" + std::to_string(plot_window)));
        });
      } else if (plot_kind == "corrmap") {
        summary = stage("plot", [&] {
          if (plot_models.empty()) throw std::invalid_argument("corrmap plot needs --model name=checkpoint");
          const models::Tap tap = models::parse_tap(plot_tap);
          std::vector<std::pair<std::string, models::LoadedCheckpoint>> nets;
          for (const auto& m : plot_models) {
            const auto eq = m.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--model expects name=checkpoint, got " + m);
            nets.emplace_back(m.substr(0, eq), models::load_checkpoint(m.substr(eq + 1)));
          }
          const auto cfg = resolve_config(plot_args);
          const auto ds = load_data(plot_args.data, cfg.data, cfg.window);
          const int subject = plot_fold >= 0 ? plot_fold : cfg.fold.test_subject;
          const auto fold = datagen::make_fold(ds, subject);
          std::vector<int> idx;
          for (int i = 0; i < std::min(plot_batch, fold.test.count); ++i) idx.push_back(i);
          const Tensor x = training::batch_insole(fold.test, idx);
          std::vector<plot::CorrmapPanel> rows;
          int t_student = 0;
          for (std::size_t i = nets.size(); i-- > 0;) {
            const auto bundle = nets[i].second.network->forward_with_taps(x, false);
            const TensorD f = bundle[tap].cast<double>();
            if (i + 1 == nets.size()) t_student = f.dim(2);
            rows.insert(rows.begin(), plot::corrmap_panel(nets[i].first, f, cfg.sckd, t_student));
          }
          return plot::plot_corrmap(rows, "Tap " + plot_tap + ", " + std::to_string(idx.size()) + " samples",
                                    out / ("corrmap_" + plot_tap));
        });
      } else {
        summary = stage("plot", [&] {
          if (plot_runs.empty()) throw std::invalid_argument("sensitivity plot needs --runs");
          std::vector<double> xs, ys, es;
          for (const auto& r : plot_runs) {
            fs::path dir = r;
            json resolved, metric;
            if (fs::exists(dir / "report.json")) {
              const json report = json::parse(std::ifstream(dir / "report.json"));
              metric = report.at("aggregate").at(plot_metric);
              dir = report.at("run").get<std::string>();
            } else {
              const json agg = json::parse(std::ifstream(dir / "aggregate.json"));
              metric = agg.at("val_" + plot_metric);
            }
            resolved = json::parse(std::ifstream(dir / "config.resolved.json"));
            const json x = resolved.at(json::json_pointer("/" + [&] {
              std::string p = plot_param;
              for (auto& ch : p)
                if (ch == '.') ch = '/';
              return p;
            }()));
            xs.push_back(x.get<double>());
            ys.push_back(metric.at("mean").get<double>());
            const json& sd = metric.contains("std_repeats") ? metric.at("std_repeats") : metric.at("std");
            es.push_back(sd.is_number() ? sd.get<double>() : 0.0);
          }
          return plot::plot_sensitivity(xs, ys, es, plot_param, plot_metric, plot_metric + " vs " + plot_param,
                                        out / ("sensitivity_" + plot_param));
        });
      }
      for (const auto& f : summary.files) std::cout << f.string() << "\n";
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage << "]: " << e.what() << "\n";
    if (e.config) std::cerr << app.help();
    return e.config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error [unknown]: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
