// shm-denoise: configuration-driven experiment runner for the synthetic
// vibration bench. Subcommands: generate / train / eval / attention /
// gradcheck. Exit codes: 0 success, 1 config or usage, 2 I/O,
// 3 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shmd/shmd.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  std::string ckpt_path;
  std::string data_path;
  std::string clean_path;
  std::uint64_t seed = 1;
};

json load_config_json(const Options& opt) {
  json j = json::object();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw shmd::IoError("config: cannot open " + opt.config_path);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw shmd::ConfigError("config: invalid json in " + opt.config_path + ": " + e.what());
    }
  }
  for (const std::string& kv : opt.overrides) shmd::apply_override(j, kv);
  return j;
}

shmd::ExperimentConfig resolve_config(const Options& opt) {
  shmd::ExperimentConfig cfg = shmd::ExperimentConfig::from_json(load_config_json(opt));
  if (const char* env = std::getenv("SHM_DENOISE_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw shmd::ConfigError("SHM_DENOISE_SEED: not an unsigned integer: " + std::string(env));
    cfg.signal.seed = v;
    cfg.train.seed = v;
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw shmd::IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw shmd::IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path prepare_out_dir(const std::string& dir) {
  fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw shmd::IoError("cannot create output directory " + out.string());
  return out;
}

json provenance(const std::string& command, const json& details) {
  return {{"command", command},
          {"format_versions", {{"checkpoint", shmd::kCheckpointVersion}, {"csv", 1}}},
          {"details", details}};
}

struct Dataset {
  shmd::TimeSeries noisy;
  std::optional<shmd::TimeSeries> clean;
};

Dataset obtain_dataset(const shmd::ExperimentConfig& cfg, const Options& opt) {
  Dataset ds;
  if (!opt.data_path.empty()) {
    ds.noisy = shmd::load_csv(opt.data_path);
    if (!opt.clean_path.empty()) {
      ds.clean = shmd::load_csv(opt.clean_path);
      if (ds.clean->channels != ds.noisy.channels || ds.clean->samples != ds.noisy.samples)
        throw shmd::ShapeError("data: clean record is " + std::to_string(ds.clean->channels) +
                               " x " + std::to_string(ds.clean->samples) + ", noisy is " +
                               std::to_string(ds.noisy.channels) + " x " +
                               std::to_string(ds.noisy.samples));
    }
  } else {
    // generate-inline from the signal/noise sections
    ds.clean = shmd::synthesize_clean(cfg.signal);
    ds.noisy = shmd::add_noise(*ds.clean, cfg.noise, cfg.signal.seed);
  }
  return ds;
}

// Windows for one split interval, honoring the task's clean requirement.
shmd::WindowSet split_windows(const Dataset& ds, const shmd::DataConfig& data,
                              const shmd::NormState& norm, const shmd::IndexInterval& range) {
  const shmd::TimeSeries* clean = ds.clean ? &*ds.clean : nullptr;
  if (data.task == shmd::Task::denoise && !clean)
    throw shmd::ConfigError("data.task: denoise needs a clean reference (--clean)");
  return shmd::make_windows(ds.noisy, clean, data.window, data.horizon, data.stride, data.task,
                            data.target_channels, norm, range);
}

json report_to_json(const shmd::TrainReport& report) {
  json epochs = json::array();
  for (std::size_t e = 0; e < report.train_loss.size(); ++e)
    epochs.push_back(
        {{"epoch", e}, {"train_loss", report.train_loss[e]}, {"val_loss", report.val_loss[e]}});
  return {{"epochs", epochs},
          {"best_epoch", report.best_epoch},
          {"stopped_epoch", report.stopped_epoch},
          {"stop_reason", report.stop_reason},
          {"best_val_loss", report.best_val_loss},
          {"wall_time_s", report.wall_time_s}};
}

int cmd_generate(const Options& opt) {
  shmd::ExperimentConfig cfg = resolve_config(opt);
  cfg.signal.validate();
  cfg.noise.validate();
  fs::path out = prepare_out_dir(opt.out_dir);
  shmd::TimeSeries clean = shmd::synthesize_clean(cfg.signal);
  shmd::TimeSeries noisy = shmd::add_noise(clean, cfg.noise, cfg.signal.seed);
  shmd::save_csv(clean, out / "clean.csv");
  shmd::save_csv(noisy, out / "noisy.csv");
  write_json(out / "provenance.json", provenance("generate", {{"config", cfg.to_json()}}));
  std::cout << "wrote " << (out / "clean.csv").string() << " and "
            << (out / "noisy.csv").string() << " (" << noisy.channels << " channels, "
            << noisy.samples << " samples)\n";
  return 0;
}

int cmd_train(const Options& opt) {
  shmd::ExperimentConfig cfg = resolve_config(opt);
  Dataset ds = obtain_dataset(cfg, opt);
  ds.noisy.validate();
  cfg.validate(ds.noisy.channels);

  const shmd::DataConfig& data = cfg.data;
  auto splits = shmd::split_chronological(ds.noisy.samples, data.splits, data.min_samples());
  shmd::NormState norm = shmd::fit_normalizer(ds.noisy, splits[0]);
  shmd::WindowSet train_ws = split_windows(ds, data, norm, splits[0]);
  shmd::WindowSet val_ws = split_windows(ds, data, norm, splits[1]);

  fs::path out = prepare_out_dir(opt.out_dir);
  if (opt.data_path.empty()) {
    shmd::save_csv(*ds.clean, out / "clean.csv");
    shmd::save_csv(ds.noisy, out / "noisy.csv");
  }
  write_json(out / "config.json", cfg.to_json());
  write_json(out / "provenance.json",
             provenance("train", {{"config", cfg.to_json()},
                                  {"data", opt.data_path},
                                  {"clean", opt.clean_path}}));

  const shmd::NetworkConfig net_cfg = cfg.resolved_network(ds.noisy.channels);
  try {
    shmd::FitResult result = shmd::fit(train_ws, val_ws, cfg.train, net_cfg, data.splits);
    shmd::save_checkpoint(result.checkpoint, out / "model.ckpt");
    write_json(out / "train_report.json", report_to_json(result.report));
    std::cout << "trained " << result.report.train_loss.size() << " epochs, best val loss "
              << result.report.best_val_loss << " at epoch " << result.report.best_epoch
              << " (" << result.report.stop_reason << ")\n"
              << "wrote " << (out / "model.ckpt").string() << "\n";
  } catch (const shmd::TrainDivergence& e) {
    write_json(out / "train_report.json", report_to_json(e.partial));
    throw;
  }
  return 0;
}

// Rebuilds the held-out test windows the way the checkpoint was trained.
shmd::WindowSet test_windows_for(const shmd::Checkpoint& ckpt, const Options& opt,
                                 Dataset& ds_out) {
  if (opt.data_path.empty()) throw shmd::ConfigError("--data: required for this command");
  Dataset ds;
  ds.noisy = shmd::load_csv(opt.data_path);
  if (!opt.clean_path.empty()) ds.clean = shmd::load_csv(opt.clean_path);
  if (ds.noisy.channels != ckpt.norm.channels())
    throw shmd::ShapeError("eval: data has " + std::to_string(ds.noisy.channels) +
                           " channels, checkpoint was trained on " +
                           std::to_string(ckpt.norm.channels()));
  auto splits =
      shmd::split_chronological(ds.noisy.samples, ckpt.data.splits, ckpt.data.min_samples());
  shmd::WindowSet ws = split_windows(ds, ckpt.data, ckpt.norm, splits[2]);
  ds_out = std::move(ds);
  return ws;
}

int cmd_eval(const Options& opt) {
  shmd::Checkpoint ckpt = shmd::load_checkpoint(opt.ckpt_path);
  Dataset ds;
  shmd::WindowSet test_ws = test_windows_for(ckpt, opt, ds);
  shmd::MetricsReport report = shmd::evaluate(ckpt, test_ws);
  fs::path out = prepare_out_dir(opt.out_dir);
  write_json(out / "metrics.json", report.to_json());
  write_json(out / "provenance.json",
             provenance("eval", {{"checkpoint", opt.ckpt_path},
                                 {"data", opt.data_path},
                                 {"clean", opt.clean_path}}));
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_attention(const Options& opt) {
  shmd::Checkpoint ckpt = shmd::load_checkpoint(opt.ckpt_path);
  Dataset ds;
  shmd::WindowSet test_ws = test_windows_for(ckpt, opt, ds);
  fs::path out = prepare_out_dir(opt.out_dir);
  shmd::export_attention(ckpt, test_ws, out / "attention.csv");
  write_json(out / "provenance.json",
             provenance("attention", {{"checkpoint", opt.ckpt_path}, {"data", opt.data_path}}));
  std::cout << "wrote " << (out / "attention.csv").string() << " (" << test_ws.count
            << " windows)\n";
  return 0;
}

int cmd_gradcheck(const Options& opt) {
  std::uint64_t seed = opt.seed;
  if (const char* env = std::getenv("SHM_DENOISE_SEED")) seed = std::strtoull(env, nullptr, 10);
  auto rows = shmd::run_gradcheck_suite(seed);
  std::printf("%-18s %14s  %s\n", "layer", "max rel error", "result");
  bool ok = true;
  for (const auto& row : rows) {
    std::printf("%-18s %14.3e  %s\n", row.name.c_str(), row.max_rel_error,
                row.pass ? "pass" : "FAIL");
    ok = ok && row.pass;
  }
  if (!ok) throw shmd::NumericError("gradcheck: at least one layer failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic vibration bench: denoising and forecasting experiments"};
  app.require_subcommand(1);
  Options opt;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "experiment config (json)");
    sub->add_option("--set", opt.overrides, "override a config field, section.key=value");
  };
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out", opt.out_dir, "output directory");
  };

  CLI::App* generate = app.add_subcommand("generate", "synthesize clean + noisy records");
  add_config(generate);
  add_out(generate);

  CLI::App* train = app.add_subcommand("train", "train a model (csv data or generate-inline)");
  add_config(train);
  add_out(train);
  train->add_option("--data", opt.data_path, "noisy csv (omit to generate inline)");
  train->add_option("--clean", opt.clean_path, "clean csv (denoise task)");

  CLI::App* eval = app.add_subcommand("eval", "metrics on the held-out test split");
  add_out(eval);
  eval->add_option("--ckpt", opt.ckpt_path, "checkpoint file")->required();
  eval->add_option("--data", opt.data_path, "noisy csv")->required();
  eval->add_option("--clean", opt.clean_path, "clean csv (denoise task)");

  CLI::App* attention = app.add_subcommand("attention", "export per-window attention weights");
  add_out(attention);
  attention->add_option("--ckpt", opt.ckpt_path, "checkpoint file")->required();
  attention->add_option("--data", opt.data_path, "noisy csv")->required();
  attention->add_option("--clean", opt.clean_path, "clean csv (denoise task)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference layer verification");
  gradcheck->add_option("--seed", opt.seed, "rng seed for the suite");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(generate)) return cmd_generate(opt);
    if (app.got_subcommand(train)) return cmd_train(opt);
    if (app.got_subcommand(eval)) return cmd_eval(opt);
    if (app.got_subcommand(attention)) return cmd_attention(opt);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(opt);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const shmd::ConfigError& e) {  // covers ShapeError
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const shmd::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const shmd::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
