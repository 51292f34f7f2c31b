// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Command-line surface of the toolkit: mixture synthesis, separation,
// desk-scale training, evaluation, and hyperparameter-grid inspection.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 I/O error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "idlma/idlma.hpp"

namespace fs = std::filesystem;

namespace {

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw idlma::IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// ---------------------------------------------------------------------------
// mix
// ---------------------------------------------------------------------------

struct MixOptions {
  std::string scenario_path;
  std::string out_dir;
  bool pcm16 = false;
};

void run_mix(const MixOptions& opt) {
  const idlma::Scenario scenario = idlma::load_scenario(opt.scenario_path);
  const idlma::SynthesisResult synth = idlma::synthesize_scenario(scenario);
  ensure_directory(opt.out_dir);
  const auto enc = opt.pcm16 ? idlma::WavEncoding::pcm16 : idlma::WavEncoding::float32;

  idlma::write_wav(join_path(opt.out_dir, "mixture.wav"), synth.mixture, enc);
  for (Eigen::Index n = 0; n < synth.sources.cols(); ++n) {
    idlma::Waveform src;
    src.sample_rate = scenario.sample_rate;
    src.samples = synth.sources.col(n);
    idlma::write_wav(join_path(opt.out_dir, "source_" + std::to_string(n) + ".wav"), src, enc);
  }

  nlohmann::json mixing;
  switch (scenario.mixing.type) {
    case idlma::MixingSpec::Type::identity:
      mixing["type"] = "identity";
      break;
    case idlma::MixingSpec::Type::instantaneous:
      mixing["type"] = "instantaneous";
      mixing["condition_number_request"] = scenario.mixing.condition_number;
      break;
    case idlma::MixingSpec::Type::fir:
      mixing["type"] = "fir";
      mixing["taps"] = scenario.mixing.taps;
      break;
  }
  if (synth.mixing_matrix.size() > 0) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < synth.mixing_matrix.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < synth.mixing_matrix.cols(); ++c)
        row.push_back(synth.mixing_matrix(r, c));
      rows.push_back(std::move(row));
    }
    mixing["matrix"] = std::move(rows);
  }
  std::ofstream out(join_path(opt.out_dir, "mixing.json"), std::ios::binary);
  if (!out) throw idlma::IoError("cannot write mixing.json in " + opt.out_dir);
  out << mixing.dump(1, '\t') << '\n';

  std::cout << "wrote mixture (" << synth.mixture.channels() << " channels, "
            << synth.mixture.length() << " samples) and " << synth.sources.cols()
            << " groundtruth sources to " << opt.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// separate
// ---------------------------------------------------------------------------

struct SeparateOptions {
  std::string input_path;
  std::string out_dir;
  std::string variant = "gauss";
  std::string grid_path;
  std::vector<std::string> checkpoint_paths;
  double fixed_nu = 0.0;
  int spatial_iters = 100;
  int model_refresh_period = 10;
  double eps = idlma::default_eps();
  double delta = idlma::kDefaultDelta;
  int window_length = 4096;
  int hop_length = 2048;
  std::string window = "hamming";
  int reference_channel = 0;
  int threads = 1;
  bool pcm16 = false;
};

void run_separate(const SeparateOptions& opt) {
  if (opt.grid_path.empty() == opt.checkpoint_paths.empty())
    throw idlma::ConfigError("separate: provide exactly one of --grid or --checkpoints");

  const idlma::Waveform mixture = idlma::read_wav(opt.input_path);
  idlma::StftConfig stft_cfg;
  stft_cfg.window_length = opt.window_length;
  stft_cfg.hop_length = opt.hop_length;
  stft_cfg.window_kind = idlma::window_kind_from_string(opt.window);
  const std::vector<idlma::ComplexSpectrogram> X = idlma::stft(mixture, stft_cfg);

  idlma::SeparationConfig cfg;
  cfg.variant = idlma::variant_from_string(opt.variant);
  cfg.fixed_nu = opt.fixed_nu;
  cfg.spatial_iters = opt.spatial_iters;
  cfg.model_refresh_period = opt.model_refresh_period;
  cfg.eps = opt.eps;
  cfg.delta = opt.delta;
  cfg.reference_channel = opt.reference_channel;
  cfg.threads = opt.threads;
  // A nu override turns the run into the fixed-nu special case, which accepts
  // scale grids from either model kind.
  if (cfg.variant == idlma::Variant::empirical_bayes && cfg.fixed_nu > 0.0)
    cfg.variant = idlma::Variant::student_t_fixed_nu;

  std::vector<idlma::SourceModelPtr> models;
  if (!opt.grid_path.empty()) {
    const idlma::GridFile grids = idlma::load_grid_file(opt.grid_path);
    const Eigen::Index bins = grids.kind == idlma::SourceModel::Kind::gauss
                                  ? grids.sigma.front().rows()
                                  : grids.r.front().rows();
    const Eigen::Index frames = grids.kind == idlma::SourceModel::Kind::gauss
                                    ? grids.sigma.front().cols()
                                    : grids.r.front().cols();
    if (bins != X.front().bins())
      throw idlma::ConfigError("grid bins axis (" + std::to_string(bins) +
                               ") does not match the spectrogram bins axis (" +
                               std::to_string(X.front().bins()) + ")");
    if (frames != X.front().frames())
      throw idlma::ConfigError("grid frames axis (" + std::to_string(frames) +
                               ") does not match the spectrogram frames axis (" +
                               std::to_string(X.front().frames()) + ")");
    models = idlma::static_models_from_grid_file(grids);
  } else {
    for (const auto& path : opt.checkpoint_paths) {
      const idlma::NetworkParams params = idlma::load_checkpoint(path);
      if (params.kind == idlma::NetworkKind::gauss)
        models.push_back(std::make_shared<idlma::NetworkGaussModel>(params, cfg.eps));
      else
        models.push_back(std::make_shared<idlma::NetworkEbModel>(params, cfg.eps));
    }
  }

  const idlma::SeparationState state = idlma::separate(X, models, cfg);
  const idlma::Waveform separated = idlma::istft(state.projected, stft_cfg);

  ensure_directory(opt.out_dir);
  const auto enc = opt.pcm16 ? idlma::WavEncoding::pcm16 : idlma::WavEncoding::float32;
  std::vector<std::string> wav_paths;
  for (Eigen::Index n = 0; n < separated.channels(); ++n) {
    idlma::Waveform mono;
    mono.sample_rate = separated.sample_rate;
    mono.samples = separated.samples.col(n);
    const std::string path = join_path(opt.out_dir, "source_" + std::to_string(n) + ".wav");
    idlma::write_wav(path, mono, enc);
    wav_paths.push_back(path);
  }
  idlma::write_cost_trace_csv(join_path(opt.out_dir, "cost_trace.csv"), state.cost_trace);

  nlohmann::json summary;
  summary["variant"] = opt.variant;
  summary["spatial_iters"] = cfg.spatial_iters;
  summary["model_refresh_period"] = cfg.model_refresh_period;
  summary["regularization_events"] = state.diagnostics.regularization_events;
  summary["final_cost"] = state.cost_trace.back().cost_after_refresh;
  summary["sources"] = wav_paths;
  std::ofstream out(join_path(opt.out_dir, "summary.json"), std::ios::binary);
  if (!out) throw idlma::IoError("cannot write summary.json in " + opt.out_dir);
  out << summary.dump(1, '\t') << '\n';

  std::cout << "separated " << separated.channels() << " sources in " << cfg.spatial_iters
            << " iterations; final cost " << state.cost_trace.back().cost_after_refresh
            << "; outputs in " << opt.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string kind = "eb";
  std::string checkpoint_path;
  std::string loss_csv_path;
  int bins = 33;
  int frames = 48;
  int pairs = 4;
  std::uint64_t data_seed = 1;
  idlma::TrainConfig cfg;
};

void run_train(const TrainOptions& opt) {
  const idlma::NetworkKind kind = idlma::network_kind_from_string(opt.kind);
  const idlma::TrainingSet data =
      idlma::make_toy_dataset(opt.bins, opt.frames, opt.pairs, opt.data_seed);
  const idlma::TrainResult result = idlma::train(data, kind, opt.cfg);

  idlma::save_checkpoint(opt.checkpoint_path, result.params);
  if (!opt.loss_csv_path.empty())
    idlma::write_loss_curve_csv(opt.loss_csv_path, result.curve);

  std::cout << "trained " << opt.kind << " network for " << opt.cfg.epochs
            << " epochs; validation loss " << result.curve.front().val_loss << " -> "
            << result.curve.back().val_loss << "; checkpoint at " << opt.checkpoint_path
            << "\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string scenario_path;
  std::string out_dir;
  bool write_wavs = true;
};

void run_eval(const EvalOptions& opt) {
  const idlma::Scenario scenario = idlma::load_scenario(opt.scenario_path);
  const idlma::ExperimentResult result = idlma::run_experiment(scenario);
  ensure_directory(opt.out_dir);

  idlma::write_metrics_csv(join_path(opt.out_dir, "metrics.csv"), result.variants);
  for (const auto& vr : result.variants) {
    idlma::write_cost_trace_csv(join_path(opt.out_dir, "cost_" + vr.name + ".csv"),
                                vr.cost_trace);
    if (opt.write_wavs) {
      for (Eigen::Index n = 0; n < vr.separated.channels(); ++n) {
        idlma::Waveform mono;
        mono.sample_rate = vr.separated.sample_rate;
        mono.samples = vr.separated.samples.col(n);
        idlma::write_wav(
            join_path(opt.out_dir, "separated_" + vr.name + "_" + std::to_string(n) + ".wav"),
            mono);
      }
    }
    std::cout << vr.name << ": mean SI-SDR " << vr.metrics.mean_si_sdr_db
              << " dB, mean improvement " << vr.metrics.mean_si_sdr_improvement_db
              << " dB\n";
  }
  std::cout << "metrics written to " << join_path(opt.out_dir, "metrics.csv") << "\n";
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

struct GridOptions {
  std::string path;
};

void run_grid(const GridOptions& opt) {
  const idlma::GridFile grids = idlma::load_grid_file(opt.path);
  const bool gauss = grids.kind == idlma::SourceModel::Kind::gauss;
  const auto& head = gauss ? grids.sigma : grids.r;
  std::cout << "grid file: " << opt.path << "\n"
            << "kind: " << (gauss ? "gauss" : "eb") << "\n"
            << "sources: " << grids.sources() << "\n"
            << "bins: " << head.front().rows() << "\n"
            << "frames: " << head.front().cols() << "\n";
  const auto describe = [](const char* name, const idlma::Grid& g, int n) {
    std::cout << name << "[" << n << "]: min " << g.minCoeff() << ", max " << g.maxCoeff()
              << ", mean " << g.mean() << "\n";
  };
  for (int n = 0; n < grids.sources(); ++n) {
    if (gauss) {
      describe("sigma", grids.sigma[static_cast<size_t>(n)], n);
    } else {
      describe("r", grids.r[static_cast<size_t>(n)], n);
      describe("nu", grids.nu[static_cast<size_t>(n)], n);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multichannel audio source separation with learned source models"};
  app.require_subcommand(0, 1);
  app.set_config("--config", "", "Read options from an INI config file");
  app.allow_config_extras(false);
  app.set_version_flag("--version", "idlma 1.0.0");
  bool print_config = false;
  app.add_flag("--print-config", print_config,
               "Print the effective configuration and exit without running");

  MixOptions mix_opt;
  auto* mix = app.add_subcommand("mix", "Synthesize a scenario's mixture and groundtruth WAVs");
  mix->add_option("--scenario", mix_opt.scenario_path, "Scenario JSON file")->required();
  mix->add_option("--out-dir", mix_opt.out_dir, "Output directory")->required();
  mix->add_flag("--pcm16", mix_opt.pcm16, "Write 16-bit PCM instead of float32");

  SeparateOptions sep_opt;
  auto* sep = app.add_subcommand("separate", "Separate a multichannel mixture WAV");
  sep->add_option("--input", sep_opt.input_path, "Multichannel mixture WAV")->required();
  sep->add_option("--out-dir", sep_opt.out_dir, "Output directory")->required();
  sep->add_option("--variant", sep_opt.variant, "Separation variant: gauss, t, or eb")
      ->check(CLI::IsMember({"gauss", "t", "eb"}));
  sep->add_option("--grid", sep_opt.grid_path, "Static hyperparameter grid file");
  sep->add_option("--checkpoints", sep_opt.checkpoint_paths,
                  "Network checkpoints, one per source");
  sep->add_option("--fixed-nu", sep_opt.fixed_nu,
                  "Degrees of freedom for the t variant (or a constant-nu override for eb)");
  sep->add_option("--iters", sep_opt.spatial_iters, "Spatial update iterations");
  sep->add_option("--refresh", sep_opt.model_refresh_period,
                  "Hyperparameter refresh period in iterations");
  sep->add_option("--eps", sep_opt.eps, "Scale clamp floor");
  sep->add_option("--delta", sep_opt.delta, "Loss flooring constant");
  sep->add_option("--window-length", sep_opt.window_length, "STFT window length in samples");
  sep->add_option("--hop-length", sep_opt.hop_length, "STFT hop length in samples");
  sep->add_option("--window", sep_opt.window, "Analysis window: hamming or hann")
      ->check(CLI::IsMember({"hamming", "hann"}));
  sep->add_option("--ref-channel", sep_opt.reference_channel, "Back-projection channel");
  sep->add_option("--threads", sep_opt.threads, "Worker thread cap");
  sep->add_flag("--pcm16", sep_opt.pcm16, "Write 16-bit PCM instead of float32");

  TrainOptions train_opt;
  auto* train = app.add_subcommand("train", "Train a source-model network on toy data");
  train->add_option("--kind", train_opt.kind, "Network kind: gauss or eb")
      ->check(CLI::IsMember({"gauss", "eb"}));
  train->add_option("--out", train_opt.checkpoint_path, "Checkpoint output path")->required();
  train->add_option("--loss-csv", train_opt.loss_csv_path, "Loss curve CSV output path");
  train->add_option("--bins", train_opt.bins, "Toy dataset bins");
  train->add_option("--frames", train_opt.frames, "Toy dataset frames per pair");
  train->add_option("--pairs", train_opt.pairs, "Toy dataset pair count");
  train->add_option("--data-seed", train_opt.data_seed, "Toy dataset seed");
  train->add_option("--lr", train_opt.cfg.learning_rate, "Learning rate");
  train->add_option("--epochs", train_opt.cfg.epochs, "Training epochs");
  train->add_option("--batch", train_opt.cfg.batch_size, "Minibatch size");
  train->add_option("--weight-decay", train_opt.cfg.weight_decay, "Weight decay");
  train->add_option("--grad-clip", train_opt.cfg.grad_clip_norm, "Gradient norm clip");
  train->add_option("--dropout", train_opt.cfg.dropout_rate, "Dropout rate");
  train->add_option("--context", train_opt.cfg.context_frames, "Context frames per side");
  train->add_option("--hidden", train_opt.cfg.hidden_width, "Hidden width");
  train->add_option("--anchors", train_opt.cfg.anchors.values, "Anchor values");
  train->add_option("--delta", train_opt.cfg.delta, "Loss flooring constant");
  train->add_option("--seed", train_opt.cfg.rng_seed, "Training seed");
  train->add_flag("--clipped-nu", train_opt.cfg.clipped_nu,
                  "Use the clamped direct-nu head instead of anchor weights");
  train->add_option("--steps-per-epoch", train_opt.cfg.steps_per_epoch,
                    "Batches per epoch (0: one nominal dataset pass)");
  train->add_option("--val-samples", train_opt.cfg.validation_samples,
                    "Held-out validation draws");

  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "Run a scenario end to end and report metrics");
  eval->add_option("--scenario", eval_opt.scenario_path, "Scenario JSON file")->required();
  eval->add_option("--out-dir", eval_opt.out_dir, "Output directory")->required();
  eval->add_flag("!--no-wavs", eval_opt.write_wavs, "Skip writing separated WAVs");

  GridOptions grid_opt;
  auto* grid = app.add_subcommand("grid", "Inspect a hyperparameter grid file");
  grid->add_option("--path", grid_opt.path, "Grid file")->required();

  mix->callback([&] {
    if (!print_config) run_mix(mix_opt);
  });
  sep->callback([&] {
    if (!print_config) run_separate(sep_opt);
  });
  train->callback([&] {
    if (!print_config) run_train(train_opt);
  });
  eval->callback([&] {
    if (!print_config) run_eval(eval_opt);
  });
  grid->callback([&] {
    if (!print_config) run_grid(grid_opt);
  });

  try {
    app.parse(argc, argv);
    if (print_config) {
      // Emit only explicitly-set options so the output can be fed back via
      // --config without tripping validators on empty placeholder values.
      std::cout << app.config_to_str(false, false);
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return 0;
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const idlma::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const idlma::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const idlma::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
