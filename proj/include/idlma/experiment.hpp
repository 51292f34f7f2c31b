// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "idlma/core.hpp"
#include "idlma/grid_io.hpp"
#include "idlma/metrics.hpp"
#include "idlma/network.hpp"
#include "idlma/separator.hpp"
#include "idlma/source_model.hpp"
#include "idlma/stft.hpp"
#include "idlma/synth.hpp"
#include "idlma/wav.hpp"

namespace idlma {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& context) {
  if (!j.is_object()) throw ConfigError("expected an object for " + context);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + context);
  }
}

template <class T>
T json_get(const nlohmann::json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scenario description
// ---------------------------------------------------------------------------

struct SourceSpec {
  enum class Type { sine, bandlimited, wav };
  Type type = Type::bandlimited;
  double freq_hz = 440.0;    // sine
  double amplitude = 1.0;    // sine
  double lo_hz = 200.0;      // bandlimited
  double hi_hz = 900.0;      // bandlimited
  int tones = 8;             // bandlimited
  std::string path;          // wav
};

struct MixingSpec {
  enum class Type { identity, instantaneous, fir };
  Type type = Type::instantaneous;
  double condition_number = 3.0;  // instantaneous
  int taps = 32;                  // fir
};

struct VariantSpec {
  std::string name;
  Variant variant = Variant::gauss;
  enum class ModelSource { oracle, grid, checkpoint };
  ModelSource model = ModelSource::oracle;
  double oracle_nu = 1000.0;  // constant nu of the eb oracle
  double fixed_nu = 0.0;      // required for the t variant
  std::string grid_path;
  std::vector<std::string> checkpoint_paths;  // one per source
};

struct Scenario {
  std::uint64_t seed = 0;
  int sample_rate = 8000;
  double duration_seconds = 4.0;
  std::vector<SourceSpec> sources;
  MixingSpec mixing;
  StftConfig stft;
  SeparationConfig separation;  // shared base; variant/fixed_nu set per variant
  std::vector<VariantSpec> variants;

  void validate() const {
    if (sample_rate < 1) throw ConfigError("scenario: sample_rate must be positive");
    if (!(duration_seconds > 0.0)) throw ConfigError("scenario: duration must be positive");
    if (sources.size() < 2) throw ConfigError("scenario: need at least two sources");
    if (sources.size() > 4) throw ConfigError("scenario: at most four sources supported");
    stft.validate();
    for (const auto& v : variants) {
      if (v.name.empty()) throw ConfigError("scenario: variant entries need a name");
      if (v.variant == Variant::student_t_fixed_nu && !(v.fixed_nu > 0.0))
        throw ConfigError("scenario: variant '" + v.name + "' needs fixed_nu > 0");
      if (v.model == VariantSpec::ModelSource::grid && v.grid_path.empty())
        throw ConfigError("scenario: variant '" + v.name + "' needs grid_path");
      if (v.model == VariantSpec::ModelSource::checkpoint &&
          v.checkpoint_paths.size() != sources.size())
        throw ConfigError("scenario: variant '" + v.name +
                          "' needs one checkpoint per source");
    }
  }
};

inline constexpr int kScenarioVersion = 1;

namespace detail {

inline SourceSpec source_spec_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"type", "freq_hz", "amplitude", "lo_hz", "hi_hz", "tones", "path"},
                      "scenario source");
  SourceSpec s;
  const std::string type = json_get<std::string>(j, "type", "bandlimited");
  if (type == "sine") {
    s.type = SourceSpec::Type::sine;
    s.freq_hz = json_get<double>(j, "freq_hz", s.freq_hz);
    s.amplitude = json_get<double>(j, "amplitude", s.amplitude);
  } else if (type == "bandlimited") {
    s.type = SourceSpec::Type::bandlimited;
    s.lo_hz = json_get<double>(j, "lo_hz", s.lo_hz);
    s.hi_hz = json_get<double>(j, "hi_hz", s.hi_hz);
    s.tones = json_get<int>(j, "tones", s.tones);
  } else if (type == "wav") {
    s.type = SourceSpec::Type::wav;
    s.path = json_get<std::string>(j, "path", "");
    if (s.path.empty()) throw ConfigError("scenario: wav source needs a path");
  } else {
    throw ConfigError("scenario: unknown source type '" + type + "'");
  }
  return s;
}

inline nlohmann::json source_spec_to_json(const SourceSpec& s) {
  nlohmann::json j;
  switch (s.type) {
    case SourceSpec::Type::sine:
      j["type"] = "sine";
      j["freq_hz"] = s.freq_hz;
      j["amplitude"] = s.amplitude;
      break;
    case SourceSpec::Type::bandlimited:
      j["type"] = "bandlimited";
      j["lo_hz"] = s.lo_hz;
      j["hi_hz"] = s.hi_hz;
      j["tones"] = s.tones;
      break;
    case SourceSpec::Type::wav:
      j["type"] = "wav";
      j["path"] = s.path;
      break;
  }
  return j;
}

inline MixingSpec mixing_spec_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"type", "condition_number", "taps"}, "scenario mixing");
  MixingSpec m;
  const std::string type = json_get<std::string>(j, "type", "instantaneous");
  if (type == "identity") {
    m.type = MixingSpec::Type::identity;
  } else if (type == "instantaneous") {
    m.type = MixingSpec::Type::instantaneous;
    m.condition_number = json_get<double>(j, "condition_number", m.condition_number);
  } else if (type == "fir") {
    m.type = MixingSpec::Type::fir;
    m.taps = json_get<int>(j, "taps", m.taps);
  } else {
    throw ConfigError("scenario: unknown mixing type '" + type + "'");
  }
  return m;
}

inline nlohmann::json mixing_spec_to_json(const MixingSpec& m) {
  nlohmann::json j;
  switch (m.type) {
    case MixingSpec::Type::identity:
      j["type"] = "identity";
      break;
    case MixingSpec::Type::instantaneous:
      j["type"] = "instantaneous";
      j["condition_number"] = m.condition_number;
      break;
    case MixingSpec::Type::fir:
      j["type"] = "fir";
      j["taps"] = m.taps;
      break;
  }
  return j;
}

inline VariantSpec variant_spec_from_json(const nlohmann::json& j) {
  reject_unknown_keys(
      j, {"name", "variant", "model", "oracle_nu", "fixed_nu", "grid_path", "checkpoints"},
      "scenario variant");
  VariantSpec v;
  v.name = json_get<std::string>(j, "name", "");
  v.variant = variant_from_string(json_get<std::string>(j, "variant", "gauss"));
  const std::string model = json_get<std::string>(j, "model", "oracle");
  if (model == "oracle")
    v.model = VariantSpec::ModelSource::oracle;
  else if (model == "grid")
    v.model = VariantSpec::ModelSource::grid;
  else if (model == "checkpoint")
    v.model = VariantSpec::ModelSource::checkpoint;
  else
    throw ConfigError("scenario: unknown model source '" + model + "'");
  v.oracle_nu = json_get<double>(j, "oracle_nu", v.oracle_nu);
  v.fixed_nu = json_get<double>(j, "fixed_nu", v.fixed_nu);
  v.grid_path = json_get<std::string>(j, "grid_path", "");
  v.checkpoint_paths = json_get<std::vector<std::string>>(j, "checkpoints", {});
  return v;
}

inline nlohmann::json variant_spec_to_json(const VariantSpec& v) {
  nlohmann::json j;
  j["name"] = v.name;
  j["variant"] = to_string(v.variant);
  switch (v.model) {
    case VariantSpec::ModelSource::oracle:
      j["model"] = "oracle";
      j["oracle_nu"] = v.oracle_nu;
      break;
    case VariantSpec::ModelSource::grid:
      j["model"] = "grid";
      j["grid_path"] = v.grid_path;
      break;
    case VariantSpec::ModelSource::checkpoint:
      j["model"] = "checkpoint";
      j["checkpoints"] = v.checkpoint_paths;
      break;
  }
  if (v.variant == Variant::student_t_fixed_nu) j["fixed_nu"] = v.fixed_nu;
  return j;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"format", "version", "seed", "sample_rate", "duration_seconds",
                               "sources", "mixing", "stft", "separation", "variants"},
                              "scenario");
  if (detail::json_get<std::string>(j, "format", "idlma-scenario") != "idlma-scenario")
    throw ConfigError("not a scenario file");
  if (detail::json_get<int>(j, "version", kScenarioVersion) != kScenarioVersion)
    throw ConfigError("unsupported scenario version");
  Scenario s;
  s.seed = detail::json_get<std::uint64_t>(j, "seed", s.seed);
  s.sample_rate = detail::json_get<int>(j, "sample_rate", s.sample_rate);
  s.duration_seconds = detail::json_get<double>(j, "duration_seconds", s.duration_seconds);
  if (!j.contains("sources")) throw ConfigError("scenario: missing 'sources'");
  for (const auto& src : j.at("sources")) s.sources.push_back(detail::source_spec_from_json(src));
  if (j.contains("mixing")) s.mixing = detail::mixing_spec_from_json(j.at("mixing"));
  if (j.contains("stft")) {
    const auto& st = j.at("stft");
    detail::reject_unknown_keys(st, {"window_length", "hop_length", "window"}, "scenario stft");
    s.stft.window_length = detail::json_get<int>(st, "window_length", s.stft.window_length);
    s.stft.hop_length = detail::json_get<int>(st, "hop_length", s.stft.hop_length);
    s.stft.window_kind = window_kind_from_string(
        detail::json_get<std::string>(st, "window", to_string(s.stft.window_kind)));
  }
  if (j.contains("separation")) {
    const auto& sp = j.at("separation");
    detail::reject_unknown_keys(sp,
                                {"spatial_iters", "model_refresh_period", "eps", "delta",
                                 "reference_channel", "threads"},
                                "scenario separation");
    s.separation.spatial_iters =
        detail::json_get<int>(sp, "spatial_iters", s.separation.spatial_iters);
    s.separation.model_refresh_period =
        detail::json_get<int>(sp, "model_refresh_period", s.separation.model_refresh_period);
    s.separation.eps = detail::json_get<double>(sp, "eps", s.separation.eps);
    s.separation.delta = detail::json_get<double>(sp, "delta", s.separation.delta);
    s.separation.reference_channel =
        detail::json_get<int>(sp, "reference_channel", s.separation.reference_channel);
    s.separation.threads = detail::json_get<int>(sp, "threads", s.separation.threads);
  }
  if (j.contains("variants"))
    for (const auto& v : j.at("variants")) s.variants.push_back(detail::variant_spec_from_json(v));
  s.validate();
  return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["format"] = "idlma-scenario";
  j["version"] = kScenarioVersion;
  j["seed"] = s.seed;
  j["sample_rate"] = s.sample_rate;
  j["duration_seconds"] = s.duration_seconds;
  j["sources"] = nlohmann::json::array();
  for (const auto& src : s.sources) j["sources"].push_back(detail::source_spec_to_json(src));
  j["mixing"] = detail::mixing_spec_to_json(s.mixing);
  j["stft"] = {{"window_length", s.stft.window_length},
               {"hop_length", s.stft.hop_length},
               {"window", to_string(s.stft.window_kind)}};
  j["separation"] = {{"spatial_iters", s.separation.spatial_iters},
                     {"model_refresh_period", s.separation.model_refresh_period},
                     {"eps", s.separation.eps},
                     {"delta", s.separation.delta},
                     {"reference_channel", s.separation.reference_channel},
                     {"threads", s.separation.threads}};
  j["variants"] = nlohmann::json::array();
  for (const auto& v : s.variants) j["variants"].push_back(detail::variant_spec_to_json(v));
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("scenario is not valid JSON: " + path + " (" + e.what() + ")");
  }
  return scenario_from_json(j);
}

inline void save_scenario(const std::string& path, const Scenario& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open scenario for writing: " + path);
  out << scenario_to_json(s).dump(1, '\t') << '\n';
  if (!out) throw IoError("failed while writing scenario: " + path);
}

// ---------------------------------------------------------------------------
// Synthesis and experiment execution
// ---------------------------------------------------------------------------

struct SynthesisResult {
  Eigen::ArrayXXd sources;        // samples x N, the groundtruth signals
  Waveform mixture;               // samples x M
  Eigen::MatrixXd mixing_matrix;  // instantaneous/identity mixing only
};

inline SynthesisResult synthesize_scenario(const Scenario& sc) {
  sc.validate();
  const auto samples =
      static_cast<Eigen::Index>(std::llround(sc.duration_seconds * sc.sample_rate));
  if (samples < 1) throw ConfigError("scenario: duration too short");
  std::mt19937_64 rng(sc.seed);
  const auto N = static_cast<Eigen::Index>(sc.sources.size());

  SynthesisResult out;
  out.sources.resize(samples, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const SourceSpec& spec = sc.sources[static_cast<size_t>(n)];
    switch (spec.type) {
      case SourceSpec::Type::sine:
        out.sources.col(n) = sine_wave(spec.freq_hz, sc.sample_rate, samples, spec.amplitude);
        break;
      case SourceSpec::Type::bandlimited:
        out.sources.col(n) =
            bandlimited_source(spec.lo_hz, spec.hi_hz, sc.sample_rate, samples, spec.tones, rng);
        break;
      case SourceSpec::Type::wav: {
        const Waveform w = read_wav(spec.path);
        if (w.sample_rate != sc.sample_rate)
          throw ConfigError("scenario: " + spec.path + " sample rate " +
                            std::to_string(w.sample_rate) + " does not match scenario rate");
        if (w.length() < samples)
          throw ConfigError("scenario: " + spec.path + " is shorter than the scenario duration");
        out.sources.col(n) = w.samples.col(0).head(samples);
        break;
      }
    }
  }

  switch (sc.mixing.type) {
    case MixingSpec::Type::identity:
      out.mixing_matrix = Eigen::MatrixXd::Identity(N, N);
      out.mixture = apply_instantaneous_mixing(out.sources, out.mixing_matrix, sc.sample_rate);
      break;
    case MixingSpec::Type::instantaneous:
      out.mixing_matrix =
          random_mixing_matrix(static_cast<int>(N), sc.mixing.condition_number, rng);
      out.mixture = apply_instantaneous_mixing(out.sources, out.mixing_matrix, sc.sample_rate);
      break;
    case MixingSpec::Type::fir: {
      const auto filters =
          random_fir_filters(static_cast<int>(N), static_cast<int>(N), sc.mixing.taps, rng);
      out.mixture = apply_fir_mixing(out.sources, filters, sc.sample_rate);
      break;
    }
  }
  return out;
}

/// Builds the per-source providers of one variant. Oracle providers are fed
/// the spectrograms of the groundtruth sources.
inline std::vector<SourceModelPtr> build_variant_models(
    const VariantSpec& v, const std::vector<ComplexSpectrogram>& truth_specs,
    double eps) {
  std::vector<SourceModelPtr> models;
  switch (v.model) {
    case VariantSpec::ModelSource::oracle:
      for (const auto& spec : truth_specs) {
        if (v.variant == Variant::gauss)
          models.push_back(std::make_shared<OracleGaussModel>(spec.data, eps));
        else
          models.push_back(std::make_shared<OracleEbModel>(spec.data, eps, v.oracle_nu));
      }
      break;
    case VariantSpec::ModelSource::grid: {
      const GridFile grids = load_grid_file(v.grid_path);
      if (grids.sources() != static_cast<int>(truth_specs.size()))
        throw ConfigError("grid file " + v.grid_path + " holds " +
                          std::to_string(grids.sources()) + " sources, scenario has " +
                          std::to_string(truth_specs.size()));
      models = static_models_from_grid_file(grids);
      break;
    }
    case VariantSpec::ModelSource::checkpoint:
      for (const auto& path : v.checkpoint_paths) {
        const NetworkParams params = load_checkpoint(path);
        if (params.kind == NetworkKind::gauss)
          models.push_back(std::make_shared<NetworkGaussModel>(params, eps));
        else
          models.push_back(std::make_shared<NetworkEbModel>(params, eps));
      }
      break;
  }
  return models;
}

struct VariantResult {
  std::string name;
  Variant variant = Variant::gauss;
  MetricsReport metrics;
  std::vector<CostRecord> cost_trace;
  long regularization_events = 0;
  Waveform separated;  // samples x N back-projected source estimates
};

struct ExperimentResult {
  SynthesisResult synthesis;
  std::vector<VariantResult> variants;
};

inline ExperimentResult run_experiment(const Scenario& sc) {
  sc.validate();
  if (sc.variants.empty()) throw ConfigError("scenario: no variants to run");
  ExperimentResult result;
  result.synthesis = synthesize_scenario(sc);
  const auto& synth = result.synthesis;
  const auto N = synth.sources.cols();

  const std::vector<ComplexSpectrogram> X = stft(synth.mixture, sc.stft);
  std::vector<ComplexSpectrogram> truth_specs;
  truth_specs.reserve(static_cast<size_t>(N));
  for (Eigen::Index n = 0; n < N; ++n) {
    Waveform src;
    src.sample_rate = sc.sample_rate;
    src.samples = synth.sources.col(n);
    truth_specs.push_back(stft(src, sc.stft).front());
  }

  std::vector<Eigen::ArrayXd> references, mixture_channels;
  for (Eigen::Index n = 0; n < N; ++n) references.push_back(synth.sources.col(n));
  for (Eigen::Index m = 0; m < synth.mixture.channels(); ++m)
    mixture_channels.push_back(synth.mixture.samples.col(m));

  for (const auto& vs : sc.variants) {
    SeparationConfig cfg = sc.separation;
    cfg.variant = vs.variant;
    cfg.fixed_nu = vs.fixed_nu;
    const std::vector<SourceModelPtr> models = build_variant_models(vs, truth_specs, cfg.eps);
    const SeparationState state = separate(X, models, cfg);

    VariantResult vr;
    vr.name = vs.name;
    vr.variant = vs.variant;
    vr.cost_trace = state.cost_trace;
    vr.regularization_events = state.diagnostics.regularization_events;
    vr.separated = istft(state.projected, sc.stft);

    std::vector<Eigen::ArrayXd> estimates;
    for (Eigen::Index n = 0; n < N; ++n) estimates.push_back(vr.separated.samples.col(n));
    vr.metrics = best_permutation_metrics(estimates, references, &mixture_channels);
    result.variants.push_back(std::move(vr));
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV reports
// ---------------------------------------------------------------------------

inline void write_cost_trace_csv(const std::string& path,
                                 const std::vector<CostRecord>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open cost trace for writing: " + path);
  out << "iteration,cost,cost_after_refresh\n";
  out.precision(17);
  for (const auto& rec : trace)
    out << rec.iteration << ',' << rec.cost << ',' << rec.cost_after_refresh << '\n';
  if (!out) throw IoError("failed while writing cost trace: " + path);
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<VariantResult>& variants) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open metrics for writing: " + path);
  out << "variant,source,estimate_index,si_sdr_db,sp_sdr_db,"
         "si_sdr_improvement_db,sp_sdr_improvement_db\n";
  out.precision(17);
  for (const auto& vr : variants) {
    const auto& m = vr.metrics;
    for (size_t k = 0; k < m.si_sdr_db.size(); ++k) {
      out << vr.name << ',' << k << ',' << m.permutation[k] << ',' << m.si_sdr_db[k] << ','
          << m.sp_sdr_db[k] << ',' << m.si_sdr_improvement_db[k] << ','
          << m.sp_sdr_improvement_db[k] << '\n';
    }
    out << vr.name << ",mean,," << m.mean_si_sdr_db << ',' << m.mean_sp_sdr_db << ','
        << m.mean_si_sdr_improvement_db << ',' << m.mean_sp_sdr_improvement_db << '\n';
  }
  if (!out) throw IoError("failed while writing metrics: " + path);
}

}  // namespace idlma
