// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance gate: one self-contained check per release criterion, each
// printed as a single [PASS]/[FAIL] line. Exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "idlma/idlma.hpp"
#include "oracles.hpp"

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(3);
  out << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// Shared synthetic scenes: two disjoint-band sources, 2x2 instantaneous
// mixing with a controlled condition number.
// ---------------------------------------------------------------------------

struct Scene {
  idlma::SynthesisResult synth;
  std::vector<idlma::ComplexSpectrogram> X;
  std::vector<idlma::ComplexSpectrogram> truth;
  idlma::StftConfig stft;
};

Scene make_scene(std::uint64_t seed, double duration, int window, int hop) {
  idlma::Scenario sc;
  sc.seed = seed;
  sc.sample_rate = 8000;
  sc.duration_seconds = duration;
  idlma::SourceSpec low, high;
  low.type = idlma::SourceSpec::Type::bandlimited;
  low.lo_hz = 200.0;
  low.hi_hz = 900.0;
  low.tones = 6;
  high.type = idlma::SourceSpec::Type::bandlimited;
  high.lo_hz = 1500.0;
  high.hi_hz = 2600.0;
  high.tones = 6;
  sc.sources = {low, high};
  sc.mixing.type = idlma::MixingSpec::Type::instantaneous;
  sc.mixing.condition_number = 3.0;
  sc.stft.window_length = window;
  sc.stft.hop_length = hop;

  Scene s;
  s.stft = sc.stft;
  s.synth = idlma::synthesize_scenario(sc);
  s.X = idlma::stft(s.synth.mixture, sc.stft);
  for (Eigen::Index n = 0; n < s.synth.sources.cols(); ++n) {
    idlma::Waveform src;
    src.sample_rate = sc.sample_rate;
    src.samples = s.synth.sources.col(n);
    s.truth.push_back(idlma::stft(src, sc.stft).front());
  }
  return s;
}

idlma::MetricsReport score_state(const Scene& scene, const idlma::SeparationState& state) {
  const idlma::Waveform separated = idlma::istft(state.projected, scene.stft);
  std::vector<Eigen::ArrayXd> estimates, references, mixture_channels;
  for (Eigen::Index n = 0; n < separated.channels(); ++n)
    estimates.push_back(separated.samples.col(n));
  for (Eigen::Index n = 0; n < scene.synth.sources.cols(); ++n)
    references.push_back(scene.synth.sources.col(n));
  for (Eigen::Index m = 0; m < scene.synth.mixture.channels(); ++m)
    mixture_channels.push_back(scene.synth.mixture.samples.col(m));
  return idlma::best_permutation_metrics(estimates, references, &mixture_channels);
}

// The oracle sweep feeds two criteria: the SI-SDR improvement bar and the
// back-projection reconstruction bound on the same runs.
struct OracleSweep {
  double mean_improvement_db = 0.0;
  double worst_improvement_db = 0.0;
  double max_backprojection_err = 0.0;
};

const OracleSweep& oracle_sweep() {
  static const OracleSweep sweep = [] {
    OracleSweep out;
    out.worst_improvement_db = 1e300;
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const Scene scene = make_scene(seed, 2.0, 512, 256);
      std::vector<idlma::SourceModelPtr> models;
      for (const auto& t : scene.truth)
        models.push_back(std::make_shared<idlma::OracleGaussModel>(t.data, idlma::default_eps()));
      idlma::SeparationConfig cfg;
      cfg.variant = idlma::Variant::gauss;
      cfg.spatial_iters = 100;
      cfg.model_refresh_period = 10;
      const idlma::SeparationState state = idlma::separate(scene.X, models, cfg);

      idlma::ComplexGrid summed =
          idlma::ComplexGrid::Zero(scene.X.front().bins(), scene.X.front().frames());
      for (const auto& img : state.projected) summed += img.data;
      out.max_backprojection_err =
          std::max(out.max_backprojection_err,
                   (summed - scene.X[static_cast<size_t>(cfg.reference_channel)].data)
                       .abs()
                       .maxCoeff());

      const idlma::MetricsReport report = score_state(scene, state);
      total += report.mean_si_sdr_improvement_db;
      out.worst_improvement_db =
          std::min(out.worst_improvement_db, report.mean_si_sdr_improvement_db);
    }
    out.mean_improvement_db = total / 10.0;
    return out;
  }();
  return sweep;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

// 1. Separation cost never increases across spatial sweeps while the
//    hyperparameters stay fixed (constant providers).
Outcome check_cost_monotonicity() {
  double worst = -1e300;
  for (std::uint64_t seed = 41; seed <= 45; ++seed) {
    const Scene scene = make_scene(seed, 1.0, 256, 128);
    std::vector<idlma::SourceModelPtr> models;
    for (const auto& t : scene.truth)
      models.push_back(
          std::make_shared<idlma::OracleEbModel>(t.data, idlma::default_eps(), 5.0));
    idlma::SeparationConfig cfg;
    cfg.variant = idlma::Variant::empirical_bayes;
    cfg.spatial_iters = 100;
    cfg.model_refresh_period = 10;
    const idlma::SeparationState state = idlma::separate(scene.X, models, cfg);
    for (size_t k = 1; k < state.cost_trace.size(); ++k) {
      const double prev = state.cost_trace[k - 1].cost_after_refresh;
      const double cur = state.cost_trace[k].cost;
      worst = std::max(worst, (cur - prev) / std::max(1.0, std::abs(prev)));
    }
  }
  Outcome out;
  out.pass = worst <= 1e-9;
  out.detail = "worst relative increase " + fmt(worst) + " over 5 seeds x 100 sweeps";
  return out;
}

// 2. The closed-form heavy-tailed density equals numerical quadrature of the
//    Gaussian scale mixture on a 5x5x5 parameter grid.
Outcome check_marginal_density() {
  double worst = 0.0;
  for (int ia = 0; ia < 5; ++ia) {
    for (int ib = 0; ib < 5; ++ib) {
      for (int ip = 0; ip < 5; ++ip) {
        const double a = 0.5 + 9.5 * ia / 4.0;
        const double b = 0.5 + 9.5 * ib / 4.0;
        const double p = 4.0 * ip / 4.0;
        const double closed = idlma::marginal_density(p, a, b);
        const double quad = oracles::marginal_by_quadrature(p, a, b, 1e-10);
        worst = std::max(worst, oracles::rel_err(closed, quad));
      }
    }
  }
  Outcome out;
  out.pass = worst <= 1e-6;
  out.detail = "max relative error " + fmt(worst) + " on the 125-point grid";
  return out;
}

// 3. Constant-nu eb separation is bit-identical to the fixed-nu t variant,
//    and huge-nu eb matches the gauss demixing matrices.
Outcome check_reduction_chain() {
  const Scene scene = make_scene(7, 1.0, 256, 128);
  const double eps = idlma::default_eps();

  std::vector<idlma::SourceModelPtr> nu500;
  for (const auto& t : scene.truth)
    nu500.push_back(std::make_shared<idlma::OracleEbModel>(t.data, eps, 500.0));
  idlma::SeparationConfig cfg_eb;
  cfg_eb.variant = idlma::Variant::empirical_bayes;
  cfg_eb.spatial_iters = 50;
  cfg_eb.model_refresh_period = 10;
  idlma::SeparationConfig cfg_t = cfg_eb;
  cfg_t.variant = idlma::Variant::student_t_fixed_nu;
  cfg_t.fixed_nu = 500.0;
  const idlma::SeparationState eb_state = idlma::separate(scene.X, nu500, cfg_eb);
  const idlma::SeparationState t_state = idlma::separate(scene.X, nu500, cfg_t);

  bool bitwise = true;
  for (size_t i = 0; i < eb_state.W.matrices.size(); ++i)
    bitwise = bitwise &&
              (eb_state.W.matrices[i].array() == t_state.W.matrices[i].array()).all();
  for (size_t n = 0; n < eb_state.projected.size(); ++n)
    bitwise =
        bitwise && (eb_state.projected[n].data == t_state.projected[n].data).all();

  std::vector<idlma::SourceModelPtr> nu_huge, gauss;
  for (const auto& t : scene.truth) {
    nu_huge.push_back(std::make_shared<idlma::OracleEbModel>(t.data, eps, 1e12));
    gauss.push_back(std::make_shared<idlma::OracleGaussModel>(t.data, eps));
  }
  idlma::SeparationConfig cfg_g = cfg_eb;
  cfg_g.variant = idlma::Variant::gauss;
  const idlma::SeparationState huge_state = idlma::separate(scene.X, nu_huge, cfg_eb);
  const idlma::SeparationState gauss_state = idlma::separate(scene.X, gauss, cfg_g);
  double worst = 0.0;
  for (size_t i = 0; i < huge_state.W.matrices.size(); ++i)
    worst = std::max(worst, oracles::rel_frobenius(huge_state.W.matrices[i],
                                                   gauss_state.W.matrices[i]));

  Outcome out;
  out.pass = bitwise && worst <= 1e-4;
  out.detail = std::string("constant-nu bitwise match: ") + (bitwise ? "yes" : "NO") +
               "; huge-nu vs gauss worst per-bin relative distance " + fmt(worst);
  return out;
}

// 4. The silent-slot loss derivative in nu is strictly negative everywhere,
//    with the exact spot value at nu = 1.
Outcome check_silent_slot_derivative() {
  double worst = -1e300;
  for (int k = 0; k <= 60; ++k) {
    const double nu = std::pow(10.0, -3.0 + 9.0 * k / 60.0);
    worst = std::max(worst, idlma::small_power_loss_derivative(nu));
  }
  const double spot = idlma::small_power_loss_derivative(1.0);
  const double expected = 0.5 * std::log(3.0) - 1.0;
  const double spot_err = std::abs(spot - expected);
  Outcome out;
  out.pass = worst < 0.0 && spot_err <= 1e-12;
  out.detail = "max derivative " + fmt(worst) + " on the 61-point grid; |spot - (ln(3)/2 - 1)| = " +
               fmt(spot_err);
  return out;
}

// 5. The log-majorizer tangent bound holds on random tuples and is tight at
//    the touch point.
Outcome check_tangent_bound() {
  std::mt19937_64 rng(512);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst_violation = -1e300;
  double worst_tightness = 0.0;
  for (int trial = 0; trial < 100000; ++trial) {
    const double p = 4.0 * unif(rng);
    const double nu = std::pow(10.0, 6.0 * unif(rng) - 3.0);
    const double r2 = std::pow(10.0, 2.0 * unif(rng) - 1.0);
    const double gamma = std::pow(10.0, 2.0 * unif(rng) - 1.0);
    const double g = 1.0 + 2.0 * p / (nu * r2);
    const double bound = std::log(gamma) + (g - gamma) / gamma;
    worst_violation = std::max(worst_violation, std::log(g) - bound);
    const double touch = 1.0 + 2.0 * p / (nu * r2);
    const double at_touch = std::log(touch) + (g - touch) / touch;
    worst_tightness = std::max(worst_tightness, std::abs(at_touch - std::log(g)));
  }
  Outcome out;
  out.pass = worst_violation <= 1e-12 && worst_tightness <= 1e-12;
  out.detail = "worst violation " + fmt(worst_violation) + ", worst touch-point gap " +
               fmt(worst_tightness) + " on 1e5 tuples";
  return out;
}

// 6. Analytic network gradients of both training losses match central
//    differences on randomly chosen parameters.
Outcome check_network_gradients() {
  const int bins = 5, context = 1, hidden = 16, batch = 6;
  const double delta = idlma::kDefaultDelta;
  const double h = 1e-5;

  auto run_kind = [&](idlma::NetworkKind kind, std::uint64_t seed, double& worst) {
    idlma::NetworkParams params = idlma::init_network(
        kind, bins, context, hidden, idlma::AnchorSet{}, 0.0, false, seed);

    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> unif(0.5, 1.5);
    idlma::Grid power(bins, batch);
    idlma::Grid target(bins, batch);
    for (Eigen::Index i = 0; i < bins; ++i)
      for (Eigen::Index j = 0; j < batch; ++j) {
        power(i, j) = unif(rng);
        target(i, j) = unif(rng);
      }
    const Eigen::MatrixXd features = idlma::context_features(power, context);

    auto loss_of = [&](const idlma::NetworkParams& p) {
      const idlma::ForwardCache cache = idlma::forward(p, features);
      if (kind == idlma::NetworkKind::gauss)
        return idlma::loss_gauss(cache.scale.array(), target, delta);
      return idlma::loss_eb(cache.scale.array(), cache.nu.array(), target, delta);
    };

    const idlma::ForwardCache cache = idlma::forward(params, features);
    idlma::Gradients grads;
    if (kind == idlma::NetworkKind::gauss) {
      const idlma::Grid d_scale = idlma::loss_gauss_gradient(cache.scale.array(), target, delta);
      grads = idlma::backward(params, cache, d_scale.matrix());
    } else {
      const idlma::EbLossGradients g =
          idlma::loss_eb_gradient(cache.scale.array(), cache.nu.array(), target, delta);
      grads = idlma::backward(params, cache, g.d_r.matrix(), g.d_nu.matrix());
    }

    auto collect = [](std::vector<idlma::FcBlock>& blocks, std::vector<double*>& out) {
      for (auto& blk : blocks) {
        for (Eigen::Index i = 0; i < blk.W.size(); ++i) out.push_back(blk.W.data() + i);
        for (Eigen::Index i = 0; i < blk.b.size(); ++i) out.push_back(blk.b.data() + i);
      }
    };
    std::vector<double*> param_ptrs;
    collect(params.trunk, param_ptrs);
    collect(params.scale_head, param_ptrs);
    collect(params.rho_head, param_ptrs);
    std::vector<double*> grad_ptrs;
    collect(grads.trunk, grad_ptrs);
    collect(grads.scale_head, grad_ptrs);
    collect(grads.rho_head, grad_ptrs);

    std::mt19937_64 pick(seed + 2);
    std::uniform_int_distribution<size_t> index(0, param_ptrs.size() - 1);
    for (int point = 0; point < 100; ++point) {
      const size_t k = index(pick);
      const double saved = *param_ptrs[k];
      *param_ptrs[k] = saved + h;
      const double up = loss_of(params);
      *param_ptrs[k] = saved - h;
      const double down = loss_of(params);
      *param_ptrs[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = *grad_ptrs[k];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
  };

  double worst = 0.0;
  run_kind(idlma::NetworkKind::gauss, 911, worst);
  run_kind(idlma::NetworkKind::eb, 912, worst);
  Outcome out;
  out.pass = worst <= 1e-4;
  out.detail = "max relative gradient error " + fmt(worst) +
               " over 100 points per loss (width-16 network)";
  return out;
}

// 7. Oracle-model separation on well-conditioned instantaneous mixtures
//    improves SI-SDR by at least 10 dB on average across 10 seeds.
Outcome check_oracle_separation() {
  const OracleSweep& sweep = oracle_sweep();
  Outcome out;
  out.pass = sweep.mean_improvement_db >= 10.0;
  out.detail = "mean SI-SDR improvement " + fmt(sweep.mean_improvement_db) +
               " dB (seed minimum " + fmt(sweep.worst_improvement_db) + " dB)";
  return out;
}

// 8. With scale models corrupted by heavy multiplicative noise in one band,
//    flagging that band as unreliable (smallest anchor) lets eb match or beat
//    gauss on mean SI-SDR.
Outcome check_eb_beats_gauss_under_corruption() {
  const double eps = idlma::default_eps();
  const Eigen::Index band_lo = 64, band_hi = 128;  // corrupted bin range
  double gap_total = 0.0, eb_total = 0.0, gauss_total = 0.0;
  for (std::uint64_t seed = 101; seed <= 110; ++seed) {
    const Scene scene = make_scene(seed, 2.0, 512, 256);
    std::mt19937_64 rng(seed * 977);
    std::uniform_real_distribution<double> exponent(-2.0, 2.0);

    std::vector<idlma::SourceModelPtr> gauss_models, eb_models;
    for (const auto& t : scene.truth) {
      idlma::Grid r = idlma::clamp_scale(t.data.abs(), eps);
      idlma::Grid nu = idlma::Grid::Constant(r.rows(), r.cols(), 1000.0);
      for (Eigen::Index i = band_lo; i < band_hi; ++i)
        for (Eigen::Index j = 0; j < r.cols(); ++j) {
          r(i, j) *= std::pow(10.0, exponent(rng));
          nu(i, j) = 1.0;  // smallest anchor: "do not trust this band"
        }
      gauss_models.push_back(idlma::StaticGridModel::gauss(r));
      eb_models.push_back(idlma::StaticGridModel::eb(r, nu));
    }

    idlma::SeparationConfig cfg;
    cfg.spatial_iters = 50;
    cfg.model_refresh_period = 10;
    cfg.variant = idlma::Variant::gauss;
    const double gauss_score =
        score_state(scene, idlma::separate(scene.X, gauss_models, cfg)).mean_si_sdr_db;
    cfg.variant = idlma::Variant::empirical_bayes;
    const double eb_score =
        score_state(scene, idlma::separate(scene.X, eb_models, cfg)).mean_si_sdr_db;
    gauss_total += gauss_score;
    eb_total += eb_score;
    gap_total += eb_score - gauss_score;
  }
  const double mean_gap = gap_total / 10.0;
  Outcome out;
  out.pass = mean_gap >= 0.0;
  out.detail = "mean SI-SDR gap eb-gauss " + fmt(mean_gap) + " dB (eb " +
               fmt(eb_total / 10.0) + " dB, gauss " + fmt(gauss_total / 10.0) +
               " dB over 10 seeds)";
  return out;
}

// 9. On every oracle run, the back-projected images sum to the
//    reference-channel observation.
Outcome check_backprojection_identity() {
  const OracleSweep& sweep = oracle_sweep();
  Outcome out;
  out.pass = sweep.max_backprojection_err <= 1e-10;
  out.detail = "max |sum(images) - observation| = " + fmt(sweep.max_backprojection_err) +
               " across all runs";
  return out;
}

// 10. STFT/iSTFT round trip is exact at the default configuration.
Outcome check_stft_round_trip() {
  const idlma::StftConfig cfg;  // defaults
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    std::mt19937_64 rng(3000 + static_cast<std::uint64_t>(k));
    std::normal_distribution<double> gauss(0.0, 1.0);
    idlma::Waveform wave;
    wave.sample_rate = 8000;
    wave.samples.resize(20000, 1);
    for (Eigen::Index i = 0; i < wave.samples.rows(); ++i) wave.samples(i, 0) = gauss(rng);
    const idlma::Waveform back = idlma::istft(idlma::stft(wave, cfg), cfg);
    const double err = (back.samples - wave.samples).abs().maxCoeff() /
                       wave.samples.abs().maxCoeff();
    worst = std::max(worst, err);
  }
  Outcome out;
  out.pass = worst <= 1e-10;
  out.detail = "max relative reconstruction error " + fmt(worst) + " on 10 random signals";
  return out;
}

// 11. End-to-end eb training halves the validation loss within 200 epochs and
//     keeps every emitted nu inside the anchor range.
Outcome check_trainer_end_to_end() {
  const idlma::TrainingSet data = idlma::make_toy_dataset(33, 48, 4, 1);
  idlma::TrainConfig cfg;
  cfg.epochs = 200;
  cfg.rng_seed = 2;
  const idlma::TrainResult result = idlma::train(data, idlma::NetworkKind::eb, cfg);
  const double v0 = result.curve.front().val_loss;
  const double vT = result.curve.back().val_loss;
  const bool halved = v0 > 0.0 && vT <= 0.5 * v0;

  // Emitted nu grids stay within the anchor span on real inputs.
  const idlma::Grid mixture_power =
      (data.front().target + data.front().interferer).abs().square();
  const Eigen::MatrixXd features =
      idlma::context_features(mixture_power, cfg.context_frames);
  const idlma::ForwardCache cache = idlma::forward(result.params, features);
  const double nu_min = cache.nu.minCoeff();
  const double nu_max = cache.nu.maxCoeff();
  const bool in_range = nu_min >= 1.0 - 1e-9 && nu_max <= 1000.0 + 1e-9;

  Outcome out;
  out.pass = halved && in_range;
  out.detail = "validation loss " + fmt(v0) + " -> " + fmt(vT) + "; emitted nu in [" +
               fmt(nu_min) + ", " + fmt(nu_max) + "]";
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    const char* title;
    std::function<Outcome()> run;
    double time_limit_s;  // 0: no limit enforced
  };
  const std::vector<Criterion> criteria = {
      {"separation cost is non-increasing under fixed hyperparameters",
       check_cost_monotonicity, 30.0},
      {"closed-form marginal density matches numerical quadrature",
       check_marginal_density, 5.0},
      {"constant-nu eb equals t bitwise and huge-nu eb approaches gauss",
       check_reduction_chain, 0.0},
      {"silent-slot loss derivative is negative for every nu",
       check_silent_slot_derivative, 0.0},
      {"log-majorizer tangent bound holds and touches", check_tangent_bound, 0.0},
      {"network loss gradients match central differences", check_network_gradients, 60.0},
      {"oracle separation improves SI-SDR by 10 dB", check_oracle_separation, 120.0},
      {"eb matches or beats gauss under band-corrupted scale models",
       check_eb_beats_gauss_under_corruption, 0.0},
      {"back-projected images reconstruct the reference channel",
       check_backprojection_identity, 0.0},
      {"stft round trip is exact at the default configuration",
       check_stft_round_trip, 0.0},
      {"eb training halves the validation loss with nu in range",
       check_trainer_end_to_end, 300.0},
  };

  bool all_pass = true;
  for (size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[k].run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criteria[k].time_limit_s > 0.0 && seconds > criteria[k].time_limit_s) {
      outcome.pass = false;
      outcome.detail += "; exceeded " + fmt(criteria[k].time_limit_s) + " s budget";
    }
    all_pass = all_pass && outcome.pass;
    std::printf("[%s] %2zu. %s — %s (%.1f s)\n", outcome.pass ? "PASS" : "FAIL", k + 1,
                criteria[k].title, outcome.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
