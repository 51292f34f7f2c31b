// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "idlma/core.hpp"
#include "idlma/source_model.hpp"

namespace idlma {

/// One fully connected block: affine map followed by a nonlinearity and
/// (except in final blocks) dropout. The nonlinearity is a rectifier
/// everywhere but the last anchor-weight block, which ends in a per-bin
/// normalized exponential.
struct FcBlock {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out

  Eigen::Index in_width() const { return W.cols(); }
  Eigen::Index out_width() const { return W.rows(); }
};

enum class NetworkKind { gauss, eb };

inline std::string to_string(NetworkKind k) {
  return k == NetworkKind::gauss ? "gauss" : "eb";
}

inline NetworkKind network_kind_from_string(const std::string& s) {
  if (s == "gauss") return NetworkKind::gauss;
  if (s == "eb") return NetworkKind::eb;
  throw ConfigError("unknown network kind: " + s);
}

/// Parameters and architecture descriptor of a source-model network.
///
/// Layout: a shared trunk of three rectifier blocks feeds either a single
/// scale head (gauss) or two heads (eb): a scale head ending in a rectifier
/// (r-hat) and an anchor-weight head ending in a per-bin normalized
/// exponential over the anchors (rho). Dropout applies to every block except
/// the last block of each head.
struct NetworkParams {
  NetworkKind kind = NetworkKind::gauss;
  int bins = 0;           // spectrogram height I; also the scale-head output width
  int context = 3;        // context frames on each side; input width (2c+1)*I
  int hidden = 64;        // trunk/head hidden width
  double dropout_rate = 0.3;
  bool clipped_nu = false;  // alternative mode: direct rectified nu head, clamped
  AnchorSet anchors;

  std::vector<FcBlock> trunk;       // 3 blocks
  std::vector<FcBlock> scale_head;  // 2 blocks; output width = bins
  std::vector<FcBlock> rho_head;    // eb only, 2 blocks; output width = bins*|K| (or bins when clipped)

  int input_width() const { return (2 * context + 1) * bins; }

  void validate() const {
    if (bins < 1) throw ConfigError("network bins must be >= 1");
    if (context < 0) throw ConfigError("network context must be >= 0");
    if (hidden < 1) throw ConfigError("network hidden width must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("dropout rate must lie in [0, 1)");
    anchors.validate();
    if (trunk.size() != 3) throw ConfigError("network trunk must have 3 blocks");
    if (scale_head.size() != 2) throw ConfigError("scale head must have 2 blocks");
    if (kind == NetworkKind::eb && rho_head.size() != 2)
      throw ConfigError("anchor-weight head must have 2 blocks");
    if (kind == NetworkKind::gauss && !rho_head.empty())
      throw ConfigError("gauss networks have no anchor-weight head");
    Eigen::Index expect = input_width();
    auto check_chain = [&expect](const std::vector<FcBlock>& blocks, Eigen::Index out,
                                 const char* name) {
      Eigen::Index w = expect;
      for (const auto& blk : blocks) {
        if (blk.W.cols() != w || blk.b.size() != blk.W.rows())
          throw ConfigError(std::string("network block width mismatch in ") + name);
        if (!blk.W.allFinite() || !blk.b.allFinite())
          throw ConfigError(std::string("non-finite parameters in ") + name);
        w = blk.W.rows();
      }
      if (!blocks.empty() && w != out)
        throw ConfigError(std::string("unexpected output width of ") + name);
    };
    // Trunk output width is the hidden width; heads consume it.
    check_chain(trunk, hidden, "trunk");
    expect = hidden;
    check_chain(scale_head, bins, "scale head");
    if (kind == NetworkKind::eb) {
      expect = hidden;
      const Eigen::Index rho_out =
          clipped_nu ? bins : bins * static_cast<Eigen::Index>(anchors.size());
      check_chain(rho_head, rho_out, "anchor-weight head");
    }
  }
};

/// Seeded He-style initialization; biases start slightly positive so the
/// rectified outputs are alive at the first step.
inline NetworkParams init_network(NetworkKind kind, int bins, int context, int hidden,
                                  const AnchorSet& anchors, double dropout_rate,
                                  bool clipped_nu, std::uint64_t seed) {
  NetworkParams p;
  p.kind = kind;
  p.bins = bins;
  p.context = context;
  p.hidden = hidden;
  p.dropout_rate = dropout_rate;
  p.clipped_nu = clipped_nu;
  p.anchors = anchors;

  std::mt19937_64 rng(seed);
  auto make_block = [&rng](Eigen::Index out, Eigen::Index in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    FcBlock blk;
    blk.W.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) blk.W(r, c) = dist(rng);
    blk.b = Eigen::VectorXd::Constant(out, 0.1);
    return blk;
  };

  const int in = p.input_width();
  p.trunk.push_back(make_block(hidden, in));
  p.trunk.push_back(make_block(hidden, hidden));
  p.trunk.push_back(make_block(hidden, hidden));
  p.scale_head.push_back(make_block(hidden, hidden));
  p.scale_head.push_back(make_block(bins, hidden));
  if (kind == NetworkKind::eb) {
    const Eigen::Index rho_out =
        clipped_nu ? bins : bins * static_cast<Eigen::Index>(anchors.size());
    p.rho_head.push_back(make_block(hidden, hidden));
    p.rho_head.push_back(make_block(rho_out, hidden));
  }
  p.validate();
  return p;
}

/// Stacks each frame's magnitude column with `context` neighbor columns on
/// each side (zero-padded at the edges): output is (2c+1)*I x J, frame-major
/// groups ordered from the earliest context frame to the latest.
inline Eigen::MatrixXd context_features(const Grid& magnitude, int context) {
  if (context < 0) throw ConfigError("context must be >= 0");
  const Eigen::Index I = magnitude.rows();
  const Eigen::Index J = magnitude.cols();
  Eigen::MatrixXd feats = Eigen::MatrixXd::Zero((2 * context + 1) * I, J);
  for (int o = -context; o <= context; ++o) {
    const Eigen::Index row0 = static_cast<Eigen::Index>(o + context) * I;
    for (Eigen::Index j = 0; j < J; ++j) {
      const Eigen::Index src = j + o;
      if (src >= 0 && src < J) feats.block(row0, j, I, 1) = magnitude.col(src).matrix();
    }
  }
  return feats;
}

namespace detail {

struct BlockCache {
  Eigen::MatrixXd input;  // activation entering the affine layer
  Eigen::MatrixXd pre;    // affine output, before the nonlinearity
  Eigen::MatrixXd mask;   // inverted-dropout multiplier; empty when inactive
};

}  // namespace detail

/// Activations of one forward pass, kept for the backward pass. `scale` is
/// the raw rectified head output (before any clamping); `rho` holds the
/// per-bin anchor weights (rows grouped as bin-major: row i*|K|+k); `nu` is
/// the combined degrees-of-freedom estimate.
struct ForwardCache {
  std::vector<detail::BlockCache> trunk;
  std::vector<detail::BlockCache> scale_head;
  std::vector<detail::BlockCache> rho_head;
  Eigen::MatrixXd trunk_out;
  Eigen::MatrixXd scale;  // bins x batch
  Eigen::MatrixXd rho;    // bins*|K| x batch (empty for gauss / clipped mode)
  Eigen::MatrixXd nu;     // bins x batch (empty for gauss)
};

namespace detail {

inline Eigen::MatrixXd run_block(const FcBlock& blk, const Eigen::MatrixXd& x,
                                 BlockCache& cache, bool relu, bool use_dropout,
                                 double dropout_rate, std::mt19937_64* rng) {
  cache.input = x;
  cache.pre = (blk.W * x).colwise() + blk.b;
  Eigen::MatrixXd out = relu ? cache.pre.cwiseMax(0.0) : cache.pre;
  if (use_dropout && dropout_rate > 0.0) {
    if (!rng) throw ConfigError("training-mode forward pass needs an RNG for dropout");
    const double keep = 1.0 - dropout_rate;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    cache.mask.resize(out.rows(), out.cols());
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      for (Eigen::Index r = 0; r < out.rows(); ++r)
        cache.mask(r, c) = unif(*rng) < keep ? 1.0 / keep : 0.0;
    out = out.cwiseProduct(cache.mask);
  } else {
    cache.mask.resize(0, 0);
  }
  return out;
}

/// Normalized exponential over each bin's group of |K| consecutive rows,
/// computed with the usual max-shift for stability.
inline Eigen::MatrixXd per_bin_softmax(const Eigen::MatrixXd& z, Eigen::Index bins,
                                       Eigen::Index K) {
  Eigen::MatrixXd s(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    for (Eigen::Index i = 0; i < bins; ++i) {
      const auto group = z.block(i * K, c, K, 1).array();
      const Eigen::ArrayXd e = (group - group.maxCoeff()).exp();
      s.block(i * K, c, K, 1) = (e / e.sum()).matrix();
    }
  }
  return s;
}

}  // namespace detail

/// Forward pass over a batch of feature columns. In training mode, dropout
/// masks are sampled from `rng` and recorded in the cache; at inference the
/// pass is deterministic.
inline ForwardCache forward(const NetworkParams& p, const Eigen::MatrixXd& features,
                            bool training = false, std::mt19937_64* rng = nullptr) {
  if (features.rows() != p.input_width())
    throw ConfigError("feature width " + std::to_string(features.rows()) +
                      " does not match network input width " +
                      std::to_string(p.input_width()));
  ForwardCache cache;
  cache.trunk.resize(p.trunk.size());
  cache.scale_head.resize(p.scale_head.size());
  cache.rho_head.resize(p.rho_head.size());

  Eigen::MatrixXd x = features;
  for (size_t l = 0; l < p.trunk.size(); ++l)
    x = detail::run_block(p.trunk[l], x, cache.trunk[l], true, training, p.dropout_rate, rng);
  cache.trunk_out = x;

  // Scale head: dropout on the first block only; rectified output.
  Eigen::MatrixXd s = detail::run_block(p.scale_head[0], x, cache.scale_head[0], true,
                                        training, p.dropout_rate, rng);
  cache.scale = detail::run_block(p.scale_head[1], s, cache.scale_head[1], true, false,
                                  p.dropout_rate, rng);

  if (p.kind == NetworkKind::eb) {
    const auto K = static_cast<Eigen::Index>(p.anchors.size());
    Eigen::MatrixXd h = detail::run_block(p.rho_head[0], x, cache.rho_head[0], true,
                                          training, p.dropout_rate, rng);
    if (p.clipped_nu) {
      // Direct rectified nu output, clamped into the anchor range.
      Eigen::MatrixXd raw = detail::run_block(p.rho_head[1], h, cache.rho_head[1], true,
                                              false, p.dropout_rate, rng);
      cache.nu = raw.cwiseMax(p.anchors.min()).cwiseMin(p.anchors.max());
    } else {
      Eigen::MatrixXd z = detail::run_block(p.rho_head[1], h, cache.rho_head[1], false,
                                            false, p.dropout_rate, rng);
      cache.rho = detail::per_bin_softmax(z, p.bins, K);
      cache.nu.resize(p.bins, features.cols());
      for (Eigen::Index c = 0; c < features.cols(); ++c)
        for (Eigen::Index i = 0; i < p.bins; ++i) {
          double nu = 0.0;
          for (Eigen::Index k = 0; k < K; ++k)
            nu += cache.rho(i * K + k, c) * p.anchors.values[static_cast<size_t>(k)];
          cache.nu(i, c) = nu;
        }
    }
  }
  return cache;
}

/// Gradients with the same block structure as the parameters.
struct Gradients {
  std::vector<FcBlock> trunk;
  std::vector<FcBlock> scale_head;
  std::vector<FcBlock> rho_head;

  static Gradients zeros_like(const NetworkParams& p) {
    Gradients g;
    auto zero_of = [](const std::vector<FcBlock>& src) {
      std::vector<FcBlock> out;
      out.reserve(src.size());
      for (const auto& blk : src)
        out.push_back({Eigen::MatrixXd::Zero(blk.W.rows(), blk.W.cols()),
                       Eigen::VectorXd::Zero(blk.b.size())});
      return out;
    };
    g.trunk = zero_of(p.trunk);
    g.scale_head = zero_of(p.scale_head);
    g.rho_head = zero_of(p.rho_head);
    return g;
  }
};

template <class Fn>
void for_each_block(NetworkParams& p, Fn&& fn) {
  for (auto& blk : p.trunk) fn(blk);
  for (auto& blk : p.scale_head) fn(blk);
  for (auto& blk : p.rho_head) fn(blk);
}

template <class Fn>
void for_each_block(const NetworkParams& p, Fn&& fn) {
  for (const auto& blk : p.trunk) fn(blk);
  for (const auto& blk : p.scale_head) fn(blk);
  for (const auto& blk : p.rho_head) fn(blk);
}

template <class Fn>
void for_each_block_pair(NetworkParams& p, Gradients& g, Fn&& fn) {
  for (size_t l = 0; l < p.trunk.size(); ++l) fn(p.trunk[l], g.trunk[l]);
  for (size_t l = 0; l < p.scale_head.size(); ++l) fn(p.scale_head[l], g.scale_head[l]);
  for (size_t l = 0; l < p.rho_head.size(); ++l) fn(p.rho_head[l], g.rho_head[l]);
}

inline double gradient_norm(const Gradients& g) {
  double sq = 0.0;
  auto acc = [&sq](const std::vector<FcBlock>& blocks) {
    for (const auto& blk : blocks) sq += blk.W.squaredNorm() + blk.b.squaredNorm();
  };
  acc(g.trunk);
  acc(g.scale_head);
  acc(g.rho_head);
  return std::sqrt(sq);
}

inline void scale_gradients(Gradients& g, double factor) {
  auto mul = [factor](std::vector<FcBlock>& blocks) {
    for (auto& blk : blocks) {
      blk.W *= factor;
      blk.b *= factor;
    }
  };
  mul(g.trunk);
  mul(g.scale_head);
  mul(g.rho_head);
}

/// Clips the global gradient norm to `max_norm`; returns the pre-clip norm.
inline double clip_gradients(Gradients& g, double max_norm) {
  const double norm = gradient_norm(g);
  if (norm > max_norm && norm > 0.0) scale_gradients(g, max_norm / norm);
  return norm;
}

namespace detail {

inline void backprop_block(const FcBlock& blk, const BlockCache& cache, bool relu,
                           Eigen::MatrixXd& delta, FcBlock& grad,
                           Eigen::MatrixXd* dinput) {
  if (cache.mask.size() > 0) delta = delta.cwiseProduct(cache.mask);
  if (relu)
    delta = delta.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
  grad.W += delta * cache.input.transpose();
  grad.b += delta.rowwise().sum();
  if (dinput) *dinput = blk.W.transpose() * delta;
}

}  // namespace detail

/// Backward pass: given the gradients of the loss w.r.t. the raw head
/// outputs (d_scale, and d_nu for eb networks), accumulates parameter
/// gradients. The cache must come from a forward call on the same params.
inline Gradients backward(const NetworkParams& p, const ForwardCache& cache,
                          const Eigen::MatrixXd& d_scale,
                          const Eigen::MatrixXd& d_nu = Eigen::MatrixXd()) {
  if (d_scale.rows() != p.bins || d_scale.cols() != cache.scale.cols())
    throw ConfigError("backward: d_scale shape mismatch");
  Gradients g = Gradients::zeros_like(p);
  const Eigen::Index B = d_scale.cols();

  // Scale head.
  Eigen::MatrixXd delta = d_scale;
  Eigen::MatrixXd d_trunk_out;
  {
    Eigen::MatrixXd d_mid;
    detail::backprop_block(p.scale_head[1], cache.scale_head[1], true, delta,
                           g.scale_head[1], &d_mid);
    detail::backprop_block(p.scale_head[0], cache.scale_head[0], true, d_mid,
                           g.scale_head[0], &d_trunk_out);
  }

  if (p.kind == NetworkKind::eb) {
    if (d_nu.rows() != p.bins || d_nu.cols() != B)
      throw ConfigError("backward: d_nu shape mismatch for an eb network");
    Eigen::MatrixXd dz;
    if (p.clipped_nu) {
      // Clamp passes gradient only strictly inside the anchor range.
      dz.resize(p.bins, B);
      for (Eigen::Index c = 0; c < B; ++c)
        for (Eigen::Index i = 0; i < p.bins; ++i) {
          const double v = cache.nu(i, c);
          dz(i, c) = (v > p.anchors.min() && v < p.anchors.max()) ? d_nu(i, c) : 0.0;
        }
    } else {
      // nu = sum_k rho_k anchor_k, rho = per-bin softmax(z):
      // dz_k = rho_k (anchor_k - nu) * d_nu.
      const auto K = static_cast<Eigen::Index>(p.anchors.size());
      dz.resize(p.bins * K, B);
      for (Eigen::Index c = 0; c < B; ++c)
        for (Eigen::Index i = 0; i < p.bins; ++i)
          for (Eigen::Index k = 0; k < K; ++k)
            dz(i * K + k, c) = cache.rho(i * K + k, c) *
                               (p.anchors.values[static_cast<size_t>(k)] - cache.nu(i, c)) *
                               d_nu(i, c);
    }
    Eigen::MatrixXd d_mid, d_trunk_rho;
    detail::backprop_block(p.rho_head[1], cache.rho_head[1], p.clipped_nu, dz,
                           g.rho_head[1], &d_mid);
    detail::backprop_block(p.rho_head[0], cache.rho_head[0], true, d_mid, g.rho_head[0],
                           &d_trunk_rho);
    d_trunk_out += d_trunk_rho;
  }

  // Trunk.
  for (int l = static_cast<int>(p.trunk.size()) - 1; l >= 0; --l) {
    Eigen::MatrixXd d_prev;
    detail::backprop_block(p.trunk[static_cast<size_t>(l)],
                           cache.trunk[static_cast<size_t>(l)], true, d_trunk_out,
                           g.trunk[static_cast<size_t>(l)], l > 0 ? &d_prev : nullptr);
    if (l > 0) d_trunk_out = std::move(d_prev);
  }

  auto check_finite = [](const std::vector<FcBlock>& blocks, const char* name) {
    for (const auto& blk : blocks)
      if (!blk.W.allFinite() || !blk.b.allFinite())
        throw NumericalError(std::string("non-finite gradient in ") + name);
  };
  check_finite(g.trunk, "trunk");
  check_finite(g.scale_head, "scale head");
  check_finite(g.rho_head, "anchor-weight head");
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw ConfigError("checkpoint: expected a 2-d array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError("checkpoint: ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<size_t>(c)].get<double>();
  }
  return m;
}

inline nlohmann::json blocks_to_json(const std::vector<FcBlock>& blocks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& blk : blocks) {
    nlohmann::json b;
    b["W"] = matrix_to_json(blk.W);
    b["b"] = matrix_to_json(blk.b);
    arr.push_back(std::move(b));
  }
  return arr;
}

inline std::vector<FcBlock> blocks_from_json(const nlohmann::json& j) {
  std::vector<FcBlock> blocks;
  for (const auto& b : j) {
    FcBlock blk;
    blk.W = matrix_from_json(b.at("W"));
    blk.b = matrix_from_json(b.at("b")).col(0);
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

}  // namespace detail

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_to_json(const NetworkParams& p) {
  p.validate();
  nlohmann::json j;
  j["format"] = "idlma-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = to_string(p.kind);
  j["bins"] = p.bins;
  j["context"] = p.context;
  j["hidden"] = p.hidden;
  j["dropout_rate"] = p.dropout_rate;
  j["clipped_nu"] = p.clipped_nu;
  j["anchors"] = p.anchors.values;
  j["trunk"] = detail::blocks_to_json(p.trunk);
  j["scale_head"] = detail::blocks_to_json(p.scale_head);
  if (p.kind == NetworkKind::eb) j["rho_head"] = detail::blocks_to_json(p.rho_head);
  return j;
}

inline NetworkParams checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "idlma-checkpoint")
      throw ConfigError("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ConfigError("unsupported checkpoint version");
    NetworkParams p;
    p.kind = network_kind_from_string(j.at("kind").get<std::string>());
    p.bins = j.at("bins").get<int>();
    p.context = j.at("context").get<int>();
    p.hidden = j.at("hidden").get<int>();
    p.dropout_rate = j.at("dropout_rate").get<double>();
    p.clipped_nu = j.at("clipped_nu").get<bool>();
    p.anchors.values = j.at("anchors").get<std::vector<double>>();
    p.trunk = detail::blocks_from_json(j.at("trunk"));
    p.scale_head = detail::blocks_from_json(j.at("scale_head"));
    if (p.kind == NetworkKind::eb) p.rho_head = detail::blocks_from_json(j.at("rho_head"));
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const NetworkParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << checkpoint_to_json(p).dump(1, '\t') << '\n';
  if (!out) throw IoError("failed while writing checkpoint: " + path);
}

inline NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint is not valid JSON: " + path + " (" + e.what() + ")");
  }
  return checkpoint_from_json(j);
}

// ---------------------------------------------------------------------------
// Network-backed source-model providers
// ---------------------------------------------------------------------------

/// Gauss provider: sigma = max(network(|Y|), eps), evaluated at inference
/// (dropout off) on context-stacked magnitude features.
class NetworkGaussModel : public SourceModel {
 public:
  explicit NetworkGaussModel(NetworkParams params, double eps = default_eps())
      : params_(std::move(params)), eps_(eps) {
    params_.validate();
    if (params_.kind != NetworkKind::gauss)
      throw ConfigError("NetworkGaussModel needs a gauss-kind checkpoint");
    if (!(eps_ > 0.0)) throw ConfigError("eps must be positive");
  }

  Kind kind() const override { return Kind::gauss; }

  GaussSourceEstimate refresh_gauss(const ComplexGrid& separated) const override {
    if (separated.rows() != params_.bins)
      throw ConfigError("network expects " + std::to_string(params_.bins) +
                        " bins, got " + std::to_string(separated.rows()));
    const ForwardCache cache = forward(params_, context_features(separated.abs(), params_.context));
    return {clamp_scale(cache.scale.array(), eps_)};
  }

  const NetworkParams& params() const { return params_; }

 private:
  NetworkParams params_;
  double eps_;
};

/// Empirical-Bayes provider: r = max(r-hat, eps) and nu from the anchor
/// weights (or the clamped direct head in clipped mode).
class NetworkEbModel : public SourceModel {
 public:
  explicit NetworkEbModel(NetworkParams params, double eps = default_eps())
      : params_(std::move(params)), eps_(eps) {
    params_.validate();
    if (params_.kind != NetworkKind::eb)
      throw ConfigError("NetworkEbModel needs an eb-kind checkpoint");
    if (!(eps_ > 0.0)) throw ConfigError("eps must be positive");
  }

  Kind kind() const override { return Kind::eb; }

  EbSourceEstimate refresh_eb(const ComplexGrid& separated) const override {
    if (separated.rows() != params_.bins)
      throw ConfigError("network expects " + std::to_string(params_.bins) +
                        " bins, got " + std::to_string(separated.rows()));
    const ForwardCache cache = forward(params_, context_features(separated.abs(), params_.context));
    EbSourceEstimate est;
    est.r = clamp_scale(cache.scale.array(), eps_);
    est.nu = cache.nu.array();
    if (!params_.clipped_nu) {
      const auto K = static_cast<Eigen::Index>(params_.anchors.size());
      est.rho.reserve(static_cast<size_t>(K));
      for (Eigen::Index k = 0; k < K; ++k) {
        Grid slice(params_.bins, separated.cols());
        for (Eigen::Index j = 0; j < separated.cols(); ++j)
          for (Eigen::Index i = 0; i < params_.bins; ++i)
            slice(i, j) = cache.rho(i * K + k, j);
        est.rho.push_back(std::move(slice));
      }
    }
    return est;
  }

  const NetworkParams& params() const { return params_; }

 private:
  NetworkParams params_;
  double eps_;
};

}  // namespace idlma
