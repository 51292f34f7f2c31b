// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "idlma/core.hpp"
#include "idlma/source_model.hpp"

namespace idlma {

inline constexpr int kGridFileVersion = 1;

/// On-disk hyperparameter grids: per-source "sigma" (gauss) or "r" and "nu"
/// (eb) arrays of shape bins x frames. Lets externally produced models drive
/// separation without the trainer.
struct GridFile {
  SourceModel::Kind kind = SourceModel::Kind::gauss;
  std::vector<Grid> sigma;  // gauss: one grid per source
  std::vector<Grid> r;      // eb
  std::vector<Grid> nu;     // eb

  int sources() const {
    return static_cast<int>(kind == SourceModel::Kind::gauss ? sigma.size() : r.size());
  }

  void validate() const {
    const auto check = [](const std::vector<Grid>& grids, const char* name) {
      if (grids.empty()) throw ConfigError(std::string("grid file: no ") + name + " grids");
      const Eigen::Index I = grids.front().rows(), J = grids.front().cols();
      if (I < 1 || J < 1) throw ConfigError(std::string("grid file: empty ") + name + " grid");
      for (const auto& g : grids) {
        if (g.rows() != I || g.cols() != J)
          throw ConfigError(std::string("grid file: inconsistent ") + name + " dimensions");
        if (!g.allFinite() || (g <= 0.0).any())
          throw ConfigError(std::string("grid file: ") + name +
                            " entries must be positive and finite");
      }
    };
    if (kind == SourceModel::Kind::gauss) {
      check(sigma, "sigma");
      if (!r.empty() || !nu.empty())
        throw ConfigError("grid file: gauss kind must not carry r/nu grids");
    } else {
      check(r, "r");
      check(nu, "nu");
      if (r.size() != nu.size() || r.front().rows() != nu.front().rows() ||
          r.front().cols() != nu.front().cols())
        throw ConfigError("grid file: r and nu grids must have identical shapes");
      if (!sigma.empty()) throw ConfigError("grid file: eb kind must not carry sigma grids");
    }
  }
};

namespace detail {

inline nlohmann::json grid_to_json(const Grid& g) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < g.cols(); ++j) row.push_back(g(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Grid grid_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw ConfigError("grid file: expected a 2-d array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Grid g(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError("grid file: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) g(i, c) = row[static_cast<size_t>(c)].get<double>();
  }
  return g;
}

inline nlohmann::json grids_to_json(const std::vector<Grid>& grids) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& g : grids) arr.push_back(grid_to_json(g));
  return arr;
}

inline std::vector<Grid> grids_from_json(const nlohmann::json& j) {
  std::vector<Grid> grids;
  for (const auto& g : j) grids.push_back(grid_from_json(g));
  return grids;
}

}  // namespace detail

inline void save_grid_file(const std::string& path, const GridFile& grids) {
  grids.validate();
  nlohmann::json j;
  j["format"] = "idlma-grid";
  j["version"] = kGridFileVersion;
  if (grids.kind == SourceModel::Kind::gauss) {
    j["kind"] = "gauss";
    j["bins"] = grids.sigma.front().rows();
    j["frames"] = grids.sigma.front().cols();
    j["sources"] = grids.sources();
    j["sigma"] = detail::grids_to_json(grids.sigma);
  } else {
    j["kind"] = "eb";
    j["bins"] = grids.r.front().rows();
    j["frames"] = grids.r.front().cols();
    j["sources"] = grids.sources();
    j["r"] = detail::grids_to_json(grids.r);
    j["nu"] = detail::grids_to_json(grids.nu);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open grid file for writing: " + path);
  out << j.dump(1, '\t') << '\n';
  if (!out) throw IoError("failed while writing grid file: " + path);
}

inline GridFile load_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open grid file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("grid file is not valid JSON: " + path + " (" + e.what() + ")");
  }
  try {
    if (j.at("format").get<std::string>() != "idlma-grid")
      throw ConfigError("not a grid file: " + path);
    if (j.at("version").get<int>() != kGridFileVersion)
      throw ConfigError("unsupported grid file version in " + path);
    GridFile grids;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gauss") {
      grids.kind = SourceModel::Kind::gauss;
      grids.sigma = detail::grids_from_json(j.at("sigma"));
    } else if (kind == "eb") {
      grids.kind = SourceModel::Kind::eb;
      grids.r = detail::grids_from_json(j.at("r"));
      grids.nu = detail::grids_from_json(j.at("nu"));
    } else {
      throw ConfigError("grid file: unknown kind '" + kind + "'");
    }
    const auto bins = j.at("bins").get<Eigen::Index>();
    const auto frames = j.at("frames").get<Eigen::Index>();
    const auto sources = j.at("sources").get<int>();
    grids.validate();
    const Grid& head = grids.kind == SourceModel::Kind::gauss ? grids.sigma.front()
                                                              : grids.r.front();
    if (head.rows() != bins)
      throw ConfigError("grid file: declared bins axis does not match the stored grids");
    if (head.cols() != frames)
      throw ConfigError("grid file: declared frames axis does not match the stored grids");
    if (grids.sources() != sources)
      throw ConfigError("grid file: declared sources axis does not match the stored grids");
    return grids;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed grid file: ") + e.what());
  }
}

/// Static providers (constant across refreshes) backed by the stored grids.
inline std::vector<SourceModelPtr> static_models_from_grid_file(const GridFile& grids) {
  grids.validate();
  std::vector<SourceModelPtr> models;
  const int N = grids.sources();
  for (int n = 0; n < N; ++n) {
    if (grids.kind == SourceModel::Kind::gauss)
      models.push_back(StaticGridModel::gauss(grids.sigma[static_cast<size_t>(n)]));
    else
      models.push_back(StaticGridModel::eb(grids.r[static_cast<size_t>(n)],
                                           grids.nu[static_cast<size_t>(n)]));
  }
  return models;
}

}  // namespace idlma
