#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "xferlens/core_data.hpp"
#include "xferlens/numerics.hpp"

namespace xferlens::testing {

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

inline Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

/// Three-letter codes "xaa", "xab", ...
inline LangId lang_code(std::size_t i) {
  std::string s = "x";
  s += static_cast<char>('a' + (i / 26) % 26);
  s += static_cast<char>('a' + i % 26);
  return LangId(s);
}

struct PlantedOptions {
  std::size_t num_tasks = 4;
  std::size_t num_langs = 20;
  /// Task 0 keeps only this many targets (0 = all).
  std::size_t small_task_langs = 0;
  double noise = 0.01;
  /// Per-task intercept spread; 0 = identical generator for every task.
  double task_offset = 0.0;
  std::uint64_t seed = 1;
};

/// y = 0.5 + w'z + eps with z the centered raw features and w shared by all
/// tasks. Targets alternate between resource classes 5 and 1. Pivot "en".
inline Dataset planted_dataset(const PlantedOptions& o) {
  Rng rng(o.seed);
  Dataset ds;
  const LangId en("en");
  std::vector<double> w(kNumFeatures);
  for (auto& v : w) v = rng.uniform(-0.15, 0.15);
  ds.meta[en] = {en, 5, 1e9};
  for (std::size_t l = 0; l < o.num_langs; ++l) {
    const LangId t = lang_code(l);
    FeatureVector fv{en, t, {}};
    const double size = rng.uniform(5.0, 9.0);
    fv.set(Feature::kOsw, rng.uniform(0, 1));
    fv.set(Feature::kSsyn, rng.uniform(0, 1));
    fv.set(Feature::kSpho, rng.uniform(0, 1));
    fv.set(Feature::kSgen, rng.uniform(0, 1));
    fv.set(Feature::kDgeo, rng.uniform(0, 1));
    fv.set(Feature::kSize, size);
    fv.set(Feature::kWmrr, rng.uniform(0.05, 1));
    fv.set(Feature::kFert, rng.uniform(1, 2));
    fv.set(Feature::kPcw, rng.uniform(0, 1));
    ds.features[{en, t}] = fv;
    ds.meta[t] = {t, l % 2 == 0 ? 5 : 1, std::pow(10.0, size)};
  }
  static constexpr std::array<double, kNumFeatures> centers = {0.5, 0.5, 0.5, 0.5, 0.5,
                                                                7.0, 0.5, 1.5, 0.5};
  static constexpr std::array<double, kNumFeatures> spread = {1, 1, 1, 1, 1, 0.5, 1, 1, 1};
  for (std::size_t k = 0; k < o.num_tasks; ++k) {
    const TaskId task("task" + std::to_string(k));
    ds.tasks.insert(task);
    const double offset = o.task_offset * rng.uniform(-1, 1);
    const std::size_t n = (k == 0 && o.small_task_langs > 0) ? o.small_task_langs : o.num_langs;
    for (std::size_t l = 0; l < n; ++l) {
      const LangId t = lang_code(l);
      const auto& fv = ds.features[{en, t}];
      double y = 0.5 + offset + o.noise * rng.normal();
      for (std::size_t j = 0; j < kNumFeatures; ++j)
        y += w[j] * (*fv.values[j] - centers[j]) * spread[j];
      ds.records.push_back({"mmlm", task, en, t, std::clamp(y, 0.0, 1.0)});
    }
  }
  return ds;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xferlens_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

struct DatasetFiles {
  std::string scores;
  std::string features;
  std::string meta;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline DatasetFiles write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  DatasetFiles f{(dir / "scores.csv").string(), (dir / "features.csv").string(),
                 (dir / "meta.csv").string()};
  std::ostringstream s, x, m;
  write_scores(s, ds.records);
  write_features(x, ds.features);
  write_meta(m, ds.meta);
  write_text(f.scores, s.str());
  write_text(f.features, x.str());
  write_text(f.meta, m.str());
  return f;
}

}  // namespace xferlens::testing
