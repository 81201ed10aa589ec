#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xferlens/numerics.hpp"

namespace xferlens {

/// ISO 639 language code, lowercase, optionally with subtags ("zh-hans").
class LangId {
 public:
  LangId() = default;
  explicit LangId(std::string code);

  const std::string& str() const { return code_; }
  auto operator<=>(const LangId&) const = default;

  static bool is_valid(std::string_view code);

 private:
  std::string code_;
};

class TaskId {
 public:
  TaskId() = default;
  explicit TaskId(std::string name);

  const std::string& str() const { return name_; }
  auto operator<=>(const TaskId&) const = default;

 private:
  std::string name_;
};

using LangPair = std::pair<LangId, LangId>;  // (pivot, target)

struct PerformanceRecord {
  std::string model;  // the multilingual model the score was measured on
  TaskId task;
  LangId pivot;
  LangId target;
  double score = 0.0;  // in [0, 1]

  LangPair pair() const { return {pivot, target}; }
  friend bool operator==(const PerformanceRecord&, const PerformanceRecord&) = default;
};

enum class Feature : std::size_t { kOsw, kSsyn, kSpho, kSgen, kDgeo, kSize, kWmrr, kFert, kPcw };
inline constexpr std::size_t kNumFeatures = 9;
inline constexpr std::array<Feature, kNumFeatures> kAllFeatures = {
    Feature::kOsw,  Feature::kSsyn, Feature::kSpho, Feature::kSgen, Feature::kDgeo,
    Feature::kSize, Feature::kWmrr, Feature::kFert, Feature::kPcw};

std::string_view feature_name(Feature f);
std::optional<Feature> parse_feature(std::string_view name);
inline std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }

/// Feature values for one (pivot, target) pair. An empty optional marks the
/// feature as missing, so a name can never be both present and missing.
struct FeatureVector {
  LangId pivot;
  LangId target;
  std::array<std::optional<double>, kNumFeatures> values{};

  bool is_missing(Feature f) const { return !values[index_of(f)].has_value(); }
  std::optional<double> get(Feature f) const { return values[index_of(f)]; }
  void set(Feature f, std::optional<double> v) { values[index_of(f)] = v; }
  std::set<Feature> missing_mask() const;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Throws InputError if any present value violates its feature's range.
void validate_feature_vector(const FeatureVector& fv);

struct LanguageMeta {
  LangId lang;
  int resource_class = 0;  // 0 (low) .. 5 (high)
  double pretrain_words = 1.0;

  friend bool operator==(const LanguageMeta&, const LanguageMeta&) = default;
};

struct Dataset {
  std::vector<PerformanceRecord> records;
  std::map<LangPair, FeatureVector> features;
  std::map<LangId, LanguageMeta> meta;
  std::set<TaskId> tasks;

  /// Records of one task, in dataset order.
  std::vector<PerformanceRecord> records_for(const TaskId& task) const;
  std::set<LangId> targets_of(const TaskId& task) const;
  std::set<std::string> models() const;
  const FeatureVector& features_of(const LangPair& pair) const;

  /// Checks every invariant: zero-shot pairs, unique records, scores in
  /// range, features present for every record.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Restricts a dataset to the records of one multilingual model.
Dataset filter_model(const Dataset& ds, const std::string& model);
/// Restricts a dataset to a subset of tasks.
Dataset filter_tasks(const Dataset& ds, const std::set<TaskId>& keep);

Dataset load_dataset(const std::string& scores_path, const std::string& features_path,
                     const std::optional<std::string>& meta_path = std::nullopt);

std::vector<PerformanceRecord> read_scores(std::istream& in, const std::string& name);
std::map<LangPair, FeatureVector> read_features(std::istream& in, const std::string& name);
std::map<LangId, LanguageMeta> read_meta(std::istream& in, const std::string& name);

void write_scores(std::ostream& out, const std::vector<PerformanceRecord>& records);
void write_features(std::ostream& out, const std::map<LangPair, FeatureVector>& features);
void write_meta(std::ostream& out, const std::map<LangId, LanguageMeta>& meta);

struct Split {
  Dataset train;
  Dataset test;
  std::vector<LangId> held_out;
};

/// One split per target language of `eval_task`. The test side holds that
/// language's eval-task records; train keeps everything else, including the
/// held-out language's records in every helper task.
std::vector<Split> make_lolo_splits(const Dataset& ds, const TaskId& eval_task);

/// Eval-task targets of class <= 3 go to test; classes 4 and 5 stay in
/// train. Helper tasks keep all languages.
Split make_llro_split(const Dataset& ds, const TaskId& eval_task);

inline constexpr int kLowResourceMaxClass = 3;

/// Throws Error if the eval-task records of the held-out languages leak into
/// train, or a helper task was not kept at full size.
void check_split_integrity(const Dataset& full, const Split& split, const TaskId& eval_task);

/// Per-dimension standardization fitted on training rows only. Missing values
/// are imputed with the train mean; constant dimensions map to 0.
class Scaler {
 public:
  Scaler() = default;
  static Scaler fit(std::span<const FeatureVector> train);

  std::vector<double> transform(const FeatureVector& fv) const;
  /// Raw values with missing entries replaced by the train mean.
  std::vector<double> impute(const FeatureVector& fv) const;
  Matrix transform(std::span<const FeatureVector> rows) const;

  const std::array<double, kNumFeatures>& mean() const { return mean_; }
  const std::array<double, kNumFeatures>& scale() const { return scale_; }

  friend bool operator==(const Scaler&, const Scaler&) = default;

 private:
  std::array<double, kNumFeatures> mean_{};
  std::array<double, kNumFeatures> scale_{};  // 0 for constant dimensions
};

struct Standardized {
  Matrix train;
  Matrix applied;
  Scaler scaler;
};

Standardized standardize(std::span<const FeatureVector> train,
                         std::span<const FeatureVector> apply_to);

/// Feature vectors for a list of records, in order.
std::vector<FeatureVector> feature_rows(const Dataset& ds,
                                        std::span<const PerformanceRecord> records);

}  // namespace xferlens
