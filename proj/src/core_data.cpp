#include "xferlens/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <regex>
#include <sstream>

#include "xferlens/csv.hpp"
#include "xferlens/errors.hpp"

namespace xferlens {

namespace {

const std::vector<std::string> kScoresHeader = {"model", "task", "pivot", "target", "score"};
const std::vector<std::string> kFeaturesHeader = {"pivot", "target", "o_sw",  "s_syn", "s_pho",
                                                  "s_gen", "d_geo",  "size",  "wmrr",  "fert",
                                                  "pcw"};
const std::vector<std::string> kMetaHeader = {"lang", "class", "pretrain_words"};

constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "o_sw", "s_syn", "s_pho", "s_gen", "d_geo", "size", "wmrr", "fert", "pcw"};

}  // namespace

bool LangId::is_valid(std::string_view code) {
  static const std::regex re("[a-z]{2,3}(-[a-z0-9]+)*");
  return std::regex_match(code.begin(), code.end(), re);
}

LangId::LangId(std::string code) : code_(std::move(code)) {
  if (!is_valid(code_)) throw InputError("invalid language code '" + code_ + "'");
}

TaskId::TaskId(std::string name) : name_(std::move(name)) {
  if (name_.empty()) throw InputError("empty task name");
}

std::string_view feature_name(Feature f) { return kFeatureNames[index_of(f)]; }

std::optional<Feature> parse_feature(std::string_view name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i)
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  return std::nullopt;
}

std::set<Feature> FeatureVector::missing_mask() const {
  std::set<Feature> out;
  for (Feature f : kAllFeatures)
    if (is_missing(f)) out.insert(f);
  return out;
}

void validate_feature_vector(const FeatureVector& fv) {
  auto fail = [&](Feature f, const char* rule) {
    throw InputError("feature " + std::string(feature_name(f)) + " for (" + fv.pivot.str() + "," +
                     fv.target.str() + ") = " + csv::format_double(*fv.get(f)) + " violates " +
                     rule);
  };
  for (Feature f : kAllFeatures) {
    auto v = fv.get(f);
    if (!v) continue;
    if (!std::isfinite(*v)) fail(f, "finiteness");
    switch (f) {
      case Feature::kOsw:
      case Feature::kSsyn:
      case Feature::kSpho:
      case Feature::kSgen:
      case Feature::kPcw:
        if (*v < 0.0 || *v > 1.0) fail(f, "range [0,1]");
        break;
      case Feature::kDgeo:
        if (*v < 0.0) fail(f, ">= 0");
        break;
      case Feature::kFert:
        if (*v < 1.0) fail(f, ">= 1");
        break;
      case Feature::kWmrr:
        if (*v <= 0.0 || *v > 1.0) fail(f, "range (0,1]");
        break;
      case Feature::kSize:
        break;
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<PerformanceRecord> Dataset::records_for(const TaskId& task) const {
  std::vector<PerformanceRecord> out;
  for (const auto& r : records)
    if (r.task == task) out.push_back(r);
  return out;
}

std::set<LangId> Dataset::targets_of(const TaskId& task) const {
  std::set<LangId> out;
  for (const auto& r : records)
    if (r.task == task) out.insert(r.target);
  return out;
}

std::set<std::string> Dataset::models() const {
  std::set<std::string> out;
  for (const auto& r : records) out.insert(r.model);
  return out;
}

const FeatureVector& Dataset::features_of(const LangPair& pair) const {
  auto it = features.find(pair);
  if (it == features.end())
    throw InputError("no feature row for pair (" + pair.first.str() + "," + pair.second.str() +
                     ")");
  return it->second;
}

void Dataset::validate() const {
  std::set<std::tuple<std::string, TaskId, LangId, LangId>> seen;
  for (const auto& r : records) {
    const std::string ctx = "record (" + r.model + "," + r.task.str() + "," + r.pivot.str() +
                            "," + r.target.str() + "): ";
    if (r.pivot == r.target) throw InputError(ctx + "pivot equals target");
    if (!(r.score >= 0.0 && r.score <= 1.0)) throw InputError(ctx + "score out of range");
    if (!seen.emplace(r.model, r.task, r.pivot, r.target).second)
      throw InputError(ctx + "duplicate record");
    if (!tasks.contains(r.task)) throw InputError(ctx + "task not registered");
    if (!features.contains(r.pair())) throw InputError(ctx + "no matching feature row");
  }
  for (const auto& [pair, fv] : features) {
    if (fv.pivot != pair.first || fv.target != pair.second)
      throw InputError("feature map key does not match its vector");
    validate_feature_vector(fv);
  }
}

Dataset filter_model(const Dataset& ds, const std::string& model) {
  Dataset out;
  out.features = ds.features;
  out.meta = ds.meta;
  for (const auto& r : ds.records)
    if (r.model == model) {
      out.records.push_back(r);
      out.tasks.insert(r.task);
    }
  return out;
}

Dataset filter_tasks(const Dataset& ds, const std::set<TaskId>& keep) {
  Dataset out;
  out.features = ds.features;
  out.meta = ds.meta;
  for (const auto& t : ds.tasks)
    if (keep.contains(t)) out.tasks.insert(t);
  for (const auto& r : ds.records)
    if (keep.contains(r.task)) out.records.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

LangId lang_cell(const csv::Table& t, const csv::Row& r, std::size_t col) {
  if (!LangId::is_valid(r.cells[col]))
    throw InputError(t.path, r.line,
                     "column '" + t.header[col] + "': invalid language code '" + r.cells[col] +
                         "'");
  return LangId(r.cells[col]);
}

std::vector<PerformanceRecord> parse_scores(const csv::Table& t) {
  csv::require_header(t, kScoresHeader, {"scale"});
  const bool has_scale = t.header.size() == kScoresHeader.size() + 1;
  std::vector<PerformanceRecord> out;
  std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
  for (const auto& r : t.rows) {
    PerformanceRecord rec;
    rec.model = r.cells[0];
    if (rec.model.empty()) throw InputError(t.path, r.line, "empty model name");
    if (r.cells[1].empty()) throw InputError(t.path, r.line, "empty task name");
    rec.task = TaskId(r.cells[1]);
    rec.pivot = lang_cell(t, r, 2);
    rec.target = lang_cell(t, r, 3);
    double score = csv::parse_double_or_throw(t, r, 4);
    if (has_scale) {
      const std::string& scale = r.cells[5];
      if (scale == "percent") {
        score /= 100.0;
      } else if (!scale.empty() && scale != "unit") {
        throw InputError(t.path, r.line, "scale must be 'unit' or 'percent', found '" + scale + "'");
      }
    }
    if (!(score >= 0.0 && score <= 1.0))
      throw InputError(t.path, r.line, "score out of range: " + r.cells[4]);
    rec.score = score;
    if (rec.pivot == rec.target) throw InputError(t.path, r.line, "pivot equals target");
    if (!seen.emplace(rec.model, rec.task.str(), rec.pivot.str(), rec.target.str()).second)
      throw InputError(t.path, r.line, "duplicate record");
    out.push_back(std::move(rec));
  }
  return out;
}

std::map<LangPair, FeatureVector> parse_features(const csv::Table& t) {
  csv::require_header(t, kFeaturesHeader);
  std::map<LangPair, FeatureVector> out;
  for (const auto& r : t.rows) {
    FeatureVector fv;
    fv.pivot = lang_cell(t, r, 0);
    fv.target = lang_cell(t, r, 1);
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      const std::string& cell = r.cells[2 + i];
      if (cell.empty()) continue;
      fv.values[i] = csv::parse_double_or_throw(t, r, 2 + i);
    }
    try {
      validate_feature_vector(fv);
    } catch (const InputError& e) {
      throw InputError(t.path, r.line, e.what());
    }
    LangPair key{fv.pivot, fv.target};
    if (!out.emplace(key, std::move(fv)).second)
      throw InputError(t.path, r.line, "duplicate feature row");
  }
  return out;
}

std::map<LangId, LanguageMeta> parse_meta(const csv::Table& t) {
  csv::require_header(t, kMetaHeader);
  std::map<LangId, LanguageMeta> out;
  for (const auto& r : t.rows) {
    LanguageMeta m;
    m.lang = lang_cell(t, r, 0);
    const long long cls = csv::parse_int_or_throw(t, r, 1);
    if (cls < 0 || cls > 5) throw InputError(t.path, r.line, "class must be in 0..5");
    m.resource_class = static_cast<int>(cls);
    m.pretrain_words = csv::parse_double_or_throw(t, r, 2);
    if (!(m.pretrain_words > 0.0))
      throw InputError(t.path, r.line, "pretrain_words must be positive");
    if (!out.emplace(m.lang, m).second) throw InputError(t.path, r.line, "duplicate language");
  }
  return out;
}

csv::Table open_table(const std::string& path) { return csv::read_file(path); }

}  // namespace

std::vector<PerformanceRecord> read_scores(std::istream& in, const std::string& name) {
  return parse_scores(csv::read_stream(in, name));
}

std::map<LangPair, FeatureVector> read_features(std::istream& in, const std::string& name) {
  return parse_features(csv::read_stream(in, name));
}

std::map<LangId, LanguageMeta> read_meta(std::istream& in, const std::string& name) {
  return parse_meta(csv::read_stream(in, name));
}

Dataset load_dataset(const std::string& scores_path, const std::string& features_path,
                     const std::optional<std::string>& meta_path) {
  const csv::Table scores = open_table(scores_path);
  Dataset ds;
  ds.records = parse_scores(scores);
  ds.features = parse_features(open_table(features_path));
  if (meta_path) ds.meta = parse_meta(open_table(*meta_path));
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    ds.tasks.insert(rec.task);
    if (!ds.features.contains(rec.pair()))
      throw InputError(scores_path, scores.rows[i].line,
                       "no feature row for (" + rec.pivot.str() + "," + rec.target.str() +
                           ") in " + features_path);
  }
  ds.validate();
  return ds;
}

void write_scores(std::ostream& out, const std::vector<PerformanceRecord>& records) {
  out << "model,task,pivot,target,score\n";
  for (const auto& r : records)
    out << csv::quote(r.model) << ',' << csv::quote(r.task.str()) << ',' << r.pivot.str() << ','
        << r.target.str() << ',' << csv::format_double(r.score) << '\n';
}

void write_features(std::ostream& out, const std::map<LangPair, FeatureVector>& features) {
  for (std::size_t i = 0; i < kFeaturesHeader.size(); ++i)
    out << (i ? "," : "") << kFeaturesHeader[i];
  out << '\n';
  for (const auto& [pair, fv] : features) {
    out << fv.pivot.str() << ',' << fv.target.str();
    for (const auto& v : fv.values) {
      out << ',';
      if (v) out << csv::format_double(*v);
    }
    out << '\n';
  }
}

void write_meta(std::ostream& out, const std::map<LangId, LanguageMeta>& meta) {
  out << "lang,class,pretrain_words\n";
  for (const auto& [lang, m] : meta)
    out << lang.str() << ',' << m.resource_class << ',' << csv::format_double(m.pretrain_words)
        << '\n';
}

// ---------------------------------------------------------------------------

namespace {

Dataset empty_like(const Dataset& ds) {
  Dataset out;
  out.features = ds.features;
  out.meta = ds.meta;
  return out;
}

void add(Dataset& ds, const PerformanceRecord& r) {
  ds.records.push_back(r);
  ds.tasks.insert(r.task);
}

}  // namespace

std::vector<Split> make_lolo_splits(const Dataset& ds, const TaskId& eval_task) {
  if (!ds.tasks.contains(eval_task))
    throw InputError("eval task '" + eval_task.str() + "' not in dataset");
  const std::set<LangId> targets = ds.targets_of(eval_task);
  if (targets.size() < 2)
    throw InputError("eval task '" + eval_task.str() + "' has fewer than 2 target languages");
  std::vector<Split> splits;
  for (const LangId& held : targets) {
    Split s{empty_like(ds), empty_like(ds), {held}};
    for (const auto& r : ds.records) {
      if (r.task == eval_task && r.target == held)
        add(s.test, r);
      else
        add(s.train, r);
    }
    splits.push_back(std::move(s));
  }
  return splits;
}

Split make_llro_split(const Dataset& ds, const TaskId& eval_task) {
  if (!ds.tasks.contains(eval_task))
    throw InputError("eval task '" + eval_task.str() + "' not in dataset");
  Split s{empty_like(ds), empty_like(ds), {}};
  std::set<LangId> held;
  for (const LangId& t : ds.targets_of(eval_task)) {
    auto it = ds.meta.find(t);
    if (it == ds.meta.end())
      throw InputError("missing taxonomy entry for language '" + t.str() + "'");
    if (it->second.resource_class <= kLowResourceMaxClass) held.insert(t);
  }
  for (const auto& r : ds.records) {
    if (r.task == eval_task && held.contains(r.target))
      add(s.test, r);
    else
      add(s.train, r);
  }
  s.held_out.assign(held.begin(), held.end());
  if (s.test.records.empty())
    throw InputError("LLRO split for '" + eval_task.str() + "': empty test side");
  if (s.train.records_for(eval_task).empty())
    throw InputError("LLRO split for '" + eval_task.str() + "': empty train side");
  return s;
}

void check_split_integrity(const Dataset& full, const Split& split, const TaskId& eval_task) {
  const std::set<LangId> held(split.held_out.begin(), split.held_out.end());
  for (const auto& r : split.train.records)
    if (r.task == eval_task && held.contains(r.target))
      throw Error("leakage: eval-task record for held-out language '" + r.target.str() +
                  "' in train");
  for (const auto& r : split.test.records)
    if (r.task != eval_task || !held.contains(r.target))
      throw Error("test side contains a record outside the held-out eval-task set");
  for (const TaskId& t : full.tasks) {
    if (t == eval_task) continue;
    if (split.train.records_for(t).size() != full.records_for(t).size())
      throw Error("helper task '" + t.str() + "' not retained at full size");
  }
  if (split.train.records.size() + split.test.records.size() != full.records.size())
    throw Error("split does not partition the dataset");
}

// ---------------------------------------------------------------------------

Scaler Scaler::fit(std::span<const FeatureVector> train) {
  if (train.empty()) throw InputError("standardize: empty training set");
  Scaler s;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& fv : train)
      if (fv.values[j]) {
        sum += *fv.values[j];
        ++n;
      }
    if (n == 0) continue;  // never observed: mean 0, scale 0
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& fv : train)
      if (fv.values[j]) ss += (*fv.values[j] - mean) * (*fv.values[j] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    s.mean_[j] = mean;
    s.scale_[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 0.0;
  }
  return s;
}

std::vector<double> Scaler::impute(const FeatureVector& fv) const {
  std::vector<double> out(kNumFeatures);
  for (std::size_t j = 0; j < kNumFeatures; ++j) out[j] = fv.values[j].value_or(mean_[j]);
  return out;
}

std::vector<double> Scaler::transform(const FeatureVector& fv) const {
  std::vector<double> out(kNumFeatures);
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (scale_[j] == 0.0) continue;
    out[j] = (fv.values[j].value_or(mean_[j]) - mean_[j]) / scale_[j];
  }
  return out;
}

Matrix Scaler::transform(std::span<const FeatureVector> rows) const {
  Matrix m(rows.size(), kNumFeatures);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto v = transform(rows[i]);
    std::copy(v.begin(), v.end(), m.row(i).begin());
  }
  return m;
}

Standardized standardize(std::span<const FeatureVector> train,
                         std::span<const FeatureVector> apply_to) {
  Standardized out;
  out.scaler = Scaler::fit(train);
  out.train = out.scaler.transform(train);
  out.applied = out.scaler.transform(apply_to);
  return out;
}

std::vector<FeatureVector> feature_rows(const Dataset& ds,
                                        std::span<const PerformanceRecord> records) {
  std::vector<FeatureVector> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(ds.features_of(r.pair()));
  return out;
}

}  // namespace xferlens
