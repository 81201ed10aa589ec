#include "xferlens/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "xferlens/csv.hpp"
#include "xferlens/errors.hpp"
#include "xferlens/eval.hpp"
#include "xferlens/explain.hpp"
#include "xferlens/features.hpp"

namespace fs = std::filesystem;

namespace xferlens {

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

constexpr int kConfigSchemaVersion = 1;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path, 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(path.string(), 0, "cannot write file");
  out << content;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// key = value lines; '#' comments. Relative paths resolve against the file's
// directory.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path, 0, "cannot open config");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t n = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(path, n, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (kv.contains(key)) throw InputError(path, n, "duplicate key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  auto v = kv.find("schema_version");
  if (v == kv.end() || v->second != std::to_string(kConfigSchemaVersion))
    throw InputError(path, 1, "schema_version = 1 required");
  kv.erase(v);
  static const std::set<std::string> known = {"scores", "features", "meta",  "models", "protocol",
                                              "tasks",  "seed",     "out",   "mmlm",
                                              "helper_scaling"};
  for (const auto& [k, val] : kv)
    if (!known.contains(k)) throw InputError(path, 0, "unknown config key '" + k + "'");
  const fs::path dir = fs::path(path).parent_path();
  for (const char* k : {"scores", "features", "meta", "out"}) {
    auto it = kv.find(k);
    if (it != kv.end() && fs::path(it->second).is_relative())
      it->second = (dir / it->second).lexically_normal().string();
  }
  return kv;
}

struct DataArgs {
  std::string config;
  std::string scores;
  std::string features;
  std::string meta;
  std::string mmlm;
  std::string tasks;
  std::uint64_t seed = 0;
  std::string out;
};

// Flags win over config entries.
void merge_config(DataArgs& a, const std::map<std::string, std::string>& kv,
                  const CLI::App& sub) {
  auto take = [&](std::string& field, const char* key, const char* flag) {
    auto it = kv.find(key);
    if (it != kv.end() && sub.count(flag) == 0) field = it->second;
  };
  take(a.scores, "scores", "--scores");
  take(a.features, "features", "--features");
  take(a.meta, "meta", "--meta");
  take(a.mmlm, "mmlm", "--mmlm");
  take(a.tasks, "tasks", "--task");
  take(a.out, "out", "--out");
  if (auto it = kv.find("seed"); it != kv.end() && sub.count("--seed") == 0) {
    auto v = csv::parse_double(it->second);
    if (!v || *v < 0 || *v != std::floor(*v)) throw InputError("config: seed must be an integer");
    a.seed = static_cast<std::uint64_t>(*v);
  }
}

Dataset load_single_mmlm(const DataArgs& a, std::string& mmlm, std::ostream& err) {
  if (a.scores.empty() || a.features.empty())
    throw InputError("--scores and --features are required");
  Dataset ds = load_dataset(a.scores, a.features,
                            a.meta.empty() ? std::nullopt : std::optional<std::string>(a.meta));
  const auto models = ds.models();
  if (!a.mmlm.empty()) {
    if (!models.contains(a.mmlm))
      throw InputError(a.scores, 0, "no records for mmlm '" + a.mmlm + "'");
    ds = filter_model(ds, a.mmlm);
    mmlm = a.mmlm;
  } else if (models.size() > 1) {
    throw InputError(a.scores, 0, "scores cover several multilingual models; pick one with --mmlm");
  } else if (!models.empty()) {
    mmlm = *models.begin();
  }
  (void)err;
  return ds;
}

std::vector<TaskId> resolve_tasks(const Dataset& ds, const std::string& list) {
  std::vector<TaskId> out;
  if (list.empty()) {
    out.assign(ds.tasks.begin(), ds.tasks.end());
    return out;
  }
  for (const auto& t : split_list(list)) {
    TaskId id(t);
    if (!ds.tasks.contains(id)) throw InputError("unknown task '" + t + "'");
    out.push_back(id);
  }
  return out;
}

std::string config_hash(const DataArgs& a, const std::string& extra) {
  std::string blob = slurp(a.scores) + '\x1f' + slurp(a.features) + '\x1f';
  if (!a.meta.empty()) blob += slurp(a.meta);
  blob += '\x1f' + a.mmlm + '\x1f' + a.tasks + '\x1f' + std::to_string(a.seed) + '\x1f' + extra;
  return fnv1a_hex(blob);
}

void add_data_flags(CLI::App* sub, DataArgs& a) {
  sub->add_option("--config", a.config, "key = value config file (schema_version = 1)");
  sub->add_option("--scores", a.scores, "scores CSV: model,task,pivot,target,score[,scale]");
  sub->add_option("--features", a.features, "feature table CSV");
  sub->add_option("--meta", a.meta, "language metadata CSV: lang,class,pretrain_words");
  sub->add_option("--mmlm", a.mmlm, "multilingual model to evaluate");
  sub->add_option("--task", a.tasks, "comma separated eval tasks (default: all)");
  sub->add_option("--seed", a.seed, "random seed");
  sub->add_option("--out", a.out, "output directory");
}

// ---------------------------------------------------------------------------

struct FeatureArgs {
  std::string vocab_dir;
  std::string typology;
  std::string wals;
  std::string meta;
  std::string corpus_stats;
  std::string pivots;
  std::string out;
};

int cmd_features(const FeatureArgs& a, std::ostream& out, std::ostream& err) {
  if (a.out.empty()) throw InputError("--out is required");
  FeatureResources res;
  std::string blob;
  if (!a.vocab_dir.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.vocab_dir))
      if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
      const std::string code = p.stem().string();
      if (!LangId::is_valid(code))
        throw InputError(p.string(), 0, "file name is not a language code");
      res.vocabs.emplace(LangId(code), load_vocab(p.string(), LangId(code)));
      blob += code + slurp(p.string());
    }
  }
  if (!a.typology.empty()) {
    res.typology = load_typology(a.typology);
    blob += slurp(a.typology);
  }
  if (!a.meta.empty()) {
    std::ifstream in(a.meta);
    if (!in) throw InputError(a.meta, 0, "cannot open file");
    res.meta = read_meta(in, a.meta);
    blob += slurp(a.meta);
  }
  if (!a.corpus_stats.empty()) {
    res.tokenization = load_tokenization_stats(a.corpus_stats);
    blob += slurp(a.corpus_stats);
  }
  if (!a.wals.empty() && fs::exists(a.wals)) {
    res.wals = load_wals(a.wals);
    blob += slurp(a.wals);
  } else {
    err << "warning: no WALS table" << (a.wals.empty() ? "" : " at " + a.wals)
        << "; wmrr will be missing\n";
  }
  std::set<LangId> pivots;
  for (const auto& p : split_list(a.pivots)) pivots.insert(LangId(p));
  const auto langs = res.languages();
  if (langs.size() < 2) throw InputError("need resources for at least 2 languages");
  const auto table = build_feature_table(res, directed_pairs(langs, pivots));

  const std::string hash = fnv1a_hex(blob + '\x1f' + a.pivots);
  fs::create_directories(a.out);
  std::ostringstream os;
  os << "# config_hash=" << hash << " seed=0\n";
  write_features(os, table);
  write_file(fs::path(a.out) / "features.csv", os.str());

  // coverage: present feature values per target language
  std::map<LangId, std::pair<std::size_t, std::size_t>> cov;
  for (const auto& [pair, fv] : table) {
    auto& c = cov[pair.second];
    for (const auto& v : fv.values) {
      c.second += 1;
      if (v) c.first += 1;
    }
  }
  out << table.size() << " pair rows written to " << (fs::path(a.out) / "features.csv").string()
      << "\n";
  for (const auto& [lang, c] : cov)
    out << "  " << lang.str() << ": " << c.first << "/" << c.second << " feature values\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  DataArgs data;
  std::string models;
  std::string protocol;
  bool helper_scaling = false;
};

int cmd_evaluate(EvalArgs a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (!a.data.config.empty()) {
    const auto kv = read_config(a.data.config);
    merge_config(a.data, kv, sub);
    if (auto it = kv.find("models"); it != kv.end() && sub.count("--models") == 0)
      a.models = it->second;
    if (auto it = kv.find("protocol"); it != kv.end() && sub.count("--protocol") == 0)
      a.protocol = it->second;
    if (auto it = kv.find("helper_scaling"); it != kv.end() && sub.count("--helper-scaling") == 0)
      a.helper_scaling = it->second == "true" || it->second == "1";
  }
  if (a.data.out.empty()) throw InputError("--out is required");
  if (a.models.empty()) throw InputError("--models is required");
  std::vector<ModelSpec> specs;
  try {
    for (const auto& m : split_list(a.models)) specs.push_back(parse_model_spec(m, a.data.seed));
  } catch (const UsageError& e) {
    throw InputError(e.what());
  }
  std::vector<Protocol> protocols;
  for (const auto& p : split_list(a.protocol.empty() ? "lolo" : a.protocol)) {
    auto pr = parse_protocol(p);
    if (!pr) throw InputError("unknown protocol '" + p + "' (lolo, llro)");
    protocols.push_back(*pr);
  }

  ReportMeta meta;
  const Dataset ds = load_single_mmlm(a.data, meta.mmlm, err);
  const auto tasks = resolve_tasks(ds, a.data.tasks);
  std::string canon;
  for (const auto& s : specs) canon += format_model_spec(s) + ";";
  for (auto p : protocols) canon += std::string(protocol_name(p)) + ";";
  canon += a.helper_scaling ? "hs" : "";
  meta.config_hash = config_hash(a.data, canon);
  meta.seed = a.data.seed;

  RunOptions ro;
  ro.threads = threads_from_env();
  std::vector<EvalReport> reports;
  std::vector<HelperScalingCurve> curves;
  bool partial = false;
  for (const auto& spec : specs) {
    for (Protocol p : protocols) {
      std::vector<TaskFragment> frags;
      std::map<std::string, std::string> failures;
      for (const auto& t : tasks) {
        try {
          frags.push_back(p == Protocol::kLolo ? run_lolo(ds, spec, t, ro)
                                               : run_llro(ds, spec, t, ro));
        } catch (const FitError& e) {
          failures[t.str()] = e.what();
          err << "error: " << e.what() << "\n";
        }
        if (a.helper_scaling && uses_helper_tasks(spec.kind) && spec.kind != ModelKind::kAat) {
          try {
            curves.push_back({spec, p, t, helper_scaling(ds, spec, t, p, ro)});
          } catch (const FitError& e) {
            failures[t.str() + " (helper scaling)"] = e.what();
            err << "error: " << e.what() << "\n";
          }
        }
      }
      EvalReport rep = aggregate(std::move(frags));
      rep.spec = spec;
      rep.protocol = p;
      rep.failures = std::move(failures);
      partial = partial || !rep.failures.empty();
      reports.push_back(std::move(rep));
    }
  }

  const fs::path dir(a.data.out);
  fs::create_directories(dir);
  write_file(dir / "report.json", reports_to_json(reports, meta));
  std::ostringstream pred, plot;
  write_predictions_csv(pred, reports, meta);
  write_mae_plot_csv(plot, reports, meta);
  write_file(dir / "predictions.csv", pred.str());
  write_file(dir / "mae_by_task.csv", plot.str());
  const std::string table = render_table(reports, meta);
  write_file(dir / "table.txt", table);
  if (a.helper_scaling) {
    std::ostringstream hs;
    write_helper_scaling_csv(hs, curves, meta);
    write_file(dir / "helper_scaling.csv", hs.str());
  }
  out << table;
  if (partial) {
    err << "some cells failed; results are partial\n";
    return kExitPartialFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExplainArgs {
  DataArgs data;
  std::string model;
  std::string method;
  int repeats = 5;
};

int cmd_explain(ExplainArgs a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (!a.data.config.empty()) {
    const auto kv = read_config(a.data.config);
    merge_config(a.data, kv, sub);
    if (auto it = kv.find("models"); it != kv.end() && sub.count("--models") == 0)
      a.model = it->second;
  }
  if (a.data.out.empty()) throw InputError("--out is required");
  const auto models = split_list(a.model);
  if (models.size() != 1) throw InputError("--models must name exactly one model");
  ModelSpec spec;
  try {
    spec = parse_model_spec(models.front(), a.data.seed);
  } catch (const UsageError& e) {
    throw InputError(e.what());
  }
  AttributionMethod method =
      is_linear(spec.kind) ? AttributionMethod::kLinearShap : AttributionMethod::kPermutation;
  if (!a.method.empty()) {
    auto m = parse_attribution_method(a.method);
    if (!m) throw InputError("unknown method '" + a.method + "' (linear-shap, permutation)");
    method = *m;
  }
  if (method == AttributionMethod::kLinearShap && !is_linear(spec.kind)) {
    err << "error: linear-shap is only defined for linear models (lasso, group-lasso); use "
           "--method permutation for '"
        << model_kind_name(spec.kind) << "'\n";
    return kExitInvalidMethod;
  }
  ReportMeta meta;
  const Dataset ds = load_single_mmlm(a.data, meta.mmlm, err);
  const auto tasks = resolve_tasks(ds, a.data.tasks);
  meta.config_hash = config_hash(a.data, format_model_spec(spec) + ";" +
                                             std::string(attribution_method_name(method)) + ";" +
                                             std::to_string(a.repeats));
  meta.seed = a.data.seed;
  std::vector<AttributionRow> rows;
  try {
    rows = explain_tasks(ds, spec, tasks, method, a.repeats);
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPartialFailure;
  }
  const fs::path dir(a.data.out);
  fs::create_directories(dir);
  std::ostringstream os;
  write_attribution_csv(os, rows, meta);
  write_file(dir / "attributions.csv", os.str());
  out << rows.size() << " attribution rows written to " << (dir / "attributions.csv").string()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_report(const std::string& in_path, const std::string& out_dir, std::ostream& out) {
  ReportMeta meta;
  const auto reports = reports_from_json(slurp(in_path), &meta);
  const std::string table = render_table(reports, meta);
  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    std::ostringstream pred, plot;
    write_predictions_csv(pred, reports, meta);
    write_mae_plot_csv(plot, reports, meta);
    write_file(dir / "predictions.csv", pred.str());
    write_file(dir / "mae_by_task.csv", plot.str());
    write_file(dir / "table.txt", table);
  }
  out << table;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"xferlens: cross-lingual transfer performance prediction"};
  app.name("xferlens");
  app.require_subcommand(1);

  FeatureArgs fa;
  auto* feat = app.add_subcommand("features", "compute the pairwise feature table");
  feat->add_option("--vocab-dir", fa.vocab_dir, "directory of <lang>.txt subword vocabularies");
  feat->add_option("--typology", fa.typology, "typology CSV: lang,kind,d0,...");
  feat->add_option("--wals", fa.wals, "WALS CSV: lang,feature_value");
  feat->add_option("--meta", fa.meta, "language metadata CSV");
  feat->add_option("--corpus-stats", fa.corpus_stats,
                   "tokenization CSV: lang,word_count,subword_count,continued_word_count");
  feat->add_option("--pivots", fa.pivots, "comma separated pivot languages (default: all)");
  feat->add_option("--out", fa.out, "output directory");

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "run LOLO / LLRO evaluation");
  add_data_flags(ev, ea.data);
  ev->add_option("--models", ea.models, "comma separated kind[:key=value...] specs");
  ev->add_option("--protocol", ea.protocol, "lolo, llro or lolo,llro");
  ev->add_flag("--helper-scaling", ea.helper_scaling, "also emit MAE vs number of helper tasks");

  ExplainArgs xa;
  auto* ex = app.add_subcommand("explain", "feature attributions per task");
  add_data_flags(ex, xa.data);
  ex->add_option("--models", xa.model, "one kind[:key=value...] spec");
  ex->add_option("--method", xa.method, "linear-shap or permutation");
  ex->add_option("--repeats", xa.repeats, "permutation repeats")->check(CLI::PositiveNumber);

  std::string report_in, report_out;
  auto* rp = app.add_subcommand("report", "re-render outputs from a report JSON");
  rp->add_option("--in", report_in, "report.json")->required();
  rp->add_option("--out", report_out, "output directory");

  std::vector<std::string> argv_store{"xferlens"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (feat->parsed()) return cmd_features(fa, out, err);
    if (ev->parsed()) return cmd_evaluate(ea, *ev, out, err);
    if (ex->parsed()) return cmd_explain(xa, *ex, out, err);
    return cmd_report(report_in, report_out, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPartialFailure;
  }
}

}  // namespace xferlens
