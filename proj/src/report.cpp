#include <cstdio>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xferlens/csv.hpp"
#include "xferlens/eval.hpp"

namespace xferlens {

using ojson = nlohmann::ordered_json;

namespace {

ojson spec_to_json(const ModelSpec& s) {
  ojson hyper = ojson::object();
  for (const auto& [k, v] : s.hyper) hyper[k] = v;
  return ojson{{"name", format_model_spec(s)},
               {"kind", model_kind_name(s.kind)},
               {"hyper", hyper},
               {"seed", s.seed}};
}

ModelSpec spec_from_json(const ojson& j) {
  ModelSpec s;
  auto k = parse_model_kind(j.at("kind").get<std::string>());
  if (!k) throw InputError("report: unknown model kind");
  s.kind = *k;
  for (const auto& [key, v] : j.at("hyper").items()) s.hyper[key] = v.get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

std::string header_comment(const ReportMeta& m) {
  std::string s = "# config_hash=" + m.config_hash + " seed=" + std::to_string(m.seed);
  if (!m.mmlm.empty()) s += " mmlm=" + m.mmlm;
  return s + "\n";
}

std::string heldout_label(const FoldResult& f) {
  std::string s;
  for (std::size_t i = 0; i < f.held_out.size(); ++i) s += (i ? ";" : "") + f.held_out[i].str();
  return s;
}

}  // namespace

std::string reports_to_json(const std::vector<EvalReport>& reports, const ReportMeta& meta) {
  ojson doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["config_hash"] = meta.config_hash;
  doc["seed"] = meta.seed;
  doc["mmlm"] = meta.mmlm;
  ojson arr = ojson::array();
  for (const auto& r : reports) {
    ojson jr;
    jr["model"] = spec_to_json(r.spec);
    jr["protocol"] = protocol_name(r.protocol);
    jr["macro_mae"] = r.macro_mae;
    jr["low_data_mae"] = r.low_data_mae ? ojson(*r.low_data_mae) : ojson(nullptr);
    jr["low_data_tasks"] = r.low_data_tasks;
    jr["partial"] = !r.failures.empty();
    ojson fails = ojson::object();
    for (const auto& [t, msg] : r.failures) fails[t] = msg;
    jr["failures"] = fails;
    ojson tasks = ojson::array();
    for (const auto& f : r.tasks) {
      ojson jt;
      jt["task"] = f.task.str();
      jt["num_targets"] = f.num_targets;
      jt["mae"] = f.mae;
      ojson folds = ojson::array();
      for (const auto& fold : f.folds) {
        ojson held = ojson::array();
        for (const auto& l : fold.held_out) held.push_back(l.str());
        ojson rows = ojson::array();
        for (const auto& p : fold.rows)
          rows.push_back({{"pivot", p.pivot.str()},
                          {"target", p.target.str()},
                          {"y", p.y},
                          {"yhat", p.yhat},
                          {"abs_err", p.abs_err}});
        folds.push_back({{"held_out", held}, {"rows", rows}});
      }
      jt["folds"] = folds;
      tasks.push_back(jt);
    }
    jr["tasks"] = tasks;
    arr.push_back(jr);
  }
  doc["reports"] = arr;
  return doc.dump(2) + "\n";
}

std::vector<EvalReport> reports_from_json(const std::string& text, ReportMeta* meta) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("report: invalid JSON: ") + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kReportSchemaVersion)
      throw InputError("report: unsupported schema_version");
    if (meta) {
      meta->config_hash = doc.at("config_hash").get<std::string>();
      meta->seed = doc.at("seed").get<std::uint64_t>();
      meta->mmlm = doc.at("mmlm").get<std::string>();
    }
    std::vector<EvalReport> out;
    for (const auto& jr : doc.at("reports")) {
      EvalReport r;
      r.spec = spec_from_json(jr.at("model"));
      auto p = parse_protocol(jr.at("protocol").get<std::string>());
      if (!p) throw InputError("report: unknown protocol");
      r.protocol = *p;
      r.macro_mae = jr.at("macro_mae").get<double>();
      if (!jr.at("low_data_mae").is_null()) r.low_data_mae = jr.at("low_data_mae").get<double>();
      r.low_data_tasks = jr.at("low_data_tasks").get<std::size_t>();
      for (const auto& [t, msg] : jr.at("failures").items()) r.failures[t] = msg.get<std::string>();
      for (const auto& jt : jr.at("tasks")) {
        TaskFragment f;
        f.spec = r.spec;
        f.protocol = r.protocol;
        f.task = TaskId(jt.at("task").get<std::string>());
        f.num_targets = jt.at("num_targets").get<std::size_t>();
        f.mae = jt.at("mae").get<double>();
        for (const auto& jf : jt.at("folds")) {
          FoldResult fold;
          for (const auto& l : jf.at("held_out")) fold.held_out.emplace_back(l.get<std::string>());
          for (const auto& jp : jf.at("rows"))
            fold.rows.push_back({LangId(jp.at("pivot").get<std::string>()),
                                 LangId(jp.at("target").get<std::string>()),
                                 jp.at("y").get<double>(), jp.at("yhat").get<double>(),
                                 jp.at("abs_err").get<double>()});
          f.folds.push_back(std::move(fold));
        }
        r.tasks.push_back(std::move(f));
      }
      out.push_back(std::move(r));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("report: malformed document: ") + e.what());
  }
}

void write_predictions_csv(std::ostream& out, const std::vector<EvalReport>& reports,
                           const ReportMeta& meta) {
  out << header_comment(meta);
  out << "model,protocol,task,heldout,pivot,target,y,yhat,abs_err\n";
  for (const auto& r : reports) {
    const std::string model = csv::quote(format_model_spec(r.spec));
    for (const auto& f : r.tasks)
      for (const auto& fold : f.folds)
        for (const auto& p : fold.rows) {
          const std::string held = r.protocol == Protocol::kLolo ? heldout_label(fold)
                                                                 : p.target.str();
          out << model << ',' << protocol_name(r.protocol) << ',' << csv::quote(f.task.str())
              << ',' << held << ',' << p.pivot.str() << ',' << p.target.str() << ','
              << csv::format_double(p.y) << ',' << csv::format_double(p.yhat) << ','
              << csv::format_double(p.abs_err) << '\n';
        }
  }
}

std::string render_table(const std::vector<EvalReport>& reports, const ReportMeta& meta) {
  std::ostringstream os;
  os << header_comment(meta);
  os << "# MAE x 100\n";
  auto cell = [](std::optional<double> v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
    return std::string(buf);
  };
  for (Protocol p : {Protocol::kLolo, Protocol::kLlro}) {
    std::vector<const EvalReport*> cols;
    std::set<TaskId> tasks;
    for (const auto& r : reports) {
      if (r.protocol != p) continue;
      cols.push_back(&r);
      for (const auto& f : r.tasks) tasks.insert(f.task);
      for (const auto& [t, msg] : r.failures) tasks.insert(TaskId(t));
    }
    if (cols.empty()) continue;

    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> head{"Task", "|T|"};
    for (const auto* r : cols) head.push_back(format_model_spec(r->spec));
    grid.push_back(head);
    for (const auto& t : tasks) {
      std::vector<std::string> row{t.str(), "-"};
      for (const auto* r : cols) {
        std::string v = r->failures.contains(t.str()) ? "FAIL" : "-";
        for (const auto& f : r->tasks)
          if (f.task == t) {
            v = cell(f.mae);
            row[1] = std::to_string(f.num_targets);
          }
        row.push_back(v);
      }
      grid.push_back(row);
    }
    std::vector<std::string> avg{"Average", ""}, low{"Average (|T| <= 10)", ""};
    for (const auto* r : cols) {
      avg.push_back(r->tasks.empty() ? "-" : cell(r->macro_mae));
      low.push_back(cell(r->low_data_mae));
    }
    grid.push_back(avg);
    grid.push_back(low);

    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& row : grid)
      for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

    os << "\n[" << protocol_name(p) << "]\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (i == grid.size() - 2) {
        for (std::size_t c = 0; c < width.size(); ++c)
          os << (c ? "  " : "") << std::string(width[c], '-');
        os << '\n';
      }
      for (std::size_t c = 0; c < grid[i].size(); ++c) {
        const auto& s = grid[i][c];
        const std::string pad(width[c] - s.size(), ' ');
        if (c == 0)
          os << s << pad;
        else
          os << "  " << pad << s;
      }
      os << '\n';
    }
  }
  return os.str();
}

void write_mae_plot_csv(std::ostream& out, const std::vector<EvalReport>& reports,
                        const ReportMeta& meta) {
  out << header_comment(meta);
  out << "protocol,task,model,mae\n";
  for (const auto& r : reports)
    for (const auto& f : r.tasks)
      out << protocol_name(r.protocol) << ',' << csv::quote(f.task.str()) << ','
          << csv::quote(format_model_spec(r.spec)) << ',' << csv::format_double(f.mae) << '\n';
}

void write_helper_scaling_csv(std::ostream& out, const std::vector<HelperScalingCurve>& curves,
                              const ReportMeta& meta) {
  out << header_comment(meta);
  out << "model,protocol,task,num_helpers,mae,scaled_mae\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << csv::quote(format_model_spec(c.spec)) << ',' << protocol_name(c.protocol) << ','
          << csv::quote(c.task.str()) << ',' << p.num_helpers << ','
          << csv::format_double(p.mae) << ',' << csv::format_double(p.scaled_mae) << '\n';
}

}  // namespace xferlens
