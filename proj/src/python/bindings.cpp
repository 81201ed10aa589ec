#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "xferlens/cli.hpp"
#include "xferlens/errors.hpp"
#include "xferlens/explain.hpp"
#include "xferlens/features.hpp"
#include "xferlens/sparse_linear.hpp"

namespace py = pybind11;
using namespace xferlens;

namespace {

std::vector<TaskId> task_ids(const std::vector<std::string>& names) {
  std::vector<TaskId> out;
  for (const auto& n : names) out.emplace_back(n);
  return out;
}

py::dict lasso_dict(const LassoModel& m) {
  py::dict d;
  d["weights"] = m.weights;
  d["intercept"] = m.intercept;
  d["converged"] = m.converged;
  d["iterations"] = m.iterations;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cross-lingual transfer performance prediction";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  m.def("soft_threshold", &soft_threshold, py::arg("z"), py::arg("gamma"));

  m.def(
      "fit_lasso",
      [](const std::vector<std::vector<double>>& x, const std::vector<double>& y, double lam,
         double tol, int max_iter) {
        return lasso_dict(fit_lasso(Matrix::from_rows(x), y, lam, {tol, max_iter}));
      },
      py::arg("x"), py::arg("y"), py::arg("lam"), py::arg("tol") = 1e-6,
      py::arg("max_iter") = 10000);

  m.def(
      "fit_group_lasso",
      [](const std::vector<std::string>& tasks,
         const std::vector<std::vector<std::vector<double>>>& xs,
         const std::vector<std::vector<double>>& ys, double lambda_group, double lambda_l1) {
        std::vector<Matrix> mats;
        for (const auto& x : xs) mats.push_back(Matrix::from_rows(x));
        GroupLassoOptions opt;
        opt.lambda_group = lambda_group;
        opt.lambda_l1 = lambda_l1;
        const auto g = fit_group_lasso(task_ids(tasks), mats, ys, opt);
        std::vector<std::vector<double>> w;
        for (std::size_t t = 0; t < g.tasks.size(); ++t) w.push_back(g.weights.col(t));
        py::dict d;
        d["weights"] = w;  // one list per task
        d["intercepts"] = g.intercepts;
        d["converged"] = g.converged;
        return d;
      },
      py::arg("tasks"), py::arg("xs"), py::arg("ys"), py::arg("lambda_group") = 0.01,
      py::arg("lambda_l1") = 0.0);

  m.def(
      "linear_shap",
      [](const std::vector<double>& w, double b, const std::vector<double>& x,
         const std::vector<double>& bg) {
        const Attribution a = linear_shap(w, b, x, bg);
        return py::make_tuple(std::vector<double>(a.phi.begin(), a.phi.end()), a.base_value);
      },
      py::arg("weights"), py::arg("intercept"), py::arg("x"), py::arg("background"));

  m.def(
      "subword_overlap",
      [](const std::set<std::string>& a, const std::set<std::string>& b) {
        return subword_overlap(VocabSet{LangId("xx"), a}, VocabSet{LangId("yy"), b});
      },
      py::arg("pivot_vocab"), py::arg("target_vocab"));

  m.def(
      "pretrain_size",
      [](double words) { return pretrain_size_feature(LanguageMeta{LangId("xx"), 0, words}); },
      py::arg("words"));

  m.def(
      "tokenizer_metrics",
      [](long long words, long long subwords, long long continued) {
        const auto t = tokenizer_metrics({LangId("xx"), words, subwords, continued});
        return py::make_tuple(t.fertility, t.continued_fraction);
      },
      py::arg("word_count"), py::arg("subword_count"), py::arg("continued_word_count"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line; returns (exit_code, stdout, stderr).");
}
