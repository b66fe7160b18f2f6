#include "deepsep/deepsep.hpp"
#include "deepsep/error.hpp"
#include "deepsep/labelprop.hpp"
#include "deepsep/tsvm.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace deepsep;

namespace {

LabeledSet make_labeled(const Matrix& X, const std::vector<int>& y, int c) {
    LabeledSet s;
    s.features = X;
    s.labels = y;
    s.num_classes = c;
    return s;
}

py::tuple synthetic_tuple(const SyntheticData& d) { return py::make_tuple(d.features, d.labels); }

}  // namespace

PYBIND11_MODULE(_deepsep, m) {
    m.doc() = "Deep low-density separation core";
    py::register_exception<Error>(m, "DeepSepError", PyExc_RuntimeError);

    m.def("smooth_labels", [](const std::vector<int>& y, int c, double eps) { return smooth_labels(y, c, eps); },
          py::arg("labels"), py::arg("num_classes"), py::arg("eps") = 1e-3);
    m.def("gen_two_moons", [](int n, double noise, std::uint64_t seed) { return synthetic_tuple(gen_two_moons(n, noise, seed)); },
          py::arg("n"), py::arg("noise"), py::arg("seed"));
    m.def("gen_gaussian_mixture",
          [](int n, int c, int d, double sep, std::uint64_t seed) {
              return synthetic_tuple(gen_gaussian_mixture(n, c, d, sep, seed));
          },
          py::arg("n"), py::arg("num_classes"), py::arg("dim"), py::arg("sep"), py::arg("seed"));
    m.def("split_and_mask",
          [](const Matrix& X, const std::vector<int>& y, int c, std::vector<int> train_sizes, int val_size,
             int test_size, std::uint64_t seed, bool balanced) {
              SplitSpec spec{std::move(train_sizes), val_size, test_size, seed, balanced};
              py::list out;
              for (const auto& p : split_and_mask(X, y, c, spec)) {
                  py::dict d;
                  d["train_x"] = p.train.features;
                  d["train_y"] = p.train.labels;
                  d["unlabeled_x"] = p.unlabeled.features;
                  d["val_x"] = p.val.features;
                  d["val_y"] = p.val.labels;
                  d["hidden_labels"] = p.hidden_labels;
                  out.append(d);
              }
              return out;
          },
          py::arg("features"), py::arg("labels"), py::arg("num_classes"), py::arg("train_sizes"),
          py::arg("val_size"), py::arg("test_size"), py::arg("seed"), py::arg("balanced") = true);

    m.def("kl_loss", &kl_loss, py::arg("target"), py::arg("pred"));
    m.def("mse_loss", &mse_loss, py::arg("target"), py::arg("pred"));

    m.def("hinge", &hinge, py::arg("x"));
    m.def("tsvm_objective",
          [](const Vector& w, double b, double C, double Cstar, const Matrix& Xl, const std::vector<int>& y,
             const Matrix& Xu) { return tsvm_objective(w, b, C, Cstar, Xl, y, Xu); },
          py::arg("w"), py::arg("b"), py::arg("C"), py::arg("Cstar"), py::arg("labeled"), py::arg("signs"),
          py::arg("unlabeled"));
    m.def("solve_svm_dual",
          [](const Matrix& X, const std::vector<int>& y, const std::vector<double>& costs, double tol) {
              const QpSolution s = solve_svm_dual(X, y, costs, tol);
              py::dict d;
              d["w"] = s.w;
              d["b"] = s.b;
              d["alpha"] = s.alpha;
              d["primal"] = s.primal;
              d["dual"] = s.dual;
              return d;
          },
          py::arg("features"), py::arg("signs"), py::arg("costs"), py::arg("tol") = 1e-6);

    py::class_<TsvmParams>(m, "TsvmParams")
        .def(py::init<>())
        .def_readwrite("C", &TsvmParams::C)
        .def_readwrite("Cstar", &TsvmParams::Cstar)
        .def_readwrite("s", &TsvmParams::s)
        .def_readwrite("balance", &TsvmParams::balance)
        .def_readwrite("tol", &TsvmParams::tol)
        .def_readwrite("max_outer", &TsvmParams::max_outer);

    py::class_<TsvmModel>(m, "TsvmModel")
        .def_readonly("w", &TsvmModel::w)
        .def_readonly("b", &TsvmModel::b)
        .def_readonly("params", &TsvmModel::params)
        .def_property_readonly("surrogate", [](const TsvmModel& t) { return t.trace.surrogate; })
        .def_property_readonly("converged", [](const TsvmModel& t) { return t.trace.status == FitStatus::Converged; })
        .def("decisions", &TsvmModel::decisions, py::arg("features"));

    m.def("cccp_fit",
          [](const Matrix& Xl, const std::vector<int>& y, const Matrix& Xu, const TsvmParams& p) {
              return cccp_fit(Xl, y, Xu, p);
          },
          py::arg("labeled"), py::arg("signs"), py::arg("unlabeled"), py::arg("params") = TsvmParams{});
    m.def("ovr_fit",
          [](const Matrix& Xl, const std::vector<int>& y, int c, const Matrix& Xu, const TsvmParams& p) {
              return ovr_fit(Xl, y, c, Xu, p);
          },
          py::arg("labeled"), py::arg("labels"), py::arg("num_classes"), py::arg("unlabeled"),
          py::arg("params") = TsvmParams{});
    m.def("ovr_decisions", [](const std::vector<TsvmModel>& models, const Matrix& X) { return ovr_decisions(models, X); },
          py::arg("models"), py::arg("features"));
    m.def("decisions_to_probs", &decisions_to_probs, py::arg("decisions"));

    m.def("propagate",
          [](const Matrix& X, const std::vector<Eigen::Index>& rows, const std::vector<int>& y, int c,
             std::optional<double> sigma) {
              PropParams p;
              p.sigma = sigma;
              const PropResult r = propagate(X, rows, y, c, p);
              return py::make_tuple(r.unlabeled, r.flagged);
          },
          py::arg("features"), py::arg("labeled_rows"), py::arg("labels"), py::arg("num_classes"),
          py::arg("sigma") = std::nullopt);

    py::class_<DeepSepConfig>(m, "DeepSepConfig")
        .def(py::init<>())
        .def_readwrite("T", &DeepSepConfig::T)
        .def_readwrite("rho", &DeepSepConfig::rho)
        .def_readwrite("eps", &DeepSepConfig::eps)
        .def_readwrite("C", &DeepSepConfig::C)
        .def_readwrite("u_sub", &DeepSepConfig::u_sub)
        .def_readwrite("refine_lr_factor", &DeepSepConfig::refine_lr_factor)
        .def_readwrite("mse_epochs", &DeepSepConfig::mse_epochs)
        .def_readwrite("kl_epochs", &DeepSepConfig::kl_epochs)
        .def_readwrite("init_epochs", &DeepSepConfig::init_epochs)
        .def_readwrite("patience", &DeepSepConfig::patience)
        .def_readwrite("batch_size", &DeepSepConfig::batch_size)
        .def_readwrite("lr", &DeepSepConfig::lr)
        .def_readwrite("ramp_s", &DeepSepConfig::ramp_s)
        .def_readwrite("balance", &DeepSepConfig::balance)
        .def_readwrite("hidden1", &DeepSepConfig::hidden1)
        .def_readwrite("hidden2", &DeepSepConfig::hidden2)
        .def_readwrite("dropout", &DeepSepConfig::dropout)
        .def_readwrite("seed", &DeepSepConfig::seed);

    m.def("run",
          [](const Matrix& Xl, const std::vector<int>& y, int c, const Matrix& Xu, const DeepSepConfig& cfg) {
              const LabeledSet d0 = make_labeled(Xl, y, c);
              UnlabeledSet d1;
              d1.features = Xu;
              RunResult r;
              {
                  py::gil_scoped_release release;
                  r = run(d0, d1, cfg);
              }
              py::dict d;
              d["ensemble"] = r.ensemble;
              d["history"] = r.history;
              d["ensemble_history"] = r.ensemble_history;
              return d;
          },
          py::arg("labeled"), py::arg("labels"), py::arg("num_classes"), py::arg("unlabeled"),
          py::arg("config") = DeepSepConfig{});

    m.def("accuracy_percent", [](const Matrix& p, const std::vector<int>& y) { return accuracy_percent(p, y); },
          py::arg("scores"), py::arg("labels"));
}
