#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dmlplr/dataset.hpp"
#include "dmlplr/dml.hpp"
#include "dmlplr/inference.hpp"
#include "dmlplr/synthetic.hpp"

namespace py = pybind11;
using namespace dmlplr;

namespace {

synthetic::DgpConfig dgp_from_kwargs(int n, int p_covariates, std::vector<double> theta_true,
                                     const std::string& g_shape, const std::string& m_shape,
                                     double confounding_strength, double noise_sd_y,
                                     const std::string& mechanism, double treatment_intercept,
                                     uint64_t seed) {
    auto parse_shape = [](const std::string& s) {
        if (s == "linear") return synthetic::FunctionShape::Linear;
        if (s == "nonlinear-smooth") return synthetic::FunctionShape::NonlinearSmooth;
        if (s == "step") return synthetic::FunctionShape::Step;
        throw std::invalid_argument("unknown shape: " + s);
    };
    synthetic::DgpConfig config;
    config.n = n;
    config.p_covariates = p_covariates;
    config.theta_true = std::move(theta_true);
    config.g_shape = parse_shape(g_shape);
    config.m_shape = parse_shape(m_shape);
    config.confounding_strength = confounding_strength;
    config.noise_sd_y = noise_sd_y;
    if (mechanism == "single-binary")
        config.mechanism = synthetic::TreatmentMechanism::SingleBinary;
    else if (mechanism == "mutually-exclusive-categorical")
        config.mechanism = synthetic::TreatmentMechanism::MutuallyExclusiveCategorical;
    else
        throw std::invalid_argument("unknown mechanism: " + mechanism);
    config.treatment_intercept = treatment_intercept;
    config.seed = seed;
    return config;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "double machine learning for partially linear models";

    py::class_<Dataset>(m, "Dataset")
        .def(py::init([](Eigen::VectorXd outcome, Eigen::MatrixXd treatments,
                         Eigen::MatrixXd covariates, std::vector<std::string> treatment_names,
                         std::vector<std::string> covariate_names) {
                 Dataset ds;
                 ds.outcome = std::move(outcome);
                 ds.treatments = std::move(treatments);
                 ds.covariates = std::move(covariates);
                 ds.n = ds.outcome.size();
                 if (treatment_names.empty())
                     for (Eigen::Index j = 0; j < ds.treatments.cols(); ++j)
                         treatment_names.push_back("d" + std::to_string(j + 1));
                 if (covariate_names.empty())
                     for (Eigen::Index j = 0; j < ds.covariates.cols(); ++j)
                         covariate_names.push_back("x" + std::to_string(j + 1));
                 ds.treatment_names = std::move(treatment_names);
                 ds.covariate_names = std::move(covariate_names);
                 ds.validate();
                 return ds;
             }),
             py::arg("outcome"), py::arg("treatments"), py::arg("covariates"),
             py::arg("treatment_names") = std::vector<std::string>{},
             py::arg("covariate_names") = std::vector<std::string>{})
        .def_readonly("outcome", &Dataset::outcome)
        .def_readonly("treatments", &Dataset::treatments)
        .def_readonly("covariates", &Dataset::covariates)
        .def_readonly("treatment_names", &Dataset::treatment_names)
        .def_readonly("covariate_names", &Dataset::covariate_names)
        .def_readonly("n", &Dataset::n);

    py::class_<DmlFit>(m, "DmlFit")
        .def_readonly("treatment_name", &DmlFit::treatment_name)
        .def_readonly("theta", &DmlFit::theta_hat)
        .def_readonly("std_error", &DmlFit::std_error)
        .def_readonly("t_value", &DmlFit::t_value)
        .def_readonly("p_value", &DmlFit::p_value)
        .def_readonly("score", &DmlFit::score)
        .def_readonly("warnings", &DmlFit::warnings);

    py::class_<AdjustedInference>(m, "AdjustedInference")
        .def_readonly("labels", &AdjustedInference::labels)
        .def_readonly("raw_p", &AdjustedInference::raw_p)
        .def_readonly("mb_p", &AdjustedInference::mb_p)
        .def_readonly("rowo_p", &AdjustedInference::rowo_p)
        .def_readonly("holm_p", &AdjustedInference::holm_p)
        .def_readonly("bonf_p", &AdjustedInference::bonf_p)
        .def_readonly("joint_ci", &AdjustedInference::joint_ci)
        .def_readonly("critical_value", &AdjustedInference::critical_value);

    m.def("generate",
          [](int n, int p_covariates, std::vector<double> theta_true, const std::string& g_shape,
             const std::string& m_shape, double confounding_strength, double noise_sd_y,
             const std::string& mechanism, double treatment_intercept, uint64_t seed) {
              auto generated = synthetic::generate(dgp_from_kwargs(
                  n, p_covariates, std::move(theta_true), g_shape, m_shape, confounding_strength,
                  noise_sd_y, mechanism, treatment_intercept, seed));
              return generated.dataset;
          },
          py::arg("n"), py::arg("p_covariates") = 10,
          py::arg("theta_true") = std::vector<double>{0.5},
          py::arg("g_shape") = "nonlinear-smooth", py::arg("m_shape") = "nonlinear-smooth",
          py::arg("confounding_strength") = 1.0, py::arg("noise_sd_y") = 1.0,
          py::arg("mechanism") = "single-binary", py::arg("treatment_intercept") = 0.0,
          py::arg("seed") = 0,
          "Generate a synthetic partially linear dataset with known effects.");

    m.def("estimate",
          [](const Dataset& ds, const std::string& learner_g, const std::string& learner_m, int K,
             int R, const std::string& algorithm, uint64_t seed, int workers) {
              const CrossFitPlan plan = make_plan(static_cast<int>(ds.n), K, R, seed);
              std::vector<int> idx(static_cast<size_t>(ds.treatments.cols()));
              std::iota(idx.begin(), idx.end(), 0);
              const auto algo = algorithm == "dml1" ? DmlAlgorithm::Dml1 : DmlAlgorithm::Dml2;
              const MultiFitResult result =
                  fit_multi(ds, idx, learner_preset(learner_g, seed), learner_preset(learner_m, seed),
                            plan, algo, workers);
              for (const auto& err : result.errors)
                  if (!err.empty()) throw std::runtime_error(err);
              return result.fits;
          },
          py::arg("dataset"), py::arg("learner_g") = "rf-g", py::arg("learner_m") = "rf-m",
          py::arg("folds") = 5, py::arg("reps") = 1, py::arg("algorithm") = "dml2",
          py::arg("seed") = 0, py::arg("workers") = 0,
          "Cross-fitted treatment effect estimates, one fit per treatment column.");

    m.def("adjust",
          [](const Dataset& ds, const std::string& learner_g, const std::string& learner_m, int K,
             int R, const std::string& algorithm, int B, double alpha, uint64_t seed,
             int workers) {
              const CrossFitPlan plan = make_plan(static_cast<int>(ds.n), K, R, seed);
              std::vector<int> idx(static_cast<size_t>(ds.treatments.cols()));
              std::iota(idx.begin(), idx.end(), 0);
              const auto algo = algorithm == "dml1" ? DmlAlgorithm::Dml1 : DmlAlgorithm::Dml2;
              const MultiFitResult result =
                  fit_multi(ds, idx, learner_preset(learner_g, seed), learner_preset(learner_m, seed),
                            plan, algo, workers);
              for (const auto& err : result.errors)
                  if (!err.empty()) throw std::runtime_error(err);
              return adjust_multi(result, B, alpha, seed, MultiplierWeights::Gaussian, workers);
          },
          py::arg("dataset"), py::arg("learner_g") = "rf-g", py::arg("learner_m") = "rf-m",
          py::arg("folds") = 5, py::arg("reps") = 1, py::arg("algorithm") = "dml2",
          py::arg("bootstrap") = 2000, py::arg("alpha") = 0.05, py::arg("seed") = 0,
          py::arg("workers") = 0,
          "Estimate all treatments and run simultaneous multiplier-bootstrap inference.");

    m.def("fwl_check",
          [](const Eigen::MatrixXd& X, const Eigen::VectorXd& D, const Eigen::VectorXd& Y) {
              const FwlResult r = fwl_oracle(X, D, Y);
              return py::make_tuple(r.theta_direct, r.theta_partialled);
          },
          py::arg("X"), py::arg("D"), py::arg("Y"),
          "Direct and partialled-out least-squares estimates (equal by FWL).");

    m.def("holm", &holm, py::arg("raw_p"), "Holm step-down adjusted p-values.");
    m.def("bonferroni", &bonferroni, py::arg("raw_p"), "Bonferroni adjusted p-values.");

    m.attr("__version__") = "0.1.0";
}
