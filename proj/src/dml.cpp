#include "dmlplr/dml.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "dmlplr/parallel.hpp"
#include "dmlplr/rng.hpp"
#include "dmlplr/stats.hpp"

namespace dmlplr {

CrossFitPlan make_plan(int n, int K, int R, uint64_t seed) {
    if (K < 1 || K > n) throw std::invalid_argument("need 1 <= K <= n");
    if (R < 1) throw std::invalid_argument("need R >= 1");
    CrossFitPlan plan;
    plan.n = n;
    plan.K = K;
    plan.R = R;
    plan.seed = seed;
    plan.assignments.resize(static_cast<size_t>(R));
    for (int r = 0; r < R; ++r) {
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, 0x706c616eULL, static_cast<uint64_t>(r)));
        rng.shuffle(order);
        auto& labels = plan.assignments[static_cast<size_t>(r)];
        labels.assign(static_cast<size_t>(n), 0);
        // first n % K folds take the remainder
        int pos = 0;
        for (int k = 0; k < K; ++k) {
            const int size = n / K + (k < n % K ? 1 : 0);
            for (int i = 0; i < size; ++i)
                labels[static_cast<size_t>(order[static_cast<size_t>(pos++)])] = k;
        }
    }
    return plan;
}

CrossFitPlan make_stratified_plan(int n, int K, int R, uint64_t seed,
                                  const std::vector<int>& strata) {
    if (static_cast<int>(strata.size()) != n)
        throw std::invalid_argument("strata labels must cover every row");
    if (K < 1 || K > n) throw std::invalid_argument("need 1 <= K <= n");
    if (R < 1) throw std::invalid_argument("need R >= 1");

    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[strata[static_cast<size_t>(i)]].push_back(i);

    CrossFitPlan plan;
    plan.n = n;
    plan.K = K;
    plan.R = R;
    plan.seed = seed;
    plan.assignments.resize(static_cast<size_t>(R));
    for (int r = 0; r < R; ++r) {
        auto& labels = plan.assignments[static_cast<size_t>(r)];
        labels.assign(static_cast<size_t>(n), 0);
        Rng rng(derive_seed(seed, 0x73706c616eULL, static_cast<uint64_t>(r)));
        for (auto& [stratum, members] : groups) {
            (void)stratum;
            std::vector<int> order = members;
            rng.shuffle(order);
            std::vector<int> fold_order(static_cast<size_t>(K));
            std::iota(fold_order.begin(), fold_order.end(), 0);
            rng.shuffle(fold_order);
            for (size_t i = 0; i < order.size(); ++i)
                labels[static_cast<size_t>(order[i])] = fold_order[i % static_cast<size_t>(K)];
        }
    }
    return plan;
}

namespace {

Eigen::MatrixXd augmented_covariates(const Dataset& ds, int treatment_index,
                                     OtherTreatmentsPolicy policy) {
    if (policy == OtherTreatmentsPolicy::Ignore || ds.treatments.cols() <= 1)
        return ds.covariates;
    const Eigen::Index extra = ds.treatments.cols() - 1;
    Eigen::MatrixXd X(ds.n, ds.covariates.cols() + extra);
    X.leftCols(ds.covariates.cols()) = ds.covariates;
    Eigen::Index w = ds.covariates.cols();
    for (Eigen::Index j = 0; j < ds.treatments.cols(); ++j) {
        if (j == treatment_index) continue;
        X.col(w++) = ds.treatments.col(j);
    }
    return X;
}

} // namespace

ResidualSet residualize(const Dataset& dataset, int treatment_index, const LearnerSpec& g_spec,
                        const LearnerSpec& m_spec, const CrossFitPlan& plan, int repetition,
                        OtherTreatmentsPolicy policy, int workers) {
    if (treatment_index < 0 || treatment_index >= dataset.treatments.cols())
        throw std::invalid_argument("treatment index out of range");
    if (repetition < 0 || repetition >= plan.R)
        throw std::invalid_argument("repetition out of range");
    if (plan.n != dataset.n)
        throw std::invalid_argument("plan and dataset disagree on n");

    const Eigen::VectorXd d = dataset.treatments.col(treatment_index);
    const double treated = d.sum();
    if (treated < 2.0 || treated > dataset.n - 2.0)
        throw std::runtime_error("treatment '" + dataset.treatment_names[static_cast<size_t>(treatment_index)] +
                                 "' needs at least 2 treated and 2 untreated observations");

    const auto& folds = plan.assignments[static_cast<size_t>(repetition)];
    ResidualSet res;
    res.fold_labels = folds;

    // A fold whose training complement holds no treated rows would see a
    // degenerate propensity; warn but proceed.
    for (int k = 0; k < plan.K; ++k) {
        double treated_outside = 0;
        for (Eigen::Index i = 0; i < dataset.n; ++i)
            if (folds[static_cast<size_t>(i)] != k) treated_outside += d[i];
        if (plan.K > 1 && treated_outside == 0)
            res.warnings.push_back("fold " + std::to_string(k) +
                                   ": no treated observations in the training split");
    }

    const Eigen::MatrixXd X = augmented_covariates(dataset, treatment_index, policy);
    const Task m_task = m_spec.kind == LearnerKind::RandomForestClf
                            ? Task::BinaryClassification
                            : Task::Regression;
    try {
        const Eigen::VectorXd l_hat =
            out_of_fold_predictions(g_spec, X, dataset.outcome, folds, Task::Regression, workers);
        const Eigen::VectorXd m_hat = out_of_fold_predictions(m_spec, X, d, folds, m_task, workers);
        res.y_resid = dataset.outcome - l_hat;
        res.d_resid = d - m_hat;
    } catch (const std::exception& e) {
        throw std::runtime_error("nuisance fitting failed for treatment '" +
                                 dataset.treatment_names[static_cast<size_t>(treatment_index)] +
                                 "': " + e.what());
    }
    return res;
}

double solve_theta(const ResidualSet& res) {
    const double denom = res.d_resid.squaredNorm();
    if (denom <= 0.0)
        throw std::runtime_error("treatment fully explained by covariates (zero residual variance)");
    return res.d_resid.dot(res.y_resid) / denom;
}

Eigen::VectorXd score_values(const ResidualSet& res, double theta) {
    return (res.y_resid - theta * res.d_resid).cwiseProduct(res.d_resid);
}

double standard_error(const ResidualSet& res, double theta_hat) {
    const auto n = static_cast<double>(res.y_resid.size());
    if (n < 2) throw std::invalid_argument("need at least 2 observations");
    const double j_bar = res.d_resid.squaredNorm() / n;
    if (j_bar <= 0.0) throw std::runtime_error("zero mean squared treatment residual");
    const double psi_sq = score_values(res, theta_hat).squaredNorm() / n;
    return std::sqrt(psi_sq / (j_bar * j_bar * n));
}

namespace {

DmlFit finalize_fit(const Dataset& dataset, int treatment_index, const ResidualSet& res,
                    double theta, DmlAlgorithm algorithm) {
    DmlFit fit;
    fit.treatment_name = dataset.treatment_names[static_cast<size_t>(treatment_index)];
    fit.algorithm = algorithm;
    fit.theta_hat = theta;
    fit.j_hat = res.d_resid.squaredNorm() / static_cast<double>(res.d_resid.size());
    fit.score = score_values(res, theta);
    fit.std_error = standard_error(res, theta);
    fit.t_value = fit.std_error > 0 ? theta / fit.std_error : 0.0;
    fit.p_value = two_sided_p(fit.t_value);
    fit.warnings = res.warnings;
    fit.per_repetition = {{fit.theta_hat, fit.std_error}};
    return fit;
}

} // namespace

double solve_theta_by_fold(const ResidualSet& res, int K) {
    double theta_sum = 0.0;
    for (int k = 0; k < K; ++k) {
        double num = 0.0, denom = 0.0;
        for (Eigen::Index i = 0; i < res.y_resid.size(); ++i) {
            if (res.fold_labels[static_cast<size_t>(i)] != k) continue;
            num += res.d_resid[i] * res.y_resid[i];
            denom += res.d_resid[i] * res.d_resid[i];
        }
        if (denom <= 0.0)
            throw std::runtime_error("fold " + std::to_string(k) +
                                     ": treatment fully explained by covariates");
        theta_sum += num / denom;
    }
    return theta_sum / K;
}

DmlFit estimate_dml1(const Dataset& dataset, int treatment_index, const LearnerSpec& g_spec,
                     const LearnerSpec& m_spec, const CrossFitPlan& plan, int repetition,
                     OtherTreatmentsPolicy policy, int workers) {
    const ResidualSet res =
        residualize(dataset, treatment_index, g_spec, m_spec, plan, repetition, policy, workers);
    return finalize_fit(dataset, treatment_index, res, solve_theta_by_fold(res, plan.K),
                        DmlAlgorithm::Dml1);
}

DmlFit estimate_dml2(const Dataset& dataset, int treatment_index, const LearnerSpec& g_spec,
                     const LearnerSpec& m_spec, const CrossFitPlan& plan, int repetition,
                     OtherTreatmentsPolicy policy, int workers) {
    const ResidualSet res =
        residualize(dataset, treatment_index, g_spec, m_spec, plan, repetition, policy, workers);
    return finalize_fit(dataset, treatment_index, res, solve_theta(res), DmlAlgorithm::Dml2);
}

DmlFit aggregate_repetitions(const std::vector<DmlFit>& fits) {
    if (fits.empty()) throw std::invalid_argument("no repetition fits to aggregate");
    if (fits.size() == 1) return fits.front();

    std::vector<double> thetas;
    for (const auto& f : fits) thetas.push_back(f.theta_hat);
    const double theta = median_of(thetas);

    std::vector<double> se_sq;
    for (const auto& f : fits)
        se_sq.push_back(f.std_error * f.std_error +
                        (f.theta_hat - theta) * (f.theta_hat - theta));
    const double se = std::sqrt(median_of(se_sq));

    // Representative score set: the repetition whose theta lies closest to
    // the aggregate.
    size_t rep = 0;
    for (size_t r = 1; r < fits.size(); ++r)
        if (std::abs(fits[r].theta_hat - theta) < std::abs(fits[rep].theta_hat - theta)) rep = r;

    DmlFit out = fits[rep];
    out.theta_hat = theta;
    out.std_error = se;
    out.t_value = se > 0 ? theta / se : 0.0;
    out.p_value = two_sided_p(out.t_value);
    out.per_repetition.clear();
    out.warnings.clear();
    for (const auto& f : fits) {
        out.per_repetition.push_back({f.theta_hat, f.std_error});
        out.warnings.insert(out.warnings.end(), f.warnings.begin(), f.warnings.end());
    }
    return out;
}

MultiFitResult fit_multi(const Dataset& dataset, const std::vector<int>& treatment_indices,
                         const LearnerSpec& g_spec, const LearnerSpec& m_spec,
                         const CrossFitPlan& plan, DmlAlgorithm algorithm, int workers) {
    MultiFitResult result;
    const size_t p = treatment_indices.size();
    result.fits.resize(p);
    result.errors.assign(p, "");
    result.per_rep.assign(static_cast<size_t>(plan.R), std::vector<DmlFit>(p));

    // (repetition, treatment) pairs are independent work items.
    const int n_tasks = static_cast<int>(p) * plan.R;
    parallel_for(n_tasks, workers, [&](int task) {
        const int r = task / static_cast<int>(p);
        const auto j = static_cast<size_t>(task % static_cast<int>(p));
        try {
            result.per_rep[static_cast<size_t>(r)][j] =
                algorithm == DmlAlgorithm::Dml1
                    ? estimate_dml1(dataset, treatment_indices[j], g_spec, m_spec, plan, r,
                                    OtherTreatmentsPolicy::AppendToCovariates, 1)
                    : estimate_dml2(dataset, treatment_indices[j], g_spec, m_spec, plan, r,
                                    OtherTreatmentsPolicy::AppendToCovariates, 1);
        } catch (const std::exception& e) {
            result.errors[j] = e.what();
        }
    });

    for (size_t j = 0; j < p; ++j) {
        if (!result.errors[j].empty()) {
            DmlFit failed;
            failed.treatment_name =
                dataset.treatment_names[static_cast<size_t>(treatment_indices[j])];
            failed.theta_hat = std::numeric_limits<double>::quiet_NaN();
            failed.std_error = std::numeric_limits<double>::quiet_NaN();
            failed.algorithm = algorithm;
            result.fits[j] = failed;
            continue;
        }
        std::vector<DmlFit> reps;
        for (int r = 0; r < plan.R; ++r) reps.push_back(result.per_rep[static_cast<size_t>(r)][j]);
        result.fits[j] = aggregate_repetitions(reps);
    }
    return result;
}

FwlResult fwl_oracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& D,
                     const Eigen::VectorXd& Y) {
    const Eigen::Index n = X.rows();
    if (D.size() != n || Y.size() != n)
        throw std::invalid_argument("X, D, Y must share the row count");

    Eigen::MatrixXd A(n, X.cols() + 2);
    A.col(0).setOnes();
    A.col(1) = D;
    A.rightCols(X.cols()) = X;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < A.cols()) throw std::runtime_error("rank-deficient design in fwl_oracle");
    FwlResult result;
    result.theta_direct = qr.solve(Y)[1];

    Eigen::MatrixXd Ax(n, X.cols() + 1);
    Ax.col(0).setOnes();
    Ax.rightCols(X.cols()) = X;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrx(Ax);
    const Eigen::VectorXd ry = Y - Ax * qrx.solve(Y);
    const Eigen::VectorXd rd = D - Ax * qrx.solve(D);
    const double denom = rd.squaredNorm();
    if (denom <= 0.0) throw std::runtime_error("treatment fully explained by covariates");
    result.theta_partialled = rd.dot(ry) / denom;
    return result;
}

double naive_plugin(const Dataset& dataset, int treatment_index, const LearnerSpec& g_spec,
                    OtherTreatmentsPolicy policy, int workers) {
    const Eigen::MatrixXd X = augmented_covariates(dataset, treatment_index, policy);
    Eigen::MatrixXd design(dataset.n, X.cols() + 1);
    design.col(0) = dataset.treatments.col(treatment_index);
    design.rightCols(X.cols()) = X;

    const FittedModel model = fit(g_spec, design, dataset.outcome, Task::Regression, workers);

    Eigen::MatrixXd treated = design, control = design;
    treated.col(0).setOnes();
    control.col(0).setZero();
    return (model.predict(treated) - model.predict(control)).mean();
}

} // namespace dmlplr
