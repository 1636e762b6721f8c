#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "dmlplr/dataset.hpp"
#include "dmlplr/learners.hpp"

namespace dmlplr {

// ---------------------------------------------------------------------------
// Cross-fitting plans
// ---------------------------------------------------------------------------

struct CrossFitPlan {
    int n = 0;
    int K = 5;
    int R = 1;
    uint64_t seed = 0;
    std::vector<std::vector<int>> assignments;  // R x n fold labels in [0, K)
};

// Balanced uniformly random partitions, drawn independently per repetition
// and reproducible from the seed. K = 1 is allowed as an in-sample
// degenerate mode for tests.
CrossFitPlan make_plan(int n, int K, int R, uint64_t seed);

// Stratified variant for rare treatment categories: rows are dealt into
// folds separately within each stratum, so every fold sees each stratum in
// proportion. Overall fold sizes may differ by more than one.
CrossFitPlan make_stratified_plan(int n, int K, int R, uint64_t seed,
                                  const std::vector<int>& strata);

// ---------------------------------------------------------------------------
// Residualization and scores
// ---------------------------------------------------------------------------

enum class OtherTreatmentsPolicy {
    AppendToCovariates,  // estimate treatment j with the other dummies in X
    Ignore,
};

struct ResidualSet {
    Eigen::VectorXd y_resid;  // Y - out-of-fold E[Y|X] prediction
    Eigen::VectorXd d_resid;  // D_j - out-of-fold propensity prediction
    std::vector<int> fold_labels;
    std::vector<std::string> warnings;
};

ResidualSet residualize(const Dataset& dataset, int treatment_index, const LearnerSpec& g_spec,
                        const LearnerSpec& m_spec, const CrossFitPlan& plan, int repetition,
                        OtherTreatmentsPolicy policy = OtherTreatmentsPolicy::AppendToCovariates,
                        int workers = 0);

// theta = sum(d*y) / sum(d*d): the no-intercept regression of the outcome
// residuals on the treatment residuals.
double solve_theta(const ResidualSet& res);

// Per-fold solutions averaged over the K folds recorded in fold_labels.
double solve_theta_by_fold(const ResidualSet& res, int K);

// Partialling-out score at theta: psi_i = (y_i - theta*d_i) * d_i.
Eigen::VectorXd score_values(const ResidualSet& res, double theta);

// Sandwich standard error sqrt(mean(psi^2) / (Jbar^2 * n)), with
// Jbar = mean(d_resid^2).
double standard_error(const ResidualSet& res, double theta_hat);

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

enum class DmlAlgorithm { Dml1, Dml2 };

struct RepetitionFit {
    double theta = 0.0;
    double se = 0.0;
};

struct DmlFit {
    std::string treatment_name;
    double theta_hat = 0.0;
    double std_error = 0.0;
    double t_value = 0.0;
    double p_value = 1.0;
    double j_hat = 0.0;               // mean of squared treatment residuals
    Eigen::VectorXd score;            // psi_i at theta_hat
    DmlAlgorithm algorithm = DmlAlgorithm::Dml2;
    std::vector<RepetitionFit> per_repetition;
    std::vector<std::string> warnings;
};

// DML1: theta solved per fold, averaged; the reported score uses the pooled
// residuals at the averaged theta.
DmlFit estimate_dml1(const Dataset& dataset, int treatment_index, const LearnerSpec& g_spec,
                     const LearnerSpec& m_spec, const CrossFitPlan& plan, int repetition,
                     OtherTreatmentsPolicy policy = OtherTreatmentsPolicy::AppendToCovariates,
                     int workers = 0);

// DML2: theta solved once on the pooled out-of-fold residuals.
DmlFit estimate_dml2(const Dataset& dataset, int treatment_index, const LearnerSpec& g_spec,
                     const LearnerSpec& m_spec, const CrossFitPlan& plan, int repetition,
                     OtherTreatmentsPolicy policy = OtherTreatmentsPolicy::AppendToCovariates,
                     int workers = 0);

// Median aggregation over repetitions: theta = median_r(theta_r),
// se = sqrt(median_r(se_r^2 + (theta_r - theta)^2)). The representative
// score set comes from the repetition closest to the aggregated theta.
DmlFit aggregate_repetitions(const std::vector<DmlFit>& fits);

struct MultiFitResult {
    std::vector<DmlFit> fits;                 // aggregated over repetitions, one per treatment
    std::vector<std::vector<DmlFit>> per_rep; // [repetition][treatment]
    std::vector<std::string> errors;          // per treatment; empty string = success
};

// One fit per requested treatment; when estimating treatment j the other
// treatment dummies join the covariates for both nuisance fits. Per-treatment
// failures are reported without aborting the remaining treatments.
MultiFitResult fit_multi(const Dataset& dataset, const std::vector<int>& treatment_indices,
                         const LearnerSpec& g_spec, const LearnerSpec& m_spec,
                         const CrossFitPlan& plan, DmlAlgorithm algorithm = DmlAlgorithm::Dml1,
                         int workers = 0);

// ---------------------------------------------------------------------------
// Reference estimators
// ---------------------------------------------------------------------------

struct FwlResult {
    double theta_direct = 0.0;      // one-shot least squares of Y on (1, D, X)
    double theta_partialled = 0.0;  // three-step residual-on-residual route
};

FwlResult fwl_oracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& D, const Eigen::VectorXd& Y);

// Deliberately biased baseline: one flexible fit of Y on (D, X) without
// orthogonalization or sample splitting; the effect is the average predicted
// contrast between D=1 and D=0 on the training rows.
double naive_plugin(const Dataset& dataset, int treatment_index, const LearnerSpec& g_spec,
                    OtherTreatmentsPolicy policy = OtherTreatmentsPolicy::AppendToCovariates,
                    int workers = 0);

} // namespace dmlplr
