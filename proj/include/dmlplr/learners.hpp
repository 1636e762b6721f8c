#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dmlplr/forest.hpp"

namespace dmlplr {

enum class LearnerKind { RandomForestReg, RandomForestClf, Lasso, Ridge, Ols, ConstantMean };
enum class Task { Regression, BinaryClassification };

struct LearnerSpec {
    LearnerKind kind = LearnerKind::Ols;

    // forest knobs; mtry 0 selects the preset rule min(p, 4*floor(sqrt(p)))
    // capped at 50 once p reaches 50
    int num_trees = 500;
    int mtry = 0;
    int min_node_size = 10;
    int max_depth = 0;  // 0: unlimited
    bool bootstrap = true;

    // linear knobs; lambda < 0 selects the penalty by internal 5-fold CV
    double lambda = -1.0;
    bool intercept = true;
    double tol = 1e-7;
    int max_iter = 100000;

    uint64_t seed = 0;

    void validate(Eigen::Index n_features) const;
};

// Named presets loadable from the CLI config: rf-g (500 trees, depth 7),
// rf-m (depth 5, probability forest), rf-g-restrained (depth 5),
// rf-m-restrained (depth 3), ols, lasso, ridge, const-mean.
LearnerSpec learner_preset(const std::string& name, uint64_t seed = 0);
int auto_mtry(Eigen::Index n_features);

struct LinearModel {
    double intercept = 0.0;
    Eigen::VectorXd coef;
};

struct LassoResult {
    Eigen::VectorXd coef;
    double intercept = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Cyclic coordinate descent on internally standardized columns with an
// unpenalized intercept; coefficients return on the original scale. The
// objective is (1/2n)*||y - b0 - X b||^2 + lambda*sum|b_std|. Convergence:
// max standardized-coefficient update < tol.
LassoResult fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                      double tol = 1e-7, int max_iter = 100000);

// Penalized normal equations on standardized columns, intercept unpenalized.
// lambda = 0 on a singular system is an error.
LinearModel fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda);

// Smallest penalty with an all-zero lasso solution: max_j |x_j'y|/n on the
// standardized scale.
double lasso_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

class FittedModel {
public:
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
    const LearnerSpec& spec() const { return spec_; }
    Task task() const { return task_; }

    // Out-of-bag R^2 or classification rate for forests; lasso convergence
    // info for the lasso.
    std::optional<double> oob_score() const { return oob_score_; }
    std::optional<LassoResult> lasso_info() const { return lasso_info_; }

    friend FittedModel fit(const LearnerSpec&, const Eigen::MatrixXd&, const Eigen::VectorXd&,
                           Task, int);

private:
    LearnerSpec spec_;
    Task task_ = Task::Regression;
    Eigen::Index n_features_ = 0;
    std::variant<LinearModel, std::shared_ptr<RandomForest>, double> model_;
    std::optional<double> oob_score_;
    std::optional<LassoResult> lasso_info_;
};

FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                Task task = Task::Regression, int workers = 0);

// Cross-fitted predictions: for every fold, fit on the complement and
// predict the fold, so no observation is scored by a model that saw it.
// folds holds labels in [0, K); every fold must leave >= 2 training rows.
Eigen::VectorXd out_of_fold_predictions(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& y, const std::vector<int>& folds,
                                        Task task = Task::Regression, int workers = 0);

} // namespace dmlplr
