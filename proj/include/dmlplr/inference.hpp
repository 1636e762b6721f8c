#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "dmlplr/dml.hpp"

namespace dmlplr {

// Influence-function inputs for simultaneous inference: per-observation
// scores at each treatment's own theta-hat, Jacobian means, estimates and
// sandwich standard errors.
struct ScoreMatrix {
    Eigen::MatrixXd psi;   // n x p
    Eigen::VectorXd j_mean;
    Eigen::VectorXd theta;
    Eigen::VectorXd se;
    std::vector<std::string> labels;
};

ScoreMatrix make_score_matrix(const std::vector<DmlFit>& fits);

enum class MultiplierWeights { Gaussian, Rademacher, Mammen };

struct MbResult {
    Eigen::VectorXd p;          // max-statistic adjusted p-values, floored at 1/B
    Eigen::MatrixXd joint_ci;   // p x 2 simultaneous band theta +- c*se
    double critical_value = 0;  // (1-alpha) quantile of max_j |T_j^(b)|
};

// Draws B weight vectors; bootstrap statistic per treatment
// T_j^(b) = sum_i xi_i^(b) psi_ij / (n * J_j * se_j). Draw b derives its
// weights from (seed, b), so results are schedule-invariant.
MbResult multiplier_bootstrap(const ScoreMatrix& scores, int B, double alpha, uint64_t seed,
                              MultiplierWeights weights = MultiplierWeights::Gaussian,
                              int workers = 0);

// Step-down max-statistic adjustment on the same draws as
// multiplier_bootstrap (same seed => same weights); adjusted p-values carry
// a running maximum along the step-down order. Ties in |t| break by index.
Eigen::VectorXd romano_wolf(const ScoreMatrix& scores, int B, uint64_t seed,
                            MultiplierWeights weights = MultiplierWeights::Gaussian,
                            int workers = 0);

Eigen::VectorXd holm(const Eigen::VectorXd& raw_p);
Eigen::VectorXd bonferroni(const Eigen::VectorXd& raw_p);

struct AdjustedInference {
    Eigen::VectorXd raw_p, mb_p, rowo_p, holm_p, bonf_p;
    Eigen::MatrixXd joint_ci;
    double critical_value = 0;
    double alpha = 0.05;
    int B = 0;
    MultiplierWeights weight_scheme = MultiplierWeights::Gaussian;
    std::vector<std::string> labels;
};

AdjustedInference adjust(const ScoreMatrix& scores, int B, double alpha, uint64_t seed,
                         MultiplierWeights weights = MultiplierWeights::Gaussian,
                         int workers = 0);

// Multi-repetition variant: the bootstrap runs on every repetition's scores
// and the adjusted p-values aggregate by median across repetitions; the
// joint band pairs the median critical value with the aggregated estimates.
// With one repetition this reduces to adjust() on that repetition.
AdjustedInference adjust_multi(const MultiFitResult& result, int B, double alpha, uint64_t seed,
                               MultiplierWeights weights = MultiplierWeights::Gaussian,
                               int workers = 0);

} // namespace dmlplr
