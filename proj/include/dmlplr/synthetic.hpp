#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "dmlplr/dataset.hpp"
#include "dmlplr/dml.hpp"
#include "dmlplr/inference.hpp"

namespace dmlplr::synthetic {

// ---------------------------------------------------------------------------
// Data-generating processes
// ---------------------------------------------------------------------------

enum class FunctionShape { Linear, NonlinearSmooth, Step };
enum class TreatmentMechanism { SingleBinary, MutuallyExclusiveCategorical };

// Covariates are correlated Gaussians (corr 0.5^|i-j|, unit marginals).
// The outcome index g and the treatment index share the same fixed
// functional constants, so confounding_strength directly scales how much
// the treatment depends on outcome-relevant covariates:
//   single-binary, linear shape:  P(D=1|x) = clip(0.5 + b0 + c*idx(x))
//   single-binary, other shapes:  P(D=1|x) = logistic(b0 + c*idx(x))
//   categorical:                  softmax over a zero-score baseline and
//                                 category scores a_j + c*s_j*idx(x), with
//                                 ladder s_j = (j+1)/p spreading exposure
//                                 across categories.
// Y = theta'D + g(x) + noise_sd_y * eps.
struct DgpConfig {
    int n = 2000;
    int p_covariates = 10;
    std::vector<double> theta_true = {0.5};
    FunctionShape g_shape = FunctionShape::NonlinearSmooth;
    FunctionShape m_shape = FunctionShape::NonlinearSmooth;
    double confounding_strength = 1.0;
    double noise_sd_y = 1.0;
    TreatmentMechanism mechanism = TreatmentMechanism::SingleBinary;
    double treatment_intercept = 0.0;
    uint64_t seed = 0;
};

struct TruthRecord {
    DgpConfig config;
    double g_value(const Eigen::RowVectorXd& x) const;
    // Treatment probabilities: length 1 for single-binary, one entry per
    // category for the categorical mechanism (baseline excluded).
    Eigen::VectorXd propensity(const Eigen::RowVectorXd& x) const;
};

struct GeneratedData {
    Dataset dataset;
    TruthRecord truth;
};

GeneratedData generate(const DgpConfig& config);

// Index evaluators with fixed constants, exposed for tests. The outcome
// index carries the hard-to-fit structure; the treatment index is a smooth
// monotone mix over overlapping covariates, so confounding is strong while
// the two nuisance fits do not share the same approximation error.
double shape_index(FunctionShape shape, const Eigen::RowVectorXd& x);
double treatment_index(FunctionShape shape, const Eigen::RowVectorXd& x);

// ---------------------------------------------------------------------------
// Monte Carlo studies
// ---------------------------------------------------------------------------

enum class EstimatorKind { Dml, Naive, Fixed };

struct EstimatorSpec {
    std::string label;
    EstimatorKind kind = EstimatorKind::Dml;
    DmlAlgorithm algorithm = DmlAlgorithm::Dml2;
    LearnerSpec g = learner_preset("rf-g");
    LearnerSpec m = learner_preset("rf-m");
    int K = 5;
    int R = 1;
};

struct StudyConfig {
    DgpConfig dgp;
    std::vector<EstimatorSpec> estimators;
    int reps = 100;
    uint64_t seed = 0;
    double alpha = 0.05;
    int bootstrap_B = 0;  // > 0 enables joint inference per repetition
    MultiplierWeights weights = MultiplierWeights::Gaussian;
};

struct CellResult {
    double theta = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
};

struct JointRecord {
    Eigen::VectorXd raw_p, mb_p, rowo_p, holm_p, bonf_p;
    Eigen::MatrixXd joint_ci;
};

struct RepRecord {
    std::vector<std::vector<CellResult>> cells;      // [estimator][treatment]
    std::vector<std::optional<JointRecord>> joint;   // [estimator]
    std::vector<std::string> errors;                 // [estimator], "" = ok
};

struct EstimatorSummary {
    std::string label;
    std::vector<double> mean_bias_by_treatment;
    double mean_bias = 0;     // averaged over treatments
    double rmse = 0;
    double coverage = 0;      // pointwise 95% CI, averaged over treatments
    double mean_ci_length = 0;
    bool has_coverage = false;
    double fwer_mb = 0, fwer_rowo = 0, fwer_holm = 0, fwer_bonf = 0, fwer_raw = 0;
    bool has_fwer = false;
    double joint_coverage = 0;  // share of reps whose joint band covers the full truth
    bool has_joint = false;
    double ordering_correct_frac = 0;  // pairs with true gap > 4*se(diff)
    long ordering_pairs = 0;
    int failures = 0;
};

struct McReport {
    int reps = 0;
    std::vector<EstimatorSummary> estimators;
    std::vector<RepRecord> rep_records;
    double runtime_seconds = 0;
    int failure_count = 0;
    std::vector<std::string> flags;
};

// Independent datasets per repetition; estimator failures are recorded per
// repetition, never fatal. A failure share above 2% flags the study as
// degenerate.
McReport run_study(const StudyConfig& config, int workers = 0);

// run_study specialized to mutually exclusive multi-treatment profiles;
// requires the categorical mechanism and joint inference enabled.
McReport heterogeneity_study(const StudyConfig& config, int workers = 0);

} // namespace dmlplr::synthetic
