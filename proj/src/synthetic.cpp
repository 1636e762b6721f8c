#include "dmlplr/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dmlplr/parallel.hpp"
#include "dmlplr/rng.hpp"
#include "dmlplr/stats.hpp"

namespace dmlplr::synthetic {

namespace {

constexpr double kZ975 = 1.9599639845400545;

// Fixed index coefficients; shapes draw from the leading covariates
// (wrapping for very small p).
constexpr double kLinearCoef[8] = {0.9, -0.7, 0.55, -0.45, 0.35, 0.3, -0.25, 0.2};
constexpr double kTreatmentCoef[8] = {0.6, -0.8, 0.4, -0.3, 0.55, 0.2, -0.35, 0.25};

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace

double shape_index(FunctionShape shape, const Eigen::RowVectorXd& x) {
    const auto p = static_cast<int>(x.size());
    auto at = [&](int j) { return x[j % p]; };
    switch (shape) {
        case FunctionShape::Linear: {
            double norm_sq = 0, s = 0;
            const int terms = std::min(p, 8);
            for (int j = 0; j < terms; ++j) {
                s += kLinearCoef[j] * at(j);
                norm_sq += kLinearCoef[j] * kLinearCoef[j];
            }
            return s / std::sqrt(norm_sq);
        }
        case FunctionShape::NonlinearSmooth:
            return 0.9 * std::sin(3.141592653589793 * at(0)) + 0.9 * std::tanh(1.5 * at(1)) +
                   0.65 * at(0) * at(2) + 0.45 * at(4);
        case FunctionShape::Step:
            return (at(0) > 0 ? 1.0 : 0.0) + (at(1) > 0.5 ? 0.8 : 0.0) +
                   (at(2) < -0.5 ? -0.6 : 0.0);
    }
    return 0.0;
}

double treatment_index(FunctionShape shape, const Eigen::RowVectorXd& x) {
    const auto p = static_cast<int>(x.size());
    auto at = [&](int j) { return x[j % p]; };
    switch (shape) {
        case FunctionShape::Linear: {
            double norm_sq = 0, s = 0;
            const int terms = std::min(p, 8);
            for (int j = 0; j < terms; ++j) {
                s += kTreatmentCoef[j] * at(j);
                norm_sq += kTreatmentCoef[j] * kTreatmentCoef[j];
            }
            return s / std::sqrt(norm_sq);
        }
        case FunctionShape::NonlinearSmooth:
            return 0.8 * at(1) + 0.6 * at(4) + 0.5 * std::tanh(1.2 * at(2));
        case FunctionShape::Step:
            return (at(1) > 0 ? 1.0 : 0.0) + (at(4) > 0.25 ? 0.7 : 0.0) +
                   (at(5) > 0.6 ? -0.4 : 0.0);
    }
    return 0.0;
}

double TruthRecord::g_value(const Eigen::RowVectorXd& x) const {
    return shape_index(config.g_shape, x);
}

Eigen::VectorXd TruthRecord::propensity(const Eigen::RowVectorXd& x) const {
    const double idx = treatment_index(config.m_shape, x);
    const double c = config.confounding_strength;
    const double b0 = config.treatment_intercept;
    if (config.mechanism == TreatmentMechanism::SingleBinary) {
        Eigen::VectorXd p(1);
        p[0] = config.m_shape == FunctionShape::Linear
                   ? std::clamp(0.5 + b0 + c * idx, 0.02, 0.98)
                   : logistic(b0 + c * idx);
        return p;
    }
    const auto p_t = static_cast<Eigen::Index>(config.theta_true.size());
    Eigen::VectorXd scores(p_t);
    for (Eigen::Index j = 0; j < p_t; ++j)
        scores[j] = b0 - std::log(static_cast<double>(p_t)) +
                    c * (static_cast<double>(j + 1) / static_cast<double>(p_t)) * idx;
    const double denom = 1.0 + scores.array().exp().sum();  // baseline score 0
    return scores.array().exp() / denom;
}

GeneratedData generate(const DgpConfig& config) {
    if (config.n < 1 || config.p_covariates < 1) throw std::invalid_argument("bad DGP size");
    if (config.theta_true.empty()) throw std::invalid_argument("theta_true must not be empty");
    if (config.mechanism == TreatmentMechanism::SingleBinary && config.theta_true.size() != 1)
        throw std::invalid_argument("single-binary mechanism takes exactly one theta");
    if (config.confounding_strength < 0)
        throw std::invalid_argument("confounding_strength must be >= 0");

    const int n = config.n;
    const int p = config.p_covariates;
    const auto p_t = static_cast<int>(config.theta_true.size());

    // corr(x_i, x_j) = 0.5^|i-j|
    Eigen::MatrixXd sigma(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(0.5, std::abs(i - j));
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();

    Rng rng(derive_seed(config.seed, 0x6467656eULL));

    GeneratedData out;
    out.truth.config = config;
    Dataset& ds = out.dataset;
    ds.n = n;
    ds.covariates.resize(n, p);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd z(p);
        for (int j = 0; j < p; ++j) z[j] = rng.normal();
        ds.covariates.row(i) = (chol * z).transpose();
    }

    ds.treatments = Eigen::MatrixXd::Zero(n, p_t);
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd probs = out.truth.propensity(ds.covariates.row(i));
        const double u = rng.uniform();
        if (config.mechanism == TreatmentMechanism::SingleBinary) {
            if (u < probs[0]) ds.treatments(i, 0) = 1.0;
        } else {
            double cum = 0.0;
            for (int j = 0; j < p_t; ++j) {
                cum += probs[j];
                if (u < cum) {
                    ds.treatments(i, j) = 1.0;
                    break;
                }
            }
            // u >= cum: baseline category, all zeros
        }
    }

    ds.outcome.resize(n);
    for (int i = 0; i < n; ++i) {
        double y = out.truth.g_value(ds.covariates.row(i)) + config.noise_sd_y * rng.normal();
        for (int j = 0; j < p_t; ++j)
            y += config.theta_true[static_cast<size_t>(j)] * ds.treatments(i, j);
        ds.outcome[i] = y;
    }

    ds.covariate_names.reserve(static_cast<size_t>(p));
    for (int j = 0; j < p; ++j) ds.covariate_names.push_back("x" + std::to_string(j + 1));
    if (config.mechanism == TreatmentMechanism::SingleBinary) {
        ds.treatment_names = {"treated"};
    } else {
        for (int j = 0; j < p_t; ++j) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "t%02d", j + 1);
            ds.treatment_names.push_back(buf);
        }
    }
    ds.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

McReport run_study(const StudyConfig& config, int workers) {
    if (config.reps < 1) throw std::invalid_argument("reps must be >= 1");
    if (config.estimators.empty()) throw std::invalid_argument("no estimators configured");
    const auto clock_start = std::chrono::steady_clock::now();

    const auto n_est = config.estimators.size();
    const auto p_t = config.dgp.theta_true.size();

    McReport report;
    report.reps = config.reps;
    report.rep_records.assign(static_cast<size_t>(config.reps), {});

    parallel_for(config.reps, workers, [&](int r) {
        RepRecord& rec = report.rep_records[static_cast<size_t>(r)];
        rec.cells.assign(n_est, std::vector<CellResult>(p_t));
        rec.joint.assign(n_est, std::nullopt);
        rec.errors.assign(n_est, "");

        DgpConfig dgp = config.dgp;
        dgp.seed = derive_seed(config.seed, 0x72657073ULL, static_cast<uint64_t>(r));
        GeneratedData gen;
        try {
            gen = generate(dgp);
        } catch (const std::exception& e) {
            for (auto& err : rec.errors) err = std::string("dgp: ") + e.what();
            return;
        }

        std::vector<int> all_treatments(p_t);
        std::iota(all_treatments.begin(), all_treatments.end(), 0);

        for (size_t e = 0; e < n_est; ++e) {
            const EstimatorSpec& est = config.estimators[e];
            try {
                // Learner and plan seeds depend on the repetition only, so
                // estimators sharing K see matched folds and forests.
                LearnerSpec g = est.g, m = est.m;
                g.seed = derive_seed(config.seed, 0x677365ULL, static_cast<uint64_t>(r));
                m.seed = derive_seed(config.seed, 0x6d7365ULL, static_cast<uint64_t>(r));

                if (est.kind == EstimatorKind::Fixed) {
                    for (size_t j = 0; j < p_t; ++j)
                        rec.cells[e][j] = {config.dgp.theta_true[j], 0.0, true};
                    continue;
                }
                if (est.kind == EstimatorKind::Naive) {
                    for (size_t j = 0; j < p_t; ++j) {
                        const double theta =
                            naive_plugin(gen.dataset, static_cast<int>(j), g,
                                         OtherTreatmentsPolicy::AppendToCovariates, 1);
                        rec.cells[e][j] = {theta, std::numeric_limits<double>::quiet_NaN(), true};
                    }
                    continue;
                }

                const CrossFitPlan plan =
                    make_plan(config.dgp.n, est.K, est.R,
                              derive_seed(config.seed, 0x706c6eULL, static_cast<uint64_t>(r)));
                const MultiFitResult mfr =
                    fit_multi(gen.dataset, all_treatments, g, m, plan, est.algorithm, 1);
                bool all_ok = true;
                for (size_t j = 0; j < p_t; ++j) {
                    if (!mfr.errors[j].empty()) {
                        all_ok = false;
                        continue;
                    }
                    rec.cells[e][j] = {mfr.fits[j].theta_hat, mfr.fits[j].std_error, true};
                }
                if (!all_ok) {
                    std::string msg;
                    for (const auto& err : mfr.errors)
                        if (!err.empty()) msg += (msg.empty() ? "" : "; ") + err;
                    rec.errors[e] = msg;
                }
                if (all_ok && config.bootstrap_B > 0) {
                    const AdjustedInference ai = adjust_multi(
                        mfr, config.bootstrap_B, config.alpha,
                        derive_seed(config.seed, 0x626f6f74ULL, static_cast<uint64_t>(r)),
                        config.weights, 1);
                    rec.joint[e] = JointRecord{ai.raw_p, ai.mb_p, ai.rowo_p,
                                               ai.holm_p, ai.bonf_p, ai.joint_ci};
                }
            } catch (const std::exception& ex) {
                rec.errors[e] = ex.what();
            }
        }
    });

    // -- aggregation ---------------------------------------------------------
    const auto& truth = config.dgp.theta_true;
    for (size_t e = 0; e < n_est; ++e) {
        EstimatorSummary s;
        s.label = config.estimators[e].label;
        s.mean_bias_by_treatment.assign(p_t, 0.0);

        std::vector<long> ok_count(p_t, 0);
        double sq_sum = 0;
        long sq_n = 0, cover_hits = 0, cover_n = 0;
        double ci_len_sum = 0;
        long joint_reps = 0, joint_cover = 0;
        long fw_mb = 0, fw_rowo = 0, fw_holm = 0, fw_bonf = 0, fw_raw = 0;
        long ord_pairs = 0, ord_correct = 0;

        for (const auto& rec : report.rep_records) {
            if (!rec.errors[e].empty()) {
                ++s.failures;
                continue;
            }
            for (size_t j = 0; j < p_t; ++j) {
                const CellResult& c = rec.cells[e][j];
                if (!c.ok) continue;
                const double err = c.theta - truth[j];
                s.mean_bias_by_treatment[j] += err;
                ++ok_count[j];
                sq_sum += err * err;
                ++sq_n;
                if (std::isfinite(c.se) && c.se > 0) {
                    ++cover_n;
                    ci_len_sum += 2 * kZ975 * c.se;
                    if (std::abs(err) <= kZ975 * c.se) ++cover_hits;
                }
            }
            // ordering among well-separated pairs
            if (p_t > 1) {
                for (size_t a = 0; a < p_t; ++a) {
                    for (size_t b = a + 1; b < p_t; ++b) {
                        const CellResult& ca = rec.cells[e][a];
                        const CellResult& cb = rec.cells[e][b];
                        if (!ca.ok || !cb.ok || !std::isfinite(ca.se) || !std::isfinite(cb.se))
                            continue;
                        const double gap = truth[a] - truth[b];
                        const double se_diff = std::sqrt(ca.se * ca.se + cb.se * cb.se);
                        if (std::abs(gap) <= 4 * se_diff || gap == 0) continue;
                        ++ord_pairs;
                        if ((ca.theta - cb.theta) * gap > 0) ++ord_correct;
                    }
                }
            }
            if (rec.joint[e]) {
                const JointRecord& jr = *rec.joint[e];
                ++joint_reps;
                bool covers_all = true;
                bool any_mb = false, any_rowo = false, any_holm = false, any_bonf = false,
                     any_raw = false;
                for (size_t j = 0; j < p_t; ++j) {
                    const auto ji = static_cast<Eigen::Index>(j);
                    if (truth[j] < jr.joint_ci(ji, 0) || truth[j] > jr.joint_ci(ji, 1))
                        covers_all = false;
                    if (truth[j] == 0.0) {
                        any_mb |= jr.mb_p[ji] <= config.alpha;
                        any_rowo |= jr.rowo_p[ji] <= config.alpha;
                        any_holm |= jr.holm_p[ji] <= config.alpha;
                        any_bonf |= jr.bonf_p[ji] <= config.alpha;
                        any_raw |= jr.raw_p[ji] <= config.alpha;
                    }
                }
                joint_cover += covers_all ? 1 : 0;
                fw_mb += any_mb;
                fw_rowo += any_rowo;
                fw_holm += any_holm;
                fw_bonf += any_bonf;
                fw_raw += any_raw;
            }
        }

        for (size_t j = 0; j < p_t; ++j)
            s.mean_bias_by_treatment[j] =
                ok_count[j] > 0 ? s.mean_bias_by_treatment[j] / static_cast<double>(ok_count[j])
                                : std::numeric_limits<double>::quiet_NaN();
        s.mean_bias = mean_of(s.mean_bias_by_treatment);
        s.rmse = sq_n > 0 ? std::sqrt(sq_sum / static_cast<double>(sq_n)) : 0.0;
        s.has_coverage = cover_n > 0;
        s.coverage = cover_n > 0 ? static_cast<double>(cover_hits) / static_cast<double>(cover_n) : 0;
        s.mean_ci_length = cover_n > 0 ? ci_len_sum / static_cast<double>(cover_n) : 0;
        s.has_joint = joint_reps > 0;
        s.joint_coverage =
            joint_reps > 0 ? static_cast<double>(joint_cover) / static_cast<double>(joint_reps) : 0;
        s.has_fwer = joint_reps > 0;
        if (joint_reps > 0) {
            s.fwer_mb = static_cast<double>(fw_mb) / static_cast<double>(joint_reps);
            s.fwer_rowo = static_cast<double>(fw_rowo) / static_cast<double>(joint_reps);
            s.fwer_holm = static_cast<double>(fw_holm) / static_cast<double>(joint_reps);
            s.fwer_bonf = static_cast<double>(fw_bonf) / static_cast<double>(joint_reps);
            s.fwer_raw = static_cast<double>(fw_raw) / static_cast<double>(joint_reps);
        }
        s.ordering_pairs = ord_pairs;
        s.ordering_correct_frac =
            ord_pairs > 0 ? static_cast<double>(ord_correct) / static_cast<double>(ord_pairs) : 0;
        if (config.estimators[e].kind == EstimatorKind::Fixed)
            s.has_coverage = false;  // zero-width intervals say nothing

        report.failure_count += s.failures;
        report.estimators.push_back(std::move(s));
    }

    if (config.reps < 10) report.flags.push_back("insufficient reps for Monte Carlo aggregates");
    for (const auto& s : report.estimators) {
        if (static_cast<double>(s.failures) > 0.02 * config.reps)
            report.flags.push_back("estimator '" + s.label + "': failure rate above 2%");
        if (config.estimators[static_cast<size_t>(&s - report.estimators.data())].kind ==
            EstimatorKind::Fixed)
            report.flags.push_back("estimator '" + s.label + "': constant estimator, coverage undefined");
    }

    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    return report;
}

McReport heterogeneity_study(const StudyConfig& config, int workers) {
    if (config.dgp.mechanism != TreatmentMechanism::MutuallyExclusiveCategorical)
        throw std::invalid_argument("heterogeneity studies need the categorical mechanism");
    if (config.bootstrap_B <= 0)
        throw std::invalid_argument("heterogeneity studies need bootstrap_B > 0 for joint bands");
    return run_study(config, workers);
}

} // namespace dmlplr::synthetic
