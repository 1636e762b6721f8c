#include "dmlplr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dmlplr/parallel.hpp"
#include "dmlplr/rng.hpp"
#include "dmlplr/stats.hpp"

namespace dmlplr {

ScoreMatrix make_score_matrix(const std::vector<DmlFit>& fits) {
    if (fits.empty()) throw std::invalid_argument("no fits");
    const Eigen::Index n = fits.front().score.size();
    const auto p = static_cast<Eigen::Index>(fits.size());
    ScoreMatrix scores;
    scores.psi.resize(n, p);
    scores.j_mean.resize(p);
    scores.theta.resize(p);
    scores.se.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto& fit = fits[static_cast<size_t>(j)];
        if (fit.score.size() != n) throw std::invalid_argument("score vectors differ in length");
        scores.psi.col(j) = fit.score;
        scores.j_mean[j] = fit.j_hat;
        scores.theta[j] = fit.theta_hat;
        scores.se[j] = fit.std_error;
        scores.labels.push_back(fit.treatment_name);
    }
    return scores;
}

namespace {

double draw_weight(Rng& rng, MultiplierWeights scheme) {
    switch (scheme) {
        case MultiplierWeights::Gaussian:
            return rng.normal();
        case MultiplierWeights::Rademacher:
            return rng.uniform() < 0.5 ? -1.0 : 1.0;
        case MultiplierWeights::Mammen: {
            // two-point distribution with mean 0, variance 1, third moment 1
            static const double sqrt5 = std::sqrt(5.0);
            const double p_low = (sqrt5 + 1.0) / (2.0 * sqrt5);
            return rng.uniform() < p_low ? -(sqrt5 - 1.0) / 2.0 : (sqrt5 + 1.0) / 2.0;
        }
    }
    return 0.0;
}

// B x p matrix of studentized bootstrap statistics.
Eigen::MatrixXd bootstrap_tstats(const ScoreMatrix& scores, int B, uint64_t seed,
                                 MultiplierWeights weights, int workers) {
    const Eigen::Index n = scores.psi.rows();
    const Eigen::Index p = scores.psi.cols();
    if (B < 100) throw std::invalid_argument("need at least 100 bootstrap draws");
    for (Eigen::Index j = 0; j < p; ++j)
        if (!(scores.se[j] > 0) || !(scores.j_mean[j] > 0))
            throw std::runtime_error("degenerate score column: " +
                                     scores.labels[static_cast<size_t>(j)]);

    // psi scaled so that T(b, j) = xi' * psi_scaled_col_j
    Eigen::MatrixXd psi_scaled = scores.psi;
    for (Eigen::Index j = 0; j < p; ++j)
        psi_scaled.col(j) /= static_cast<double>(n) * scores.j_mean[j] * scores.se[j];

    Eigen::MatrixXd T(B, p);
    parallel_for(B, workers, [&](int b) {
        Rng rng(derive_seed(seed, 0x6d756c74ULL, static_cast<uint64_t>(b)));
        Eigen::VectorXd xi(n);
        for (Eigen::Index i = 0; i < n; ++i) xi[i] = draw_weight(rng, weights);
        T.row(b) = (xi.transpose() * psi_scaled);
    });
    return T;
}

// single-step max-statistic adjustment from a precomputed draw matrix
MbResult mb_from_tstats(const ScoreMatrix& scores, const Eigen::MatrixXd& T, double alpha) {
    const int B = static_cast<int>(T.rows());
    const Eigen::Index p = scores.psi.cols();
    std::vector<double> max_stat(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) max_stat[static_cast<size_t>(b)] = T.row(b).cwiseAbs().maxCoeff();

    MbResult result;
    result.p.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double t_abs = std::abs(scores.theta[j] / scores.se[j]);
        int count = 0;
        for (double m : max_stat)
            if (m >= t_abs) ++count;
        result.p[j] = std::max(count, 1) / static_cast<double>(B);
    }

    std::vector<double> sorted = max_stat;
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<size_t>(
        std::min<long>(B - 1, std::max<long>(0, static_cast<long>(std::ceil((1.0 - alpha) * B)) - 1)));
    result.critical_value = sorted[rank];

    result.joint_ci.resize(p, 2);
    for (Eigen::Index j = 0; j < p; ++j) {
        result.joint_ci(j, 0) = scores.theta[j] - result.critical_value * scores.se[j];
        result.joint_ci(j, 1) = scores.theta[j] + result.critical_value * scores.se[j];
    }
    return result;
}

Eigen::VectorXd rw_from_tstats(const ScoreMatrix& scores, const Eigen::MatrixXd& T) {
    const int B = static_cast<int>(T.rows());
    const Eigen::Index p = scores.psi.cols();

    std::vector<Eigen::Index> order(static_cast<size_t>(p));
    std::iota(order.begin(), order.end(), 0);
    Eigen::VectorXd t_abs(p);
    for (Eigen::Index j = 0; j < p; ++j) t_abs[j] = std::abs(scores.theta[j] / scores.se[j]);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (t_abs[a] != t_abs[b]) return t_abs[a] > t_abs[b];
        return a < b;
    });

    // suffix_max[s][b] = max over the not-yet-rejected set {order_s, ...}
    Eigen::MatrixXd suffix_max(B, p);
    suffix_max.col(p - 1) = T.col(order[static_cast<size_t>(p - 1)]).cwiseAbs();
    for (Eigen::Index s = p - 2; s >= 0; --s)
        suffix_max.col(s) =
            suffix_max.col(s + 1).cwiseMax(T.col(order[static_cast<size_t>(s)]).cwiseAbs());

    Eigen::VectorXd adjusted(p);
    double running = 0.0;
    for (Eigen::Index s = 0; s < p; ++s) {
        const Eigen::Index j = order[static_cast<size_t>(s)];
        int count = 0;
        for (int b = 0; b < B; ++b)
            if (suffix_max(b, s) >= t_abs[j]) ++count;
        const double step_p = std::max(count, 1) / static_cast<double>(B);
        running = std::max(running, step_p);
        adjusted[j] = running;
    }
    return adjusted;
}

} // namespace

MbResult multiplier_bootstrap(const ScoreMatrix& scores, int B, double alpha, uint64_t seed,
                              MultiplierWeights weights, int workers) {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0,1)");
    return mb_from_tstats(scores, bootstrap_tstats(scores, B, seed, weights, workers), alpha);
}

Eigen::VectorXd romano_wolf(const ScoreMatrix& scores, int B, uint64_t seed,
                            MultiplierWeights weights, int workers) {
    return rw_from_tstats(scores, bootstrap_tstats(scores, B, seed, weights, workers));
}

Eigen::VectorXd holm(const Eigen::VectorXd& raw_p) {
    const Eigen::Index p = raw_p.size();
    for (Eigen::Index j = 0; j < p; ++j)
        if (raw_p[j] < 0 || raw_p[j] > 1) throw std::invalid_argument("p-values must lie in [0,1]");
    std::vector<Eigen::Index> order(static_cast<size_t>(p));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return raw_p[a] < raw_p[b]; });
    Eigen::VectorXd adjusted(p);
    double running = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::Index j = order[static_cast<size_t>(k)];
        const double step = std::min(1.0, static_cast<double>(p - k) * raw_p[j]);
        running = std::max(running, step);
        adjusted[j] = running;
    }
    return adjusted;
}

Eigen::VectorXd bonferroni(const Eigen::VectorXd& raw_p) {
    const Eigen::Index p = raw_p.size();
    for (Eigen::Index j = 0; j < p; ++j)
        if (raw_p[j] < 0 || raw_p[j] > 1) throw std::invalid_argument("p-values must lie in [0,1]");
    return (raw_p * static_cast<double>(p)).cwiseMin(1.0);
}

AdjustedInference adjust(const ScoreMatrix& scores, int B, double alpha, uint64_t seed,
                         MultiplierWeights weights, int workers) {
    AdjustedInference out;
    out.labels = scores.labels;
    out.alpha = alpha;
    out.B = B;
    out.weight_scheme = weights;

    const Eigen::Index p = scores.psi.cols();
    out.raw_p.resize(p);
    for (Eigen::Index j = 0; j < p; ++j)
        out.raw_p[j] = two_sided_p(scores.theta[j] / scores.se[j]);

    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0,1)");
    const Eigen::MatrixXd T = bootstrap_tstats(scores, B, seed, weights, workers);
    const MbResult mb = mb_from_tstats(scores, T, alpha);
    out.mb_p = mb.p;
    out.joint_ci = mb.joint_ci;
    out.critical_value = mb.critical_value;
    out.rowo_p = rw_from_tstats(scores, T);
    out.holm_p = holm(out.raw_p);
    out.bonf_p = bonferroni(out.raw_p);
    return out;
}

AdjustedInference adjust_multi(const MultiFitResult& result, int B, double alpha, uint64_t seed,
                               MultiplierWeights weights, int workers) {
    for (const auto& err : result.errors)
        if (!err.empty()) throw std::runtime_error("cannot adjust a failed fit: " + err);
    const auto R = result.per_rep.size();
    if (R == 0) throw std::invalid_argument("no repetitions to adjust");

    std::vector<AdjustedInference> per_rep;
    per_rep.reserve(R);
    for (size_t r = 0; r < R; ++r)
        per_rep.push_back(adjust(make_score_matrix(result.per_rep[r]), B, alpha,
                                 derive_seed(seed, 0x616467ULL, r), weights, workers));
    if (R == 1) {
        AdjustedInference out = per_rep.front();
        // headline estimates come from the aggregated fits
        const auto p = static_cast<Eigen::Index>(result.fits.size());
        out.raw_p.resize(p);
        for (Eigen::Index j = 0; j < p; ++j)
            out.raw_p[j] = result.fits[static_cast<size_t>(j)].p_value;
        out.holm_p = holm(out.raw_p);
        out.bonf_p = bonferroni(out.raw_p);
        return out;
    }

    const auto p = static_cast<Eigen::Index>(result.fits.size());
    AdjustedInference out;
    out.alpha = alpha;
    out.B = B;
    out.weight_scheme = weights;
    out.labels = per_rep.front().labels;
    out.raw_p.resize(p);
    out.mb_p.resize(p);
    out.rowo_p.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        out.raw_p[j] = result.fits[static_cast<size_t>(j)].p_value;
        std::vector<double> mb, rw;
        for (size_t r = 0; r < R; ++r) {
            mb.push_back(per_rep[r].mb_p[j]);
            rw.push_back(per_rep[r].rowo_p[j]);
        }
        out.mb_p[j] = median_of(mb);
        out.rowo_p[j] = median_of(rw);
    }
    out.holm_p = holm(out.raw_p);
    out.bonf_p = bonferroni(out.raw_p);

    std::vector<double> crits;
    for (size_t r = 0; r < R; ++r) crits.push_back(per_rep[r].critical_value);
    out.critical_value = median_of(crits);
    out.joint_ci.resize(p, 2);
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto& fit = result.fits[static_cast<size_t>(j)];
        out.joint_ci(j, 0) = fit.theta_hat - out.critical_value * fit.std_error;
        out.joint_ci(j, 1) = fit.theta_hat + out.critical_value * fit.std_error;
    }
    return out;
}

} // namespace dmlplr
