#include "dmlplr/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "dmlplr/parallel.hpp"
#include "dmlplr/rng.hpp"

namespace dmlplr {

namespace {

struct Standardized {
    Eigen::MatrixXd X;       // zero mean, unit variance columns (constant columns zeroed)
    Eigen::VectorXd y;       // centered
    Eigen::VectorXd mu, sigma;
    double y_mean = 0.0;
};

Standardized standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Standardized s;
    const auto n = static_cast<double>(X.rows());
    s.mu = X.colwise().mean();
    s.sigma.resize(X.cols());
    s.X.resize(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const Eigen::VectorXd centered = X.col(j).array() - s.mu[j];
        const double var = centered.squaredNorm() / n;
        s.sigma[j] = std::sqrt(var);
        s.X.col(j) = s.sigma[j] > 0 ? (centered / s.sigma[j]).eval()
                                    : Eigen::VectorXd::Zero(X.rows()).eval();
    }
    s.y_mean = y.mean();
    s.y = y.array() - s.y_mean;
    return s;
}

// Back-transform standardized slopes to the original scale.
LinearModel destandardize(const Standardized& s, const Eigen::VectorXd& beta_std) {
    LinearModel m;
    m.coef.resize(beta_std.size());
    for (Eigen::Index j = 0; j < beta_std.size(); ++j)
        m.coef[j] = s.sigma[j] > 0 ? beta_std[j] / s.sigma[j] : 0.0;
    m.intercept = s.y_mean - m.coef.dot(s.mu);
    return m;
}

double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

LinearModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, bool intercept) {
    Eigen::MatrixXd A(X.rows(), X.cols() + (intercept ? 1 : 0));
    if (intercept) {
        A.col(0).setOnes();
        A.rightCols(X.cols()) = X;
    } else {
        A = X;
    }
    const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(y);
    LinearModel m;
    if (intercept) {
        m.intercept = sol[0];
        m.coef = sol.tail(X.cols());
    } else {
        m.intercept = 0.0;
        m.coef = sol;
    }
    return m;
}

// 5-fold CV over a 25-point log grid from lambda_max down to 1e-3*lambda_max.
double select_lambda_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, bool is_lasso,
                        uint64_t seed, double tol, int max_iter) {
    constexpr int kGrid = 25;
    constexpr int kFolds = 5;
    const auto n = static_cast<int>(X.rows());
    const double lmax = std::max(lasso_lambda_max(X, y), 1e-12);
    std::vector<double> grid(kGrid);
    for (int i = 0; i < kGrid; ++i)
        grid[static_cast<size_t>(i)] = lmax * std::pow(1e-3, static_cast<double>(i) / (kGrid - 1));

    std::vector<int> fold(static_cast<size_t>(n));
    {
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, 0x6c616dULL));
        rng.shuffle(order);
        for (int i = 0; i < n; ++i) fold[static_cast<size_t>(order[static_cast<size_t>(i)])] = i % kFolds;
    }

    std::vector<double> cv_error(kGrid, 0.0);
    for (int k = 0; k < kFolds; ++k) {
        std::vector<int> train, test;
        for (int i = 0; i < n; ++i) (fold[static_cast<size_t>(i)] == k ? test : train).push_back(i);
        if (train.size() < 2 || test.empty()) continue;
        Eigen::MatrixXd Xtr(train.size(), X.cols()), Xte(test.size(), X.cols());
        Eigen::VectorXd ytr(train.size()), yte(test.size());
        for (size_t i = 0; i < train.size(); ++i) { Xtr.row(static_cast<Eigen::Index>(i)) = X.row(train[i]); ytr[static_cast<Eigen::Index>(i)] = y[train[i]]; }
        for (size_t i = 0; i < test.size(); ++i) { Xte.row(static_cast<Eigen::Index>(i)) = X.row(test[i]); yte[static_cast<Eigen::Index>(i)] = y[test[i]]; }
        for (int g = 0; g < kGrid; ++g) {
            LinearModel m;
            if (is_lasso) {
                const auto res = fit_lasso(Xtr, ytr, grid[static_cast<size_t>(g)], tol, max_iter);
                m.coef = res.coef;
                m.intercept = res.intercept;
            } else {
                m = fit_ridge(Xtr, ytr, grid[static_cast<size_t>(g)]);
            }
            const Eigen::VectorXd pred = (Xte * m.coef).array() + m.intercept;
            cv_error[static_cast<size_t>(g)] += (pred - yte).squaredNorm();
        }
    }
    int best = 0;
    for (int g = 1; g < kGrid; ++g)
        if (cv_error[static_cast<size_t>(g)] < cv_error[static_cast<size_t>(best)]) best = g;
    return grid[static_cast<size_t>(best)];
}

} // namespace

void LearnerSpec::validate(Eigen::Index n_features) const {
    if (kind == LearnerKind::RandomForestReg || kind == LearnerKind::RandomForestClf) {
        if (num_trees < 1) throw std::invalid_argument("num_trees must be >= 1");
        if (mtry < 0 || mtry > n_features)
            throw std::invalid_argument("mtry must lie in [1, #covariates] (0 for the preset rule)");
        if (max_depth < 0) throw std::invalid_argument("max_depth must be >= 1 (0 for unlimited)");
        if (min_node_size < 1) throw std::invalid_argument("min_node_size must be >= 1");
    }
    if ((kind == LearnerKind::Lasso || kind == LearnerKind::Ridge) && lambda < 0 && lambda != -1.0)
        throw std::invalid_argument("lambda must be >= 0, or -1 for CV selection");
}

int auto_mtry(Eigen::Index n_features) {
    const int p = static_cast<int>(n_features);
    if (p >= 50) return 50;
    return std::max(1, std::min(p, 4 * static_cast<int>(std::floor(std::sqrt(p)))));
}

LearnerSpec learner_preset(const std::string& name, uint64_t seed) {
    LearnerSpec spec;
    spec.seed = seed;
    if (name == "rf-g") {
        spec.kind = LearnerKind::RandomForestReg;
        spec.num_trees = 500; spec.mtry = 0; spec.min_node_size = 10; spec.max_depth = 7;
    } else if (name == "rf-m") {
        spec.kind = LearnerKind::RandomForestClf;
        spec.num_trees = 500; spec.mtry = 0; spec.min_node_size = 10; spec.max_depth = 5;
    } else if (name == "rf-g-restrained") {
        spec.kind = LearnerKind::RandomForestReg;
        spec.num_trees = 500; spec.mtry = 0; spec.min_node_size = 10; spec.max_depth = 5;
    } else if (name == "rf-m-restrained") {
        spec.kind = LearnerKind::RandomForestClf;
        spec.num_trees = 500; spec.mtry = 0; spec.min_node_size = 10; spec.max_depth = 3;
    } else if (name == "ols") {
        spec.kind = LearnerKind::Ols;
    } else if (name == "lasso") {
        spec.kind = LearnerKind::Lasso;
    } else if (name == "ridge") {
        spec.kind = LearnerKind::Ridge;
    } else if (name == "const-mean") {
        spec.kind = LearnerKind::ConstantMean;
    } else {
        throw std::invalid_argument("unknown learner preset: " + name);
    }
    return spec;
}

double lasso_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const Standardized s = standardize(X, y);
    const auto n = static_cast<double>(X.rows());
    return (s.X.transpose() * s.y).cwiseAbs().maxCoeff() / n;
}

LassoResult fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                      double tol, int max_iter) {
    if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
    if (X.rows() != y.size()) throw std::invalid_argument("X and y row counts differ");
    const Standardized s = standardize(X, y);
    const auto n = static_cast<double>(X.rows());
    const Eigen::Index p = X.cols();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd residual = s.y;
    LassoResult result;
    result.converged = false;

    int iter = 0;
    for (; iter < max_iter; ++iter) {
        double max_update = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (s.sigma[j] <= 0) continue;  // constant column stays at zero
            const double rho = s.X.col(j).dot(residual) / n + beta[j];
            const double updated = soft_threshold(rho, lambda);
            const double delta = updated - beta[j];
            if (delta != 0.0) {
                residual -= s.X.col(j) * delta;
                beta[j] = updated;
            }
            max_update = std::max(max_update, std::abs(delta));
        }
        if (max_update < tol) {
            result.converged = true;
            ++iter;
            break;
        }
    }
    result.iterations = iter;

    const LinearModel m = destandardize(s, beta);
    result.coef = m.coef;
    result.intercept = m.intercept;
    return result;
}

LinearModel fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
    if (X.rows() != y.size()) throw std::invalid_argument("X and y row counts differ");
    const Standardized s = standardize(X, y);
    const auto n = static_cast<double>(X.rows());

    Eigen::MatrixXd gram = s.X.transpose() * s.X / n;
    gram.diagonal().array() += lambda;
    const Eigen::VectorXd rhs = s.X.transpose() * s.y / n;

    Eigen::VectorXd beta_std;
    if (lambda == 0.0) {
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
        if (!lu.isInvertible())
            throw std::runtime_error("singular ridge system with lambda = 0");
        beta_std = lu.solve(rhs);
    } else {
        beta_std = Eigen::LDLT<Eigen::MatrixXd>(gram).solve(rhs);
    }
    return destandardize(s, beta_std);
}

FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                Task task, int workers) {
    if (X.rows() != y.size()) throw std::invalid_argument("X and y row counts differ");
    if (X.rows() < 2) throw std::invalid_argument("need at least 2 training rows");
    spec.validate(X.cols());
    if (task == Task::BinaryClassification) {
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (y[i] != 0.0 && y[i] != 1.0)
                throw std::invalid_argument("classification targets must be 0 or 1");
    }

    FittedModel model;
    model.spec_ = spec;
    model.task_ = task;
    model.n_features_ = X.cols();

    // A constant target is a fitted constant, never an error.
    const bool constant_target = (y.array() == y[0]).all();

    switch (spec.kind) {
        case LearnerKind::ConstantMean:
            model.model_ = y.mean();
            break;
        case LearnerKind::RandomForestReg:
        case LearnerKind::RandomForestClf: {
            ForestParams params;
            params.num_trees = spec.num_trees;
            params.mtry = spec.mtry > 0 ? spec.mtry : auto_mtry(X.cols());
            params.min_node_size = spec.min_node_size;
            params.max_depth = spec.max_depth;
            params.bootstrap = spec.bootstrap;
            params.seed = spec.seed;
            auto forest = std::make_shared<RandomForest>();
            forest->fit(X, y, params, workers);
            model.oob_score_ = spec.kind == LearnerKind::RandomForestClf ? forest->oob_accuracy()
                                                                         : forest->oob_r2();
            model.model_ = std::move(forest);
            break;
        }
        case LearnerKind::Ols:
            if (constant_target) {
                model.model_ = y[0];
            } else {
                model.model_ = fit_ols(X, y, spec.intercept);
            }
            break;
        case LearnerKind::Lasso: {
            if (constant_target) {
                model.model_ = y[0];
                break;
            }
            const double lambda = spec.lambda >= 0
                                      ? spec.lambda
                                      : select_lambda_cv(X, y, true, spec.seed, spec.tol, spec.max_iter);
            auto res = fit_lasso(X, y, lambda, spec.tol, spec.max_iter);
            LinearModel m;
            m.coef = res.coef;
            m.intercept = res.intercept;
            model.lasso_info_ = std::move(res);
            model.model_ = std::move(m);
            break;
        }
        case LearnerKind::Ridge: {
            if (constant_target) {
                model.model_ = y[0];
                break;
            }
            const double lambda = spec.lambda >= 0
                                      ? spec.lambda
                                      : select_lambda_cv(X, y, false, spec.seed, spec.tol, spec.max_iter);
            model.model_ = fit_ridge(X, y, lambda);
            break;
        }
    }
    return model;
}

Eigen::VectorXd FittedModel::predict(const Eigen::MatrixXd& X) const {
    if (X.cols() != n_features_)
        throw std::invalid_argument("prediction matrix has " + std::to_string(X.cols()) +
                                    " columns, model was trained with " +
                                    std::to_string(n_features_));
    Eigen::VectorXd out;
    if (const auto* constant = std::get_if<double>(&model_)) {
        out = Eigen::VectorXd::Constant(X.rows(), *constant);
    } else if (const auto* linear = std::get_if<LinearModel>(&model_)) {
        out = (X * linear->coef).array() + linear->intercept;
    } else {
        out = std::get<std::shared_ptr<RandomForest>>(model_)->predict(X);
    }
    // Linear probability fits can leave [0,1]; probabilities may not.
    if (task_ == Task::BinaryClassification)
        out = out.cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

Eigen::VectorXd out_of_fold_predictions(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& y, const std::vector<int>& folds,
                                        Task task, int workers) {
    const auto n = static_cast<size_t>(X.rows());
    if (folds.size() != n) throw std::invalid_argument("fold labels must cover every row");
    int K = 0;
    for (int f : folds) {
        if (f < 0) throw std::invalid_argument("fold labels must be non-negative");
        K = std::max(K, f + 1);
    }

    // Single-fold plans fit and predict in sample (test-only degenerate mode).
    if (K == 1) return fit(spec, X, y, task, workers).predict(X);

    std::vector<std::vector<int>> members(static_cast<size_t>(K));
    for (size_t i = 0; i < n; ++i) members[static_cast<size_t>(folds[i])].push_back(static_cast<int>(i));
    for (int k = 0; k < K; ++k)
        if (n - members[static_cast<size_t>(k)].size() < 2)
            throw std::invalid_argument("fold " + std::to_string(k) +
                                        " leaves fewer than 2 training rows");

    Eigen::VectorXd out(X.rows());
    parallel_for(K, workers, [&](int k) {
        const auto& test = members[static_cast<size_t>(k)];
        const size_t n_train = n - test.size();
        Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(n_train), X.cols());
        Eigen::VectorXd ytr(static_cast<Eigen::Index>(n_train));
        Eigen::Index w = 0;
        for (size_t i = 0; i < n; ++i) {
            if (folds[i] == k) continue;
            Xtr.row(w) = X.row(static_cast<Eigen::Index>(i));
            ytr[w] = y[static_cast<Eigen::Index>(i)];
            ++w;
        }
        const FittedModel model = fit(spec, Xtr, ytr, task, 1);
        Eigen::MatrixXd Xte(static_cast<Eigen::Index>(test.size()), X.cols());
        for (size_t i = 0; i < test.size(); ++i)
            Xte.row(static_cast<Eigen::Index>(i)) = X.row(test[i]);
        const Eigen::VectorXd pred = model.predict(Xte);
        for (size_t i = 0; i < test.size(); ++i) out[test[i]] = pred[static_cast<Eigen::Index>(i)];
    });
    return out;
}

} // namespace dmlplr
