#include "dmlplr/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dmlplr/parallel.hpp"
#include "dmlplr/rng.hpp"

namespace dmlplr {

namespace {

// Above this feature count the builder gathers and sorts per node instead of
// partitioning pre-sorted per-feature index streams (the streams need p*n
// working integers per tree).
constexpr int kPresortMaxFeatures = 64;

struct SplitCandidate {
    double score = -1.0;  // sum_L^2/n_L + sum_R^2/n_R, to be maximized
    int feature = -1;
    double threshold = 0.0;
};

struct NodeRange {
    int node_id;
    uint32_t begin, end;
    int depth;
};

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                const std::vector<std::vector<uint32_t>>* presorted)
        : X_(X), y_(y), params_(params), presorted_(presorted),
          n_(static_cast<uint32_t>(X.rows())), p_(static_cast<int>(X.cols())) {
        mtry_ = params.mtry <= 0 ? p_ : std::min(params.mtry, p_);
        feature_scratch_.resize(static_cast<size_t>(p_));
    }

    // in_bag is the output bitmap used later for out-of-bag scoring.
    std::vector<TreeNode> build(uint64_t tree_seed, std::vector<uint8_t>& in_bag) {
        Rng rng(tree_seed);
        counts_.assign(n_, 0);
        if (params_.bootstrap) {
            for (uint32_t i = 0; i < n_; ++i) ++counts_[rng.bounded(n_)];
        } else {
            std::fill(counts_.begin(), counts_.end(), 1);
        }
        in_bag.assign(n_, 0);
        for (uint32_t i = 0; i < n_; ++i) in_bag[i] = counts_[i] > 0 ? 1 : 0;

        nodes_.clear();
        if (presorted_) {
            build_streams();
            grow<true>(rng);
        } else {
            rows_.clear();
            rows_.reserve(n_);
            for (uint32_t i = 0; i < n_; ++i)
                for (uint16_t c = 0; c < counts_[i]; ++c) rows_.push_back(i);
            grow<false>(rng);
        }
        return std::move(nodes_);
    }

private:
    // Expand the pre-sorted per-feature orderings into bootstrap streams.
    void build_streams() {
        streams_.assign(static_cast<size_t>(p_), {});
        for (int f = 0; f < p_; ++f) {
            auto& s = streams_[static_cast<size_t>(f)];
            s.clear();
            s.reserve(n_);
            for (uint32_t idx : (*presorted_)[static_cast<size_t>(f)])
                for (uint16_t c = 0; c < counts_[idx]; ++c) s.push_back(idx);
        }
        partition_buf_.resize(n_);
    }

    template <bool Presorted>
    void grow(Rng& rng) {
        const uint32_t n_samples = Presorted
                                       ? static_cast<uint32_t>(streams_[0].size())
                                       : static_cast<uint32_t>(rows_.size());
        nodes_.push_back(TreeNode{});
        std::vector<NodeRange> stack;
        stack.push_back({0, 0, n_samples, 0});

        while (!stack.empty()) {
            const NodeRange nr = stack.back();
            stack.pop_back();
            const uint32_t count = nr.end - nr.begin;

            double sum = 0.0, sum_sq = 0.0;
            if constexpr (Presorted) {
                for (uint32_t i = nr.begin; i < nr.end; ++i) {
                    const double v = y_[streams_[0][i]];
                    sum += v;
                    sum_sq += v * v;
                }
            } else {
                for (uint32_t i = nr.begin; i < nr.end; ++i) {
                    const double v = y_[rows_[i]];
                    sum += v;
                    sum_sq += v * v;
                }
            }
            nodes_[static_cast<size_t>(nr.node_id)].value = sum / count;

            const bool depth_ok = params_.max_depth <= 0 || nr.depth < params_.max_depth;
            if (!depth_ok || count < 2 * static_cast<uint32_t>(params_.min_node_size) ||
                count < 2)
                continue;
            if (sum_sq - sum * sum / count <= 0.0) continue;  // pure node

            const auto& candidates = sample_candidates(rng);
            SplitCandidate best;
            const double parent_score = sum * sum / count;
            for (int f : candidates) {
                if constexpr (Presorted)
                    scan_feature_presorted(f, nr, sum, best);
                else
                    scan_feature_gather(f, nr, sum, best);
            }
            if (best.feature < 0 || !(best.score > parent_score)) continue;

            const int left_id = static_cast<int>(nodes_.size());
            const int right_id = left_id + 1;
            nodes_.push_back(TreeNode{});
            nodes_.push_back(TreeNode{});
            {
                auto& node = nodes_[static_cast<size_t>(nr.node_id)];
                node.feature = best.feature;
                node.threshold = best.threshold;
                node.left = left_id;
                node.right = right_id;
            }

            // Children that can never split only need their means; skip the
            // stream partition in that case.
            const bool children_can_split =
                (params_.max_depth <= 0 || nr.depth + 1 < params_.max_depth) &&
                count >= 3 * static_cast<uint32_t>(params_.min_node_size);
            if (!children_can_split) {
                double sum_left = 0.0;
                uint32_t n_left = 0;
                if constexpr (Presorted) {
                    const uint32_t* s = streams_[static_cast<size_t>(best.feature)].data();
                    const double* col = X_.col(best.feature).data();
                    for (uint32_t i = nr.begin; i < nr.end; ++i) {
                        if (col[s[i]] <= best.threshold) {
                            sum_left += y_[s[i]];
                            ++n_left;
                        }
                    }
                } else {
                    for (uint32_t i = nr.begin; i < nr.end; ++i) {
                        const uint32_t row = rows_[i];
                        if (X_(row, best.feature) <= best.threshold) {
                            sum_left += y_[row];
                            ++n_left;
                        }
                    }
                }
                nodes_[static_cast<size_t>(left_id)].value = sum_left / n_left;
                nodes_[static_cast<size_t>(right_id)].value =
                    (sum - sum_left) / (count - n_left);
                continue;
            }

            uint32_t mid;
            if constexpr (Presorted)
                mid = partition_presorted(nr, best);
            else
                mid = partition_gather(nr, best);
            stack.push_back({right_id, mid, nr.end, nr.depth + 1});
            stack.push_back({left_id, nr.begin, mid, nr.depth + 1});
        }
    }

    // Candidate features in ascending index order (the tie-break order).
    const std::vector<int>& sample_candidates(Rng& rng) {
        if (mtry_ >= p_) {
            if (static_cast<int>(candidates_.size()) != p_) {
                candidates_.resize(static_cast<size_t>(p_));
                std::iota(candidates_.begin(), candidates_.end(), 0);
            }
            return candidates_;
        }
        std::iota(feature_scratch_.begin(), feature_scratch_.end(), 0);
        for (int i = 0; i < mtry_; ++i) {
            const uint32_t j = i + rng.bounded(static_cast<uint32_t>(p_ - i));
            std::swap(feature_scratch_[static_cast<size_t>(i)],
                      feature_scratch_[static_cast<size_t>(j)]);
        }
        candidates_.assign(feature_scratch_.begin(), feature_scratch_.begin() + mtry_);
        std::sort(candidates_.begin(), candidates_.end());
        return candidates_;
    }

    void scan_feature_presorted(int f, const NodeRange& nr, double total_sum,
                                SplitCandidate& best) {
        const uint32_t* s = streams_[static_cast<size_t>(f)].data();
        const double* col = X_.col(f).data();
        const uint32_t count = nr.end - nr.begin;
        const auto min_node = static_cast<uint32_t>(params_.min_node_size);
        double sum_left = 0.0;
        double v = col[s[nr.begin]];
        for (uint32_t i = nr.begin; i + 1 < nr.end; ++i) {
            sum_left += y_[s[i]];
            const double v_next = col[s[i + 1]];
            if (v == v_next) continue;
            const uint32_t n_left = i - nr.begin + 1;
            const uint32_t n_right = count - n_left;
            if (n_left >= min_node && n_right >= min_node) {
                const double sum_right = total_sum - sum_left;
                const double score =
                    sum_left * sum_left / n_left + sum_right * sum_right / n_right;
                if (score > best.score) {
                    best.score = score;
                    best.feature = f;
                    best.threshold = v + 0.5 * (v_next - v);
                }
            }
            v = v_next;
        }
    }

    void scan_feature_gather(int f, const NodeRange& nr, double total_sum,
                             SplitCandidate& best) {
        gather_.clear();
        for (uint32_t i = nr.begin; i < nr.end; ++i)
            gather_.emplace_back(X_(rows_[i], f), rows_[i]);
        std::sort(gather_.begin(), gather_.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        const uint32_t count = nr.end - nr.begin;
        const auto min_node = static_cast<uint32_t>(params_.min_node_size);
        double sum_left = 0.0;
        for (uint32_t i = 0; i + 1 < count; ++i) {
            sum_left += y_[gather_[i].second];
            if (gather_[i].first == gather_[i + 1].first) continue;
            const uint32_t n_left = i + 1;
            const uint32_t n_right = count - n_left;
            if (n_left < min_node || n_right < min_node) continue;
            const double sum_right = total_sum - sum_left;
            const double score = sum_left * sum_left / n_left + sum_right * sum_right / n_right;
            if (score > best.score) {
                best.score = score;
                best.feature = f;
                best.threshold = gather_[i].first + 0.5 * (gather_[i + 1].first - gather_[i].first);
            }
        }
    }

    // Stable partition of every feature stream so sorted order survives the
    // split; returns the boundary position. The left/right decision is
    // evaluated once per row into a mask shared by all feature streams.
    uint32_t partition_presorted(const NodeRange& nr, const SplitCandidate& split) {
        if (go_left_.size() != n_) go_left_.assign(n_, 0);
        {
            const double* col = X_.col(split.feature).data();
            const uint32_t* s = streams_[static_cast<size_t>(split.feature)].data();
            for (uint32_t i = nr.begin; i < nr.end; ++i)
                go_left_[s[i]] = col[s[i]] <= split.threshold ? 1 : 0;
        }
        uint32_t mid = nr.begin;
        for (int f = 0; f < p_; ++f) {
            uint32_t* s = streams_[static_cast<size_t>(f)].data();
            uint32_t left_pos = nr.begin;
            uint32_t right_pos = 0;
            for (uint32_t i = nr.begin; i < nr.end; ++i) {
                const uint32_t row = s[i];
                if (go_left_[row])
                    s[left_pos++] = row;
                else
                    partition_buf_[right_pos++] = row;
            }
            std::copy(partition_buf_.begin(), partition_buf_.begin() + right_pos, s + left_pos);
            mid = left_pos;
        }
        return mid;
    }

    uint32_t partition_gather(const NodeRange& nr, const SplitCandidate& split) {
        auto it = std::stable_partition(rows_.begin() + nr.begin, rows_.begin() + nr.end,
                                        [&](uint32_t row) {
                                            return X_(row, split.feature) <= split.threshold;
                                        });
        return static_cast<uint32_t>(it - rows_.begin());
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& y_;
    const ForestParams& params_;
    const std::vector<std::vector<uint32_t>>* presorted_;
    uint32_t n_;
    int p_;
    int mtry_;

    std::vector<uint16_t> counts_;
    std::vector<std::vector<uint32_t>> streams_;  // presorted strategy
    std::vector<uint32_t> partition_buf_;
    std::vector<uint8_t> go_left_;
    std::vector<uint32_t> rows_;                  // gather strategy
    std::vector<std::pair<double, uint32_t>> gather_;
    std::vector<int> feature_scratch_;
    std::vector<int> candidates_;
    std::vector<TreeNode> nodes_;
};

double tree_predict(const std::vector<TreeNode>& nodes, const auto& row) {
    int id = 0;
    while (nodes[static_cast<size_t>(id)].feature >= 0) {
        const auto& node = nodes[static_cast<size_t>(id)];
        id = row[node.feature] <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<size_t>(id)].value;
}

} // namespace

void RandomForest::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const ForestParams& params, int workers) {
    if (X.rows() != y.size()) throw std::invalid_argument("X and y row counts differ");
    if (X.rows() < 2) throw std::invalid_argument("need at least 2 training rows");
    if (params.num_trees < 1) throw std::invalid_argument("num_trees must be >= 1");
    if (params.min_node_size < 1) throw std::invalid_argument("min_node_size must be >= 1");

    n_features_ = X.cols();
    const auto n = static_cast<uint32_t>(X.rows());
    const int p = static_cast<int>(X.cols());

    std::vector<std::vector<uint32_t>> presorted;
    const bool use_presort = p <= kPresortMaxFeatures;
    if (use_presort) {
        presorted.resize(static_cast<size_t>(p));
        for (int f = 0; f < p; ++f) {
            auto& idx = presorted[static_cast<size_t>(f)];
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(),
                             [&](uint32_t a, uint32_t b) { return X(a, f) < X(b, f); });
        }
    }

    trees_.assign(static_cast<size_t>(params.num_trees), {});
    std::vector<std::vector<uint8_t>> in_bag(static_cast<size_t>(params.num_trees));
    parallel_for(params.num_trees, workers, [&](int t) {
        TreeBuilder builder(X, y, params, use_presort ? &presorted : nullptr);
        trees_[static_cast<size_t>(t)] =
            builder.build(derive_seed(params.seed, 0x7265650ULL, static_cast<uint64_t>(t)),
                          in_bag[static_cast<size_t>(t)]);
    });

    // Out-of-bag diagnostics, accumulated in tree order for determinism.
    oob_r2_ = std::numeric_limits<double>::quiet_NaN();
    oob_accuracy_ = std::numeric_limits<double>::quiet_NaN();
    if (params.bootstrap) {
        Eigen::VectorXd oob_sum = Eigen::VectorXd::Zero(X.rows());
        Eigen::VectorXi oob_cnt = Eigen::VectorXi::Zero(X.rows());
        for (size_t t = 0; t < trees_.size(); ++t) {
            for (uint32_t i = 0; i < n; ++i) {
                if (in_bag[t][i]) continue;
                oob_sum[i] += tree_predict(trees_[t], X.row(i));
                ++oob_cnt[i];
            }
        }
        const double y_mean = y.mean();
        double sse = 0, sst = 0, correct = 0;
        int covered = 0;
        for (uint32_t i = 0; i < n; ++i) {
            if (oob_cnt[i] == 0) continue;
            const double pred = oob_sum[i] / oob_cnt[i];
            sse += (y[i] - pred) * (y[i] - pred);
            sst += (y[i] - y_mean) * (y[i] - y_mean);
            correct += ((pred >= 0.5) == (y[i] >= 0.5)) ? 1.0 : 0.0;
            ++covered;
        }
        if (covered > 0) {
            oob_r2_ = sst > 0 ? 1.0 - sse / sst : 0.0;
            oob_accuracy_ = correct / covered;
        }
    }
}

Eigen::VectorXd RandomForest::predict(const Eigen::MatrixXd& X) const {
    if (X.cols() != n_features_)
        throw std::invalid_argument("prediction matrix has wrong column count");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double sum = 0.0;
        for (const auto& tree : trees_) sum += tree_predict(tree, X.row(i));
        out[i] = sum / static_cast<double>(trees_.size());
    }
    return out;
}

double RandomForest::predict_row(const Eigen::RowVectorXd& row) const {
    if (row.size() != n_features_)
        throw std::invalid_argument("prediction row has wrong column count");
    double sum = 0.0;
    for (const auto& tree : trees_) sum += tree_predict(tree, row);
    return sum / static_cast<double>(trees_.size());
}

} // namespace dmlplr
