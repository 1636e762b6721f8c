#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dmlplr {

struct ForestParams {
    int num_trees = 500;
    int mtry = 0;           // 0: all features
    int min_node_size = 10; // smallest allowed child node (bootstrap counts)
    int max_depth = 0;      // number of split levels below the root; 0: unlimited
    bool bootstrap = true;  // sample-with-replacement of size n per tree
    uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf mean (class-1 fraction for 0/1 targets)
};

// CART-style forest for regression and binary-probability targets. Splits
// maximize variance reduction, which on {0,1} targets coincides with the
// Gini impurity decrease. Thresholds sit at midpoints between consecutive
// distinct feature values; ties in gain resolve to the lowest feature index,
// then the lowest threshold. Per-tree randomness derives from (seed, tree
// index), so parallel and serial builds produce identical forests.
class RandomForest {
public:
    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
             int workers = 0);

    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
    double predict_row(const Eigen::RowVectorXd& row) const;

    // Out-of-bag R^2 against the training mean; NaN without bootstrap.
    double oob_r2() const { return oob_r2_; }
    // Out-of-bag correct classification rate at threshold 0.5 (0/1 targets).
    double oob_accuracy() const { return oob_accuracy_; }

    Eigen::Index n_features() const { return n_features_; }
    const std::vector<std::vector<TreeNode>>& trees() const { return trees_; }

private:
    std::vector<std::vector<TreeNode>> trees_;
    Eigen::Index n_features_ = 0;
    double oob_r2_ = std::numeric_limits<double>::quiet_NaN();
    double oob_accuracy_ = std::numeric_limits<double>::quiet_NaN();
};

} // namespace dmlplr
