#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "branchsched/branch.hpp"
#include "branchsched/errors.hpp"

namespace branchsched {

// Accuracy is tracked relative to the base branch (si=1, shape=576,
// nprop=100), which defines 100%.
inline double normalize_accuracy(double absolute, double base_absolute) {
    if (!(absolute >= 0.0))
        throw ParameterError("normalize_accuracy: accuracy must be >= 0");
    if (!(base_absolute > 0.0))
        throw ParameterError("normalize_accuracy: base accuracy must be > 0");
    return 100.0 * absolute / base_absolute;
}

// Feature vector for the knob-only accuracy models. The tracker knob is
// categorical, so it becomes four 0/1 indicator columns; a threshold split
// at 0.5 on an indicator is exactly an equality partition on the tracker,
// which keeps plain threshold routing in the tree.
inline constexpr std::size_t kBranchFeatureCount = 8;

inline const std::vector<std::string> kBranchFeatureNames = {
    "si", "shape", "nprop", "tracker_MedianFlow", "tracker_KCF",
    "tracker_CSRT", "tracker_DenseFlow", "ds"};

inline std::array<double, kBranchFeatureCount> branch_features(const BranchConfig& b) {
    std::array<double, kBranchFeatureCount> f{};
    f[0] = static_cast<double>(b.si);
    f[1] = static_cast<double>(b.shape);
    f[2] = static_cast<double>(b.nprop);
    f[3 + static_cast<int>(b.tracker)] = 1.0;
    f[7] = static_cast<double>(b.ds);
    return f;
}

struct TreeHyperparams {
    int max_depth = 8;
    int min_samples_leaf = 4;
};

// Binary regression tree over the branch features; predicts mean relative
// accuracy of a knob configuration, with no knowledge of video content.
class RegressionTree {
public:
    struct Node {
        int feature = -1;        // -1 marks a leaf
        double threshold = 0.0;  // go left iff x[feature] <= threshold
        int left = -1;
        int right = -1;
        double value = 0.0;      // leaf prediction

        bool is_leaf() const { return feature < 0; }
    };

    std::vector<Node> nodes;
    TreeHyperparams params;

    double predict(std::span<const double> features) const {
        if (features.size() != kBranchFeatureCount)
            throw ModelMisuseError("regression tree: expected " +
                                   std::to_string(kBranchFeatureCount) + " features");
        if (nodes.empty()) throw ModelMisuseError("regression tree: empty tree");
        int idx = 0;
        while (!nodes[idx].is_leaf()) {
            const Node& n = nodes[idx];
            idx = features[n.feature] <= n.threshold ? n.left : n.right;
        }
        return nodes[idx].value;
    }

    double predict(const BranchConfig& b) const {
        auto f = branch_features(b);
        return predict(std::span<const double>(f.data(), f.size()));
    }

    int depth() const { return nodes.empty() ? 0 : depth_below(0); }

private:
    int depth_below(int idx) const {
        const Node& n = nodes[idx];
        if (n.is_leaf()) return 0;
        return 1 + std::max(depth_below(n.left), depth_below(n.right));
    }
};

namespace detail {

inline nlohmann::json tree_node_to_json(const RegressionTree& t, int idx) {
    const auto& n = t.nodes[idx];
    if (n.is_leaf()) return nlohmann::json{{"value", n.value}};
    return nlohmann::json{{"feature", kBranchFeatureNames[n.feature]},
                          {"threshold", n.threshold},
                          {"left", tree_node_to_json(t, n.left)},
                          {"right", tree_node_to_json(t, n.right)}};
}

inline int tree_node_from_json(const nlohmann::json& j, RegressionTree& t) {
    int idx = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    if (j.contains("value")) {
        t.nodes[idx].value = j.at("value").get<double>();
        return idx;
    }
    std::string fname = j.at("feature").get<std::string>();
    auto it = std::find(kBranchFeatureNames.begin(), kBranchFeatureNames.end(), fname);
    if (it == kBranchFeatureNames.end())
        throw ParameterError("regression tree: unknown feature '" + fname + "'");
    t.nodes[idx].feature = static_cast<int>(it - kBranchFeatureNames.begin());
    t.nodes[idx].threshold = j.at("threshold").get<double>();
    int left = tree_node_from_json(j.at("left"), t);
    int right = tree_node_from_json(j.at("right"), t);
    t.nodes[idx].left = left;
    t.nodes[idx].right = right;
    return idx;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const RegressionTree& t) {
    if (t.nodes.empty()) throw ParameterError("regression tree: cannot serialize empty tree");
    j = nlohmann::json{{"max_depth", t.params.max_depth},
                       {"min_samples_leaf", t.params.min_samples_leaf},
                       {"root", detail::tree_node_to_json(t, 0)}};
}

inline void from_json(const nlohmann::json& j, RegressionTree& t) {
    t.nodes.clear();
    t.params.max_depth = j.at("max_depth").get<int>();
    t.params.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    detail::tree_node_from_json(j.at("root"), t);
}

// Greedy CART fit: at each node, try every (feature, midpoint-threshold)
// pair in feature order and keep the split with the strictly lowest summed
// child squared error. Exact ties keep the earlier candidate, so refits are
// bit-identical. Stops on depth, leaf size, or when no split improves.
inline RegressionTree fit_accuracy_tree(const std::vector<std::pair<BranchConfig, double>>& records,
                                        TreeHyperparams params = {}) {
    if (records.empty()) throw ParameterError("fit_accuracy_tree: no records");
    if (records.size() < 2) throw ParameterError("fit_accuracy_tree: need at least 2 records");
    if (params.max_depth < 0) throw ParameterError("fit_accuracy_tree: max_depth must be >= 0");
    if (params.min_samples_leaf < 1)
        throw ParameterError("fit_accuracy_tree: min_samples_leaf must be >= 1");

    const std::size_t n = records.size();
    std::vector<std::array<double, kBranchFeatureCount>> X(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        X[i] = branch_features(records[i].first);
        y[i] = records[i].second;
        if (!std::isfinite(y[i])) throw ParameterError("fit_accuracy_tree: non-finite target");
    }

    RegressionTree tree;
    tree.params = params;

    struct Task {
        int node;
        std::vector<std::size_t> idx;
        int depth;
    };

    auto node_stats = [&](const std::vector<std::size_t>& idx) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i : idx) {
            sum += y[i];
            sum2 += y[i] * y[i];
        }
        double mean = sum / static_cast<double>(idx.size());
        double sse = sum2 - sum * mean;  // sum of squared deviations from the mean
        return std::pair<double, double>(mean, std::max(0.0, sse));
    };

    std::vector<Task> stack;
    tree.nodes.emplace_back();
    {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        stack.push_back(Task{0, std::move(all), 0});
    }

    while (!stack.empty()) {
        Task task = std::move(stack.back());
        stack.pop_back();
        auto [mean, sse] = node_stats(task.idx);
        RegressionTree::Node& node = tree.nodes[task.node];
        node.value = mean;

        const auto count = task.idx.size();
        if (task.depth >= params.max_depth ||
            count < 2 * static_cast<std::size_t>(params.min_samples_leaf) || sse <= 1e-12) {
            continue;  // stays a leaf
        }

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_score = sse - 1e-12;  // require a real improvement

        std::vector<std::pair<double, double>> vals(count);  // (feature value, target)
        for (std::size_t f = 0; f < kBranchFeatureCount; ++f) {
            for (std::size_t k = 0; k < count; ++k)
                vals[k] = {X[task.idx[k]][f], y[task.idx[k]]};
            std::sort(vals.begin(), vals.end());

            // Prefix sums let every threshold be scored in O(1).
            double left_sum = 0.0, left_sum2 = 0.0;
            double total_sum = 0.0, total_sum2 = 0.0;
            for (const auto& [v, t] : vals) {
                total_sum += t;
                total_sum2 += t * t;
            }
            for (std::size_t k = 0; k + 1 < count; ++k) {
                left_sum += vals[k].second;
                left_sum2 += vals[k].second * vals[k].second;
                if (vals[k].first == vals[k + 1].first) continue;  // not a boundary
                std::size_t nl = k + 1, nr = count - nl;
                if (nl < static_cast<std::size_t>(params.min_samples_leaf) ||
                    nr < static_cast<std::size_t>(params.min_samples_leaf))
                    continue;
                double right_sum = total_sum - left_sum;
                double right_sum2 = total_sum2 - left_sum2;
                double sse_l = left_sum2 - left_sum * left_sum / static_cast<double>(nl);
                double sse_r = right_sum2 - right_sum * right_sum / static_cast<double>(nr);
                double score = std::max(0.0, sse_l) + std::max(0.0, sse_r);
                if (score < best_score) {
                    best_score = score;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (vals[k].first + vals[k + 1].first);
                }
            }
        }

        if (best_feature < 0) continue;  // no admissible improving split

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : task.idx) {
            if (X[i][best_feature] <= best_threshold)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }

        int left_node = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        int right_node = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[task.node].feature = best_feature;
        tree.nodes[task.node].threshold = best_threshold;
        tree.nodes[task.node].left = left_node;
        tree.nodes[task.node].right = right_node;
        stack.push_back(Task{right_node, std::move(right_idx), task.depth + 1});
        stack.push_back(Task{left_node, std::move(left_idx), task.depth + 1});
    }
    return tree;
}

// Content-aware accuracy model: linear in the branch features plus the
// recent-movement feature, all rescaled to [0,1].
struct LinearAccuracyModel {
    std::vector<std::string> input_names;  // branch features + "movement"
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> weights;
    double bias = 0.0;

    double predict(const BranchConfig& b, double movement) const {
        if (!(movement >= 0.0))
            throw ParameterError("linear accuracy model: movement must be >= 0");
        auto bf = branch_features(b);
        double y = bias;
        for (std::size_t i = 0; i < kBranchFeatureCount + 1; ++i) {
            double raw = i < kBranchFeatureCount ? bf[i] : movement;
            double span = upper[i] - lower[i];
            double norm = span > 0.0 ? (raw - lower[i]) / span : 0.0;
            y += weights[i] * norm;
        }
        // Relative accuracy: slight overshoot past 100 is tolerated, real
        // range errors are clamped away.
        return std::clamp(y, 0.0, 120.0);
    }
};

inline void to_json(nlohmann::json& j, const LinearAccuracyModel& m) {
    j = nlohmann::json{{"input_names", m.input_names}, {"lower", m.lower},
                       {"upper", m.upper},             {"weights", m.weights},
                       {"bias", m.bias}};
}

inline void from_json(const nlohmann::json& j, LinearAccuracyModel& m) {
    m.input_names = j.at("input_names").get<std::vector<std::string>>();
    m.lower = j.at("lower").get<std::vector<double>>();
    m.upper = j.at("upper").get<std::vector<double>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    if (m.input_names.size() != kBranchFeatureCount + 1 ||
        m.lower.size() != m.input_names.size() || m.upper.size() != m.input_names.size() ||
        m.weights.size() != m.input_names.size())
        throw ParameterError("linear accuracy model: inconsistent field sizes");
}

// Minimum-norm least squares for the content-aware model.
//
// The one-hot tracker columns always sum to the intercept column, so the
// design matrix is rank deficient by construction; SVD with Eigen's default
// rank threshold gives the unique minimum-norm solution deterministically.
// A useful side effect: any feature that is constant in training (e.g.
// movement identically zero) gets weight exactly 0, so the model degrades
// to a knob-only fit. SingularFitError is reserved for a zero-rank design,
// which plain data cannot produce (the intercept column is never zero).
inline LinearAccuracyModel fit_linear_accuracy(
    const std::vector<std::tuple<BranchConfig, double, double>>& records) {
    const std::size_t arity = kBranchFeatureCount + 1;
    if (records.size() < arity + 2)
        throw ParameterError("fit_linear_accuracy: need at least " + std::to_string(arity + 2) +
                             " records");

    LinearAccuracyModel m;
    m.input_names = kBranchFeatureNames;
    m.input_names.push_back("movement");
    m.lower.assign(arity, 0.0);
    m.upper.assign(arity, 0.0);

    const std::size_t n = records.size();
    std::vector<std::array<double, kBranchFeatureCount + 1>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [b, movement, acc] = records[i];
        if (!(movement >= 0.0) || !std::isfinite(movement) || !std::isfinite(acc))
            throw ParameterError("fit_linear_accuracy: non-finite or negative inputs");
        auto bf = branch_features(b);
        for (std::size_t f = 0; f < kBranchFeatureCount; ++f) rows[i][f] = bf[f];
        rows[i][kBranchFeatureCount] = movement;
    }
    for (std::size_t f = 0; f < arity; ++f) {
        double lo = rows[0][f], hi = rows[0][f];
        for (const auto& r : rows) {
            lo = std::min(lo, r[f]);
            hi = std::max(hi, r[f]);
        }
        m.lower[f] = lo;
        m.upper[f] = hi;
    }

    Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(arity + 1));
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        A(static_cast<Eigen::Index>(i), 0) = 1.0;  // intercept
        for (std::size_t f = 0; f < arity; ++f) {
            double span = m.upper[f] - m.lower[f];
            A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f + 1)) =
                span > 0.0 ? (rows[i][f] - m.lower[f]) / span : 0.0;
        }
        y(static_cast<Eigen::Index>(i)) = std::get<2>(records[i]);
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.rank() < 1) throw SingularFitError("fit_linear_accuracy: zero-rank design matrix");
    Eigen::VectorXd beta = svd.solve(y);
    m.bias = beta(0);
    m.weights.assign(arity, 0.0);
    for (std::size_t f = 0; f < arity; ++f) m.weights[f] = beta(static_cast<Eigen::Index>(f + 1));
    // A constant column was normalized to all zeros, so its weight cannot
    // affect predictions; pin it to 0 rather than keep SVD round-off.
    for (std::size_t f = 0; f < arity; ++f)
        if (!(m.upper[f] - m.lower[f] > 0.0)) m.weights[f] = 0.0;
    return m;
}

}  // namespace branchsched
