#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "branchsched/contention.hpp"
#include "branchsched/detail/csv.hpp"
#include "branchsched/errors.hpp"

namespace branchsched {

// Number of terms in the degree-2 polynomial expansion of n inputs:
// constant + linears + upper-triangular quadratics.
inline constexpr std::size_t expanded_size(std::size_t n) {
    return 1 + n + n * (n + 1) / 2;
}

// Degree-2 feature map. Term order is fixed and documented:
//   [1, x1..xn, x1*x1, x1*x2, ..., x1*xn, x2*x2, ..., xn*xn]
// e.g. [2,3] -> [1, 2, 3, 4, 6, 9].
inline std::vector<double> expand_quadratic(std::span<const double> x) {
    for (double v : x)
        if (!std::isfinite(v)) throw ParameterError("expand_quadratic: non-finite input");
    std::vector<double> out;
    out.reserve(expanded_size(x.size()));
    out.push_back(1.0);
    for (double v : x) out.push_back(v);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i; j < x.size(); ++j) out.push_back(x[i] * x[j]);
    return out;
}

// Quadratic regression over inputs rescaled to [0,1]. Predictions are
// latencies, so they are clamped at zero.
struct QuadraticModel {
    std::vector<std::string> input_names;
    std::vector<double> lower;   // per-input normalization bounds
    std::vector<double> upper;
    double ridge_lambda = 0.0;
    std::vector<double> coefficients;  // over the expansion of normalized inputs

    std::size_t input_arity() const { return input_names.size(); }

    double predict(std::span<const double> raw) const {
        if (raw.size() != input_names.size())
            throw ModelMisuseError("quadratic model: expected " +
                                   std::to_string(input_names.size()) + " inputs, got " +
                                   std::to_string(raw.size()));
        std::vector<double> norm(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            double span = upper[i] - lower[i];
            // A degenerate bound means the input was constant in training;
            // map it to 0 so the constant term absorbs it.
            norm[i] = span > 0.0 ? (raw[i] - lower[i]) / span : 0.0;
        }
        auto phi = expand_quadratic(norm);
        double y = 0.0;
        for (std::size_t i = 0; i < phi.size(); ++i) y += coefficients[i] * phi[i];
        return std::max(0.0, y);
    }
};

inline void to_json(nlohmann::json& j, const QuadraticModel& m) {
    j = nlohmann::json{{"input_names", m.input_names}, {"lower", m.lower},
                       {"upper", m.upper},             {"ridge_lambda", m.ridge_lambda},
                       {"coefficients", m.coefficients}};
}

inline void from_json(const nlohmann::json& j, QuadraticModel& m) {
    m.input_names = j.at("input_names").get<std::vector<std::string>>();
    m.lower = j.at("lower").get<std::vector<double>>();
    m.upper = j.at("upper").get<std::vector<double>>();
    m.ridge_lambda = j.at("ridge_lambda").get<double>();
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    if (m.lower.size() != m.input_names.size() || m.upper.size() != m.input_names.size() ||
        m.coefficients.size() != expanded_size(m.input_names.size()))
        throw ParameterError("quadratic model: inconsistent field sizes");
}

// Closed-form least squares on the quadratic expansion.
//
// With ridge_lambda == 0 this is plain least squares; a rank-deficient
// design raises SingularFitError (the message suggests ridge_lambda > 0).
// With ridge_lambda > 0 we minimize mean squared error + lambda * |beta|^2
// via the normal equations, which are strictly positive definite and so
// always solvable. Either path is exactly reproducible: no iterative
// optimizer, no randomness.
//
// `bounds` optionally pins the normalization box; by default the per-input
// min/max of the training data is used.
inline QuadraticModel fit_quadratic(const std::vector<std::vector<double>>& inputs,
                                    const std::vector<double>& targets, double ridge_lambda,
                                    std::vector<std::string> input_names = {},
                                    const std::vector<std::pair<double, double>>& bounds = {}) {
    if (inputs.empty()) throw ParameterError("fit_quadratic: no samples");
    if (inputs.size() != targets.size())
        throw ParameterError("fit_quadratic: inputs/targets size mismatch");
    if (ridge_lambda < 0.0) throw ParameterError("fit_quadratic: ridge_lambda must be >= 0");
    const std::size_t arity = inputs.front().size();
    if (arity == 0) throw ParameterError("fit_quadratic: zero-arity samples");
    for (const auto& row : inputs)
        if (row.size() != arity) throw ParameterError("fit_quadratic: ragged input rows");
    for (double t : targets)
        if (!std::isfinite(t)) throw ParameterError("fit_quadratic: non-finite target");
    if (input_names.empty())
        for (std::size_t i = 0; i < arity; ++i) input_names.push_back("x" + std::to_string(i + 1));
    if (input_names.size() != arity)
        throw ParameterError("fit_quadratic: input_names arity mismatch");
    if (!bounds.empty() && bounds.size() != arity)
        throw ParameterError("fit_quadratic: bounds arity mismatch");

    const std::size_t dim = expanded_size(arity);
    // Without ridge the expanded design must be overdetermined; with ridge
    // the normal equations are positive definite at any sample count.
    if (ridge_lambda == 0.0 && inputs.size() < dim)
        throw ParameterError("fit_quadratic: need at least " + std::to_string(dim) +
                             " samples for " + std::to_string(arity) +
                             " inputs when ridge_lambda is 0");

    QuadraticModel m;
    m.input_names = std::move(input_names);
    m.ridge_lambda = ridge_lambda;
    m.lower.assign(arity, 0.0);
    m.upper.assign(arity, 0.0);
    for (std::size_t f = 0; f < arity; ++f) {
        if (!bounds.empty()) {
            m.lower[f] = bounds[f].first;
            m.upper[f] = bounds[f].second;
            if (!(m.upper[f] >= m.lower[f]))
                throw ParameterError("fit_quadratic: bounds must satisfy lower <= upper");
        } else {
            double lo = inputs[0][f], hi = inputs[0][f];
            for (const auto& row : inputs) {
                lo = std::min(lo, row[f]);
                hi = std::max(hi, row[f]);
            }
            m.lower[f] = lo;
            m.upper[f] = hi;
        }
    }

    const auto n = static_cast<Eigen::Index>(inputs.size());
    const auto d = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd A(n, d);
    Eigen::VectorXd y(n);
    std::vector<double> norm(arity);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (std::size_t f = 0; f < arity; ++f) {
            double span = m.upper[f] - m.lower[f];
            norm[f] = span > 0.0 ? (inputs[r][f] - m.lower[f]) / span : 0.0;
        }
        auto phi = expand_quadratic(norm);
        for (Eigen::Index c = 0; c < d; ++c) A(r, c) = phi[c];
        y(r) = targets[r];
    }

    Eigen::VectorXd beta;
    if (ridge_lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        if (qr.rank() < d)
            throw SingularFitError(
                "fit_quadratic: design matrix is rank deficient (rank " +
                std::to_string(qr.rank()) + " of " + std::to_string(dim) +
                "); set ridge_lambda > 0 or drop redundant inputs");
        beta = qr.solve(y);
    } else {
        // (A'A + n*lambda*I) beta = A'y  <=>  minimize MSE + lambda*|beta|^2
        Eigen::MatrixXd gram = A.transpose() * A;
        gram.diagonal().array() += ridge_lambda * static_cast<double>(n);
        beta = gram.ldlt().solve(A.transpose() * y);
    }
    m.coefficients.assign(beta.data(), beta.data() + dim);
    return m;
}

// Canonical input layouts for the two latency models. Prediction helpers
// check these names so a tracker model can never be used as a detector
// model by accident.
inline const std::vector<std::string> kDetectorLatencyInputs = {
    "nprop", "shape", "height", "width", "cpu_cores", "mb_mbps", "gpu_util"};
inline const std::vector<std::string> kTrackerLatencyInputs = {
    "height", "width", "n_obj", "avg_size", "cpu_cores", "mb_mbps", "gpu_util"};

// Per-run detector latency (ms) for a proposal count, input shape, frame
// geometry and contention level.
inline double predict_detector_latency(const QuadraticModel& m, int nprop, int shape, int height,
                                       int width, const ContentionVector& c) {
    if (m.input_names != kDetectorLatencyInputs)
        throw ModelMisuseError("predict_detector_latency: model input layout is not the detector layout");
    const double x[] = {static_cast<double>(nprop),     static_cast<double>(shape),
                        static_cast<double>(height),    static_cast<double>(width),
                        static_cast<double>(c.cpu_cores), c.mb_mbps, c.gpu_util};
    return m.predict(x);
}

// Per-frame tracker latency (ms) for frame geometry, object load and
// contention level. One model per (tracker, ds) pair; the caller picks it.
inline double predict_tracker_latency(const QuadraticModel& m, int height, int width, int n_obj,
                                      double avg_size, const ContentionVector& c) {
    if (m.input_names != kTrackerLatencyInputs)
        throw ModelMisuseError("predict_tracker_latency: model input layout is not the tracker layout");
    const double x[] = {static_cast<double>(height), static_cast<double>(width),
                        static_cast<double>(n_obj),  avg_size,
                        static_cast<double>(c.cpu_cores), c.mb_mbps, c.gpu_util};
    return m.predict(x);
}

// Steady-state per-frame latency of a branch: the detector cost amortized
// over its sampling interval plus the tracker cost paid every frame.
inline double compose_frame_latency(double l_detector, double l_tracker, int si) {
    if (si < 1) throw ParameterError("compose_frame_latency: si must be >= 1");
    if (!(l_detector >= 0.0) || !(l_tracker >= 0.0))
        throw ParameterError("compose_frame_latency: latencies must be >= 0");
    return l_detector / static_cast<double>(si) + l_tracker;
}

// Scheduler-facing latency estimate: per-frame cost plus branch switching
// and scheduling overheads amortized over the interval between decisions.
inline double estimate_branch_latency(double l_frame, double l_switch, double l_sched, int si) {
    if (si < 1) throw ParameterError("estimate_branch_latency: si must be >= 1");
    if (!(l_frame >= 0.0) || !(l_switch >= 0.0) || !(l_sched >= 0.0))
        throw ParameterError("estimate_branch_latency: latencies must be >= 0");
    return l_frame + (l_switch + l_sched) / static_cast<double>(si);
}

// All latency figures for one branch evaluation, kept together so the
// composition invariants hold by construction.
struct LatencyBreakdown {
    double l_detector = 0.0;
    double l_tracker = 0.0;
    double l_frame = 0.0;     // l_detector/si + l_tracker
    double l_estimate = 0.0;  // l_frame + (l_switch + l_sched)/si
};

inline LatencyBreakdown make_latency_breakdown(double l_detector, double l_tracker, int si,
                                               double l_switch, double l_sched) {
    LatencyBreakdown b;
    b.l_detector = l_detector;
    b.l_tracker = l_tracker;
    b.l_frame = compose_frame_latency(l_detector, l_tracker, si);
    b.l_estimate = estimate_branch_latency(b.l_frame, l_switch, l_sched, si);
    return b;
}

// Training data as CSV: header must be the model's input names plus a final
// latency_ms column.
inline std::pair<std::vector<std::vector<double>>, std::vector<double>>
load_latency_training_csv(const std::string& path, const std::vector<std::string>& input_names) {
    auto table = detail::read_csv(path);
    std::vector<std::string> expected = input_names;
    expected.push_back("latency_ms");
    if (table.header != expected)
        throw ParameterError("latency training csv: unexpected header in '" + path + "'");
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    X.reserve(table.rows.size());
    y.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        std::vector<double> x;
        x.reserve(input_names.size());
        for (std::size_t i = 0; i < input_names.size(); ++i) x.push_back(detail::parse_double(row[i]));
        X.push_back(std::move(x));
        y.push_back(detail::parse_double(row.back()));
    }
    return {std::move(X), std::move(y)};
}

}  // namespace branchsched
