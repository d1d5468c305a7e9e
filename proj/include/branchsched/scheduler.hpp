#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "branchsched/accuracy_model.hpp"
#include "branchsched/branch.hpp"
#include "branchsched/contention.hpp"
#include "branchsched/latency_model.hpp"
#include "branchsched/trace.hpp"

namespace branchsched {

// Fixed per-event costs paid by the control plane itself: switching the
// pipeline to a different branch, and running one scheduling pass.
struct OverheadConstants {
    double l_switch_ms = 12.0;
    double l_sched_ms = 11.09;

    void validate() const {
        if (!(l_switch_ms >= 0.0) || !(l_sched_ms >= 0.0))
            throw ParameterError("overheads must be >= 0");
    }
};

inline void to_json(nlohmann::json& j, const OverheadConstants& o) {
    j = nlohmann::json{{"l_switch_ms", o.l_switch_ms}, {"l_sched_ms", o.l_sched_ms}};
}

inline void from_json(const nlohmann::json& j, OverheadConstants& o) {
    o.l_switch_ms = j.at("l_switch_ms").get<double>();
    o.l_sched_ms = j.at("l_sched_ms").get<double>();
    o.validate();
}

// One branch under consideration, with its predicted per-frame latency
// components and predicted relative accuracy.
struct Candidate {
    BranchConfig branch;
    double l_detector = 0.0;  // per detector run
    double l_tracker = 0.0;   // per frame
    double est_accuracy = 0.0;
    // Per-frame latency l_detector/si + l_tracker, before overheads.
    double l_frame = 0.0;
};

inline Candidate make_candidate(const BranchConfig& b, double l_detector, double l_tracker,
                                double est_accuracy) {
    return Candidate{b, l_detector, l_tracker, est_accuracy,
                     compose_frame_latency(l_detector, l_tracker, b.si)};
}

struct SchedulerDecision {
    BranchConfig branch;
    double est_latency_ms = 0.0;  // l_frame + amortized overheads
    double est_accuracy = 0.0;
    int feasible_count = 0;       // candidates strictly under the requirement
    int decided_at_frame = 0;
    int window = 8;               // frames until the next decision may run
};

// Decisions hold for max(8, si) frames: amortizing the scheduling and
// switching overhead over fewer frames than that costs more than it buys,
// and a branch with si > 8 cannot even complete one detector cycle sooner.
inline int decision_window(int si) { return std::max(8, si); }

// Picks the branch to run for the next window.
//
// A candidate is feasible when its overhead-inclusive latency estimate is
// strictly below the requirement. Among feasible candidates the highest
// estimated accuracy wins; with none feasible, the lowest estimate wins as
// the least-bad fallback. Ties break toward lower latency estimate, then
// the lexicographically smallest branch, then lowest input index, so the
// choice never depends on candidate ordering quirks upstream.
inline SchedulerDecision select_branch(std::span<const Candidate> candidates, double l_req_ms,
                                       const OverheadConstants& overheads,
                                       int decided_at_frame = 0) {
    if (candidates.empty()) throw ParameterError("select_branch: no candidates");
    if (!(l_req_ms > 0.0)) throw ParameterError("select_branch: latency requirement must be > 0");
    overheads.validate();

    int best = -1;
    double best_est = 0.0;
    bool best_feasible = false;
    int feasible_count = 0;

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Candidate& c = candidates[i];
        double est = estimate_branch_latency(c.l_frame, overheads.l_switch_ms,
                                             overheads.l_sched_ms, c.branch.si);
        bool feasible = est < l_req_ms;
        if (feasible) ++feasible_count;
        if (best < 0) {
            best = static_cast<int>(i);
            best_est = est;
            best_feasible = feasible;
            continue;
        }
        bool better;
        if (feasible != best_feasible) {
            better = feasible;
        } else if (feasible) {
            const Candidate& bc = candidates[best];
            better = c.est_accuracy > bc.est_accuracy ||
                     (c.est_accuracy == bc.est_accuracy &&
                      (est < best_est || (est == best_est && c.branch < bc.branch)));
        } else {
            better = est < best_est ||
                     (est == best_est && c.branch < candidates[best].branch);
        }
        if (better) {
            best = static_cast<int>(i);
            best_est = est;
            best_feasible = feasible;
        }
    }

    const Candidate& chosen = candidates[best];
    return SchedulerDecision{chosen.branch,  best_est,
                             chosen.est_accuracy, feasible_count,
                             decided_at_frame,    decision_window(chosen.branch.si)};
}

// True when a new scheduling pass is due at this frame.
inline bool should_schedule(int frame, const std::optional<SchedulerDecision>& last) {
    if (frame < 0) throw ParameterError("should_schedule: frame must be >= 0");
    if (!last) return true;
    return frame - last->decided_at_frame >= last->window;
}

// Everything the adaptive policy needs to predict latency and accuracy.
// Tracker latency models are keyed by (tracker, ds).
struct ModelBundle {
    QuadraticModel detector_latency;
    std::map<std::pair<Tracker, int>, QuadraticModel> tracker_latency;
    RegressionTree accuracy_tree;
    LinearAccuracyModel accuracy_linear;

    const QuadraticModel& tracker_model(Tracker t, int ds) const {
        auto it = tracker_latency.find({t, ds});
        if (it == tracker_latency.end())
            throw ModelMisuseError(std::string("model bundle: no tracker latency model for ") +
                                   tracker_name(t) + " ds=" + std::to_string(ds));
        return it->second;
    }
};

// Evaluates every branch against the current content features and sensed
// contention. Accuracy comes from the content-aware linear model once a
// movement observation exists; before that, from the knob-only tree
// (movement is simply unknown at stream start).
inline std::vector<Candidate> build_candidates(std::span<const BranchConfig> branches,
                                               const ModelBundle& models,
                                               const ContentFeatures& features,
                                               const ContentionVector& sensed,
                                               bool movement_known) {
    if (branches.empty()) throw ParameterError("build_candidates: no branches");
    std::vector<Candidate> out;
    out.reserve(branches.size());
    for (const auto& b : branches) {
        double l_det = predict_detector_latency(models.detector_latency, b.nprop, b.shape,
                                                features.height, features.width, sensed);
        double l_trk = predict_tracker_latency(models.tracker_model(b.tracker, b.ds),
                                               features.height, features.width, features.n_obj,
                                               features.avg_size, sensed);
        double acc = movement_known ? models.accuracy_linear.predict(b, features.movement)
                                    : models.accuracy_tree.predict(b);
        out.push_back(make_candidate(b, l_det, l_trk, acc));
    }
    return out;
}

// Decision log entry layout shared by the simulator's decisions.csv and
// any external consumer of scheduling decisions.
inline const std::vector<std::string> kDecisionCsvHeader = {
    "frame",     "si",        "shape",   "nprop",          "tracker",
    "ds",        "est_latency_ms",       "est_accuracy",   "feasible_count",
    "cpu_cores", "mb_mbps",   "gpu_util"};

}  // namespace branchsched
