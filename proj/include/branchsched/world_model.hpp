#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "branchsched/branch.hpp"
#include "branchsched/contention.hpp"
#include "branchsched/detail/rng.hpp"
#include "branchsched/errors.hpp"
#include "branchsched/trace.hpp"

namespace branchsched {

// Parametric ground truth for desk-scale experiments. All formulas are
// fixed, documented here and in the README, and every constant is loadable
// from JSON, so expected values in tests can be derived by hand.
//
// Detector latency (ms), per run:
//   core = base_ms + per_prop_ms * nprop + per_shape2_ms * (shape/576)^2
//   l_det = core * (1 + gpu_gain*gpu + cpu_gain*cpu/600 + mb_gain*mb/18000)
// With the default constants the base branch (shape 576, nprop 100) costs
// exactly 14 + 35 + 15 = 64 ms under zero contention.
struct WorldDetectorParams {
    double base_ms = 14.0;
    double per_prop_ms = 0.35;
    double per_shape2_ms = 15.0;
    double gpu_gain = 4.0;
    double cpu_gain = 0.3;
    double mb_gain = 0.5;
};

// Tracker latency (ms), per frame, for one tracker type:
//   core = base_ms + per_obj_ms * n_obj + per_area_ms * (avg_size/10000)
//   l_trk = core / (1 + ds_discount*(ds-1))
//                * (1 + cpu_gain*cpu/600 + mb_gain*mb/18000)
// Trackers ignore the GPU; they are CPU-bound.
struct WorldTrackerParams {
    double base_ms = 1.5;
    double per_obj_ms = 1.2;
    double per_area_ms = 0.5;
    double ds_discount = 0.35;
    double cpu_gain = 0.8;
    double mb_gain = 0.4;
};

// Relative accuracy (percent of the base branch):
//   acc = 100
//       - shape_penalty * (1 - shape/576)
//       - nprop_penalty * (1 - ln(nprop)/ln(100))
//       - si_movement_penalty * (1 - 1/si) * movement / robustness[tracker]
//       + ds_tradeoff * (ds - 1) * (movement - ds_pivot_movement) * (1 - 1/si)
// clamped to [0, 100]. The last term captures that coarse tracker inputs
// hurt slow scenes (precision loss) less than they help fast ones (larger
// search radius); its magnitude is kept small enough that accuracy is
// still monotonically non-increasing in movement for every branch.
struct WorldAccuracyParams {
    double shape_penalty = 25.0;
    double nprop_penalty = 15.0;
    double si_movement_penalty = 4.0;
    std::array<double, kTrackerCount> robustness = {1.0, 1.3, 1.6, 1.1};
    double ds_tradeoff = 0.3;
    double ds_pivot_movement = 5.0;
};

// Measurement noise. Latency noise is multiplicative (1 + sigma*N(0,1),
// floored at 0.05); accuracy noise is additive in percentage points.
// Sigma zero means bit-exact determinism with no draws at all.
struct WorldNoiseParams {
    double latency_sigma = 0.02;
    double accuracy_sigma = 1.5;
};

struct WorldModel {
    WorldDetectorParams detector;
    std::array<WorldTrackerParams, kTrackerCount> trackers;
    WorldAccuracyParams accuracy;
    WorldNoiseParams noise;

    static WorldModel defaults() {
        WorldModel w;
        w.trackers[static_cast<int>(Tracker::MedianFlow)] = {1.5, 1.2, 0.5, 0.35, 0.8, 0.4};
        w.trackers[static_cast<int>(Tracker::KCF)] = {4.0, 3.0, 1.2, 0.35, 0.8, 0.4};
        w.trackers[static_cast<int>(Tracker::CSRT)] = {9.0, 6.5, 2.5, 0.35, 0.9, 0.5};
        w.trackers[static_cast<int>(Tracker::DenseFlow)] = {6.0, 1.0, 3.5, 0.35, 1.0, 0.8};
        return w;
    }

    void validate() const {
        auto pos = [](double v, const char* what) {
            if (!(v > 0.0)) throw ParameterError(std::string("world model: ") + what + " must be > 0");
        };
        auto nonneg = [](double v, const char* what) {
            if (!(v >= 0.0)) throw ParameterError(std::string("world model: ") + what + " must be >= 0");
        };
        pos(detector.base_ms, "detector.base_ms");
        nonneg(detector.per_prop_ms, "detector.per_prop_ms");
        nonneg(detector.per_shape2_ms, "detector.per_shape2_ms");
        nonneg(detector.gpu_gain, "detector.gpu_gain");
        nonneg(detector.cpu_gain, "detector.cpu_gain");
        nonneg(detector.mb_gain, "detector.mb_gain");
        for (const auto& t : trackers) {
            pos(t.base_ms, "tracker.base_ms");
            nonneg(t.per_obj_ms, "tracker.per_obj_ms");
            nonneg(t.per_area_ms, "tracker.per_area_ms");
            nonneg(t.ds_discount, "tracker.ds_discount");
            nonneg(t.cpu_gain, "tracker.cpu_gain");
            nonneg(t.mb_gain, "tracker.mb_gain");
        }
        for (double r : accuracy.robustness) pos(r, "accuracy.robustness");
        nonneg(accuracy.shape_penalty, "accuracy.shape_penalty");
        nonneg(accuracy.nprop_penalty, "accuracy.nprop_penalty");
        nonneg(accuracy.si_movement_penalty, "accuracy.si_movement_penalty");
        nonneg(accuracy.ds_tradeoff, "accuracy.ds_tradeoff");
        nonneg(noise.latency_sigma, "noise.latency_sigma");
        nonneg(noise.accuracy_sigma, "noise.accuracy_sigma");
    }
};

inline void to_json(nlohmann::json& j, const WorldDetectorParams& p) {
    j = nlohmann::json{{"base_ms", p.base_ms},           {"per_prop_ms", p.per_prop_ms},
                       {"per_shape2_ms", p.per_shape2_ms}, {"gpu_gain", p.gpu_gain},
                       {"cpu_gain", p.cpu_gain},         {"mb_gain", p.mb_gain}};
}

inline void from_json(const nlohmann::json& j, WorldDetectorParams& p) {
    p.base_ms = j.at("base_ms").get<double>();
    p.per_prop_ms = j.at("per_prop_ms").get<double>();
    p.per_shape2_ms = j.at("per_shape2_ms").get<double>();
    p.gpu_gain = j.at("gpu_gain").get<double>();
    p.cpu_gain = j.at("cpu_gain").get<double>();
    p.mb_gain = j.at("mb_gain").get<double>();
}

inline void to_json(nlohmann::json& j, const WorldTrackerParams& p) {
    j = nlohmann::json{{"base_ms", p.base_ms},         {"per_obj_ms", p.per_obj_ms},
                       {"per_area_ms", p.per_area_ms}, {"ds_discount", p.ds_discount},
                       {"cpu_gain", p.cpu_gain},       {"mb_gain", p.mb_gain}};
}

inline void from_json(const nlohmann::json& j, WorldTrackerParams& p) {
    p.base_ms = j.at("base_ms").get<double>();
    p.per_obj_ms = j.at("per_obj_ms").get<double>();
    p.per_area_ms = j.at("per_area_ms").get<double>();
    p.ds_discount = j.at("ds_discount").get<double>();
    p.cpu_gain = j.at("cpu_gain").get<double>();
    p.mb_gain = j.at("mb_gain").get<double>();
}

inline void to_json(nlohmann::json& j, const WorldModel& w) {
    nlohmann::json trackers;
    for (int i = 0; i < kTrackerCount; ++i)
        trackers[tracker_name(static_cast<Tracker>(i))] = w.trackers[i];
    j = nlohmann::json{
        {"detector", w.detector},
        {"trackers", trackers},
        {"accuracy",
         {{"shape_penalty", w.accuracy.shape_penalty},
          {"nprop_penalty", w.accuracy.nprop_penalty},
          {"si_movement_penalty", w.accuracy.si_movement_penalty},
          {"robustness", w.accuracy.robustness},
          {"ds_tradeoff", w.accuracy.ds_tradeoff},
          {"ds_pivot_movement", w.accuracy.ds_pivot_movement}}},
        {"noise",
         {{"latency_sigma", w.noise.latency_sigma}, {"accuracy_sigma", w.noise.accuracy_sigma}}}};
}

inline void from_json(const nlohmann::json& j, WorldModel& w) {
    w.detector = j.at("detector").get<WorldDetectorParams>();
    for (int i = 0; i < kTrackerCount; ++i)
        w.trackers[i] = j.at("trackers").at(tracker_name(static_cast<Tracker>(i))).get<WorldTrackerParams>();
    const auto& ja = j.at("accuracy");
    w.accuracy.shape_penalty = ja.at("shape_penalty").get<double>();
    w.accuracy.nprop_penalty = ja.at("nprop_penalty").get<double>();
    w.accuracy.si_movement_penalty = ja.at("si_movement_penalty").get<double>();
    auto rob = ja.at("robustness").get<std::vector<double>>();
    if (rob.size() != kTrackerCount)
        throw ParameterError("world model: robustness needs one entry per tracker");
    std::copy(rob.begin(), rob.end(), w.accuracy.robustness.begin());
    w.accuracy.ds_tradeoff = ja.at("ds_tradeoff").get<double>();
    w.accuracy.ds_pivot_movement = ja.at("ds_pivot_movement").get<double>();
    const auto& jn = j.at("noise");
    w.noise.latency_sigma = jn.at("latency_sigma").get<double>();
    w.noise.accuracy_sigma = jn.at("accuracy_sigma").get<double>();
    w.validate();
}

namespace detail {

// Multiplicative noise factor keyed by (seed, counter, salt). Sigma zero
// yields exactly 1.0 with no RNG draw.
inline double noise_factor(double sigma, std::uint64_t seed, std::uint64_t counter,
                           std::uint64_t salt) {
    if (sigma == 0.0) return 1.0;
    return std::max(0.05, 1.0 + sigma * keyed_normal(seed, counter, salt));
}

}  // namespace detail

// True detector latency (ms) for one detector run.
inline double world_detector_latency(const WorldModel& w, const BranchConfig& b,
                                     const ContentionVector& c, std::uint64_t seed,
                                     std::uint64_t counter) {
    const auto& p = w.detector;
    double shape_frac = static_cast<double>(b.shape) / 576.0;
    double core = p.base_ms + p.per_prop_ms * b.nprop + p.per_shape2_ms * shape_frac * shape_frac;
    double factor = 1.0 + p.gpu_gain * c.gpu_util + p.cpu_gain * c.cpu_cores / 600.0 +
                    p.mb_gain * c.mb_mbps / kMaxMemoryBandwidthMbps;
    return core * factor * detail::noise_factor(w.noise.latency_sigma, seed, counter, 1);
}

// True per-frame tracker latency (ms).
inline double world_tracker_latency(const WorldModel& w, const BranchConfig& b,
                                    const ContentFeatures& f, const ContentionVector& c,
                                    std::uint64_t seed, std::uint64_t counter) {
    const auto& p = w.trackers[static_cast<int>(b.tracker)];
    double core = p.base_ms + p.per_obj_ms * f.n_obj + p.per_area_ms * (f.avg_size / 10000.0);
    double ds_scale = 1.0 + p.ds_discount * (b.ds - 1);
    double factor = 1.0 + p.cpu_gain * c.cpu_cores / 600.0 +
                    p.mb_gain * c.mb_mbps / kMaxMemoryBandwidthMbps;
    return core / ds_scale * factor * detail::noise_factor(w.noise.latency_sigma, seed, counter, 2);
}

struct TrueLatency {
    double l_detector = 0.0;
    double l_tracker = 0.0;
};

inline TrueLatency world_true_latency(const WorldModel& w, const BranchConfig& b,
                                      const ContentFeatures& f, const ContentionVector& c,
                                      std::uint64_t seed, std::uint64_t counter) {
    return TrueLatency{world_detector_latency(w, b, c, seed, counter),
                       world_tracker_latency(w, b, f, c, seed, counter)};
}

// True relative accuracy (percent), noiseless. Callers that want measured
// accuracy add accuracy_sigma noise themselves.
inline double world_true_accuracy(const WorldModel& w, const BranchConfig& b, double movement) {
    if (!(movement >= 0.0)) throw ParameterError("world_true_accuracy: movement must be >= 0");
    const auto& p = w.accuracy;
    double shape_term = p.shape_penalty * (1.0 - static_cast<double>(b.shape) / 576.0);
    double nprop_term = p.nprop_penalty * (1.0 - std::log(static_cast<double>(b.nprop)) /
                                                     std::log(100.0));
    double si_frac = 1.0 - 1.0 / static_cast<double>(b.si);
    double movement_term =
        p.si_movement_penalty * si_frac * movement / p.robustness[static_cast<int>(b.tracker)];
    double ds_term = p.ds_tradeoff * (b.ds - 1) * (movement - p.ds_pivot_movement) * si_frac;
    return std::clamp(100.0 - shape_term - nprop_term - movement_term + ds_term, 0.0, 100.0);
}

}  // namespace branchsched
