#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "branchsched/accuracy_model.hpp"
#include "branchsched/branch.hpp"
#include "branchsched/contention.hpp"
#include "branchsched/detail/csv.hpp"
#include "branchsched/detail/rng.hpp"
#include "branchsched/latency_model.hpp"
#include "branchsched/scheduler.hpp"
#include "branchsched/world_model.hpp"

namespace branchsched {

// One synthetic measurement: a branch, the contention it ran under, the
// content it saw, and what it cost and scored.
struct ProfileRecord {
    BranchConfig branch;
    ContentionVector contention;
    int height = 0;
    int width = 0;
    int n_obj = 0;
    double avg_size = 0.0;
    double movement = 0.0;
    double l_detector_ms = 0.0;
    double l_tracker_ms = 0.0;
    double rel_accuracy = 0.0;
};

// Content conditions to sweep during a campaign.
struct ContentGrid {
    std::vector<int> heights;
    std::vector<int> widths;
    std::vector<int> n_objects;
    std::vector<double> avg_sizes;
    std::vector<double> movements;

    static ContentGrid defaults() {
        ContentGrid g;
        g.heights = {720};
        g.widths = {1280};
        g.n_objects = {0, 4, 8};
        g.avg_sizes = {5000.0, 20000.0};
        g.movements = {0.5, 5.0, 18.0};
        return g;
    }

    void validate() const {
        if (heights.empty() || widths.empty() || n_objects.empty() || avg_sizes.empty() ||
            movements.empty())
            throw ParameterError("content grid: every axis needs at least one value");
        for (int v : heights)
            if (v <= 0) throw ParameterError("content grid: heights must be > 0");
        for (int v : widths)
            if (v <= 0) throw ParameterError("content grid: widths must be > 0");
        for (int v : n_objects)
            if (v < 0) throw ParameterError("content grid: n_objects must be >= 0");
        for (double v : avg_sizes)
            if (!(v >= 0.0)) throw ParameterError("content grid: avg_sizes must be >= 0");
        for (double v : movements)
            if (!(v >= 0.0)) throw ParameterError("content grid: movements must be >= 0");
    }

    std::size_t cells() const {
        return heights.size() * widths.size() * n_objects.size() * avg_sizes.size() *
               movements.size();
    }
};

inline void to_json(nlohmann::json& j, const ContentGrid& g) {
    j = nlohmann::json{{"heights", g.heights},     {"widths", g.widths},
                       {"n_objects", g.n_objects}, {"avg_sizes", g.avg_sizes},
                       {"movements", g.movements}};
}

inline void from_json(const nlohmann::json& j, ContentGrid& g) {
    g.heights = j.at("heights").get<std::vector<int>>();
    g.widths = j.at("widths").get<std::vector<int>>();
    g.n_objects = j.at("n_objects").get<std::vector<int>>();
    g.avg_sizes = j.at("avg_sizes").get<std::vector<double>>();
    g.movements = j.at("movements").get<std::vector<double>>();
}

// A full campaign description: which slice of the branch space to measure,
// under which contention levels and content conditions, how many times.
// Profiling every branch is a non-starter (the full space at desk scale is
// already 13k+ configurations), hence branch_fraction.
struct SamplingPlan {
    double branch_fraction = 0.2;
    std::uint64_t seed = 17;
    int repetitions = 1;
    KnobDomains domains = KnobDomains::defaults();
    std::vector<ContentionVector> contention_levels;
    ContentGrid content = ContentGrid::defaults();

    static SamplingPlan defaults() {
        SamplingPlan p;
        p.contention_levels.push_back(ContentionVector{});
        for (double g : kGpuLevels)
            if (g > 0.0) p.contention_levels.push_back(ContentionVector{0, 0.0, g});
        return p;
    }

    void validate() const {
        if (!(branch_fraction > 0.0) || branch_fraction > 1.0)
            throw ParameterError("sampling plan: branch_fraction must be in (0,1]");
        if (repetitions < 1) throw ParameterError("sampling plan: repetitions must be >= 1");
        if (contention_levels.empty())
            throw ParameterError("sampling plan: need at least one contention level");
        for (const auto& c : contention_levels)
            for (const auto& msg : validate_contention(c))
                throw DomainViolationError("sampling plan: " + msg);
        validate_domains(domains);
        content.validate();
    }
};

inline void to_json(nlohmann::json& j, const SamplingPlan& p) {
    j = nlohmann::json{{"branch_fraction", p.branch_fraction},
                       {"seed", p.seed},
                       {"repetitions", p.repetitions},
                       {"domains", p.domains},
                       {"contention_levels", p.contention_levels},
                       {"content", p.content}};
}

inline void from_json(const nlohmann::json& j, SamplingPlan& p) {
    p.branch_fraction = j.at("branch_fraction").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.repetitions = j.value("repetitions", 1);
    if (j.contains("domains")) p.domains = j.at("domains").get<KnobDomains>();
    else p.domains = KnobDomains::defaults();
    p.contention_levels = j.at("contention_levels").get<std::vector<ContentionVector>>();
    if (j.contains("content")) p.content = j.at("content").get<ContentGrid>();
    else p.content = ContentGrid::defaults();
    p.validate();
}

// Runs the campaign against the world model. Record order is the plan's
// nested loop order (branch, contention, height, width, n_obj, avg_size,
// movement, repetition) and the noise of record k depends only on
// (plan.seed, k), never on wall time or allocation order.
inline std::vector<ProfileRecord> collect_profiles(const SamplingPlan& plan, const WorldModel& world) {
    plan.validate();
    world.validate();
    auto branches = sample_branches(enumerate_branches(plan.domains), plan.branch_fraction,
                                    plan.seed);
    std::vector<ProfileRecord> out;
    out.reserve(branches.size() * plan.contention_levels.size() * plan.content.cells() *
                static_cast<std::size_t>(plan.repetitions));
    std::uint64_t k = 0;
    for (const auto& b : branches) {
        for (const auto& c : plan.contention_levels) {
            for (int h : plan.content.heights) {
                for (int w : plan.content.widths) {
                    for (int n : plan.content.n_objects) {
                        for (double size : plan.content.avg_sizes) {
                            for (double mv : plan.content.movements) {
                                for (int rep = 0; rep < plan.repetitions; ++rep, ++k) {
                                    ContentFeatures f{h, w, n, n > 0 ? size : 0.0, mv};
                                    TrueLatency lat =
                                        world_true_latency(world, b, f, c, plan.seed, k);
                                    double acc = world_true_accuracy(world, b, mv);
                                    if (world.noise.accuracy_sigma > 0.0)
                                        acc += world.noise.accuracy_sigma *
                                               detail::keyed_normal(plan.seed, k, 3);
                                    ProfileRecord r;
                                    r.branch = b;
                                    r.contention = c;
                                    r.height = h;
                                    r.width = w;
                                    r.n_obj = n;
                                    r.avg_size = f.avg_size;
                                    r.movement = mv;
                                    r.l_detector_ms = lat.l_detector;
                                    r.l_tracker_ms = lat.l_tracker;
                                    r.rel_accuracy = std::clamp(acc, 0.0, 120.0);
                                    out.push_back(r);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Deterministic shuffled split into train and validation parts. Both halves
// are non-empty; together they are exactly the input multiset.
inline std::pair<std::vector<ProfileRecord>, std::vector<ProfileRecord>>
split_records(const std::vector<ProfileRecord>& records, double train_fraction,
              std::uint64_t seed) {
    if (records.size() < 2) throw ParameterError("split_records: need at least 2 records");
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw ParameterError("split_records: train_fraction must be in (0,1)");
    std::vector<std::size_t> idx(records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    detail::Rng rng(seed);
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction *
                                                         static_cast<double>(records.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, records.size() - 1);
    std::pair<std::vector<ProfileRecord>, std::vector<ProfileRecord>> out;
    out.first.reserve(n_train);
    out.second.reserve(records.size() - n_train);
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i < n_train ? out.first : out.second).push_back(records[idx[i]]);
    return out;
}

// Mean steady-state per-frame latency per (branch, contention level):
// detector amortized over si plus tracker. This is the sensor's reference
// table. Per-key values are sorted before summing so the result does not
// depend on record order.
inline OfflineLatencyLog build_offline_log(const std::vector<ProfileRecord>& records) {
    if (records.empty()) throw ParameterError("build_offline_log: no records");
    std::map<std::pair<BranchConfig, ContentionVector>, std::vector<double>> samples;
    for (const auto& r : records)
        samples[{r.branch, r.contention}].push_back(
            compose_frame_latency(r.l_detector_ms, r.l_tracker_ms, r.branch.si));
    OfflineLatencyLog log;
    for (auto& [key, values] : samples) {
        std::sort(values.begin(), values.end());
        double sum = 0.0;
        for (double v : values) sum += v;
        log.set(key.first, key.second, sum / static_cast<double>(values.size()));
    }
    return log;
}

// --- training dataset extraction ---

inline std::pair<std::vector<std::vector<double>>, std::vector<double>>
make_detector_training(const std::vector<ProfileRecord>& records) {
    std::pair<std::vector<std::vector<double>>, std::vector<double>> out;
    out.first.reserve(records.size());
    out.second.reserve(records.size());
    for (const auto& r : records) {
        out.first.push_back({static_cast<double>(r.branch.nprop), static_cast<double>(r.branch.shape),
                             static_cast<double>(r.height), static_cast<double>(r.width),
                             static_cast<double>(r.contention.cpu_cores), r.contention.mb_mbps,
                             r.contention.gpu_util});
        out.second.push_back(r.l_detector_ms);
    }
    return out;
}

inline std::map<std::pair<Tracker, int>,
                std::pair<std::vector<std::vector<double>>, std::vector<double>>>
make_tracker_training(const std::vector<ProfileRecord>& records) {
    std::map<std::pair<Tracker, int>,
             std::pair<std::vector<std::vector<double>>, std::vector<double>>>
        out;
    for (const auto& r : records) {
        auto& slot = out[{r.branch.tracker, r.branch.ds}];
        slot.first.push_back({static_cast<double>(r.height), static_cast<double>(r.width),
                              static_cast<double>(r.n_obj), r.avg_size,
                              static_cast<double>(r.contention.cpu_cores), r.contention.mb_mbps,
                              r.contention.gpu_util});
        slot.second.push_back(r.l_tracker_ms);
    }
    return out;
}

inline std::vector<std::pair<BranchConfig, double>> make_tree_records(
    const std::vector<ProfileRecord>& records) {
    std::vector<std::pair<BranchConfig, double>> out;
    out.reserve(records.size());
    for (const auto& r : records) out.emplace_back(r.branch, r.rel_accuracy);
    return out;
}

inline std::vector<std::tuple<BranchConfig, double, double>> make_linear_records(
    const std::vector<ProfileRecord>& records) {
    std::vector<std::tuple<BranchConfig, double, double>> out;
    out.reserve(records.size());
    for (const auto& r : records) out.emplace_back(r.branch, r.movement, r.rel_accuracy);
    return out;
}

// Normalization boxes for the latency models. Knob and contention axes are
// pinned to their domain bounds so model quality does not hinge on which
// values a particular campaign happened to visit; content axes use data
// bounds.
inline std::vector<std::pair<double, double>> detector_training_bounds(
    const std::vector<ProfileRecord>& records) {
    double h_lo = records.front().height, h_hi = records.front().height;
    double w_lo = records.front().width, w_hi = records.front().width;
    for (const auto& r : records) {
        h_lo = std::min(h_lo, static_cast<double>(r.height));
        h_hi = std::max(h_hi, static_cast<double>(r.height));
        w_lo = std::min(w_lo, static_cast<double>(r.width));
        w_hi = std::max(w_hi, static_cast<double>(r.width));
    }
    return {{kNpropMin, kNpropMax}, {kShapeMin, kShapeMax},          {h_lo, h_hi},
            {w_lo, w_hi},           {0.0, kMaxCpuCores},             {0.0, kMaxMemoryBandwidthMbps},
            {0.0, 1.0}};
}

inline std::vector<std::pair<double, double>> tracker_training_bounds(
    const std::vector<std::vector<double>>& inputs) {
    double h_lo = inputs.front()[0], h_hi = inputs.front()[0];
    double w_lo = inputs.front()[1], w_hi = inputs.front()[1];
    double n_lo = inputs.front()[2], n_hi = inputs.front()[2];
    double s_lo = inputs.front()[3], s_hi = inputs.front()[3];
    for (const auto& row : inputs) {
        h_lo = std::min(h_lo, row[0]); h_hi = std::max(h_hi, row[0]);
        w_lo = std::min(w_lo, row[1]); w_hi = std::max(w_hi, row[1]);
        n_lo = std::min(n_lo, row[2]); n_hi = std::max(n_hi, row[2]);
        s_lo = std::min(s_lo, row[3]); s_hi = std::max(s_hi, row[3]);
    }
    return {{h_lo, h_hi}, {w_lo, w_hi}, {n_lo, n_hi}, {s_lo, s_hi},
            {0.0, kMaxCpuCores}, {0.0, kMaxMemoryBandwidthMbps}, {0.0, 1.0}};
}

// --- end-to-end fitting ---

struct FitOptions {
    double ridge_lambda = 1e-6;
    double train_fraction = 0.8;
    std::uint64_t split_seed = 17;
    TreeHyperparams tree;
};

struct FitReport {
    std::size_t n_records = 0;
    std::size_t n_train = 0;
    std::size_t n_valid = 0;
    double detector_rmse = 0.0;        // held-out
    double tracker_rmse = 0.0;         // held-out, pooled over all (tracker, ds)
    double tree_mse = 0.0;             // held-out
    double linear_mse = 0.0;           // held-out
    double accuracy_baseline_mse = 0.0;  // held-out, constant-mean predictor
};

inline void to_json(nlohmann::json& j, const FitReport& r) {
    j = nlohmann::json{{"n_records", r.n_records},
                       {"n_train", r.n_train},
                       {"n_valid", r.n_valid},
                       {"detector_rmse", r.detector_rmse},
                       {"tracker_rmse", r.tracker_rmse},
                       {"tree_mse", r.tree_mse},
                       {"linear_mse", r.linear_mse},
                       {"accuracy_baseline_mse", r.accuracy_baseline_mse}};
}

inline void from_json(const nlohmann::json& j, FitReport& r) {
    r.n_records = j.at("n_records").get<std::size_t>();
    r.n_train = j.at("n_train").get<std::size_t>();
    r.n_valid = j.at("n_valid").get<std::size_t>();
    r.detector_rmse = j.at("detector_rmse").get<double>();
    r.tracker_rmse = j.at("tracker_rmse").get<double>();
    r.tree_mse = j.at("tree_mse").get<double>();
    r.linear_mse = j.at("linear_mse").get<double>();
    r.accuracy_baseline_mse = j.at("accuracy_baseline_mse").get<double>();
}

// Fits the full model bundle from one campaign: detector latency, one
// tracker latency model per (tracker, ds) seen, and both accuracy models.
// The report carries held-out errors for each.
inline std::pair<ModelBundle, FitReport> fit_models(const std::vector<ProfileRecord>& records,
                                                    const FitOptions& opts = {}) {
    if (records.size() < 2) throw ParameterError("fit_models: need at least 2 records");
    auto [train, valid] = split_records(records, opts.train_fraction, opts.split_seed);

    ModelBundle bundle;
    FitReport report;
    report.n_records = records.size();
    report.n_train = train.size();
    report.n_valid = valid.size();

    {
        auto [X, y] = make_detector_training(train);
        bundle.detector_latency = fit_quadratic(X, y, opts.ridge_lambda, kDetectorLatencyInputs,
                                                detector_training_bounds(train));
        double se = 0.0;
        for (const auto& r : valid) {
            double pred = predict_detector_latency(bundle.detector_latency, r.branch.nprop,
                                                   r.branch.shape, r.height, r.width, r.contention);
            se += (pred - r.l_detector_ms) * (pred - r.l_detector_ms);
        }
        report.detector_rmse = std::sqrt(se / static_cast<double>(valid.size()));
    }

    {
        auto groups = make_tracker_training(train);
        for (auto& [key, data] : groups) {
            bundle.tracker_latency[key] =
                fit_quadratic(data.first, data.second, opts.ridge_lambda, kTrackerLatencyInputs,
                              tracker_training_bounds(data.first));
        }
        double se = 0.0;
        std::size_t n = 0;
        for (const auto& r : valid) {
            auto it = bundle.tracker_latency.find({r.branch.tracker, r.branch.ds});
            if (it == bundle.tracker_latency.end()) continue;  // pair unseen in training
            double pred = predict_tracker_latency(it->second, r.height, r.width, r.n_obj,
                                                  r.avg_size, r.contention);
            se += (pred - r.l_tracker_ms) * (pred - r.l_tracker_ms);
            ++n;
        }
        report.tracker_rmse = n > 0 ? std::sqrt(se / static_cast<double>(n)) : 0.0;
    }

    {
        bundle.accuracy_tree = fit_accuracy_tree(make_tree_records(train), opts.tree);
        bundle.accuracy_linear = fit_linear_accuracy(make_linear_records(train));
        double mean = 0.0;
        for (const auto& r : train) mean += r.rel_accuracy;
        mean /= static_cast<double>(train.size());
        double se_tree = 0.0, se_linear = 0.0, se_base = 0.0;
        for (const auto& r : valid) {
            double pt = bundle.accuracy_tree.predict(r.branch);
            double pl = bundle.accuracy_linear.predict(r.branch, r.movement);
            se_tree += (pt - r.rel_accuracy) * (pt - r.rel_accuracy);
            se_linear += (pl - r.rel_accuracy) * (pl - r.rel_accuracy);
            se_base += (mean - r.rel_accuracy) * (mean - r.rel_accuracy);
        }
        auto nv = static_cast<double>(valid.size());
        report.tree_mse = se_tree / nv;
        report.linear_mse = se_linear / nv;
        report.accuracy_baseline_mse = se_base / nv;
    }

    return {std::move(bundle), report};
}

// --- profile record CSV ---

inline const std::vector<std::string> kProfileCsvHeader = {
    "si",       "shape",    "nprop",   "tracker",  "ds",       "cpu_cores",
    "mb_mbps",  "gpu_util", "height",  "width",    "n_obj",    "avg_size",
    "movement", "l_detector_ms", "l_tracker_ms",  "rel_accuracy"};

inline void write_profiles_csv(std::ostream& os, const std::vector<ProfileRecord>& records) {
    detail::write_csv_row(os, kProfileCsvHeader);
    for (const auto& r : records) {
        detail::write_csv_row(
            os, {std::to_string(r.branch.si), std::to_string(r.branch.shape),
                 std::to_string(r.branch.nprop), tracker_name(r.branch.tracker),
                 std::to_string(r.branch.ds), std::to_string(r.contention.cpu_cores),
                 detail::fmt_double(r.contention.mb_mbps), detail::fmt_double(r.contention.gpu_util),
                 std::to_string(r.height), std::to_string(r.width), std::to_string(r.n_obj),
                 detail::fmt_double(r.avg_size), detail::fmt_double(r.movement),
                 detail::fmt_double(r.l_detector_ms), detail::fmt_double(r.l_tracker_ms),
                 detail::fmt_double(r.rel_accuracy)});
    }
}

inline std::vector<ProfileRecord> read_profiles_csv(const std::string& path) {
    auto table = detail::read_csv(path);
    if (table.header != kProfileCsvHeader)
        throw ParameterError("profile csv: unexpected header in '" + path + "'");
    std::vector<ProfileRecord> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        ProfileRecord r;
        r.branch = BranchConfig{detail::parse_int(row[0]), detail::parse_int(row[1]),
                                detail::parse_int(row[2]), tracker_from_name(row[3]),
                                detail::parse_int(row[4])};
        r.contention = ContentionVector{detail::parse_int(row[5]), detail::parse_double(row[6]),
                                        detail::parse_double(row[7])};
        r.height = detail::parse_int(row[8]);
        r.width = detail::parse_int(row[9]);
        r.n_obj = detail::parse_int(row[10]);
        r.avg_size = detail::parse_double(row[11]);
        r.movement = detail::parse_double(row[12]);
        r.l_detector_ms = detail::parse_double(row[13]);
        r.l_tracker_ms = detail::parse_double(row[14]);
        r.rel_accuracy = detail::parse_double(row[15]);
        out.push_back(r);
    }
    return out;
}

}  // namespace branchsched
