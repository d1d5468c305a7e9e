#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchsched/contention.hpp"
#include "branchsched/detail/csv.hpp"
#include "branchsched/errors.hpp"
#include "branchsched/profiler.hpp"
#include "branchsched/scheduler.hpp"
#include "branchsched/trace.hpp"
#include "branchsched/world_model.hpp"

namespace branchsched {

// Piecewise-constant latency requirement over time.
struct SlaSchedule {
    struct Entry {
        int start_frame = 0;
        double l_req_ms = 0.0;
    };
    std::vector<Entry> entries;

    void validate() const {
        if (entries.empty()) throw ParameterError("sla schedule: no entries");
        if (entries.front().start_frame != 0)
            throw ParameterError("sla schedule: first entry must start at frame 0");
        for (std::size_t i = 1; i < entries.size(); ++i)
            if (entries[i].start_frame <= entries[i - 1].start_frame)
                throw ParameterError("sla schedule: start frames must be strictly increasing");
        for (const auto& e : entries)
            if (!(e.l_req_ms > 0.0))
                throw ParameterError("sla schedule: latency requirement must be > 0");
    }

    double level_at(int frame) const {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].start_frame <= frame) idx = i;
            else break;
        }
        return entries[idx].l_req_ms;
    }
};

inline void to_json(nlohmann::json& j, const SlaSchedule& s) {
    j = nlohmann::json::array();
    for (const auto& e : s.entries)
        j.push_back(nlohmann::json{{"start_frame", e.start_frame}, {"l_req_ms", e.l_req_ms}});
}

inline void from_json(const nlohmann::json& j, SlaSchedule& s) {
    s.entries.clear();
    for (const auto& je : j)
        s.entries.push_back(SlaSchedule::Entry{je.at("start_frame").get<int>(),
                                               je.at("l_req_ms").get<double>()});
    s.validate();
}

enum class Policy { Adaptive, Static, Oracle };

inline const char* policy_name(Policy p) {
    switch (p) {
        case Policy::Adaptive: return "adaptive";
        case Policy::Static: return "static";
        case Policy::Oracle: return "oracle";
    }
    throw ParameterError("policy_name: bad enum value");
}

inline Policy policy_from_name(const std::string& name) {
    if (name == "adaptive") return Policy::Adaptive;
    if (name == "static") return Policy::Static;
    if (name == "oracle") return Policy::Oracle;
    throw ParameterError("unknown policy '" + name + "'");
}

struct SimulationParams {
    int movement_window = kDefaultMovementWindow;
    int sensor_window = 8;
    OverheadConstants overheads;

    void validate() const {
        if (movement_window < 1) throw ParameterError("movement_window must be >= 1");
        if (sensor_window < 1) throw ParameterError("sensor_window must be >= 1");
        overheads.validate();
    }
};

// Everything logged about one simulated frame. true_l_detector carries the
// detector latency of the frame's detection group on every frame of that
// group, so charged_ms can be reconstructed from the log alone:
//   charged = true_l_detector/si + true_l_tracker
//           + l_switch*switched + l_sched*decided
struct FrameRecord {
    int frame = 0;
    BranchConfig branch;
    bool decided = false;
    bool switched = false;
    double true_l_detector = 0.0;
    double true_l_tracker = 0.0;
    double charged_ms = 0.0;
    double l_req_ms = 0.0;
    bool violation = false;
    double true_accuracy = 0.0;
    ContentionVector sensed;
    double est_latency_ms = 0.0;  // of the decision in force
    double est_accuracy = 0.0;
};

struct MetricsReport {
    std::string scenario;
    std::string policy;
    int n_frames = 0;
    double mean_latency_ms = 0.0;
    double p95_latency_ms = 0.0;
    double violation_rate = 0.0;
    double mean_accuracy = 0.0;
    int switch_count = 0;
    int decision_count = 0;
};

inline void to_json(nlohmann::json& j, const MetricsReport& m) {
    j = nlohmann::json{{"scenario", m.scenario},
                       {"policy", m.policy},
                       {"n_frames", m.n_frames},
                       {"mean_latency_ms", m.mean_latency_ms},
                       {"p95_latency_ms", m.p95_latency_ms},
                       {"violation_rate", m.violation_rate},
                       {"mean_accuracy", m.mean_accuracy},
                       {"switch_count", m.switch_count},
                       {"decision_count", m.decision_count}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& m) {
    m.scenario = j.at("scenario").get<std::string>();
    m.policy = j.at("policy").get<std::string>();
    m.n_frames = j.at("n_frames").get<int>();
    m.mean_latency_ms = j.at("mean_latency_ms").get<double>();
    m.p95_latency_ms = j.at("p95_latency_ms").get<double>();
    m.violation_rate = j.at("violation_rate").get<double>();
    m.mean_accuracy = j.at("mean_accuracy").get<double>();
    m.switch_count = j.at("switch_count").get<int>();
    m.decision_count = j.at("decision_count").get<int>();
}

struct SimulationResult {
    MetricsReport metrics;
    std::vector<FrameRecord> frames;
    std::vector<SchedulerDecision> decisions;
};

// Nearest-rank 95th percentile.
inline double percentile_95(std::vector<double> values) {
    if (values.empty()) throw ParameterError("percentile_95: no values");
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(values.size())));
    return values[std::max<std::size_t>(rank, 1) - 1];
}

struct SimulationConfig {
    Policy policy = Policy::Adaptive;
    std::optional<BranchConfig> static_branch;  // required for Policy::Static
    SimulationParams params;
    std::uint64_t seed = 42;
    std::string scenario_name = "unnamed";
};

// Content features available when deciding at frame f: geometry of the
// current frame, object census from the last processed frame, movement over
// steps that have fully elapsed (nothing from frame f itself leaks in).
inline ContentFeatures decision_features(const Trace& trace, int frame, int window) {
    ContentFeatures f = extract_features(trace, frame, window);
    f.movement = frame >= 1 ? movement_feature(trace, frame - 1, window) : 0.0;
    return f;
}

// Trace-driven closed-loop run of one policy against the world model.
//
// Per frame: (1) when a decision is due, the policy picks a branch for the
// next window; (2) the frame executes, paying the detector on detection
// frames (amortized over si when charged), the tracker on the rest, plus
// switch/schedule overheads on the frames that incur them; (3) the per-frame
// cost (sans overheads) feeds the contention sensor.
//
// The adaptive policy sees only sensed contention and model predictions.
// The oracle sees true contention and noise-free world latencies, but pays
// the same overheads as any other scheduler. Static never decides and never
// pays overheads.
inline SimulationResult run_simulation(const Trace& trace,
                                       const ContentionSchedule& contention,
                                       const SlaSchedule& sla, const SimulationConfig& config,
                                       const std::vector<BranchConfig>& candidates,
                                       const ModelBundle* models, const OfflineLatencyLog* log,
                                       const WorldModel& world) {
    if (trace.frames.empty()) throw ParameterError("run_simulation: empty trace");
    contention.validate();
    sla.validate();
    config.params.validate();
    world.validate();
    const int n_frames = trace.size();
    if (contention.entries.back().start_frame >= n_frames)
        throw ParameterError("run_simulation: contention schedule extends past the trace");
    if (sla.entries.back().start_frame >= n_frames)
        throw ParameterError("run_simulation: sla schedule extends past the trace");

    if (config.policy == Policy::Static) {
        if (!config.static_branch)
            throw ParameterError("run_simulation: static policy needs a branch");
        auto violations = validate_branch(*config.static_branch);
        if (!violations.empty())
            throw DomainViolationError("run_simulation: static branch invalid: " + violations[0]);
    } else {
        if (candidates.empty())
            throw ParameterError("run_simulation: adaptive/oracle policy needs candidates");
        for (const auto& b : candidates) {
            auto violations = validate_branch(b);
            if (!violations.empty())
                throw DomainViolationError("run_simulation: candidate invalid: " + violations[0]);
        }
    }
    if (config.policy == Policy::Adaptive) {
        if (models == nullptr || log == nullptr)
            throw ParameterError("run_simulation: adaptive policy needs models and an offline log");
        // The sensor can be asked about any branch the scheduler adopts, so
        // every candidate needs reference entries up front; failing at frame
        // 0 beats failing at the first unlucky switch.
        for (const auto& b : candidates)
            log->levels_for(b);
    }

    // The oracle predicts with expected (noise-free) world latencies.
    WorldModel oracle_world = world;
    oracle_world.noise.latency_sigma = 0.0;

    SimulationResult result;
    result.frames.reserve(n_frames);

    SensorState sensor(static_cast<std::size_t>(config.params.sensor_window));
    ContentionVector last_sensed;  // zero until the first sensing
    std::optional<SchedulerDecision> last_decision;
    BranchConfig current;
    bool running = false;            // no branch active before the first decision
    double group_l_detector = 0.0;   // detector latency of the active detection group
    int group_start = 0;
    std::size_t movement_pairs_seen = 0;

    const OverheadConstants& ov = config.params.overheads;

    for (int f = 0; f < n_frames; ++f) {
        const ContentionVector& true_level = contention.level_at(f);
        const double l_req = sla.level_at(f);

        bool decided = false;
        bool switched = false;

        if (config.policy == Policy::Static) {
            if (!running) {
                current = *config.static_branch;
                running = true;
                group_start = f;
            }
        } else if (should_schedule(f, last_decision)) {
            ContentFeatures feat = decision_features(trace, f, config.params.movement_window);
            SchedulerDecision decision;
            if (config.policy == Policy::Adaptive) {
                if (running && !sensor.empty())
                    last_sensed = sense_contention(*log, sensor, current);
                bool movement_known = movement_pairs_seen > 0;
                auto cands = build_candidates(candidates, *models, feat, last_sensed,
                                              movement_known);
                decision = select_branch(cands, l_req, ov, f);
            } else {  // Policy::Oracle
                last_sensed = true_level;
                std::vector<Candidate> cands;
                cands.reserve(candidates.size());
                for (const auto& b : candidates) {
                    double l_det = world_detector_latency(oracle_world, b, true_level, 0, 0);
                    double l_trk = world_tracker_latency(oracle_world, b, feat, true_level, 0, 0);
                    cands.push_back(
                        make_candidate(b, l_det, l_trk, world_true_accuracy(world, b, feat.movement)));
                }
                decision = select_branch(cands, l_req, ov, f);
            }
            decided = true;
            switched = running && decision.branch != current;
            if (switched) {
                sensor.clear();
                group_start = f;  // a fresh branch starts a fresh detection group
            }
            if (!running) {
                running = true;
                group_start = f;
            }
            current = decision.branch;
            last_decision = decision;
            result.decisions.push_back(decision);
        }

        // Execute the frame. The detector runs on the first frame of each
        // si-long group; trackers cover the rest.
        bool detection_frame = (f - group_start) % current.si == 0;
        ContentFeatures exec_feat = extract_features(trace, f, config.params.movement_window);
        if (detection_frame)
            group_l_detector = world_detector_latency(world, current, true_level, config.seed,
                                                      static_cast<std::uint64_t>(f));
        double l_tracker =
            detection_frame ? 0.0
                            : world_tracker_latency(world, current, exec_feat, true_level,
                                                    config.seed, static_cast<std::uint64_t>(f));

        double charged = group_l_detector / static_cast<double>(current.si) + l_tracker;
        // Overheads are not workload; they never enter the sensor window.
        sensor.push(charged);
        if (switched) charged += ov.l_switch_ms;
        if (decided && config.policy != Policy::Static) charged += ov.l_sched_ms;

        FrameRecord rec;
        rec.frame = f;
        rec.branch = current;
        rec.decided = decided;
        rec.switched = switched;
        rec.true_l_detector = group_l_detector;
        rec.true_l_tracker = l_tracker;
        rec.charged_ms = charged;
        rec.l_req_ms = l_req;
        rec.violation = charged > l_req;
        rec.true_accuracy = world_true_accuracy(world, current, exec_feat.movement);
        rec.sensed = last_sensed;
        if (last_decision) {
            rec.est_latency_ms = last_decision->est_latency_ms;
            rec.est_accuracy = last_decision->est_accuracy;
        }
        result.frames.push_back(rec);

        if (f >= 1) {
            std::size_t pairs = 0;
            movement_feature(trace, f, 1, &pairs);
            movement_pairs_seen += pairs;
        }
    }

    MetricsReport& m = result.metrics;
    m.scenario = config.scenario_name;
    m.policy = policy_name(config.policy);
    m.n_frames = n_frames;
    std::vector<double> charged;
    charged.reserve(n_frames);
    int violations = 0, switches = 0;
    double lat_sum = 0.0, acc_sum = 0.0;
    for (const auto& r : result.frames) {
        charged.push_back(r.charged_ms);
        lat_sum += r.charged_ms;
        acc_sum += r.true_accuracy;
        if (r.violation) ++violations;
        if (r.switched) ++switches;
    }
    m.mean_latency_ms = lat_sum / static_cast<double>(n_frames);
    m.p95_latency_ms = percentile_95(charged);
    m.violation_rate = static_cast<double>(violations) / static_cast<double>(n_frames);
    m.mean_accuracy = acc_sum / static_cast<double>(n_frames);
    m.switch_count = switches;
    m.decision_count = static_cast<int>(result.decisions.size());
    return result;
}

// --- scenario files ---

// A complete simulation setup: trace recipe (or file), contention and SLA
// timelines, the candidate branch slice, policy and parameters. The branch
// slice (fraction, seed, domains) must match the profiling campaign that
// produced the models and offline log, otherwise the sensor will be asked
// about branches it has no reference data for.
struct Scenario {
    std::string name = "unnamed";
    std::uint64_t seed = 42;
    Policy policy = Policy::Adaptive;
    std::optional<BranchConfig> static_branch;
    TraceSpec trace_spec;
    std::optional<std::string> trace_file;  // overrides trace_spec when set
    ContentionSchedule contention;
    SlaSchedule sla;
    double branch_fraction = 0.05;
    std::uint64_t branch_seed = 17;
    KnobDomains domains = KnobDomains::defaults();
    SimulationParams params;
};

inline void to_json(nlohmann::json& j, const Scenario& s) {
    j = nlohmann::json{{"name", s.name},
                       {"seed", s.seed},
                       {"policy", policy_name(s.policy)},
                       {"contention", s.contention},
                       {"sla", s.sla},
                       {"branches",
                        {{"fraction", s.branch_fraction},
                         {"seed", s.branch_seed},
                         {"domains", s.domains}}},
                       {"params",
                        {{"movement_window", s.params.movement_window},
                         {"sensor_window", s.params.sensor_window},
                         {"overheads", s.params.overheads}}}};
    if (s.static_branch) j["static_branch"] = *s.static_branch;
    if (s.trace_file) j["trace_file"] = *s.trace_file;
    else j["trace"] = s.trace_spec;
}

inline void from_json(const nlohmann::json& j, Scenario& s) {
    s.name = j.at("name").get<std::string>();
    s.seed = j.value("seed", 42);
    s.policy = policy_from_name(j.at("policy").get<std::string>());
    if (j.contains("static_branch"))
        s.static_branch = j.at("static_branch").get<BranchConfig>();
    if (j.contains("trace_file")) s.trace_file = j.at("trace_file").get<std::string>();
    else s.trace_spec = j.at("trace").get<TraceSpec>();
    s.contention = j.at("contention").get<ContentionSchedule>();
    s.sla = j.at("sla").get<SlaSchedule>();
    if (j.contains("branches")) {
        const auto& jb = j.at("branches");
        s.branch_fraction = jb.value("fraction", 0.05);
        s.branch_seed = jb.value("seed", 17);
        if (jb.contains("domains")) s.domains = jb.at("domains").get<KnobDomains>();
    }
    if (j.contains("params")) {
        const auto& jp = j.at("params");
        s.params.movement_window = jp.value("movement_window", kDefaultMovementWindow);
        s.params.sensor_window = jp.value("sensor_window", 8);
        if (jp.contains("overheads"))
            s.params.overheads = jp.at("overheads").get<OverheadConstants>();
    }
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("scenario: cannot open '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(in);
    return j.get<Scenario>();
}

// Materializes the scenario and runs it.
inline SimulationResult run_scenario(const Scenario& scenario, const WorldModel& world,
                                     const ModelBundle* models, const OfflineLatencyLog* log) {
    Trace trace;
    if (scenario.trace_file) {
        std::ifstream in(*scenario.trace_file);
        if (!in) throw ParameterError("scenario: cannot open trace '" + *scenario.trace_file + "'");
        nlohmann::json j = nlohmann::json::parse(in);
        trace = j.get<Trace>();
        auto violations = validate_trace(trace);
        if (!violations.empty())
            throw ParameterError("scenario: trace invalid: " + violations[0]);
    } else {
        trace = generate_trace(scenario.trace_spec, scenario.seed);
    }

    std::vector<BranchConfig> candidates;
    if (scenario.policy != Policy::Static)
        candidates = sample_branches(enumerate_branches(scenario.domains),
                                     scenario.branch_fraction, scenario.branch_seed);

    SimulationConfig config;
    config.policy = scenario.policy;
    config.static_branch = scenario.static_branch;
    config.params = scenario.params;
    config.seed = scenario.seed;
    config.scenario_name = scenario.name;
    return run_simulation(trace, scenario.contention, scenario.sla, config, candidates, models,
                          log, world);
}

// --- run output files ---

inline const std::vector<std::string> kFrameCsvHeader = {
    "frame",    "policy",   "si",       "shape",          "nprop",        "tracker",
    "ds",       "decided",  "switched", "true_l_detector_ms", "true_l_tracker_ms",
    "charged_ms", "l_req_ms", "violation", "true_accuracy", "est_latency_ms",
    "est_accuracy", "sensed_cpu_cores", "sensed_mb_mbps", "sensed_gpu_util"};

inline void write_frames_csv(std::ostream& os, const std::string& policy,
                             const std::vector<FrameRecord>& frames) {
    detail::write_csv_row(os, kFrameCsvHeader);
    for (const auto& r : frames) {
        detail::write_csv_row(
            os, {std::to_string(r.frame), policy, std::to_string(r.branch.si),
                 std::to_string(r.branch.shape), std::to_string(r.branch.nprop),
                 tracker_name(r.branch.tracker), std::to_string(r.branch.ds),
                 r.decided ? "1" : "0", r.switched ? "1" : "0",
                 detail::fmt_double(r.true_l_detector), detail::fmt_double(r.true_l_tracker),
                 detail::fmt_double(r.charged_ms), detail::fmt_double(r.l_req_ms),
                 r.violation ? "1" : "0", detail::fmt_double(r.true_accuracy),
                 detail::fmt_double(r.est_latency_ms), detail::fmt_double(r.est_accuracy),
                 std::to_string(r.sensed.cpu_cores), detail::fmt_double(r.sensed.mb_mbps),
                 detail::fmt_double(r.sensed.gpu_util)});
    }
}

inline void write_decisions_csv(std::ostream& os, const std::vector<SchedulerDecision>& decisions,
                                const std::vector<FrameRecord>& frames) {
    detail::write_csv_row(os, kDecisionCsvHeader);
    for (const auto& d : decisions) {
        // The frame record of the decision frame carries the sensed level
        // the decision was made under.
        const FrameRecord& rec = frames[static_cast<std::size_t>(d.decided_at_frame)];
        detail::write_csv_row(
            os, {std::to_string(d.decided_at_frame), std::to_string(d.branch.si),
                 std::to_string(d.branch.shape), std::to_string(d.branch.nprop),
                 tracker_name(d.branch.tracker), std::to_string(d.branch.ds),
                 detail::fmt_double(d.est_latency_ms), detail::fmt_double(d.est_accuracy),
                 std::to_string(d.feasible_count), std::to_string(rec.sensed.cpu_cores),
                 detail::fmt_double(rec.sensed.mb_mbps), detail::fmt_double(rec.sensed.gpu_util)});
    }
}

// Model bundle directory layout used by the fit and simulate commands.
inline void save_model_bundle(const ModelBundle& bundle, const std::filesystem::path& dir) {
    auto dump = [&](const nlohmann::json& j, const std::string& name) {
        std::ofstream out(dir / name);
        if (!out) throw ParameterError("cannot write '" + (dir / name).string() + "'");
        out << j.dump(2) << '\n';
    };
    dump(bundle.detector_latency, "detector_latency.json");
    for (const auto& [key, model] : bundle.tracker_latency) {
        dump(model, std::string("tracker_latency_") + tracker_name(key.first) + "_ds" +
                        std::to_string(key.second) + ".json");
    }
    dump(bundle.accuracy_tree, "accuracy_tree.json");
    dump(bundle.accuracy_linear, "accuracy_linear.json");
}

inline ModelBundle load_model_bundle(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    auto slurp = [&](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw ModelMisuseError("model bundle: cannot open '" + p.string() + "'");
        return nlohmann::json::parse(in);
    };
    if (!fs::exists(dir / "detector_latency.json"))
        throw ModelMisuseError("model bundle: missing detector_latency.json in '" + dir.string() +
                               "'");
    ModelBundle bundle;
    bundle.detector_latency = slurp(dir / "detector_latency.json").get<QuadraticModel>();
    bundle.accuracy_tree = slurp(dir / "accuracy_tree.json").get<RegressionTree>();
    bundle.accuracy_linear = slurp(dir / "accuracy_linear.json").get<LinearAccuracyModel>();
    for (Tracker t : kAllTrackers) {
        for (int ds : kDsChoices) {
            fs::path p = dir / (std::string("tracker_latency_") + tracker_name(t) + "_ds" +
                                std::to_string(ds) + ".json");
            if (fs::exists(p)) bundle.tracker_latency[{t, ds}] = slurp(p).get<QuadraticModel>();
        }
    }
    if (bundle.tracker_latency.empty())
        throw ModelMisuseError("model bundle: no tracker latency models in '" + dir.string() + "'");
    return bundle;
}

}  // namespace branchsched
