#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <deque>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchsched/branch.hpp"
#include "branchsched/detail/csv.hpp"
#include "branchsched/errors.hpp"

namespace branchsched {

// Resource interference level a workload runs under. The three axes span
// the co-location space we model:
//   cpu_cores  occupied CPU expressed in percent-cores: {0, 100, ..., 600}
//   mb_mbps    memory bandwidth consumed by neighbours, MB/s in [0, 18000]
//   gpu_util   GPU utilization fraction taken by neighbours,
//              {0, 0.01, 0.1, 0.2, ..., 0.9, 0.99}
struct ContentionVector {
    int cpu_cores = 0;
    double mb_mbps = 0.0;
    double gpu_util = 0.0;

    // Field order is the canonical lexicographic level order.
    friend auto operator<=>(const ContentionVector&, const ContentionVector&) = default;

    bool is_zero() const { return cpu_cores == 0 && mb_mbps == 0.0 && gpu_util == 0.0; }

    std::string to_string() const {
        return "cpu" + std::to_string(cpu_cores) + "_mb" + detail::fmt_double(mb_mbps) +
               "_gpu" + detail::fmt_double(gpu_util);
    }
};

inline std::ostream& operator<<(std::ostream& os, const ContentionVector& c) {
    return os << c.to_string();
}

inline constexpr double kMaxMemoryBandwidthMbps = 18000.0;
inline constexpr int kMaxCpuCores = 600;

// The measurement grids used when profiling under synthetic contention.
inline constexpr std::array<int, 7> kCpuLevels = {0, 100, 200, 300, 400, 500, 600};
inline constexpr std::array<double, 12> kGpuLevels = {0.0, 0.01, 0.1, 0.2, 0.3, 0.4,
                                                      0.5, 0.6,  0.7, 0.8, 0.9, 0.99};

// One message per violated field constraint; empty means valid.
inline std::vector<std::string> validate_contention(const ContentionVector& c) {
    std::vector<std::string> out;
    if (c.cpu_cores < 0 || c.cpu_cores > kMaxCpuCores || c.cpu_cores % 100 != 0)
        out.push_back("cpu_cores=" + std::to_string(c.cpu_cores) +
                      " is not one of {0,100,...,600}");
    if (!(c.mb_mbps >= 0.0) || c.mb_mbps > kMaxMemoryBandwidthMbps)
        out.push_back("mb_mbps=" + detail::fmt_double(c.mb_mbps) + " out of range [0,18000]");
    bool gpu_ok = false;
    for (double g : kGpuLevels)
        if (std::abs(c.gpu_util - g) < 1e-9) gpu_ok = true;
    if (!gpu_ok)
        out.push_back("gpu_util=" + detail::fmt_double(c.gpu_util) +
                      " is not one of {0,0.01,0.1,...,0.9,0.99}");
    return out;
}

inline void to_json(nlohmann::json& j, const ContentionVector& c) {
    j = nlohmann::json{{"cpu_cores", c.cpu_cores}, {"mb_mbps", c.mb_mbps}, {"gpu_util", c.gpu_util}};
}

inline void from_json(const nlohmann::json& j, ContentionVector& c) {
    c.cpu_cores = j.at("cpu_cores").get<int>();
    c.mb_mbps = j.at("mb_mbps").get<double>();
    c.gpu_util = j.at("gpu_util").get<double>();
}

// Piecewise-constant contention over time: entry i applies from its
// start_frame until the next entry's start_frame.
struct ContentionSchedule {
    struct Entry {
        int start_frame = 0;
        ContentionVector level;
    };
    std::vector<Entry> entries;

    void validate() const {
        if (entries.empty()) throw ParameterError("contention schedule: no entries");
        if (entries.front().start_frame != 0)
            throw ParameterError("contention schedule: first entry must start at frame 0");
        for (std::size_t i = 1; i < entries.size(); ++i)
            if (entries[i].start_frame <= entries[i - 1].start_frame)
                throw ParameterError("contention schedule: start frames must be strictly increasing");
        for (const auto& e : entries)
            for (const auto& msg : validate_contention(e.level))
                throw DomainViolationError("contention schedule: " + msg);
    }

    const ContentionVector& level_at(int frame) const {
        // Last entry whose start_frame <= frame; frame >= 0 expected.
        std::size_t idx = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].start_frame <= frame) idx = i;
            else break;
        }
        return entries[idx].level;
    }
};

inline void to_json(nlohmann::json& j, const ContentionSchedule& s) {
    j = nlohmann::json::array();
    for (const auto& e : s.entries) {
        nlohmann::json je;
        to_json(je, e.level);
        je["start_frame"] = e.start_frame;
        j.push_back(je);
    }
}

inline void from_json(const nlohmann::json& j, ContentionSchedule& s) {
    s.entries.clear();
    for (const auto& je : j) {
        ContentionSchedule::Entry e;
        e.start_frame = je.at("start_frame").get<int>();
        from_json(je, e.level);
        s.entries.push_back(e);
    }
    s.validate();
}

// Mean per-frame latency of each (branch, contention level) pair, measured
// offline. This is the sensor's reference: at run time the nearest entry in
// latency space tells us which level we are most likely under.
class OfflineLatencyLog {
public:
    using LevelMap = std::map<ContentionVector, double>;

    void set(const BranchConfig& b, const ContentionVector& c, double mean_latency_ms) {
        if (!(mean_latency_ms > 0.0))
            throw ParameterError("offline log: mean latency must be > 0");
        table_[b][c] = mean_latency_ms;
    }

    bool has_branch(const BranchConfig& b) const { return table_.count(b) != 0; }

    // Levels for one branch, ascending in canonical level order.
    const LevelMap& levels_for(const BranchConfig& b) const {
        auto it = table_.find(b);
        if (it == table_.end())
            throw SensorUnavailableError("offline log: no entries for branch " + b.to_string());
        return it->second;
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [b, levels] : table_) n += levels.size();
        return n;
    }

    const std::map<BranchConfig, LevelMap>& table() const { return table_; }

    static const std::vector<std::string>& csv_header() {
        static const std::vector<std::string> h = {"si",        "shape",   "nprop",
                                                   "tracker",   "ds",      "cpu_cores",
                                                   "mb_mbps",   "gpu_util", "mean_latency_ms"};
        return h;
    }

    void write_csv(std::ostream& os) const {
        detail::write_csv_row(os, csv_header());
        for (const auto& [b, levels] : table_) {
            for (const auto& [c, lat] : levels) {
                detail::write_csv_row(
                    os, {std::to_string(b.si), std::to_string(b.shape), std::to_string(b.nprop),
                         tracker_name(b.tracker), std::to_string(b.ds), std::to_string(c.cpu_cores),
                         detail::fmt_double(c.mb_mbps), detail::fmt_double(c.gpu_util),
                         detail::fmt_double(lat)});
            }
        }
    }

    static OfflineLatencyLog read_csv(const std::string& path) {
        auto table = detail::read_csv(path);
        if (table.header != csv_header())
            throw ParameterError("offline log csv: unexpected header in '" + path + "'");
        OfflineLatencyLog log;
        for (const auto& row : table.rows) {
            BranchConfig b{detail::parse_int(row[0]), detail::parse_int(row[1]),
                           detail::parse_int(row[2]), tracker_from_name(row[3]),
                           detail::parse_int(row[4])};
            ContentionVector c{detail::parse_int(row[5]), detail::parse_double(row[6]),
                               detail::parse_double(row[7])};
            log.set(b, c, detail::parse_double(row[8]));
        }
        return log;
    }

private:
    std::map<BranchConfig, LevelMap> table_;
};

// Sliding window of recent per-frame latencies for the running branch.
// No smoothing beyond the windowed mean; the window is reset whenever the
// pipeline switches branches because old samples describe the old branch.
class SensorState {
public:
    explicit SensorState(std::size_t window = 8) : window_(window) {
        if (window_ == 0) throw ParameterError("sensor window must be >= 1");
    }

    void push(double latency_ms) {
        if (!(latency_ms >= 0.0)) throw ParameterError("sensor: latency must be >= 0");
        samples_.push_back(latency_ms);
        if (samples_.size() > window_) samples_.pop_front();
    }

    void clear() { samples_.clear(); }
    bool empty() const { return samples_.empty(); }
    std::size_t size() const { return samples_.size(); }
    std::size_t window() const { return window_; }

    double mean() const {
        if (samples_.empty()) throw ParameterError("sensor: mean of empty window");
        double s = 0.0;
        for (double v : samples_) s += v;
        return s / static_cast<double>(samples_.size());
    }

private:
    std::size_t window_;
    std::deque<double> samples_;
};

// Nearest-neighbour lookup in latency space: the sensed level is the logged
// level whose offline mean latency for this branch is closest to the
// observed windowed mean. Ties go to the lexicographically smallest level.
inline ContentionVector sense_contention(const OfflineLatencyLog& log, const SensorState& state,
                                         const BranchConfig& branch) {
    if (state.empty()) throw ParameterError("sense_contention: sensor window is empty");
    const auto& levels = log.levels_for(branch);  // throws SensorUnavailableError if absent
    const double observed = state.mean();
    const ContentionVector* best = nullptr;
    double best_dist = 0.0;
    // Map iteration is ascending in level order, so keeping the first
    // strictly-better candidate implements the smallest-level tie break.
    for (const auto& [level, latency] : levels) {
        double d = std::abs(latency - observed);
        if (best == nullptr || d < best_dist) {
            best = &level;
            best_dist = d;
        }
    }
    return *best;
}

}  // namespace branchsched
