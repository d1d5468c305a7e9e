#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <thread>
#include <vector>

#include <json.hpp>

#include "branchsched/errors.hpp"

namespace branchsched {

// Feedback-controlled memory bandwidth stressor.
//
// Each worker owns a 152 MB buffer and walks it forever, doing a little ALU
// work every iteration and a 64-bit store every `stride`-th iteration, 64
// bytes apart so consecutive stores land on distinct cache lines of a
// working set far larger than any cache. A controller thread compares the
// achieved store rate against the target every tick and scales the shared
// stride multiplicatively. Large strides turn the workers into pure CPU
// burners (a 1 MB/s target is the idiomatic way to occupy cores without
// touching memory); stride 1 is the full-rate streaming mode, and a target
// above what the host can sustain ends with the saturated flag set instead
// of an error.
//
// Achieved bandwidth counts payload bytes stored (stores x 8); actual bus
// traffic is higher since every store misses.

struct StressorOptions {
    std::size_t buffer_bytes = 152ull * 1024 * 1024;
    double tick_seconds = 0.05;
    double warmup_seconds = 1.0;
};

struct StressorReport {
    double target_mbps = 0.0;
    int target_cores = 0;
    double duration_seconds = 0.0;
    double achieved_mean_mbps = 0.0;    // over the steady window
    double achieved_stddev_mbps = 0.0;  // over the steady window
    double mean_core_occupancy = 0.0;   // thread CPU time / wall time, per worker
    bool saturated = false;             // target unreachable at stride 1
    std::vector<double> tick_mbps;      // every tick, warmup included
};

inline void to_json(nlohmann::json& j, const StressorReport& r) {
    j = nlohmann::json{{"target_mbps", r.target_mbps},
                       {"target_cores", r.target_cores},
                       {"duration_seconds", r.duration_seconds},
                       {"achieved_mean_mbps", r.achieved_mean_mbps},
                       {"achieved_stddev_mbps", r.achieved_stddev_mbps},
                       {"mean_core_occupancy", r.mean_core_occupancy},
                       {"saturated", r.saturated},
                       {"tick_mbps", r.tick_mbps}};
}

namespace detail {

inline double thread_cpu_seconds() {
#ifdef __linux__
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
#else
    return 0.0;
#endif
}

}  // namespace detail

inline StressorReport run_stressor(int target_cores, double target_mbps, double duration_seconds,
                                   const StressorOptions& opts = {}) {
    if (target_cores < 1) throw ParameterError("stressor: target_cores must be >= 1");
    unsigned hw = std::thread::hardware_concurrency();
    if (hw > 0 && static_cast<unsigned>(target_cores) > hw)
        throw ParameterError("stressor: target_cores exceeds available cores (" +
                             std::to_string(hw) + ")");
    if (!(target_mbps > 0.0)) throw ParameterError("stressor: target_mbps must be > 0");
    if (duration_seconds < 0.0) throw ParameterError("stressor: duration must be >= 0");
    if (opts.buffer_bytes < 1024 * 1024) throw ParameterError("stressor: buffer too small");
    if (!(opts.tick_seconds > 0.0)) throw ParameterError("stressor: tick must be > 0");

    StressorReport report;
    report.target_mbps = target_mbps;
    report.target_cores = target_cores;
    report.duration_seconds = duration_seconds;
    if (duration_seconds == 0.0) return report;

    std::atomic<bool> stop{false};
    std::atomic<std::uint64_t> stride{1};
    std::atomic<std::uint64_t> total_stores{0};
    std::vector<double> occupancy(static_cast<std::size_t>(target_cores), 0.0);

    const std::size_t n_elems = opts.buffer_bytes / sizeof(std::uint64_t);
    constexpr std::size_t kLinePitch = 8;  // 64 bytes in uint64 elements
    constexpr std::uint64_t kChunk = 1 << 15;

    auto worker = [&](std::size_t widx) {
        std::vector<std::uint64_t> buffer(n_elems, 1);  // touch every page up front
        auto wall_start = std::chrono::steady_clock::now();
        double cpu_start = detail::thread_cpu_seconds();
        std::uint64_t acc = 0x2545f4914f6cdd1dULL + widx;
        std::size_t pos = (widx * 4096) % n_elems;
        std::uint64_t until_store = 1;
        std::uint64_t local_stores = 0;
        while (!stop.load(std::memory_order_relaxed)) {
            const std::uint64_t cur_stride = stride.load(std::memory_order_relaxed);
            for (std::uint64_t i = 0; i < kChunk; ++i) {
                // Cheap dependent ALU work so skipped iterations cost real
                // but memory-free time.
                acc ^= acc << 13;
                acc ^= acc >> 7;
                acc ^= acc << 17;
                if (--until_store == 0) {
                    until_store = cur_stride;
                    buffer[pos] = acc;
                    pos += kLinePitch;
                    if (pos >= n_elems) pos -= n_elems;
                    ++local_stores;
                }
            }
            total_stores.fetch_add(local_stores, std::memory_order_relaxed);
            local_stores = 0;
        }
        auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
                        .count();
        double cpu = detail::thread_cpu_seconds() - cpu_start;
        occupancy[widx] = wall > 0.0 ? cpu / wall : 0.0;
    };

    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(target_cores));
    for (int i = 0; i < target_cores; ++i) workers.emplace_back(worker, static_cast<std::size_t>(i));

    // Controller: measure, compare, rescale. Damped multiplicative update;
    // the achieved rate is monotone in 1/stride so this converges without
    // modeling the per-iteration costs.
    const auto t_start = std::chrono::steady_clock::now();
    double stride_f = 1.0;
    std::uint64_t last_stores = 0;
    auto last_time = t_start;
    bool stride_floored_in_steady = false;
    const auto tick = std::chrono::duration<double>(opts.tick_seconds);
    while (true) {
        std::this_thread::sleep_for(tick);
        auto now = std::chrono::steady_clock::now();
        double elapsed = std::chrono::duration<double>(now - t_start).count();
        double dt = std::chrono::duration<double>(now - last_time).count();
        std::uint64_t stores = total_stores.load(std::memory_order_relaxed);
        double mbps = static_cast<double>(stores - last_stores) * 8.0 / (dt * 1e6);
        last_stores = stores;
        last_time = now;
        report.tick_mbps.push_back(mbps);
        if (elapsed >= opts.warmup_seconds && stride_f <= 1.0 && mbps < target_mbps)
            stride_floored_in_steady = true;
        if (mbps > 0.0) {
            double factor = std::clamp(std::pow(mbps / target_mbps, 0.7), 0.5, 2.0);
            stride_f = std::clamp(stride_f * factor, 1.0, 1e9);
            stride.store(static_cast<std::uint64_t>(std::llround(stride_f)),
                         std::memory_order_relaxed);
        }
        if (elapsed >= duration_seconds) break;
    }
    stop.store(true, std::memory_order_relaxed);
    for (auto& t : workers) t.join();

    // Steady-window statistics: everything after warmup, or the second half
    // of the run when the run is shorter than the warmup.
    std::size_t n_ticks = report.tick_mbps.size();
    std::size_t first_steady = std::min(
        n_ticks > 1 ? n_ticks / 2 : 0,
        static_cast<std::size_t>(opts.warmup_seconds / opts.tick_seconds));
    double sum = 0.0, sum2 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = first_steady; i < n_ticks; ++i) {
        sum += report.tick_mbps[i];
        sum2 += report.tick_mbps[i] * report.tick_mbps[i];
        ++n;
    }
    if (n > 0) {
        report.achieved_mean_mbps = sum / static_cast<double>(n);
        double var = sum2 / static_cast<double>(n) -
                     report.achieved_mean_mbps * report.achieved_mean_mbps;
        report.achieved_stddev_mbps = std::sqrt(std::max(0.0, var));
    }
    double occ = 0.0;
    for (double o : occupancy) occ += o;
    report.mean_core_occupancy = occ / static_cast<double>(target_cores);
    report.saturated =
        stride_floored_in_steady && report.achieved_mean_mbps < 0.9 * target_mbps;
    return report;
}

}  // namespace branchsched
