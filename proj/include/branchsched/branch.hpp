#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchsched/detail/csv.hpp"
#include "branchsched/detail/rng.hpp"
#include "branchsched/errors.hpp"

namespace branchsched {

// Object trackers available to the pipeline, cheapest first. Declaration
// order is the canonical sort order everywhere.
enum class Tracker : int { MedianFlow = 0, KCF = 1, CSRT = 2, DenseFlow = 3 };

inline constexpr int kTrackerCount = 4;
inline constexpr std::array<Tracker, 4> kAllTrackers = {
    Tracker::MedianFlow, Tracker::KCF, Tracker::CSRT, Tracker::DenseFlow};

inline const char* tracker_name(Tracker t) {
    switch (t) {
        case Tracker::MedianFlow: return "MedianFlow";
        case Tracker::KCF: return "KCF";
        case Tracker::CSRT: return "CSRT";
        case Tracker::DenseFlow: return "DenseFlow";
    }
    throw ParameterError("tracker_name: bad enum value");
}

inline Tracker tracker_from_name(const std::string& name) {
    for (Tracker t : kAllTrackers)
        if (name == tracker_name(t)) return t;
    throw ParameterError("unknown tracker '" + name + "'");
}

// Valid detector re-run intervals. Intermediate values buy little: latency
// amortization falls off as 1/si, so the grid is geometric-ish.
inline constexpr std::array<int, 7> kSiChoices = {1, 2, 4, 8, 20, 50, 100};

inline constexpr int kShapeMin = 224;
inline constexpr int kShapeMax = 576;
inline constexpr int kShapeStep = 16;  // detector input short side must be a multiple of 16
inline constexpr int kNpropMin = 1;
inline constexpr int kNpropMax = 100;
inline constexpr std::array<int, 3> kDsChoices = {1, 2, 4};

// One approximation branch: a full assignment of the five tuning knobs.
//   si      detector sampling interval (detector runs every si-th frame)
//   shape   detector input short side, pixels
//   nprop   region proposals kept per detector run
//   tracker tracker type used on the si-1 frames in between
//   ds      tracker input downsampling ratio
struct BranchConfig {
    int si = 1;
    int shape = 576;
    int nprop = 100;
    Tracker tracker = Tracker::MedianFlow;
    int ds = 1;

    // Field order doubles as knob significance order, so default comparisons
    // are the canonical lexicographic branch order.
    friend auto operator<=>(const BranchConfig&, const BranchConfig&) = default;

    // The most expensive, most accurate configuration; the accuracy
    // reference point.
    bool is_base() const { return si == 1 && shape == 576 && nprop == 100; }

    std::string to_string() const {
        return "si" + std::to_string(si) + "_shape" + std::to_string(shape) +
               "_nprop" + std::to_string(nprop) + "_" + tracker_name(tracker) +
               "_ds" + std::to_string(ds);
    }
};

inline std::ostream& operator<<(std::ostream& os, const BranchConfig& b) {
    return os << b.to_string();
}

// Returns one message per violated knob constraint; empty means valid.
inline std::vector<std::string> validate_branch(const BranchConfig& b) {
    std::vector<std::string> out;
    if (std::find(kSiChoices.begin(), kSiChoices.end(), b.si) == kSiChoices.end())
        out.push_back("si=" + std::to_string(b.si) + " is not one of {1,2,4,8,20,50,100}");
    if (b.shape < kShapeMin || b.shape > kShapeMax)
        out.push_back("shape=" + std::to_string(b.shape) + " out of range [224,576]");
    if (b.shape % kShapeStep != 0)
        out.push_back("shape=" + std::to_string(b.shape) + " is not a multiple of 16");
    if (b.nprop < kNpropMin || b.nprop > kNpropMax)
        out.push_back("nprop=" + std::to_string(b.nprop) + " out of range [1,100]");
    int ti = static_cast<int>(b.tracker);
    if (ti < 0 || ti >= kTrackerCount)
        out.push_back("tracker enum value " + std::to_string(ti) + " invalid");
    if (b.ds != 1 && b.ds != 2 && b.ds != 4)
        out.push_back("ds=" + std::to_string(b.ds) + " is not one of {1,2,4}");
    return out;
}

// Per-knob candidate value lists used for enumeration and profiling.
struct KnobDomains {
    std::vector<int> si_values;
    std::vector<int> shape_values;
    std::vector<int> nprop_values;   // default grid is a coarse subsample of [1,100]
    std::vector<Tracker> tracker_values;
    std::vector<int> ds_values;

    static KnobDomains defaults() {
        KnobDomains d;
        d.si_values.assign(kSiChoices.begin(), kSiChoices.end());
        for (int s = kShapeMin; s <= kShapeMax; s += kShapeStep) d.shape_values.push_back(s);
        d.nprop_values = {1, 3, 5, 10, 20, 50, 100};
        d.tracker_values.assign(kAllTrackers.begin(), kAllTrackers.end());
        d.ds_values.assign(kDsChoices.begin(), kDsChoices.end());
        return d;
    }
};

namespace detail {

template <typename T>
inline void check_domain_list(const std::vector<T>& values, const char* knob) {
    if (values.empty())
        throw DomainViolationError(std::string("domain for knob '") + knob + "' is empty");
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (!(values[i - 1] < values[i]))
            throw DomainViolationError(std::string("domain for knob '") + knob +
                                       "' must be strictly ascending");
    }
}

}  // namespace detail

// Validates each per-knob list (non-empty, strictly ascending, every value
// legal). Throws DomainViolationError naming the first offending knob.
inline void validate_domains(const KnobDomains& d) {
    detail::check_domain_list(d.si_values, "si");
    detail::check_domain_list(d.shape_values, "shape");
    detail::check_domain_list(d.nprop_values, "nprop");
    detail::check_domain_list(d.tracker_values, "tracker");
    detail::check_domain_list(d.ds_values, "ds");
    // Reuse the single-branch validator to vet each candidate value.
    // Each probe varies one knob and keeps the rest at known-good defaults,
    // so any violation message is about the knob under test.
    auto check = [](BranchConfig probe, const char* knob) {
        for (const auto& msg : validate_branch(probe))
            throw DomainViolationError(std::string("domain for knob '") + knob +
                                       "' contains invalid value: " + msg);
    };
    for (int v : d.si_values) check(BranchConfig{v, 576, 100, Tracker::MedianFlow, 1}, "si");
    for (int v : d.shape_values) check(BranchConfig{1, v, 100, Tracker::MedianFlow, 1}, "shape");
    for (int v : d.nprop_values) check(BranchConfig{1, 576, v, Tracker::MedianFlow, 1}, "nprop");
    for (Tracker v : d.tracker_values) check(BranchConfig{1, 576, 100, v, 1}, "tracker");
    for (int v : d.ds_values) check(BranchConfig{1, 576, 100, Tracker::MedianFlow, v}, "ds");
}

// Cartesian product of the domains, in lexicographic knob order
// (si, shape, nprop, tracker, ds). Deterministic.
inline std::vector<BranchConfig> enumerate_branches(const KnobDomains& d) {
    validate_domains(d);
    std::vector<BranchConfig> out;
    out.reserve(d.si_values.size() * d.shape_values.size() * d.nprop_values.size() *
                d.tracker_values.size() * d.ds_values.size());
    for (int si : d.si_values)
        for (int shape : d.shape_values)
            for (int nprop : d.nprop_values)
                for (Tracker tr : d.tracker_values)
                    for (int ds : d.ds_values)
                        out.push_back(BranchConfig{si, shape, nprop, tr, ds});
    return out;
}

inline std::uint64_t branch_hash(const BranchConfig& b, std::uint64_t seed) {
    std::uint64_t h = detail::hash_combine(seed, static_cast<std::uint64_t>(b.si));
    h = detail::hash_combine(h, static_cast<std::uint64_t>(b.shape));
    h = detail::hash_combine(h, static_cast<std::uint64_t>(b.nprop));
    h = detail::hash_combine(h, static_cast<std::uint64_t>(b.tracker));
    return detail::hash_combine(h, static_cast<std::uint64_t>(b.ds));
}

// Picks ceil(fraction * n) branches deterministically by seeded hash rank,
// preserving input order in the result. The base branch, when present, is
// always kept. Growing the fraction with the same seed only ever adds
// branches (the rank order is fixed), which lets profiling campaigns be
// widened without re-measuring anything.
inline std::vector<BranchConfig> sample_branches(const std::vector<BranchConfig>& branches,
                                                 double fraction, std::uint64_t seed) {
    if (branches.empty()) throw ParameterError("sample_branches: empty branch list");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ParameterError("sample_branches: fraction must be in (0,1]");
    const std::size_t n = branches.size();
    auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    want = std::min(std::max<std::size_t>(want, 1), n);

    struct Rank {
        bool not_base;
        std::uint64_t hash;
        std::size_t index;
        bool operator<(const Rank& o) const {
            if (not_base != o.not_base) return not_base < o.not_base;
            if (hash != o.hash) return hash < o.hash;
            return index < o.index;
        }
    };
    std::vector<Rank> ranks;
    ranks.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        ranks.push_back(Rank{!branches[i].is_base(), branch_hash(branches[i], seed), i});
    std::sort(ranks.begin(), ranks.end());

    std::vector<char> keep(n, 0);
    for (std::size_t i = 0; i < want; ++i) keep[ranks[i].index] = 1;
    std::vector<BranchConfig> out;
    out.reserve(want);
    for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) out.push_back(branches[i]);
    return out;
}

// --- serialization ---

inline void to_json(nlohmann::json& j, const BranchConfig& b) {
    j = nlohmann::json{{"si", b.si},
                       {"shape", b.shape},
                       {"nprop", b.nprop},
                       {"tracker", tracker_name(b.tracker)},
                       {"ds", b.ds}};
}

inline void from_json(const nlohmann::json& j, BranchConfig& b) {
    b.si = j.at("si").get<int>();
    b.shape = j.at("shape").get<int>();
    b.nprop = j.at("nprop").get<int>();
    b.tracker = tracker_from_name(j.at("tracker").get<std::string>());
    b.ds = j.at("ds").get<int>();
}

inline void to_json(nlohmann::json& j, const KnobDomains& d) {
    std::vector<std::string> trackers;
    for (Tracker t : d.tracker_values) trackers.push_back(tracker_name(t));
    j = nlohmann::json{{"si", d.si_values},
                       {"shape", d.shape_values},
                       {"nprop", d.nprop_values},
                       {"tracker", trackers},
                       {"ds", d.ds_values}};
}

inline void from_json(const nlohmann::json& j, KnobDomains& d) {
    d.si_values = j.at("si").get<std::vector<int>>();
    d.shape_values = j.at("shape").get<std::vector<int>>();
    d.nprop_values = j.at("nprop").get<std::vector<int>>();
    d.tracker_values.clear();
    for (const auto& name : j.at("tracker"))
        d.tracker_values.push_back(tracker_from_name(name.get<std::string>()));
    d.ds_values = j.at("ds").get<std::vector<int>>();
}

inline const std::vector<std::string> kBranchCsvHeader = {"si", "shape", "nprop", "tracker", "ds"};

inline void write_branches_csv(std::ostream& os, const std::vector<BranchConfig>& branches) {
    detail::write_csv_row(os, kBranchCsvHeader);
    for (const auto& b : branches) {
        detail::write_csv_row(os, {std::to_string(b.si), std::to_string(b.shape),
                                   std::to_string(b.nprop), tracker_name(b.tracker),
                                   std::to_string(b.ds)});
    }
}

inline std::vector<BranchConfig> read_branches_csv(const std::string& path) {
    auto table = detail::read_csv(path);
    if (table.header != kBranchCsvHeader)
        throw ParameterError("branch csv: unexpected header in '" + path + "'");
    std::vector<BranchConfig> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        out.push_back(BranchConfig{detail::parse_int(row[0]), detail::parse_int(row[1]),
                                   detail::parse_int(row[2]), tracker_from_name(row[3]),
                                   detail::parse_int(row[4])});
    }
    return out;
}

}  // namespace branchsched
