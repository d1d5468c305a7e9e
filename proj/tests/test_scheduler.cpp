#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "branchsched/detail/rng.hpp"
#include "branchsched/scheduler.hpp"

using namespace branchsched;

namespace {

const OverheadConstants kNoOverheads{0.0, 0.0};

Candidate cand(BranchConfig b, double l_det, double l_trk, double acc) {
    return make_candidate(b, l_det, l_trk, acc);
}

BranchConfig with_tracker(Tracker t) { return BranchConfig{8, 448, 50, t, 1}; }

}  // namespace

TEST_CASE("decision window") {
    CHECK(decision_window(1) == 8);
    CHECK(decision_window(8) == 8);
    CHECK(decision_window(20) == 20);
    CHECK(decision_window(100) == 100);
}

TEST_CASE("select_branch basics") {
    SECTION("feasibility is strict") {
        // si=1 with zero overheads makes est equal l_detector + l_tracker.
        std::vector<Candidate> cs = {
            cand({1, 576, 100, Tracker::MedianFlow, 1}, 90.0, 10.0, 100.0),  // est == 100
            cand({1, 224, 1, Tracker::MedianFlow, 1}, 40.0, 10.0, 50.0),
        };
        auto d = select_branch(cs, 100.0, kNoOverheads);
        CHECK(d.branch == cs[1].branch);
        CHECK(d.feasible_count == 1);
    }

    SECTION("accuracy wins among feasible, even when slower") {
        std::vector<Candidate> cs = {
            cand({1, 224, 1, Tracker::MedianFlow, 1}, 10.0, 1.0, 60.0),
            cand({1, 576, 100, Tracker::MedianFlow, 1}, 60.0, 5.0, 95.0),
        };
        auto d = select_branch(cs, 100.0, kNoOverheads);
        CHECK(d.branch == cs[1].branch);
        CHECK(d.est_accuracy == 95.0);
        CHECK(d.feasible_count == 2);
    }

    SECTION("accuracy tie falls back to the lower estimate") {
        std::vector<Candidate> cs = {
            cand({1, 576, 100, Tracker::MedianFlow, 1}, 40.0, 0.0, 90.0),
            cand({1, 576, 100, Tracker::MedianFlow, 2}, 30.0, 0.0, 90.0),
        };
        auto d = select_branch(cs, 100.0, kNoOverheads);
        CHECK(d.branch == cs[1].branch);
        CHECK(d.est_latency_ms == 30.0);
    }

    SECTION("full tie falls back to the lexicographically smallest branch") {
        std::vector<Candidate> cs = {
            cand(with_tracker(Tracker::KCF), 20.0, 2.0, 90.0),
            cand(with_tracker(Tracker::MedianFlow), 20.0, 2.0, 90.0),
        };
        auto d = select_branch(cs, 100.0, kNoOverheads);
        CHECK(d.branch.tracker == Tracker::MedianFlow);
    }

    SECTION("no feasible candidate: least-bad latency, accuracy ignored") {
        std::vector<Candidate> cs = {
            cand({1, 448, 50, Tracker::MedianFlow, 1}, 200.0, 0.0, 70.0),
            cand({1, 448, 50, Tracker::KCF, 1}, 150.0, 0.0, 10.0),
            cand({1, 576, 100, Tracker::CSRT, 1}, 300.0, 0.0, 100.0),
        };
        auto d = select_branch(cs, 100.0, kNoOverheads);
        CHECK(d.branch == cs[1].branch);
        CHECK(d.feasible_count == 0);
        CHECK(d.est_latency_ms == 150.0);
    }

    SECTION("a feasible candidate always beats an infeasible one") {
        std::vector<Candidate> cs = {
            cand({1, 576, 100, Tracker::MedianFlow, 1}, 150.0, 0.0, 100.0),
            cand({1, 224, 1, Tracker::MedianFlow, 1}, 50.0, 0.0, 5.0),
        };
        auto d = select_branch(cs, 100.0, kNoOverheads);
        CHECK(d.branch == cs[1].branch);
    }

    SECTION("overheads amortize over the sampling interval") {
        // Same per-frame cost, but si=1 pays the full overhead every frame.
        std::vector<Candidate> cs = {
            cand({1, 576, 100, Tracker::MedianFlow, 1}, 80.0, 0.0, 100.0),
            cand({100, 576, 100, Tracker::MedianFlow, 1}, 8000.0, 0.0, 90.0),
        };
        OverheadConstants o{12.0, 11.09};
        auto d = select_branch(cs, 90.0, o);
        CHECK(d.branch.si == 100);
        CHECK(d.est_latency_ms == estimate_branch_latency(80.0, 12.0, 11.09, 100));
        CHECK(d.window == 100);
    }

    SECTION("decision metadata") {
        std::vector<Candidate> cs = {cand({20, 448, 50, Tracker::KCF, 2}, 50.0, 2.0, 80.0)};
        auto d = select_branch(cs, 100.0, kNoOverheads, 37);
        CHECK(d.decided_at_frame == 37);
        CHECK(d.window == 20);
    }

    SECTION("argument validation") {
        std::vector<Candidate> cs = {cand(BranchConfig{}, 10.0, 1.0, 50.0)};
        CHECK_THROWS_AS(select_branch(std::span<const Candidate>{}, 100.0, kNoOverheads),
                        ParameterError);
        CHECK_THROWS_AS(select_branch(cs, 0.0, kNoOverheads), ParameterError);
        CHECK_THROWS_AS(select_branch(cs, -5.0, kNoOverheads), ParameterError);
        CHECK_THROWS_AS(select_branch(cs, 100.0, OverheadConstants{-1.0, 0.0}), ParameterError);
    }
}

namespace {

// Independent re-derivation of the selection rule, written as an explicit
// sort so the production single-pass version has something to disagree with.
SchedulerDecision oracle_select(const std::vector<Candidate>& cs, double l_req,
                                const OverheadConstants& o) {
    struct Row {
        std::size_t index;
        double est;
        bool feasible;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        double est = cs[i].l_frame + (o.l_switch_ms + o.l_sched_ms) / cs[i].branch.si;
        rows.push_back({i, est, est < l_req});
    }
    auto better = [&](const Row& a, const Row& b) {
        if (a.feasible != b.feasible) return a.feasible;
        if (a.feasible && cs[a.index].est_accuracy != cs[b.index].est_accuracy)
            return cs[a.index].est_accuracy > cs[b.index].est_accuracy;
        if (a.est != b.est) return a.est < b.est;
        if (cs[a.index].branch != cs[b.index].branch)
            return cs[a.index].branch < cs[b.index].branch;
        return a.index < b.index;
    };
    std::sort(rows.begin(), rows.end(), better);
    const Row& w = rows.front();
    int feasible = static_cast<int>(std::count_if(rows.begin(), rows.end(),
                                                  [](const Row& r) { return r.feasible; }));
    return SchedulerDecision{cs[w.index].branch, w.est, cs[w.index].est_accuracy, feasible, 0,
                             decision_window(cs[w.index].branch.si)};
}

}  // namespace

TEST_CASE("select_branch agrees with a brute-force oracle") {
    detail::Rng rng(2024);
    auto domains = KnobDomains::defaults();
    for (int trial = 0; trial < 500; ++trial) {
        std::size_t n = 1 + rng.bounded(60);
        std::vector<Candidate> cs;
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0 && rng.next_double() < 0.3) {
                // Duplicate an earlier candidate to force full ties.
                cs.push_back(cs[rng.bounded(i)]);
                continue;
            }
            BranchConfig b;
            b.si = domains.si_values[rng.bounded(domains.si_values.size())];
            b.shape = domains.shape_values[rng.bounded(domains.shape_values.size())];
            b.nprop = domains.nprop_values[rng.bounded(domains.nprop_values.size())];
            b.tracker = kAllTrackers[rng.bounded(4)];
            b.ds = domains.ds_values[rng.bounded(domains.ds_values.size())];
            // Coarse accuracy values make accuracy ties common.
            double acc = 5.0 * static_cast<double>(rng.bounded(21));
            cs.push_back(cand(b, rng.uniform(0.0, 300.0), rng.uniform(0.0, 50.0), acc));
        }
        double l_req = rng.uniform(10.0, 200.0);
        OverheadConstants o = trial % 2 ? OverheadConstants{12.0, 11.09} : kNoOverheads;
        auto got = select_branch(cs, l_req, o);
        auto want = oracle_select(cs, l_req, o);
        REQUIRE(got.branch == want.branch);
        REQUIRE(got.est_latency_ms == want.est_latency_ms);
        REQUIRE(got.est_accuracy == want.est_accuracy);
        REQUIRE(got.feasible_count == want.feasible_count);
    }
}

TEST_CASE("should_schedule honors the decision window") {
    CHECK(should_schedule(0, std::nullopt));
    SchedulerDecision d;
    d.decided_at_frame = 10;
    d.window = 8;
    std::optional<SchedulerDecision> last = d;
    CHECK_FALSE(should_schedule(10, last));
    CHECK_FALSE(should_schedule(17, last));
    CHECK(should_schedule(18, last));
    CHECK_THROWS_AS(should_schedule(-1, last), ParameterError);
}

namespace {

QuadraticModel constant_model(const std::vector<std::string>& names, double value) {
    QuadraticModel m;
    m.input_names = names;
    m.lower.assign(names.size(), 0.0);
    m.upper.assign(names.size(), 1.0);
    m.coefficients.assign(expanded_size(names.size()), 0.0);
    m.coefficients[0] = value;
    return m;
}

ModelBundle constant_bundle(double l_det, double l_trk, double tree_acc, double linear_acc) {
    ModelBundle models;
    models.detector_latency = constant_model(kDetectorLatencyInputs, l_det);
    for (Tracker t : kAllTrackers)
        for (int ds : {1, 2, 4})
            models.tracker_latency[{t, ds}] = constant_model(kTrackerLatencyInputs, l_trk);

    std::vector<std::pair<BranchConfig, double>> tree_records = {
        {BranchConfig{}, tree_acc}, {BranchConfig{8, 448, 50, Tracker::KCF, 2}, tree_acc}};
    TreeHyperparams flat;
    flat.max_depth = 0;
    models.accuracy_tree = fit_accuracy_tree(tree_records, flat);

    std::vector<std::tuple<BranchConfig, double, double>> lin;
    for (int si : {1, 8, 100})
        for (Tracker t : kAllTrackers)
            for (double mv : {0.0, 5.0}) lin.push_back({{si, 448, 50, t, 2}, mv, linear_acc});
    models.accuracy_linear = fit_linear_accuracy(lin);
    return models;
}

}  // namespace

TEST_CASE("build_candidates wires models, features and contention together") {
    auto models = constant_bundle(40.0, 7.0, 90.0, 95.0);
    ContentFeatures f{720, 1280, 3, 8000.0, 2.0};
    std::vector<BranchConfig> branches = {{8, 448, 50, Tracker::KCF, 2},
                                          {1, 576, 100, Tracker::MedianFlow, 1}};

    auto before = build_candidates(branches, models, f, ContentionVector{}, false);
    REQUIRE(before.size() == 2);
    CHECK(before[0].l_detector == 40.0);
    CHECK(before[0].l_tracker == 7.0);
    CHECK(before[0].l_frame == 40.0 / 8.0 + 7.0);
    CHECK(before[0].est_accuracy == 90.0);  // knob-only tree before movement exists

    auto after = build_candidates(branches, models, f, ContentionVector{}, true);
    CHECK(after[0].est_accuracy == Catch::Approx(95.0));  // content-aware model

    CHECK_THROWS_AS(build_candidates(std::span<const BranchConfig>{}, models, f,
                                     ContentionVector{}, false),
                    ParameterError);

    models.tracker_latency.erase({Tracker::KCF, 2});
    CHECK_THROWS_AS(build_candidates(branches, models, f, ContentionVector{}, false),
                    ModelMisuseError);
}
