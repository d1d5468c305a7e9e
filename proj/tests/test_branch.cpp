#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "branchsched/branch.hpp"

using namespace branchsched;

TEST_CASE("default domains enumerate the full branch space") {
    auto branches = enumerate_branches(KnobDomains::defaults());
    // 7 si * 23 shapes * 7 nprop * 4 trackers * 3 ds
    REQUIRE(branches.size() == 13524);
    CHECK(branches.front() == BranchConfig{1, 224, 1, Tracker::MedianFlow, 1});
    CHECK(branches.back() == BranchConfig{100, 576, 100, Tracker::DenseFlow, 4});
    CHECK(std::is_sorted(branches.begin(), branches.end()));
    // Strictly sorted: no duplicates.
    CHECK(std::adjacent_find(branches.begin(), branches.end()) == branches.end());
    for (const auto& b : branches) CHECK(validate_branch(b).empty());
}

TEST_CASE("branch ordering is lexicographic in knob order") {
    BranchConfig a{1, 224, 1, Tracker::MedianFlow, 1};
    CHECK(a < BranchConfig{2, 224, 1, Tracker::MedianFlow, 1});
    CHECK(a < BranchConfig{1, 240, 1, Tracker::MedianFlow, 1});
    CHECK(a < BranchConfig{1, 224, 2, Tracker::MedianFlow, 1});
    CHECK(a < BranchConfig{1, 224, 1, Tracker::KCF, 1});
    CHECK(a < BranchConfig{1, 224, 1, Tracker::MedianFlow, 2});
    // si dominates everything after it.
    CHECK(BranchConfig{1, 576, 100, Tracker::DenseFlow, 4} <
          BranchConfig{2, 224, 1, Tracker::MedianFlow, 1});
}

TEST_CASE("validate_branch reports each violated knob") {
    CHECK(validate_branch(BranchConfig{}).empty());
    CHECK(validate_branch(BranchConfig{100, 576, 100, Tracker::DenseFlow, 4}).empty());

    auto one = validate_branch(BranchConfig{3, 576, 100, Tracker::MedianFlow, 1});
    REQUIRE(one.size() == 1);
    CHECK(one[0].find("si=3") != std::string::npos);

    auto shape_mult = validate_branch(BranchConfig{1, 300, 100, Tracker::MedianFlow, 1});
    REQUIRE(shape_mult.size() == 1);
    CHECK(shape_mult[0].find("multiple of 16") != std::string::npos);

    auto shape_range = validate_branch(BranchConfig{1, 208, 100, Tracker::MedianFlow, 1});
    REQUIRE(shape_range.size() == 1);
    CHECK(shape_range[0].find("range") != std::string::npos);

    CHECK(validate_branch(BranchConfig{1, 576, 0, Tracker::MedianFlow, 1}).size() == 1);
    CHECK(validate_branch(BranchConfig{1, 576, 101, Tracker::MedianFlow, 1}).size() == 1);
    CHECK(validate_branch(BranchConfig{1, 576, 100, Tracker::MedianFlow, 3}).size() == 1);

    auto two = validate_branch(BranchConfig{3, 576, 100, Tracker::MedianFlow, 5});
    CHECK(two.size() == 2);
}

TEST_CASE("enumerate_branches rejects bad domains naming the knob") {
    auto d = KnobDomains::defaults();
    d.si_values = {1, 3};
    CHECK_THROWS_MATCHES(enumerate_branches(d), DomainViolationError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("si")));

    d = KnobDomains::defaults();
    d.shape_values.clear();
    CHECK_THROWS_MATCHES(
        enumerate_branches(d), DomainViolationError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("shape")));

    d = KnobDomains::defaults();
    d.nprop_values = {10, 5};
    CHECK_THROWS_MATCHES(
        enumerate_branches(d), DomainViolationError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("nprop")));

    d = KnobDomains::defaults();
    d.ds_values = {1, 2, 3};
    CHECK_THROWS_MATCHES(enumerate_branches(d), DomainViolationError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("ds")));
}

TEST_CASE("sample_branches picks a deterministic hash-ranked subset") {
    auto all = enumerate_branches(KnobDomains::defaults());

    auto sampled = sample_branches(all, 0.2, 17);
    CHECK(sampled.size() == 2705);  // ceil(0.2 * 13524)

    SECTION("deterministic per seed") {
        CHECK(sample_branches(all, 0.2, 17) == sampled);
        CHECK(sample_branches(all, 0.2, 18) != sampled);
    }

    SECTION("base branches always kept") {
        // 12 branches carry the base knob setting (4 trackers x 3 ds); all
        // of them rank ahead of everything else.
        for (std::uint64_t seed : {1ull, 17ull, 99ull}) {
            auto s = sample_branches(all, 0.01, seed);
            CHECK(std::count_if(s.begin(), s.end(),
                                [](const BranchConfig& b) { return b.is_base(); }) == 12);
        }
        // Even a minimal sample is a base branch.
        auto one = sample_branches(all, 1e-9, 3);
        REQUIRE(one.size() == 1);
        CHECK(one[0].is_base());
    }

    SECTION("input order preserved") {
        CHECK(std::is_sorted(sampled.begin(), sampled.end()));
    }

    SECTION("growing the fraction only adds branches") {
        auto small = sample_branches(all, 0.05, 17);
        std::set<BranchConfig> big(sampled.begin(), sampled.end());
        for (const auto& b : small) CHECK(big.count(b) == 1);
    }

    SECTION("fraction 1 returns everything unchanged") {
        CHECK(sample_branches(all, 1.0, 5) == all);
    }

    SECTION("every output is valid") {
        for (const auto& b : sampled) CHECK(validate_branch(b).empty());
    }

    SECTION("bad arguments") {
        CHECK_THROWS_AS(sample_branches({}, 0.5, 1), ParameterError);
        CHECK_THROWS_AS(sample_branches(all, 0.0, 1), ParameterError);
        CHECK_THROWS_AS(sample_branches(all, 1.5, 1), ParameterError);
        CHECK_THROWS_AS(sample_branches(all, -0.1, 1), ParameterError);
    }
}

TEST_CASE("branch json and csv round trips") {
    BranchConfig b{8, 448, 50, Tracker::CSRT, 2};
    nlohmann::json j = b;
    CHECK(j.at("tracker") == "CSRT");
    CHECK(j.get<BranchConfig>() == b);

    auto d = KnobDomains::defaults();
    nlohmann::json jd = d;
    auto d2 = jd.get<KnobDomains>();
    CHECK(d2.si_values == d.si_values);
    CHECK(d2.shape_values == d.shape_values);
    CHECK(d2.nprop_values == d.nprop_values);
    CHECK(d2.tracker_values == d.tracker_values);
    CHECK(d2.ds_values == d.ds_values);

    auto all = enumerate_branches(d);
    auto sampled = sample_branches(all, 0.01, 7);
    auto path = std::filesystem::temp_directory_path() / "branchsched_branches_test.csv";
    {
        std::ofstream out(path);
        write_branches_csv(out, sampled);
    }
    CHECK(read_branches_csv(path.string()) == sampled);
    std::filesystem::remove(path);
}

TEST_CASE("tracker names round trip and reject junk") {
    for (Tracker t : kAllTrackers) CHECK(tracker_from_name(tracker_name(t)) == t);
    CHECK_THROWS_AS(tracker_from_name("SORT"), ParameterError);
}
