#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "branchsched/simulation.hpp"

namespace fs = std::filesystem;
using namespace branchsched;
using nlohmann::json;

namespace {

const fs::path& workdir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "branchsched_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliResult run_cli(const std::string& args) {
    fs::path out_file = workdir() / "stdout.txt";
    fs::path err_file = workdir() / "stderr.txt";
    std::string cmd = std::string(BRANCHSCHED_CLI_PATH) + " " + args + " >" + out_file.string() +
                      " 2>" + err_file.string();
    int status = std::system(cmd.c_str());
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return {code, slurp(out_file), slurp(err_file)};
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

KnobDomains small_domains() {
    KnobDomains d;
    d.si_values = {1, 8, 50};
    d.shape_values = {224, 576};
    d.nprop_values = {10, 100};
    d.tracker_values = {Tracker::MedianFlow, Tracker::KCF};
    d.ds_values = {1, 2};
    return d;
}

// Lays down the small input files the pipeline tests share.
const fs::path& inputs() {
    static fs::path dir = [] {
        fs::path d = workdir() / "inputs";
        fs::create_directories(d);

        write_file(d / "world.json", json(WorldModel::defaults()).dump(2));

        SamplingPlan plan;
        plan.branch_fraction = 1.0;
        plan.seed = 17;
        plan.domains = small_domains();
        plan.contention_levels = {ContentionVector{}, ContentionVector{0, 0.0, 0.2},
                                  ContentionVector{0, 0.0, 0.5}};
        plan.content.n_objects = {0, 4};
        plan.content.avg_sizes = {10000.0};
        plan.content.movements = {0.5, 5.0, 18.0};
        write_file(d / "plan.json", json(plan).dump(2));

        Scenario adaptive;
        adaptive.name = "cli_adaptive";
        adaptive.seed = 42;
        adaptive.policy = Policy::Adaptive;
        adaptive.trace_spec.n_frames = 50;
        adaptive.trace_spec.n_objects = 3;
        adaptive.contention = ContentionSchedule{
            {{0, ContentionVector{}}, {25, ContentionVector{0, 0.0, 0.5}}}};
        adaptive.sla = SlaSchedule{{{0, 150.0}}};
        adaptive.branch_fraction = 1.0;
        adaptive.branch_seed = 17;
        adaptive.domains = small_domains();
        write_file(d / "scenario_adaptive.json", json(adaptive).dump(2));

        Scenario stat = adaptive;
        stat.name = "cli_static";
        stat.policy = Policy::Static;
        stat.static_branch = BranchConfig{8, 448, 50, Tracker::KCF, 1};
        write_file(d / "scenario_static.json", json(stat).dump(2));

        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("cli version flag") {
    auto r = run_cli("--version");
    CHECK(r.code == 0);
    CHECK_FALSE(r.out.empty());
}

TEST_CASE("cli pipeline: profile, fit, simulate, report") {
    const fs::path in = inputs();
    const fs::path prof = workdir() / "prof";
    const fs::path models = workdir() / "models";
    const fs::path run_a = workdir() / "run_adaptive";
    const fs::path run_s = workdir() / "run_static";

    auto profiled = run_cli("profile " + (in / "plan.json").string() + " " +
                            (in / "world.json").string() + " --out " + prof.string());
    INFO(profiled.err);
    REQUIRE(profiled.code == 0);
    CHECK(fs::exists(prof / "profiles.csv"));
    CHECK(fs::exists(prof / "offline_log.csv"));
    CHECK(fs::exists(prof / "branches.csv"));
    CHECK(fs::exists(prof / "manifest.json"));
    CHECK(json::parse(slurp(prof / "manifest.json")).at("command") == "profile");

    auto fitted = run_cli("fit " + (prof / "profiles.csv").string() + " --out " + models.string());
    INFO(fitted.err);
    REQUIRE(fitted.code == 0);
    CHECK(fs::exists(models / "detector_latency.json"));
    CHECK(fs::exists(models / "accuracy_tree.json"));
    CHECK(fs::exists(models / "accuracy_linear.json"));
    CHECK(fs::exists(models / "fit_report.json"));
    CHECK(fs::exists(models / "offline_log.csv"));
    CHECK(fs::exists(models / "tracker_latency_KCF_ds2.json"));

    auto sim = run_cli("simulate " + (in / "scenario_adaptive.json").string() + " --world " +
                       (in / "world.json").string() + " --models " + models.string() + " --out " +
                       run_a.string());
    INFO(sim.err);
    REQUIRE(sim.code == 0);
    auto metrics = json::parse(slurp(run_a / "metrics.json")).get<MetricsReport>();
    CHECK(metrics.n_frames == 50);
    CHECK(metrics.policy == "adaptive");
    CHECK(metrics.scenario == "cli_adaptive");
    CHECK(fs::exists(run_a / "frames.csv"));
    CHECK(fs::exists(run_a / "decisions.csv"));

    auto sim_static = run_cli("simulate " + (in / "scenario_static.json").string() + " --world " +
                              (in / "world.json").string() + " --out " + run_s.string());
    INFO(sim_static.err);
    REQUIRE(sim_static.code == 0);  // static scenarios need no models

    auto rep = run_cli("report " + run_a.string() + " " + run_s.string() + " --csv " +
                       (workdir() / "table.csv").string());
    INFO(rep.err);
    REQUIRE(rep.code == 0);
    CHECK(rep.out.find("cli_adaptive") != std::string::npos);
    CHECK(rep.out.find("cli_static") != std::string::npos);
    auto table = slurp(workdir() / "table.csv");
    CHECK(table.rfind("scenario,policy,", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);

    SECTION("repeated runs are byte-identical apart from the manifest") {
        const fs::path prof2 = workdir() / "prof2";
        REQUIRE(run_cli("profile " + (in / "plan.json").string() + " " +
                        (in / "world.json").string() + " --out " + prof2.string())
                    .code == 0);
        CHECK(slurp(prof / "profiles.csv") == slurp(prof2 / "profiles.csv"));
        CHECK(slurp(prof / "offline_log.csv") == slurp(prof2 / "offline_log.csv"));
        CHECK(slurp(prof / "branches.csv") == slurp(prof2 / "branches.csv"));

        const fs::path run_a2 = workdir() / "run_adaptive2";
        REQUIRE(run_cli("simulate " + (in / "scenario_adaptive.json").string() + " --world " +
                        (in / "world.json").string() + " --models " + models.string() +
                        " --out " + run_a2.string())
                    .code == 0);
        CHECK(slurp(run_a / "metrics.json") == slurp(run_a2 / "metrics.json"));
        CHECK(slurp(run_a / "frames.csv") == slurp(run_a2 / "frames.csv"));
        CHECK(slurp(run_a / "decisions.csv") == slurp(run_a2 / "decisions.csv"));
    }
}

TEST_CASE("cli error reporting") {
    const fs::path in = inputs();

    SECTION("malformed json carries line and column") {
        write_file(workdir() / "bad.json", "{\"a\": }");
        auto r = run_cli("profile " + (workdir() / "bad.json").string() + " " +
                         (in / "world.json").string() + " --out " + (workdir() / "x").string());
        CHECK(r.code == 2);
        CHECK(r.err.find(":1:") != std::string::npos);
    }

    SECTION("fitting on too little data fails with the fit code") {
        // Keep the header plus two records: enough to parse, far too few to fit.
        const fs::path prof = workdir() / "prof_tiny";
        REQUIRE(run_cli("profile " + (in / "plan.json").string() + " " +
                        (in / "world.json").string() + " --out " + prof.string())
                    .code == 0);
        std::ifstream full(prof / "profiles.csv");
        std::string line, tiny;
        for (int i = 0; i < 3 && std::getline(full, line); ++i) tiny += line + "\n";
        write_file(workdir() / "tiny.csv", tiny);
        auto r = run_cli("fit " + (workdir() / "tiny.csv").string() + " --out " +
                         (workdir() / "models_tiny").string());
        CHECK(r.code == 3);
        CHECK_FALSE(r.err.empty());
    }

    SECTION("adaptive simulation demands a model directory") {
        auto r = run_cli("simulate " + (in / "scenario_adaptive.json").string() + " --world " +
                         (in / "world.json").string() + " --out " + (workdir() / "y").string());
        CHECK(r.code == 4);
        CHECK(r.err.find("--models") != std::string::npos);
    }

    SECTION("reporting nothing is an error") {
        fs::create_directories(workdir() / "empty_run");
        auto r = run_cli("report " + (workdir() / "empty_run").string());
        CHECK(r.code == 5);
    }

    SECTION("missing input file") {
        auto r = run_cli("profile " + (workdir() / "nope.json").string() + " " +
                         (in / "world.json").string() + " --out " + (workdir() / "z").string());
        CHECK(r.code == 2);
    }
}

TEST_CASE("cli stress smoke") {
    auto r = run_cli("stress --cores 1 --mbps 300 --seconds 0.3 --tick 0.05 --buffer-mb 32 --json");
    INFO(r.err);
    REQUIRE(r.code == 0);
    auto j = json::parse(r.out);
    CHECK(j.at("target_mbps").get<double>() == 300.0);
    CHECK(j.at("tick_mbps").size() >= 3);
}
