// Command line front end: profiling campaigns, model fitting, trace-driven
// simulation, run comparison, and the synthetic contention generator.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "branchsched/branchsched.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes, also documented in the README:
//   0 success
//   1 unexpected failure
//   2 malformed or invalid input (parse errors carry line/column)
//   3 model fitting failed
//   4 required models or reference data missing
//   5 nothing to report
enum ExitCode : int {
    kOk = 0,
    kUnexpected = 1,
    kBadInput = 2,
    kFitFailed = 3,
    kMissingModels = 4,
    kNothingToReport = 5,
};

struct CliError {
    int code;
    std::string message;
};

// Parses a JSON file, translating byte offsets in parse errors to
// line/column for the message.
json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CliError{kBadInput, "cannot open '" + path + "'"};
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw CliError{kBadInput, path + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                      ": " + e.what()};
    }
}

std::string utc_now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Every command that produces files starts by creating its output directory
// and recording what ran. The manifest is the only output that carries a
// timestamp; everything else is a pure function of the inputs, so repeated
// runs are byte-identical.
void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::vector<std::string>& inputs, std::uint64_t seed) {
    fs::create_directories(out_dir);
    json j{{"command", command},
           {"version", kVersion},
           {"created_utc", utc_now_iso8601()},
           {"seed", seed},
           {"inputs", inputs}};
    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw CliError{kBadInput, "cannot write to '" + out_dir.string() + "'"};
    out << j.dump(2) << '\n';
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw CliError{kBadInput, "cannot write '" + path.string() + "'"};
    out << content;
}

branchsched::WorldModel load_world(const std::string& path) {
    auto w = parse_json_file(path).get<branchsched::WorldModel>();
    w.validate();
    return w;
}

int cmd_profile(const std::string& plan_path, const std::string& world_path,
                const std::string& out_dir) {
    auto plan = parse_json_file(plan_path).get<branchsched::SamplingPlan>();
    auto world = load_world(world_path);

    write_manifest(out_dir, "profile", {plan_path, world_path}, plan.seed);

    auto branches = branchsched::sample_branches(branchsched::enumerate_branches(plan.domains),
                                                 plan.branch_fraction, plan.seed);
    auto records = branchsched::collect_profiles(plan, world);
    auto log = branchsched::build_offline_log(records);

    {
        std::ofstream out(fs::path(out_dir) / "branches.csv");
        branchsched::write_branches_csv(out, branches);
    }
    {
        std::ofstream out(fs::path(out_dir) / "profiles.csv");
        branchsched::write_profiles_csv(out, records);
    }
    {
        std::ofstream out(fs::path(out_dir) / "offline_log.csv");
        log.write_csv(out);
    }
    std::cout << "profiled " << branches.size() << " branches, " << records.size()
              << " records -> " << out_dir << "\n";
    return kOk;
}

int cmd_fit(const std::string& profiles_path, const std::string& out_dir, double ridge,
            double train_fraction, std::uint64_t seed, int tree_depth, int tree_min_leaf) {
    auto records = branchsched::read_profiles_csv(profiles_path);

    write_manifest(out_dir, "fit", {profiles_path}, seed);

    branchsched::FitOptions opts;
    opts.ridge_lambda = ridge;
    opts.train_fraction = train_fraction;
    opts.split_seed = seed;
    opts.tree.max_depth = tree_depth;
    opts.tree.min_samples_leaf = tree_min_leaf;

    branchsched::ModelBundle bundle;
    branchsched::FitReport report;
    try {
        auto fitted = branchsched::fit_models(records, opts);
        bundle = std::move(fitted.first);
        report = fitted.second;
    } catch (const branchsched::SingularFitError& e) {
        throw CliError{kFitFailed, e.what()};
    } catch (const branchsched::ParameterError& e) {
        throw CliError{kFitFailed, e.what()};
    }

    branchsched::save_model_bundle(bundle, out_dir);
    {
        json j = report;
        write_text_file(fs::path(out_dir) / "fit_report.json", j.dump(2) + "\n");
    }
    {
        // A models directory doubles as the simulate command's reference
        // data, so the sensor log rides along.
        auto log = branchsched::build_offline_log(records);
        std::ofstream out(fs::path(out_dir) / "offline_log.csv");
        log.write_csv(out);
    }
    std::printf("fit %zu records: detector rmse %.4f ms, tracker rmse %.4f ms, tree mse %.4f, linear mse %.4f\n",
                report.n_records, report.detector_rmse, report.tracker_rmse, report.tree_mse,
                report.linear_mse);
    std::cout << "models -> " << out_dir << "\n";
    return kOk;
}

int cmd_simulate(const std::string& scenario_path, const std::string& world_path,
                 const std::string& models_dir, const std::string& log_path,
                 const std::string& out_dir) {
    auto scenario = branchsched::load_scenario(scenario_path);
    auto world = load_world(world_path);

    branchsched::ModelBundle bundle;
    branchsched::OfflineLatencyLog log;
    const branchsched::ModelBundle* bundle_ptr = nullptr;
    const branchsched::OfflineLatencyLog* log_ptr = nullptr;

    if (scenario.policy == branchsched::Policy::Adaptive) {
        if (models_dir.empty())
            throw CliError{kMissingModels, "adaptive scenario needs --models"};
        try {
            bundle = branchsched::load_model_bundle(models_dir);
            std::string lp = log_path.empty()
                                 ? (fs::path(models_dir) / "offline_log.csv").string()
                                 : log_path;
            log = branchsched::OfflineLatencyLog::read_csv(lp);
        } catch (const branchsched::ModelMisuseError& e) {
            throw CliError{kMissingModels, e.what()};
        } catch (const branchsched::ParameterError& e) {
            throw CliError{kMissingModels, e.what()};
        }
        bundle_ptr = &bundle;
        log_ptr = &log;
    }

    write_manifest(out_dir, "simulate", {scenario_path, world_path, models_dir}, scenario.seed);

    auto result = branchsched::run_scenario(scenario, world, bundle_ptr, log_ptr);

    {
        json j = result.metrics;
        write_text_file(fs::path(out_dir) / "metrics.json", j.dump(2) + "\n");
    }
    {
        std::ofstream out(fs::path(out_dir) / "frames.csv");
        branchsched::write_frames_csv(out, result.metrics.policy, result.frames);
    }
    {
        std::ofstream out(fs::path(out_dir) / "decisions.csv");
        branchsched::write_decisions_csv(out, result.decisions, result.frames);
    }
    std::printf("%s/%s: %d frames, mean %.2f ms, p95 %.2f ms, violations %.2f%%, accuracy %.2f, %d switches\n",
                result.metrics.scenario.c_str(), result.metrics.policy.c_str(),
                result.metrics.n_frames, result.metrics.mean_latency_ms,
                result.metrics.p95_latency_ms, 100.0 * result.metrics.violation_rate,
                result.metrics.mean_accuracy, result.metrics.switch_count);
    std::cout << "run -> " << out_dir << "\n";
    return kOk;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& csv_path) {
    std::vector<branchsched::MetricsReport> rows;
    for (const auto& dir : run_dirs) {
        fs::path metrics = fs::path(dir) / "metrics.json";
        if (!fs::exists(metrics)) {
            std::cerr << "skipping '" << dir << "': no metrics.json\n";
            continue;
        }
        try {
            rows.push_back(parse_json_file(metrics.string()).get<branchsched::MetricsReport>());
        } catch (const std::exception& e) {
            std::cerr << "skipping '" << dir << "': " << e.what() << "\n";
        }
    }
    if (rows.empty()) throw CliError{kNothingToReport, "no valid runs among the given directories"};

    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.scenario, a.policy) < std::tie(b.scenario, b.policy);
    });

    std::printf("%-24s %-9s %7s %9s %9s %7s %9s %9s\n", "scenario", "policy", "frames",
                "mean_ms", "p95_ms", "viol%", "accuracy", "switches");
    for (const auto& r : rows) {
        std::printf("%-24s %-9s %7d %9.2f %9.2f %6.2f%% %9.2f %9d\n", r.scenario.c_str(),
                    r.policy.c_str(), r.n_frames, r.mean_latency_ms, r.p95_latency_ms,
                    100.0 * r.violation_rate, r.mean_accuracy, r.switch_count);
    }

    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw CliError{kBadInput, "cannot write '" + csv_path + "'"};
        branchsched::detail::write_csv_row(
            out, {"scenario", "policy", "n_frames", "mean_latency_ms", "p95_latency_ms",
                  "violation_rate", "mean_accuracy", "switch_count", "decision_count"});
        for (const auto& r : rows) {
            branchsched::detail::write_csv_row(
                out, {r.scenario, r.policy, std::to_string(r.n_frames),
                      branchsched::detail::fmt_double(r.mean_latency_ms),
                      branchsched::detail::fmt_double(r.p95_latency_ms),
                      branchsched::detail::fmt_double(r.violation_rate),
                      branchsched::detail::fmt_double(r.mean_accuracy),
                      std::to_string(r.switch_count), std::to_string(r.decision_count)});
        }
    }
    return kOk;
}

int cmd_stress(int cores, double mbps, double seconds, double tick, double buffer_mb,
               bool as_json) {
    branchsched::StressorOptions opts;
    opts.tick_seconds = tick;
    opts.buffer_bytes = static_cast<std::size_t>(buffer_mb * 1024.0 * 1024.0);
    auto report = branchsched::run_stressor(cores, mbps, seconds, opts);
    if (as_json) {
        json j = report;
        std::cout << j.dump(2) << "\n";
    } else {
        std::printf("target %.1f MB/s on %d core(s) for %.1f s\n", report.target_mbps,
                    report.target_cores, report.duration_seconds);
        std::printf("achieved %.1f MB/s (stddev %.1f), occupancy %.0f%%%s\n",
                    report.achieved_mean_mbps, report.achieved_stddev_mbps,
                    100.0 * report.mean_core_occupancy, report.saturated ? ", SATURATED" : "");
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive approximation-branch scheduling toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // profile
    std::string plan_path, world_path, out_dir;
    auto* profile = app.add_subcommand("profile", "Run a profiling campaign against a world model");
    profile->add_option("plan", plan_path, "Sampling plan JSON")->required();
    profile->add_option("world", world_path, "World model JSON")->required();
    profile->add_option("--out", out_dir, "Output directory")->required();

    // fit
    std::string profiles_path, fit_out;
    double ridge = 1e-6, train_fraction = 0.8;
    std::uint64_t fit_seed = 17;
    int tree_depth = 8, tree_min_leaf = 4;
    auto* fit = app.add_subcommand("fit", "Fit latency and accuracy models from profile records");
    fit->add_option("profiles", profiles_path, "profiles.csv from a campaign")->required();
    fit->add_option("--out", fit_out, "Output directory")->required();
    fit->add_option("--ridge", ridge, "Ridge regularization strength");
    fit->add_option("--train-fraction", train_fraction, "Train split fraction");
    fit->add_option("--seed", fit_seed, "Split shuffle seed");
    fit->add_option("--tree-depth", tree_depth, "Accuracy tree maximum depth");
    fit->add_option("--tree-min-leaf", tree_min_leaf, "Accuracy tree minimum leaf size");

    // simulate
    std::string scenario_path, sim_world, models_dir, log_path, sim_out;
    auto* simulate = app.add_subcommand("simulate", "Run a scenario against a world model");
    simulate->add_option("scenario", scenario_path, "Scenario JSON")->required();
    simulate->add_option("--world", sim_world, "World model JSON")->required();
    simulate->add_option("--models", models_dir, "Model bundle directory (adaptive policy)");
    simulate->add_option("--offline-log", log_path, "Sensor reference log CSV");
    simulate->add_option("--out", sim_out, "Output directory")->required();

    // report
    std::vector<std::string> run_dirs;
    std::string report_csv;
    auto* report = app.add_subcommand("report", "Tabulate metrics from simulation runs");
    report->add_option("runs", run_dirs, "Run directories containing metrics.json")->required();
    report->add_option("--csv", report_csv, "Also write the table as CSV");

    // stress
    int stress_cores = 1;
    double stress_mbps = 1000.0, stress_seconds = 5.0, stress_tick = 0.05, stress_buffer_mb = 152.0;
    bool stress_json = false;
    auto* stress = app.add_subcommand("stress", "Generate CPU/memory-bandwidth contention");
    stress->add_option("--cores", stress_cores, "Worker thread count")->required();
    stress->add_option("--mbps", stress_mbps, "Target write bandwidth, MB/s")->required();
    stress->add_option("--seconds", stress_seconds, "Duration")->required();
    stress->add_option("--tick", stress_tick, "Controller tick, seconds");
    stress->add_option("--buffer-mb", stress_buffer_mb, "Per-worker buffer size, MB");
    stress->add_flag("--json", stress_json, "Emit the report as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (profile->parsed()) return cmd_profile(plan_path, world_path, out_dir);
        if (fit->parsed())
            return cmd_fit(profiles_path, fit_out, ridge, train_fraction, fit_seed, tree_depth,
                           tree_min_leaf);
        if (simulate->parsed())
            return cmd_simulate(scenario_path, sim_world, models_dir, log_path, sim_out);
        if (report->parsed()) return cmd_report(run_dirs, report_csv);
        if (stress->parsed())
            return cmd_stress(stress_cores, stress_mbps, stress_seconds, stress_tick,
                              stress_buffer_mb, stress_json);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const branchsched::SingularFitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFitFailed;
    } catch (const branchsched::ModelMisuseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingModels;
    } catch (const branchsched::SensorUnavailableError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingModels;
    } catch (const branchsched::ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const branchsched::DomainViolationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return kUnexpected;
    }
    return kUnexpected;
}
