// guardian: command-line front end for the simulated risk-assessment and
// warning-message trial.
//
// Exit codes: 0 success, 1 failure (including a failing selftest),
// 2 missing or mismatched input, 3 invalid configuration, 64 usage error.

#include "guardian/commands.hpp"
#include "guardian/selftest.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;
constexpr int kExitUsage = 64;

struct Options {
    std::string config;
    std::optional<std::string> seed, out, threshold, top_k, cooldown_days, population, days, windows;
    std::vector<std::string> sets;
};

guardian::RunConfig resolve(const Options& o) {
    using guardian::set_config_value;
    guardian::RunConfig cfg = o.config.empty() ? guardian::RunConfig{} : guardian::load_config(o.config);
    for (const auto& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw guardian::ConfigError(kv, "expected section.key=value");
        set_config_value(cfg, guardian::detail::trim(std::string_view(kv).substr(0, eq)),
                         guardian::detail::trim(std::string_view(kv).substr(eq + 1)));
    }
    if (o.seed) {
        set_config_value(cfg, "sim.seed", *o.seed);
        set_config_value(cfg, "trial.seed", *o.seed);
    }
    if (o.out) set_config_value(cfg, "run.out", *o.out);
    if (o.threshold) set_config_value(cfg, "pipeline.threshold", *o.threshold);
    if (o.top_k) set_config_value(cfg, "pipeline.top_k", *o.top_k);
    if (o.cooldown_days) set_config_value(cfg, "pipeline.cooldown_days", *o.cooldown_days);
    if (o.population) set_config_value(cfg, "sim.population", *o.population);
    if (o.days) set_config_value(cfg, "trial.days", *o.days);
    if (o.windows) set_config_value(cfg, "analysis.windows", *o.windows);
    guardian::validate(cfg);
    return cfg;
}

int selftest() {
    bool ok = true;
    for (const auto& r : guardian::selftest::run_all()) {
        std::printf("%s  %-22s %6.2fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds, r.detail.c_str());
        ok = ok && r.passed;
    }
    return ok ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulated risk-assessment and warning-message trial"};
    app.name("guardian");
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    app.add_option("--config", o.config, "Configuration file (sections of key = value)");
    app.add_option("--seed", o.seed, "Seed for both the simulation and the trial randomization");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--threshold", o.threshold, "Relationship probability threshold");
    app.add_option("--top-k", o.top_k, "Players listed per risk kind, arm and day");
    app.add_option("--cooldown-days", o.cooldown_days, "Days a listed player stays ineligible");
    app.add_option("--population", o.population, "Number of simulated players");
    app.add_option("--days", o.days, "Trial duration in days");
    app.add_option("--windows", o.windows, "Analysis windows, e.g. 1-14,15-28");
    app.add_option("--set", o.sets, "Any config value as section.key=value (repeatable)");

    app.add_subcommand("simulate", "Simulate the platform up to the first trial day");
    app.add_subcommand("train", "Train the risk model on the simulated pre-trial log");
    app.add_subcommand("trial", "Run the closed-loop randomized trial and follow-up");
    app.add_subcommand("analyze", "Compute windowed effects, night usage and covariate balance");
    app.add_subcommand("report", "Format the analysis tables as a plain-text report");
    app.add_subcommand("selftest", "Check the statistical and learning code against brute-force oracles");
    app.add_subcommand("config", "Print the resolved configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "guardian: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        if (command == "selftest") return selftest();
        const auto cfg = resolve(o);
        if (command == "config") {
            std::cout << guardian::serialize(cfg);
            return 0;
        }
        guardian::commands::run(command, cfg, std::cout);
        return 0;
    } catch (const guardian::InputError& e) {
        std::cerr << "guardian " << command << ": " << e.what() << '\n';
        return kExitInput;
    } catch (const guardian::ConfigError& e) {
        std::cerr << "guardian " << command << ": invalid config value " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "guardian " << command << ": " << e.what() << '\n';
        return kExitFailure;
    }
}
