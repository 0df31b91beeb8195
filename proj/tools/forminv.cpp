#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "forminv/scenario.hpp"

int main(int argc, char** argv) {
    CLI::App app{"forminv: invariance experiments for non-autonomous parabolic problems"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    CLI::App* run = app.add_subcommand("run", "run a scenario config");
    run->add_option("config", config_path, "scenario config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--tol", tol, "override the assertion tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    namespace sc = forminv::scenario;
    nlohmann::json config;
    {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "forminv: cannot open config '" << config_path << "'\n";
            return 2;
        }
        try {
            in >> config;
        } catch (const nlohmann::json::parse_error& e) {
            std::cerr << "forminv: config is not valid JSON: " << e.what() << "\n";
            return 2;
        }
    }

    try {
        const sc::ScenarioOutcome outcome = sc::run_scenario(config, {out_dir, seed, tol});
        for (const auto& f : outcome.files) std::cout << "wrote " << f.string() << "\n";
        std::cout << (outcome.exit_code == 0 ? "PASS" : "FAIL") << " " << outcome.report.value("kind", "") << "\n";
        if (outcome.report.contains("error")) std::cerr << "forminv: " << outcome.report["error"].get<std::string>() << "\n";
        return outcome.exit_code;
    } catch (const sc::ScenarioError& e) {
        std::cerr << "forminv: invalid scenario: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "forminv: " << e.what() << "\n";
        return 1;
    }
}
