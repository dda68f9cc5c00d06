#include "perfrl/grad_est.hpp"
#include "perfrl/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    perfrl::configure_threads_from_env();

    CLI::App app{"Performative reinforcement learning toolkit"};
    app.set_version_flag("--version", perfrl::kVersion);
    app.require_subcommand(1);

    perfrl::CommandOptions opts;
    std::string out_dir;
    using Command = int (*)(const perfrl::CommandOptions&, std::ostream&, std::ostream&);
    Command chosen = nullptr;

    auto add = [&](const char* name, const char* help, Command cmd) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("config", opts.config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out-dir", out_dir, "Override output.dir");
        sub->callback([&chosen, cmd] { chosen = cmd; });
    };
    add("run", "Run the configured algorithm; write a CSV trace and a JSON summary", perfrl::cmd_run);
    add("constants", "Print theory constants (and the schedule when requested) as JSON", perfrl::cmd_constants);
    add("check", "Run theorem checkers; exit 3 on violations", perfrl::cmd_check);
    add("compare", "Run 0-FW and repeated retraining head to head", perfrl::cmd_compare);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : perfrl::kExitConfig;
    }
    if (!out_dir.empty())
        opts.out_dir = out_dir;
    return chosen(opts, std::cout, std::cerr);
}
