#include "ilcast/pipeline.hpp"
#include "ilcast/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace ilcast;

struct StageArgs {
    std::string config;
    std::string out;
    std::string stage;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    bool quiet = false;
};

void add_common(CLI::App* cmd, StageArgs& args, bool with_stage) {
    cmd->add_option("--config", args.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", args.out, "Artifact directory")->required();
    if (with_stage) cmd->add_option("--stage", args.stage, "Run only this stage");
    cmd->add_option("--seed", args.seed, "Override the config seed");
    cmd->add_option("--jobs", args.jobs, "Worker threads for model fitting")->check(CLI::PositiveNumber);
    cmd->add_flag("--quiet", args.quiet, "Suppress progress messages");
}

pipeline::RunOptions run_options(const StageArgs& args) {
    pipeline::RunOptions opts;
    opts.seed = args.seed;
    opts.jobs = args.jobs;
    if (!args.quiet)
        opts.log = [](const std::string& stage, const std::string& msg) {
            std::cerr << "[" << stage << "] " << msg << '\n';
        };
    return opts;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Irregular leadership change forecasting pipeline"};
    app.set_version_flag("--version", pipeline::kVersion);
    app.require_subcommand(1);

    StageArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Run every stage (or one with --stage)");
    add_common(run_cmd, run_args, true);

    std::vector<std::pair<CLI::App*, pipeline::Stage>> stage_cmds;
    StageArgs stage_args;
    for (auto stage : pipeline::all_stages()) {
        auto* cmd = app.add_subcommand(pipeline::stage_name(stage), "Run stage " + pipeline::stage_name(stage));
        add_common(cmd, stage_args, false);
        stage_cmds.emplace_back(cmd, stage);
    }

    std::string sim_out;
    std::uint64_t sim_seed = synthetic::DatasetOptions{}.seed;
    auto* sim_cmd = app.add_subcommand("simulate", "Write the synthetic demonstration dataset and config");
    sim_cmd->add_option("--out", sim_out, "Output directory")->required();
    sim_cmd->add_option("--seed", sim_seed, "Generator seed");

    std::string verify_out;
    auto* verify_cmd = app.add_subcommand("verify", "Check artifact hashes against manifest.json");
    verify_cmd->add_option("--out", verify_out, "Artifact directory")->required();

    CLI11_PARSE(app, argc, argv);

    std::string current_stage;
    try {
        if (sim_cmd->parsed()) {
            synthetic::DatasetOptions o;
            o.seed = sim_seed;
            const auto s = synthetic::write_dataset(sim_out, o);
            std::cout << "wrote " << s.rows << " country-months with " << s.failures << " failures (seed "
                      << s.seed_used << ") to " << sim_out << '\n';
            return 0;
        }
        if (verify_cmd->parsed()) {
            const auto problems = pipeline::verify_manifest(verify_out);
            for (const auto& p : problems) std::cerr << p << '\n';
            if (problems.empty()) std::cout << "manifest OK\n";
            return problems.empty() ? 0 : 1;
        }
        if (run_cmd->parsed()) {
            const auto config = pipeline::load_config(run_args.config);
            if (run_args.stage.empty())
                pipeline::run(config, run_args.out, run_options(run_args));
            else
                pipeline::run_stage(config, pipeline::parse_stage(run_args.stage), run_args.out,
                                    run_options(run_args));
            return 0;
        }
        for (const auto& [cmd, stage] : stage_cmds) {
            if (!cmd->parsed()) continue;
            const auto config = pipeline::load_config(stage_args.config);
            pipeline::run_stage(config, stage, stage_args.out, run_options(stage_args));
            return 0;
        }
    } catch (const pipeline::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const pipeline::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
