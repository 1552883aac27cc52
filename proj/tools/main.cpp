#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trajstitch/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"trajstitch: offline trajectory augmentation and goal-conditioned planning on grid mazes"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "Generate a stitch- or explore-style offline dataset"},
        {"train-embedding", "Train the temporal-distance embedding"},
        {"train-stitcher", "Train the bridge diffusion model"},
        {"train-planner", "Train the waypoint diffusion model"},
        {"train-inverse", "Train the inverse dynamics action labeler"},
        {"build-index", "Extract segments and build the IVF latent index"},
        {"augment", "Stitch rollouts into an augmented dataset"},
        {"eval", "Closed-loop goal-conditioned evaluation"},
        {"make-tasks", "Sample a stratified (start, goal) task catalog"},
        {"plot", "Render dataset trajectories as SVG"},
    };

    struct SubArgs {
        std::string config_file;
        std::vector<std::string> sets;
        std::string workdir = ".";
    };
    std::vector<SubArgs> args(commands.size());

    for (size_t i = 0; i < commands.size(); ++i) {
        CLI::App* sub = app.add_subcommand(commands[i].first, commands[i].second);
        sub->add_option("--config", args[i].config_file, "key=value config file");
        sub->add_option("--set,-s", args[i].sets, "override: key=value (repeatable)");
        sub->add_option("--workdir", args[i].workdir, "workspace root holding manifest.json");
        // every schema key doubles as a direct flag
        for (const auto& [key, def] : trajstitch::cli::schema_for(commands[i].first))
            sub->add_option("--" + key)
                ->description("sets " + key + " (default: " + (def.empty() ? "<empty>" : def) + ")")
                ->expected(1)
                ->each([&args, i, key = key](const std::string& v) { args[i].sets.push_back(key + "=" + v); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : trajstitch::cli::kExitConfig;  // help/version exit 0, bad usage exits 2
    }

    for (size_t i = 0; i < commands.size(); ++i) {
        if (app.get_subcommand(commands[i].first)->parsed())
            return trajstitch::cli::run_command(commands[i].first, args[i].config_file, args[i].sets,
                                                args[i].workdir);
    }
    return trajstitch::cli::kExitConfig;
}
