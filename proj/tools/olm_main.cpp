#include "olm/errors.hpp"
#include "olm/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>

namespace {

namespace pl = olm::pipeline;

void apply_overrides(pl::PipelineConfig& config, const std::string& out_dir,
                     const std::string& mode_flag, const CLI::Option* seed_opt,
                     std::uint64_t seed) {
    // Environment sits between the config file and the command line.
    if (const char* mode = std::getenv("OLM_FETCH_MODE")) config.fetch_mode = mode;
    if (const char* dir = std::getenv("OLM_FIXTURE_DIR")) config.fixture_dir = dir;
    if (!mode_flag.empty()) config.fetch_mode = mode_flag;
    if (config.fetch_mode != "replay" && config.fetch_mode != "live") {
        throw olm::ValidationError("fetch mode must be replay or live, got '" +
                                   config.fetch_mode + "'");
    }
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (seed_opt->count() > 0) pl::override_seeds(config, seed);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"estimates the total worker population of online work platforms "
                 "from a platform census"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;

    app.add_option("--config", config_path, "key = value configuration file")
        ->required();
    CLI::Option* seed_opt =
        app.add_option("--seed", seed, "override every configured seed with one value");
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    CLI::Option* replay_flag =
        app.add_flag("--replay", "serve acquisitions from recorded fixtures");
    CLI::Option* live_flag =
        app.add_flag("--live", "acquire over HTTP, recording fixtures");
    replay_flag->excludes(live_flag);
    live_flag->excludes(replay_flag);

    CLI::App* ingest =
        app.add_subcommand("ingest", "validate the census and summarize its fields");
    CLI::App* enrich = app.add_subcommand(
        "enrich", "fill missing popularity signals from fixtures or the network");
    CLI::App* train = app.add_subcommand(
        "train", "grid-search and fit the registered-count model");
    CLI::App* estimate = app.add_subcommand(
        "estimate", "predict unobserved platforms and run the adjustment cascade");
    CLI::App* figures =
        app.add_subcommand("figures", "write figure-ready tables for the estimate");
    CLI::App* report =
        app.add_subcommand("report", "render the human-readable estimate report");

    CLI11_PARSE(app, argc, argv);

    try {
        pl::PipelineConfig config = pl::load_config(config_path);
        std::string mode_flag;
        if (replay_flag->count() > 0) mode_flag = "replay";
        if (live_flag->count() > 0) mode_flag = "live";
        apply_overrides(config, out_dir, mode_flag, seed_opt, seed);

        if (ingest->parsed()) pl::cmd_ingest(config, std::cout);
        if (enrich->parsed()) pl::cmd_enrich(config, std::cout);
        if (train->parsed()) pl::cmd_train(config, std::cout);
        if (estimate->parsed()) pl::cmd_estimate(config, std::cout);
        if (figures->parsed()) pl::cmd_figures(config, std::cout);
        if (report->parsed()) pl::cmd_report(config, std::cout);
        return 0;
    } catch (const olm::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const olm::TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return 2;
    } catch (const olm::InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 3;
    }
}
