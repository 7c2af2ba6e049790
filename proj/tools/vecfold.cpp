#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vecfold/error.hpp"
#include "vecfold/parallel.hpp"
#include "vecfold/pipeline.hpp"
#include "vecfold/synth.hpp"

namespace {

constexpr int exit_config_error = 2;
constexpr int exit_stage_failure = 3;

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    int threads = vecfold::default_threads();
    bool resume = true;
    bool deterministic = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--config", common.config_path, "JSON config file");
    cmd->add_option("--set", common.overrides, "Override a config value, e.g. kmeans.k=4")->allow_extra_args(false);
    cmd->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--resume,!--no-resume", common.resume, "Reuse completed stages (default on)");
    cmd->add_flag("--deterministic", common.deterministic, "Single-threaded, fixed timestamps");
    cmd->add_flag("-q,--quiet", common.quiet, "No progress output");
}

int run_to(vecfold::pipeline::Stage last, const Common& common) {
    using namespace vecfold;
    pipeline::PipelineConfig config;
    try {
        config = pipeline::load_config(common.config_path, common.overrides);
    } catch (const Error& e) {
        std::cerr << "vecfold: config error: " << e.what() << "\n";
        return exit_config_error;
    }
    pipeline::RunOptions options;
    options.threads = common.threads;
    options.resume = common.resume;
    options.deterministic = common.deterministic;
    options.log = common.quiet ? nullptr : &std::cerr;
    try {
        const auto summary = pipeline::run_pipeline(config, options, last);
        if (!common.quiet) {
            std::cerr << "[vecfold] artifacts in " << summary.run_dir.string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "vecfold: " << errc_name(e.code()) << ": " << e.what() << "\n";
        return e.code() == Errc::ConfigError ? exit_config_error : exit_stage_failure;
    } catch (const std::exception& e) {
        std::cerr << "vecfold: " << e.what() << "\n";
        return exit_stage_failure;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    using vecfold::pipeline::Stage;

    CLI::App app{"vecfold: embed, cluster and project multimodal marketplace posts"};
    app.require_subcommand(1);
    app.set_version_flag("--version", VECFOLD_VERSION);

    Common common;
    struct Entry {
        const char* name;
        const char* help;
        Stage last;
    };
    const Entry entries[] = {
        {"ingest", "Validate the corpus and write stats.json", Stage::ingest},
        {"template", "Render templated previews of the first posts", Stage::template_preview},
        {"embed", "Embed every post into embeddings.embm", Stage::embed},
        {"cluster", "Fit k-means and write model.json and labels.klbl", Stage::cluster},
        {"project", "Project a sample to 2D and write projection.csv", Stage::project},
        {"report", "Write the cluster report and scatter plot", Stage::report},
        {"run", "Run every stage", Stage::report},
    };
    Stage chosen = Stage::report;
    for (const auto& e : entries) {
        auto* cmd = app.add_subcommand(e.name, e.help);
        add_common(cmd, common);
        cmd->callback([&chosen, last = e.last] { chosen = last; });
    }

    std::string synth_out;
    std::size_t synth_posts = 800;
    std::uint64_t synth_seed = 7;
    auto* synth = app.add_subcommand("synth", "Write the labeled synthetic corpus");
    synth->add_option("--out", synth_out, "Output JSONL path")->required();
    synth->add_option("--posts", synth_posts, "Number of posts")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config_error;
    }

    if (synth->parsed()) {
        try {
            vecfold::synth::write_synthetic_corpus(synth_out, vecfold::synth::synthetic_corpus(synth_posts, synth_seed));
        } catch (const std::exception& e) {
            std::cerr << "vecfold: " << e.what() << "\n";
            return exit_stage_failure;
        }
        return 0;
    }
    return run_to(chosen, common);
}
