#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "airshape/autoenc/net.hpp"
#include "airshape/pipeline.hpp"

using airshape::pipeline::PipelineConfig;

namespace {

int run_command(const std::string& name, const PipelineConfig& config) {
    using namespace airshape::pipeline;
    CommandResult result;
    if (name == "synth") result = cmd_synth(config);
    else if (name == "preprocess") result = cmd_preprocess(config);
    else if (name == "train") result = cmd_train(config);
    else if (name == "finetune") result = cmd_finetune(config);
    else if (name == "encode") result = cmd_encode(config);
    else if (name == "cluster") result = cmd_cluster(config);
    else if (name == "evaluate") result = cmd_evaluate(config);
    else if (name == "reproduce") result = cmd_reproduce(config);

    for (const auto& err : result.errors) std::fprintf(stderr, "%s: %s\n", name.c_str(), err.c_str());
    if (result.exit_code == 0)
        std::printf("%s: done (config %s)\n", name.c_str(), config_hash(config).c_str());
    else
        std::fprintf(stderr, "%s: finished with code %d (%zu error(s))\n", name.c_str(), result.exit_code,
                     result.errors.size());
    return result.exit_code;
}

void print_model_summary(const PipelineConfig& config) {
    airshape::ae::ArchitectureDescriptor arch = airshape::pipeline::arch_from_config(config);
    airshape::ae::UNetNoskip net(arch, 0);
    std::printf("input: %dx%dx%d\n", arch.input_channels, arch.input_size, arch.input_size);
    size_t total = 0;
    for (const auto& row : net.summary()) {
        std::printf("  %-24s %8zu params\n", row.describe.c_str(), row.param_count);
        total += row.param_count;
    }
    std::printf("bottleneck: %dx%dx%d (flattened %zu)\n", arch.bottleneck_channels, arch.bottleneck_hw(),
                arch.bottleneck_hw(), arch.bottleneck_dim());
    std::printf("total trainable parameters: %zu\n", total);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"airway tree shape phenotyping pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    int jobs = -1;
    std::string out_dir;
    int n_per_class = -1;
    int mip_size = 0;

    app.add_option("--config", config_path, "pipeline configuration JSON");
    app.add_option("--seed", seed, "override the root seed")->each([&](const std::string&) { seed_set = true; });
    app.add_option("--jobs", jobs, "worker threads (0 = all cores)");
    app.add_option("--out", out_dir, "override the work directory");

    const char* names[] = {"synth", "preprocess", "train", "finetune", "encode", "cluster",
                           "evaluate", "reproduce"};
    for (const char* name : names) app.add_subcommand(name)->fallthrough();
    app.get_subcommand("synth")->add_option("--n-per-class", n_per_class, "subjects per shape class");
    app.get_subcommand("preprocess")->add_option("--mip-size", mip_size, "MIP resolution (power of two)");
    auto* summary_cmd = app.add_subcommand("summary", "print the model architecture and parameter count");
    summary_cmd->fallthrough();
    summary_cmd->add_option("--mip-size", mip_size, "input resolution (power of two)");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig config;
        if (!config_path.empty()) config = airshape::pipeline::load_config(config_path);
        if (seed_set) config.seed = seed;
        if (jobs >= 0) config.jobs = jobs;
        if (!out_dir.empty()) config.work_dir = out_dir;
        if (n_per_class >= 0) config.n_per_class = n_per_class;
        if (mip_size > 0) config.mip_size = mip_size;

        for (auto* sub : app.get_subcommands()) {
            if (sub->get_name() == "summary") {
                print_model_summary(config);
                return 0;
            }
            return run_command(sub->get_name(), config);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
