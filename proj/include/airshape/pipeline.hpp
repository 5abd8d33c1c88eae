#ifndef AIRSHAPE_PIPELINE_HPP
#define AIRSHAPE_PIPELINE_HPP

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "airshape/autoenc/train.hpp"
#include "airshape/cluster.hpp"

namespace airshape::pipeline {

// One JSON-serializable configuration drives every stage; all randomness is
// derived from `seed` through named sub-seeds, so a run is reproducible from
// the config alone.
struct PipelineConfig {
    uint64_t seed = 2024;
    std::string work_dir = "work";
    int jobs = 1;

    // synth
    int n_per_class = 50;
    std::array<int, 3> volume_dims = {128, 128, 128};
    int max_generation = 8;

    // preprocess
    int mip_size = 128;
    int dilation_threshold_generation = 5;
    std::vector<std::string> variants = {"d_t", "d_nt", "nd_t", "nd_nt"};

    // model + training
    std::vector<int> encoder_channels = {8, 16, 32, 64};
    int bottleneck_channels = 128;
    ae::TrainConfig train;
    std::string train_variant = "d_t";
    std::string finetune_variant = "d_nt";

    // encoding
    std::string encode_variant = "d_t";
    std::string encode_model = "pretrain"; // or "finetune"

    // clustering
    size_t pca_dim = 64;
    int k_min = 5, k_max = 2500, k_step = 5, plateau_span = 10;
    int fixed_k = 0; // 0 = plateau selection
    std::string metric = "l2";
    std::string weight_mode = "unit";

    // evaluation
    std::vector<std::array<std::string, 2>> eval_pairs = {
        {"d_t", "d_t"}, {"d_t", "nd_t"}, {"nd_t", "d_t"}, {"nd_t", "nd_t"}};
    bool identity_model = false;

    // reproducibility
    int subset_runs = 5;
    double subset_fraction = 0.8;
};

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);
std::string config_hash(const PipelineConfig& config);

// variant helpers ("d_t", "d_nt", "nd_t", "nd_nt")
bool variant_dilated(const std::string& v);
bool variant_trachea(const std::string& v);

struct CommandResult {
    int exit_code = 0; // 0 ok, 3 = some subjects failed, 1 = nothing usable
    std::vector<std::string> errors;
};

CommandResult cmd_synth(const PipelineConfig& config);
CommandResult cmd_preprocess(const PipelineConfig& config);
CommandResult cmd_train(const PipelineConfig& config);
CommandResult cmd_finetune(const PipelineConfig& config);
CommandResult cmd_encode(const PipelineConfig& config);
CommandResult cmd_cluster(const PipelineConfig& config);
CommandResult cmd_evaluate(const PipelineConfig& config);
CommandResult cmd_reproduce(const PipelineConfig& config);

// fixed artifact layout under work_dir
std::filesystem::path cohort_dir(const PipelineConfig& c);
std::filesystem::path manifest_path(const PipelineConfig& c);
std::filesystem::path mips_dir(const PipelineConfig& c, const std::string& variant);
std::filesystem::path train_dir(const PipelineConfig& c, const std::string& variant);
std::filesystem::path finetune_dir(const PipelineConfig& c, const std::string& variant);
std::filesystem::path features_dir(const PipelineConfig& c);
std::filesystem::path cluster_dir(const PipelineConfig& c);
std::filesystem::path reproduce_dir(const PipelineConfig& c);
std::filesystem::path eval_dir(const PipelineConfig& c);

struct ManifestRow {
    std::string subject_id;
    int class_label = 0;
    uint64_t seed = 0;
};
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// cluster assignments CSV (subject_id,label), comment lines skipped
std::vector<std::pair<std::string, int>> read_assignments(const std::filesystem::path& path);

ae::ArchitectureDescriptor arch_from_config(const PipelineConfig& config);

} // namespace airshape::pipeline

#endif
