#include "airshape/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "airshape/errors.hpp"
#include "airshape/evalmetrics.hpp"
#include "airshape/rng.hpp"
#include "airshape/skel2d.hpp"
#include "airshape/synthtree.hpp"

namespace airshape::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ----------------------------------------------------------------- config

namespace {

json config_to_json(const PipelineConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["work_dir"] = c.work_dir;
    j["jobs"] = c.jobs;
    j["synth"] = {{"n_per_class", c.n_per_class},
                  {"volume_dims", c.volume_dims},
                  {"max_generation", c.max_generation}};
    j["preprocess"] = {{"mip_size", c.mip_size},
                       {"dilation_threshold_generation", c.dilation_threshold_generation},
                       {"variants", c.variants}};
    j["model"] = {{"encoder_channels", c.encoder_channels},
                  {"bottleneck_channels", c.bottleneck_channels}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"lr0", c.train.lr0},
                  {"first_period", c.train.first_period},
                  {"period_mult", c.train.period_mult},
                  {"early_stop_patience", c.train.early_stop_patience},
                  {"max_epochs", c.train.max_epochs},
                  {"folds", c.train.folds},
                  {"fine_tune_lr0", c.train.fine_tune_lr0},
                  {"fine_tune_epochs", c.train.fine_tune_epochs},
                  {"variant", c.train_variant},
                  {"finetune_variant", c.finetune_variant}};
    j["encode"] = {{"variant", c.encode_variant}, {"model", c.encode_model}};
    j["cluster"] = {{"pca_dim", c.pca_dim},
                    {"k_min", c.k_min},
                    {"k_max", c.k_max},
                    {"k_step", c.k_step},
                    {"plateau_span", c.plateau_span},
                    {"fixed_k", c.fixed_k},
                    {"metric", c.metric},
                    {"weight_mode", c.weight_mode}};
    j["evaluate"] = {{"pairs", c.eval_pairs}, {"identity_model", c.identity_model}};
    j["reproduce"] = {{"subset_runs", c.subset_runs}, {"subset_fraction", c.subset_fraction}};
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

PipelineConfig load_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifact("config file not found: " + path.string());
    json j;
    f >> j;

    PipelineConfig c;
    maybe(j, "seed", c.seed);
    maybe(j, "work_dir", c.work_dir);
    maybe(j, "jobs", c.jobs);
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        maybe(s, "n_per_class", c.n_per_class);
        maybe(s, "volume_dims", c.volume_dims);
        maybe(s, "max_generation", c.max_generation);
    }
    if (j.contains("preprocess")) {
        const auto& s = j["preprocess"];
        maybe(s, "mip_size", c.mip_size);
        maybe(s, "dilation_threshold_generation", c.dilation_threshold_generation);
        maybe(s, "variants", c.variants);
    }
    if (j.contains("model")) {
        const auto& s = j["model"];
        maybe(s, "encoder_channels", c.encoder_channels);
        maybe(s, "bottleneck_channels", c.bottleneck_channels);
    }
    if (j.contains("train")) {
        const auto& s = j["train"];
        maybe(s, "batch_size", c.train.batch_size);
        maybe(s, "lr0", c.train.lr0);
        maybe(s, "first_period", c.train.first_period);
        maybe(s, "period_mult", c.train.period_mult);
        maybe(s, "early_stop_patience", c.train.early_stop_patience);
        maybe(s, "max_epochs", c.train.max_epochs);
        maybe(s, "folds", c.train.folds);
        maybe(s, "fine_tune_lr0", c.train.fine_tune_lr0);
        maybe(s, "fine_tune_epochs", c.train.fine_tune_epochs);
        maybe(s, "variant", c.train_variant);
        maybe(s, "finetune_variant", c.finetune_variant);
    }
    if (j.contains("encode")) {
        const auto& s = j["encode"];
        maybe(s, "variant", c.encode_variant);
        maybe(s, "model", c.encode_model);
    }
    if (j.contains("cluster")) {
        const auto& s = j["cluster"];
        maybe(s, "pca_dim", c.pca_dim);
        maybe(s, "k_min", c.k_min);
        maybe(s, "k_max", c.k_max);
        maybe(s, "k_step", c.k_step);
        maybe(s, "plateau_span", c.plateau_span);
        maybe(s, "fixed_k", c.fixed_k);
        maybe(s, "metric", c.metric);
        maybe(s, "weight_mode", c.weight_mode);
    }
    if (j.contains("evaluate")) {
        const auto& s = j["evaluate"];
        maybe(s, "pairs", c.eval_pairs);
        maybe(s, "identity_model", c.identity_model);
    }
    if (j.contains("reproduce")) {
        const auto& s = j["reproduce"];
        maybe(s, "subset_runs", c.subset_runs);
        maybe(s, "subset_fraction", c.subset_fraction);
    }
    return c;
}

void save_config(const PipelineConfig& config, const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write config: " + path.string());
    f << config_to_json(config).dump(2) << "\n";
}

std::string config_hash(const PipelineConfig& config) {
    std::string dump = config_to_json(config).dump();
    uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : dump) {
        h ^= uint64_t(uint8_t(ch));
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

bool variant_dilated(const std::string& v) { return v == "d_t" || v == "d_nt"; }
bool variant_trachea(const std::string& v) { return v == "d_t" || v == "nd_t"; }

// ------------------------------------------------------------------ paths

fs::path cohort_dir(const PipelineConfig& c) { return fs::path(c.work_dir) / "cohort"; }
fs::path manifest_path(const PipelineConfig& c) { return cohort_dir(c) / "manifest.csv"; }
fs::path mips_dir(const PipelineConfig& c, const std::string& v) { return fs::path(c.work_dir) / "mips" / v; }
fs::path train_dir(const PipelineConfig& c, const std::string& v) { return fs::path(c.work_dir) / "train" / v; }
fs::path finetune_dir(const PipelineConfig& c, const std::string& v) {
    return fs::path(c.work_dir) / "finetune" / v;
}
fs::path features_dir(const PipelineConfig& c) {
    return fs::path(c.work_dir) / "features" / (c.encode_variant + "-" + c.encode_model);
}
fs::path cluster_dir(const PipelineConfig& c) { return fs::path(c.work_dir) / "cluster"; }
fs::path reproduce_dir(const PipelineConfig& c) { return fs::path(c.work_dir) / "reproduce"; }
fs::path eval_dir(const PipelineConfig& c) { return fs::path(c.work_dir) / "eval"; }

ae::ArchitectureDescriptor arch_from_config(const PipelineConfig& config) {
    ae::ArchitectureDescriptor arch;
    arch.input_size = config.mip_size;
    arch.encoder_channels = config.encoder_channels;
    arch.bottleneck_channels = config.bottleneck_channels;
    return arch;
}

// --------------------------------------------------------------- manifest

std::vector<ManifestRow> read_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifact("cohort manifest not found (run `airshape synth` first): " + path.string());
    std::vector<ManifestRow> rows;
    std::string line;
    bool header_done = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_done) {
            header_done = true;
            continue;
        }
        size_t p1 = line.find(',');
        size_t p2 = line.find(',', p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos) throw IoError("bad manifest row: " + line);
        ManifestRow row;
        row.subject_id = line.substr(0, p1);
        row.class_label = std::stoi(line.substr(p1 + 1, p2 - p1 - 1));
        row.seed = std::stoull(line.substr(p2 + 1));
        rows.push_back(row);
    }
    return rows;
}

std::vector<std::pair<std::string, int>> read_assignments(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifact("assignments not found (run `airshape cluster` first): " + path.string());
    std::vector<std::pair<std::string, int>> out;
    std::string line;
    bool header_done = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_done) {
            header_done = true;
            continue;
        }
        size_t pos = line.find(',');
        out.emplace_back(line.substr(0, pos), std::stoi(line.substr(pos + 1)));
    }
    return out;
}

// ---------------------------------------------------------------- helpers

namespace {

std::string subject_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%04d", index);
    return buf;
}

void write_loss_curves(const fs::path& path, const std::vector<ae::EpochRecord>& curves,
                       const std::string& hash) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << "# config_hash=" << hash << "\n";
    f << "fold,epoch,lr,train_loss,val_loss\n";
    char buf[96];
    for (const auto& r : curves) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g", r.fold, r.epoch, r.lr, r.train_loss,
                      r.val_loss);
        f << buf << "\n";
    }
}

vox::MipStack load_stack(const PipelineConfig& config, const std::string& variant,
                         const std::string& subject_id) {
    fs::path dir = mips_dir(config, variant);
    if (!fs::exists(dir / (subject_id + ".json")))
        throw MissingArtifact("MIP stack " + subject_id + " (" + variant +
                              ") not found (run `airshape preprocess` first)");
    return vox::read_mipstack(dir, subject_id);
}

std::unique_ptr<ae::UNetNoskip> load_model_for(const PipelineConfig& config) {
    fs::path path;
    if (config.encode_model == "finetune") {
        path = finetune_dir(config, config.finetune_variant) / "model.ckpt";
        if (!fs::exists(path))
            throw MissingArtifact("fine-tuned model not found (run `airshape finetune` first): " +
                                  path.string());
    } else {
        path = train_dir(config, config.train_variant) / "best.ckpt";
        if (!fs::exists(path))
            throw MissingArtifact("trained model not found (run `airshape train` first): " + path.string());
    }
    auto [net, meta] = ae::load_checkpoint(path);
    net->set_jobs(config.jobs);
    return std::move(net);
}

cluster::Metric metric_from(const std::string& name) {
    if (name == "l2") return cluster::Metric::L2;
    if (name == "cosine") return cluster::Metric::Cosine;
    throw InvalidK("unknown metric: " + name);
}

cluster::WeightMode weight_mode_from(const std::string& name) {
    if (name == "unit") return cluster::WeightMode::Unit;
    if (name == "distance") return cluster::WeightMode::Distance;
    if (name == "gaussian") return cluster::WeightMode::Gaussian;
    throw InvalidK("unknown weight mode: " + name);
}

} // namespace

// ------------------------------------------------------------------ synth

CommandResult cmd_synth(const PipelineConfig& config) {
    CommandResult result;
    if (config.n_per_class < 1) {
        result.exit_code = 2;
        result.errors.push_back("n_per_class must be >= 1");
        return result;
    }
    fs::create_directories(cohort_dir(config));
    const std::string hash = config_hash(config);

    std::ofstream manifest(manifest_path(config));
    if (!manifest) throw IoError("cannot write manifest");
    manifest << "# config_hash=" << hash << "\n";
    manifest << "subject_id,class_label,seed\n";

    int index = 0;
    for (int i = 0; i < config.n_per_class; ++i)
        for (int cls = 0; cls < 4; ++cls) {
            uint64_t subject_seed = derive_seed(config.seed, "synth", uint64_t(i) * 4 + uint64_t(cls));
            auto [vol, used_seed] =
                synth::generate_with_retries(cls, subject_seed, config.volume_dims, config.max_generation);
            std::string name = subject_name(index++);
            write_lvol(vol, cohort_dir(config) / (name + ".lvol"));
            manifest << name << "," << cls << "," << used_seed << "\n";
        }
    return result;
}

// ------------------------------------------------------------- preprocess

CommandResult cmd_preprocess(const PipelineConfig& config) {
    CommandResult result;
    auto rows = read_manifest(manifest_path(config));
    const std::string hash = config_hash(config);
    size_t ok = 0;

    for (const auto& row : rows) {
        try {
            LabeledVolume vol = read_lvol(cohort_dir(config) / (row.subject_id + ".lvol"));
            if (vol.foreground_count() == 0) throw EmptyResult("empty volume");
            if (!is_single_component_26(vol))
                throw DegenerateGeometry("foreground is not a single 26-connected component");

            vox::RigidAlignment alignment = vox::compute_alignment(vol);
            LabeledVolume aligned = vox::apply_alignment(vol, alignment);

            for (const auto& variant : config.variants) {
                LabeledVolume view = aligned;
                if (!variant_trachea(variant)) view = vox::mask_trachea(view);
                vox::MipStack stack = vox::project_mip(view, variant_dilated(variant),
                                                       config.dilation_threshold_generation, config.mip_size);
                stack.subject_id = row.subject_id;
                vox::write_mipstack(stack, mips_dir(config, variant), hash);
            }
            ++ok;
        } catch (const std::exception& e) {
            result.errors.push_back(row.subject_id + ": " + e.what());
        }
    }
    if (ok == 0)
        result.exit_code = 1;
    else if (!result.errors.empty())
        result.exit_code = 3;
    return result;
}

// ------------------------------------------------------------------ train

CommandResult cmd_train(const PipelineConfig& config) {
    CommandResult result;
    auto rows = read_manifest(manifest_path(config));
    const std::string hash = config_hash(config);

    std::vector<ae::Tensor> subjects;
    std::vector<int> labels;
    for (const auto& row : rows) {
        subjects.push_back(ae::stack_to_tensor(load_stack(config, config.train_variant, row.subject_id)));
        labels.push_back(row.class_label);
    }

    ae::TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "train-" + config.train_variant);
    tc.jobs = config.jobs;
    ae::ArchitectureDescriptor arch = arch_from_config(config);
    ae::TrainResult trained = ae::train(arch, subjects, labels, tc);

    fs::path dir = train_dir(config, config.train_variant);
    fs::create_directories(dir);
    write_loss_curves(dir / "loss_curves.csv", trained.curves, hash);

    {
        std::ofstream f(dir / "folds.csv");
        f << "# config_hash=" << hash << "\n";
        f << "subject_id,fold\n";
        for (size_t i = 0; i < rows.size(); ++i)
            f << rows[i].subject_id << "," << trained.fold_of_subject[i] << "\n";
    }

    json summary;
    summary["config_hash"] = hash;
    summary["best_fold"] = trained.best_fold;
    summary["folds"] = json::array();
    for (const auto& fold : trained.folds) {
        ae::UNetNoskip net(arch, 0);
        net.restore_state(fold.best_state);
        ae::CheckpointMeta meta;
        meta.seed = tc.seed;
        meta.epoch = fold.best_epoch;
        meta.loss = fold.best_val_loss;
        meta.config_hash = hash;
        ae::save_checkpoint(net, meta, dir / ("fold" + std::to_string(fold.fold) + ".ckpt"));
        if (fold.fold == trained.best_fold) ae::save_checkpoint(net, meta, dir / "best.ckpt");
        summary["folds"].push_back({{"fold", fold.fold},
                                    {"best_val_loss", fold.best_val_loss},
                                    {"best_epoch", fold.best_epoch},
                                    {"epochs_run", fold.epochs_run}});
        summary["param_count"] = net.param_count();
    }
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    return result;
}

// --------------------------------------------------------------- finetune

CommandResult cmd_finetune(const PipelineConfig& config) {
    CommandResult result;
    auto rows = read_manifest(manifest_path(config));
    const std::string hash = config_hash(config);

    fs::path best = train_dir(config, config.train_variant) / "best.ckpt";
    if (!fs::exists(best))
        throw MissingArtifact("trained model not found (run `airshape train` first): " + best.string());
    auto [net, meta] = ae::load_checkpoint(best);
    net->set_jobs(config.jobs);

    std::vector<ae::Tensor> subjects;
    for (const auto& row : rows)
        subjects.push_back(ae::stack_to_tensor(load_stack(config, config.finetune_variant, row.subject_id)));

    ae::TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "finetune-" + config.finetune_variant);
    tc.jobs = config.jobs;
    ae::FineTuneInfo info = ae::fine_tune(*net, subjects, tc);

    fs::path dir = finetune_dir(config, config.finetune_variant);
    fs::create_directories(dir);
    ae::CheckpointMeta out_meta;
    out_meta.seed = tc.seed;
    out_meta.epoch = info.epochs_run;
    out_meta.loss = info.loss_after;
    out_meta.config_hash = hash;
    ae::save_checkpoint(*net, out_meta, dir / "model.ckpt");
    write_loss_curves(dir / "loss_curves.csv", info.curves, hash);

    json summary;
    summary["config_hash"] = hash;
    summary["epochs_run"] = info.epochs_run;
    summary["initial_lr"] = info.initial_lr;
    summary["loss_before"] = info.loss_before;
    summary["loss_after"] = info.loss_after;
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    return result;
}

// ----------------------------------------------------------------- encode

CommandResult cmd_encode(const PipelineConfig& config) {
    CommandResult result;
    auto rows = read_manifest(manifest_path(config));
    const std::string hash = config_hash(config);
    auto net = load_model_for(config);

    cluster::FeatureMatrix features;
    features.n = rows.size();
    features.d = net->arch().bottleneck_dim();
    features.values.reserve(features.n * features.d);
    for (const auto& row : rows) {
        features.subject_ids.push_back(row.subject_id);
        auto vec = ae::encode(*net, load_stack(config, config.encode_variant, row.subject_id));
        for (double v : vec)
            if (!std::isfinite(v)) throw NonFinite("bottleneck feature for " + row.subject_id);
        features.values.insert(features.values.end(), vec.begin(), vec.end());
    }

    fs::path dir = features_dir(config);
    fs::create_directories(dir);
    cluster::write_features_csv(features, (dir / "features.csv").string(), hash);
    cluster::write_features_bin(features, (dir / "features.bin").string(), hash);

    json summary;
    summary["config_hash"] = hash;
    summary["variant"] = config.encode_variant;
    summary["model"] = config.encode_model;
    summary["n"] = features.n;
    summary["d"] = features.d;
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    return result;
}

// ---------------------------------------------------------------- cluster

CommandResult cmd_cluster(const PipelineConfig& config) {
    CommandResult result;
    const std::string hash = config_hash(config);
    fs::path features_path = features_dir(config) / "features.bin";
    if (!fs::exists(features_path))
        throw MissingArtifact("features not found (run `airshape encode` first): " + features_path.string());
    cluster::FeatureMatrix raw = cluster::read_features_bin(features_path.string());

    cluster::PcaModel pca = cluster::pca_reduce(raw, config.pca_dim);
    if (pca.truncated_by_rank)
        result.errors.push_back("warning: pca_dim " + std::to_string(config.pca_dim) +
                                " exceeds the rank bound; using " + std::to_string(pca.scores.d));

    fs::path dir = cluster_dir(config);
    fs::create_directories(dir);
    cluster::write_features_csv(pca.scores, (dir / "reduced.csv").string(), hash);
    cluster::write_features_bin(pca.scores, (dir / "reduced.bin").string(), hash);

    const cluster::Metric metric = metric_from(config.metric);
    const cluster::WeightMode wmode = weight_mode_from(config.weight_mode);

    cluster::KOptResult kopt;
    if (config.fixed_k > 0) {
        cluster::Clustering probe =
            cluster::louvain(cluster::knn_graph(pca.scores, config.fixed_k, metric, wmode),
                             derive_seed(config.seed, "ksweep", uint64_t(config.fixed_k)));
        int n_clusters = 1 + *std::max_element(probe.labels.begin(), probe.labels.end());
        kopt.k_opt = config.fixed_k;
        kopt.plateau_found = true;
        kopt.curve = {{config.fixed_k, n_clusters, probe.modularity}};
    } else {
        kopt = cluster::select_k_opt(pca.scores, config.k_min, config.k_max, config.k_step,
                                     config.plateau_span, config.seed, metric, wmode);
        if (!kopt.plateau_found)
            result.errors.push_back("warning: no plateau spanning " + std::to_string(config.plateau_span) +
                                    "; using the largest run");
    }

    {
        std::ofstream f(dir / "ksweep.csv");
        f << "# config_hash=" << hash << "\n";
        f << "k,n_clusters,modularity\n";
        char buf[64];
        for (const auto& p : kopt.curve) {
            std::snprintf(buf, sizeof buf, "%d,%d,%.17g", p.k, p.n_clusters, p.modularity);
            f << buf << "\n";
        }
    }

    cluster::Clustering final = cluster::louvain(
        cluster::knn_graph(pca.scores, kopt.k_opt, metric, wmode), derive_seed(config.seed, "final-louvain"));

    {
        std::ofstream f(dir / "assignments.csv");
        f << "# config_hash=" << hash << "\n";
        f << "subject_id,label\n";
        for (size_t i = 0; i < raw.n; ++i) f << raw.subject_ids[i] << "," << final.labels[i] << "\n";
    }

    json summary;
    summary["config_hash"] = hash;
    summary["k_opt"] = kopt.k_opt;
    summary["plateau_found"] = kopt.plateau_found;
    summary["plateau_begin"] = kopt.plateau_begin;
    summary["plateau_end"] = kopt.plateau_end;
    summary["n_clusters"] = 1 + *std::max_element(final.labels.begin(), final.labels.end());
    summary["modularity"] = final.modularity;
    summary["pca_dim"] = pca.scores.d;
    summary["pca_cumulative_explained"] = pca.cumulative_explained;
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    return result;
}

// --------------------------------------------------------------- evaluate

namespace {

std::map<std::string, int> read_folds_csv(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifact("fold assignment not found (run `airshape train` first): " + path.string());
    std::map<std::string, int> folds;
    std::string line;
    bool header_done = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_done) {
            header_done = true;
            continue;
        }
        size_t pos = line.find(',');
        folds[line.substr(0, pos)] = std::stoi(line.substr(pos + 1));
    }
    return folds;
}

struct SubjectMetrics {
    metrics::ReconReport per_view[3];
    metrics::ReconReport mean;
};

SubjectMetrics evaluate_stack(const vox::MipStack& truth, const std::array<RealImage, 3>& recon) {
    SubjectMetrics out;
    for (int v = 0; v < 3; ++v) {
        BinaryImage m = threshold(truth.views[size_t(v)], 0.5);
        BinaryImage mh = threshold(recon[size_t(v)], 0.5);
        BinaryImage s = skel::skeletonize(m);
        BinaryImage sh = skel::skeletonize(mh);
        out.per_view[v] = metrics::recon_metrics(m, mh, s, sh);
        out.mean.dsc += out.per_view[v].dsc / 3.0;
        out.mean.fpr += out.per_view[v].fpr / 3.0;
        out.mean.tl += out.per_view[v].tl / 3.0;
        out.mean.cl += out.per_view[v].cl / 3.0;
    }
    out.mean.averaged_over_views = true;
    return out;
}

std::array<RealImage, 3> recon_views(ae::UNetNoskip& net, const vox::MipStack& stack) {
    ae::Tensor input = ae::stack_to_tensor(stack);
    ae::ForwardResult out = net.forward(input, ae::Mode::Eval);
    std::array<RealImage, 3> views;
    for (int v = 0; v < 3; ++v) {
        views[size_t(v)] = RealImage(stack.size, stack.size);
        std::copy(out.recon.data.begin() + size_t(v) * out.recon.plane(),
                  out.recon.data.begin() + size_t(v + 1) * out.recon.plane(),
                  views[size_t(v)].px.begin());
    }
    return views;
}

} // namespace

CommandResult cmd_evaluate(const PipelineConfig& config) {
    CommandResult result;
    auto rows = read_manifest(manifest_path(config));
    const std::string hash = config_hash(config);
    fs::create_directories(eval_dir(config));

    std::ofstream csv(eval_dir(config) / "recon_metrics.csv");
    csv << "# config_hash=" << hash << "\n";
    csv << "train_variant,eval_variant,subject_id,view,dice,fpr,tl,cl\n";
    char buf[160];

    json summary;
    summary["config_hash"] = hash;
    summary["identity_model"] = config.identity_model;
    summary["pairs"] = json::array();

    for (const auto& pair : config.eval_pairs) {
        const std::string& train_variant = pair[0];
        const std::string& eval_variant = pair[1];

        std::map<std::string, int> fold_of;
        int n_folds = config.train.folds;
        std::map<int, std::unique_ptr<ae::UNetNoskip>> models;
        if (config.identity_model) {
            for (const auto& row : rows) fold_of[row.subject_id] = 0;
            n_folds = 1;
        } else {
            fold_of = read_folds_csv(train_dir(config, train_variant) / "folds.csv");
            for (int fold = 0; fold < n_folds; ++fold) {
                fs::path ckpt = train_dir(config, train_variant) / ("fold" + std::to_string(fold) + ".ckpt");
                if (!fs::exists(ckpt))
                    throw MissingArtifact("checkpoint not found (run `airshape train` first): " +
                                          ckpt.string());
                models[fold] = ae::load_checkpoint(ckpt).first;
                models[fold]->set_jobs(config.jobs);
            }
        }

        // fold -> per-metric accumulation of subject means
        std::map<int, std::vector<metrics::ReconReport>> fold_reports;
        for (const auto& row : rows) {
            try {
                vox::MipStack truth = load_stack(config, eval_variant, row.subject_id);
                int fold = fold_of.at(row.subject_id);
                std::array<RealImage, 3> recon;
                if (config.identity_model) {
                    recon = truth.views;
                } else {
                    recon = recon_views(*models.at(fold), truth);
                }
                SubjectMetrics sm = evaluate_stack(truth, recon);
                for (int v = 0; v < 3; ++v) {
                    std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%.17g,%.17g,%.17g,%.17g",
                                  train_variant.c_str(), eval_variant.c_str(), row.subject_id.c_str(),
                                  vox::kViewOrder[size_t(v)], sm.per_view[v].dsc, sm.per_view[v].fpr,
                                  sm.per_view[v].tl, sm.per_view[v].cl);
                    csv << buf << "\n";
                }
                std::snprintf(buf, sizeof buf, "%s,%s,%s,mean,%.17g,%.17g,%.17g,%.17g",
                              train_variant.c_str(), eval_variant.c_str(), row.subject_id.c_str(),
                              sm.mean.dsc, sm.mean.fpr, sm.mean.tl, sm.mean.cl);
                csv << buf << "\n";
                fold_reports[fold].push_back(sm.mean);
            } catch (const std::exception& e) {
                result.errors.push_back(train_variant + "/" + eval_variant + " " + row.subject_id + ": " +
                                        e.what());
            }
        }

        // mean +/- sd across folds of fold-mean metrics
        auto fold_stat = [&](auto pick) {
            std::vector<double> fold_means;
            for (const auto& [fold, reports] : fold_reports) {
                double acc = 0;
                for (const auto& r : reports) acc += pick(r);
                fold_means.push_back(acc / double(reports.size()));
            }
            double mean = 0;
            for (double v : fold_means) mean += v;
            mean /= double(fold_means.size());
            double var = 0;
            for (double v : fold_means) var += (v - mean) * (v - mean);
            double sd = fold_means.size() > 1 ? std::sqrt(var / double(fold_means.size() - 1)) : 0.0;
            return std::pair<double, double>(mean, sd);
        };

        if (!fold_reports.empty()) {
            auto [dice_m, dice_s] = fold_stat([](const metrics::ReconReport& r) { return r.dsc; });
            auto [fpr_m, fpr_s] = fold_stat([](const metrics::ReconReport& r) { return r.fpr; });
            auto [tl_m, tl_s] = fold_stat([](const metrics::ReconReport& r) { return r.tl; });
            auto [cl_m, cl_s] = fold_stat([](const metrics::ReconReport& r) { return r.cl; });
            summary["pairs"].push_back({{"train", train_variant},
                                        {"eval", eval_variant},
                                        {"dice_mean", dice_m},
                                        {"dice_sd", dice_s},
                                        {"fpr_mean", fpr_m},
                                        {"fpr_sd", fpr_s},
                                        {"tl_mean", tl_m},
                                        {"tl_sd", tl_s},
                                        {"cl_mean", cl_m},
                                        {"cl_sd", cl_s},
                                        {"n_folds", fold_reports.size()}});
        }
    }
    std::ofstream(eval_dir(config) / "summary.json") << summary.dump(2) << "\n";
    if (!result.errors.empty()) result.exit_code = 3;
    return result;
}

// -------------------------------------------------------------- reproduce

CommandResult cmd_reproduce(const PipelineConfig& config) {
    CommandResult result;
    const std::string hash = config_hash(config);

    fs::path reduced_path = cluster_dir(config) / "reduced.bin";
    fs::path assignments_path = cluster_dir(config) / "assignments.csv";
    fs::path summary_path = cluster_dir(config) / "summary.json";
    if (!fs::exists(reduced_path) || !fs::exists(assignments_path) || !fs::exists(summary_path))
        throw MissingArtifact("clustering artifacts not found (run `airshape cluster` first): " +
                              cluster_dir(config).string());

    cluster::FeatureMatrix reduced = cluster::read_features_bin(reduced_path.string());
    auto assignments = read_assignments(assignments_path);
    json cluster_summary;
    std::ifstream(summary_path) >> cluster_summary;

    cluster::Clustering reference;
    reference.k_used = cluster_summary.at("k_opt").get<int>();
    reference.seed = derive_seed(config.seed, "final-louvain");
    std::map<std::string, int> label_of;
    for (const auto& [subject, label] : assignments) label_of[subject] = label;
    for (const auto& id : reduced.subject_ids) reference.labels.push_back(label_of.at(id));

    cluster::ReproducibilityConfig rc;
    rc.k = reference.k_used;
    rc.seed = reference.seed;
    rc.metric = metric_from(config.metric);
    rc.weight_mode = weight_mode_from(config.weight_mode);
    rc.subset_runs = config.subset_runs;
    rc.subset_fraction = config.subset_fraction;
    rc.reduced_dim_variant = std::max<size_t>(1, reduced.d / 2);
    cluster::ReproducibilityReport report = cluster::reproducibility_suite(reduced, reference, rc);

    fs::create_directories(reproduce_dir(config));
    char buf[96];
    {
        std::ofstream f(reproduce_dir(config) / "variants.csv");
        f << "# config_hash=" << hash << "\n";
        f << "variant,name,ri,ari\n";
        for (const auto& v : report.subsets) {
            std::snprintf(buf, sizeof buf, "subset,%s,%.17g,%.17g", v.name.c_str(), v.ri, v.ari);
            f << buf << "\n";
        }
        std::snprintf(buf, sizeof buf, "metric,%s,%.17g,%.17g", report.cosine.name.c_str(), report.cosine.ri,
                      report.cosine.ari);
        f << buf << "\n";
        std::snprintf(buf, sizeof buf, "reduced_dim,%s,%.17g,%.17g", report.reduced_dim.name.c_str(),
                      report.reduced_dim.ri, report.reduced_dim.ari);
        f << buf << "\n";
    }
    {
        std::ofstream f(reproduce_dir(config) / "ari_vs_k.csv");
        f << "# config_hash=" << hash << "\n";
        f << "k,ri,ari\n";
        for (const auto& v : report.k_variants) {
            std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g", v.name.substr(2).c_str(), v.ri, v.ari);
            f << buf << "\n";
        }
    }
    json summary;
    summary["config_hash"] = hash;
    summary["subset_mean_ari"] = report.subset_mean_ari;
    summary["cosine_ri"] = report.cosine.ri;
    summary["cosine_ari"] = report.cosine.ari;
    summary["reduced_dim_ri"] = report.reduced_dim.ri;
    summary["reduced_dim_ari"] = report.reduced_dim.ari;
    std::ofstream(reproduce_dir(config) / "summary.json") << summary.dump(2) << "\n";
    return result;
}

} // namespace airshape::pipeline
