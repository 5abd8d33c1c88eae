#include <doctest.h>

#include <fstream>
#include <set>

#include "airshape/errors.hpp"
#include "airshape/pipeline.hpp"
#include "test_helpers.hpp"

using namespace airshape;
using namespace airshape::pipeline;

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

PipelineConfig tiny_config(const std::filesystem::path& work, int n_per_class = 2) {
    PipelineConfig c;
    c.seed = 424242;
    c.work_dir = work.string();
    c.n_per_class = n_per_class;
    c.volume_dims = {64, 64, 64};
    c.max_generation = 3; // class 2 adds two generations; keeps labels <= 6

    c.mip_size = 32;
    c.encoder_channels = {4, 8};
    c.bottleneck_channels = 16;
    c.train.batch_size = 4;
    c.train.max_epochs = 2;
    c.pca_dim = 8;
    c.k_min = 3;
    c.k_max = 50;
    c.k_step = 2;
    c.plateau_span = 6;
    return c;
}

size_t count_files(const std::filesystem::path& dir, const std::string& ext) {
    size_t n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ext) ++n;
    return n;
}

} // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("synth writes a class-balanced cohort and is byte-reproducible") {
    auto work = testutil::temp_dir("pipe_synth");
    PipelineConfig c = tiny_config(work);

    CHECK(cmd_synth(c).exit_code == 0);
    CHECK(count_files(cohort_dir(c), ".lvol") == 8);
    auto rows = read_manifest(manifest_path(c));
    REQUIRE(rows.size() == 8);
    int counts[4] = {0, 0, 0, 0};
    for (const auto& row : rows) counts[row.class_label]++;
    for (int i = 0; i < 4; ++i) CHECK(counts[i] == 2);

    std::string manifest1 = slurp(manifest_path(c));
    std::string vol1 = slurp(cohort_dir(c) / "s0003.lvol");
    CHECK(cmd_synth(c).exit_code == 0);
    CHECK(slurp(manifest_path(c)) == manifest1);
    CHECK(slurp(cohort_dir(c) / "s0003.lvol") == vol1);

    PipelineConfig bad = c;
    bad.n_per_class = 0;
    CHECK(cmd_synth(bad).exit_code == 2);
}

TEST_CASE("preprocess emits every variant and survives corrupt volumes") {
    auto work = testutil::temp_dir("pipe_prep");
    PipelineConfig c = tiny_config(work);
    REQUIRE(cmd_synth(c).exit_code == 0);

    CHECK(cmd_preprocess(c).exit_code == 0);
    for (const auto& variant : c.variants) {
        CHECK(count_files(mips_dir(c, variant), ".pgm") == 24); // 8 subjects x 3 views
        CHECK(count_files(mips_dir(c, variant), ".json") == 8);
    }

    // max generation 5 means dilation is a no-op: D and ND stacks agree
    for (int s = 0; s < 8; ++s) {
        char name[16];
        std::snprintf(name, sizeof name, "s%04d", s);
        for (const char* view : {"axial", "coronal", "sagittal"}) {
            auto d = slurp(mips_dir(c, "d_t") / (std::string(name) + "_" + view + ".pgm"));
            auto nd = slurp(mips_dir(c, "nd_t") / (std::string(name) + "_" + view + ".pgm"));
            CHECK(d == nd);
        }
    }

    // corrupt one volume: that subject fails, the rest still process
    {
        std::ofstream f(cohort_dir(c) / "s0001.lvol", std::ios::binary);
        f << "garbage";
    }
    CommandResult r = cmd_preprocess(c);
    CHECK(r.exit_code == 3);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].find("s0001") != std::string::npos);
}

TEST_CASE("full tiny pipeline: train, finetune, encode, cluster, evaluate, reproduce") {
    auto work = testutil::temp_dir("pipe_full");
    PipelineConfig c = tiny_config(work, 13); // 52 subjects (reproduce needs >= 50)
    c.eval_pairs = {{"d_t", "d_t"}, {"d_t", "nd_t"}};

    REQUIRE(cmd_synth(c).exit_code == 0);
    REQUIRE(cmd_preprocess(c).exit_code == 0);

    // encode before train names the missing step
    CHECK_THROWS_WITH_AS(cmd_encode(c), doctest::Contains("airshape train"), MissingArtifact);

    REQUIRE(cmd_train(c).exit_code == 0);
    auto tdir = train_dir(c, "d_t");
    for (int f = 0; f < 5; ++f) CHECK(std::filesystem::exists(tdir / ("fold" + std::to_string(f) + ".ckpt")));
    CHECK(std::filesystem::exists(tdir / "best.ckpt"));
    CHECK(std::filesystem::exists(tdir / "loss_curves.csv"));
    CHECK(std::filesystem::exists(tdir / "folds.csv"));

    REQUIRE(cmd_finetune(c).exit_code == 0);
    CHECK(std::filesystem::exists(finetune_dir(c, "d_nt") / "model.ckpt"));
    {
        std::string summary = slurp(finetune_dir(c, "d_nt") / "summary.json");
        CHECK(summary.find("\"epochs_run\": 5") != std::string::npos);
        CHECK(summary.find("0.0001") != std::string::npos);
    }

    REQUIRE(cmd_encode(c).exit_code == 0);
    auto features = cluster::read_features_bin((features_dir(c) / "features.bin").string());
    CHECK(features.n == 52);
    CHECK(features.d == 16 * 8 * 8); // bottleneck 16 channels at 32/4 = 8

    REQUIRE(cmd_cluster(c).exit_code == 0);
    auto assignments = read_assignments(cluster_dir(c) / "assignments.csv");
    CHECK(assignments.size() == 52);
    CHECK(std::filesystem::exists(cluster_dir(c) / "ksweep.csv"));
    CHECK(std::filesystem::exists(cluster_dir(c) / "reduced.bin"));

    // identity-model evaluation is exact
    PipelineConfig ident = c;
    ident.identity_model = true;
    REQUIRE(cmd_evaluate(ident).exit_code == 0);
    {
        std::ifstream f(eval_dir(c) / "recon_metrics.csv");
        std::string line;
        int data_rows = 0;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("train_variant", 0) == 0) continue;
            ++data_rows;
            CHECK(line.find(",1,0,1,0") != std::string::npos);
        }
        CHECK(data_rows == 52 * 4 * 2); // 3 views + mean, two pairs
    }

    // real-model evaluation produces the summary matrix
    REQUIRE(cmd_evaluate(c).exit_code == 0);
    {
        std::string summary = slurp(eval_dir(c) / "summary.json");
        CHECK(summary.find("\"train\": \"d_t\"") != std::string::npos);
        CHECK(summary.find("\"eval\": \"nd_t\"") != std::string::npos);
        CHECK(summary.find("dice_mean") != std::string::npos);
    }

    REQUIRE(cmd_reproduce(c).exit_code == 0);
    CHECK(std::filesystem::exists(reproduce_dir(c) / "variants.csv"));
    CHECK(std::filesystem::exists(reproduce_dir(c) / "ari_vs_k.csv"));
    {
        std::ifstream f(reproduce_dir(c) / "variants.csv");
        std::string line;
        int subsets = 0;
        bool metric_row = false, dim_row = false;
        while (std::getline(f, line)) {
            if (line.rfind("subset,", 0) == 0) ++subsets;
            if (line.rfind("metric,", 0) == 0) metric_row = true;
            if (line.rfind("reduced_dim,", 0) == 0) dim_row = true;
        }
        CHECK(subsets == 5);
        CHECK(metric_row);
        CHECK(dim_row);
    }
}

TEST_CASE("config round-trips through json and hashes deterministically") {
    auto work = testutil::temp_dir("pipe_cfg");
    PipelineConfig c = tiny_config(work);
    c.metric = "cosine";
    c.fixed_k = 9;
    save_config(c, work / "config.json");
    PipelineConfig back = load_config(work / "config.json");
    CHECK(back.seed == c.seed);
    CHECK(back.metric == "cosine");
    CHECK(back.fixed_k == 9);
    CHECK(back.mip_size == c.mip_size);
    CHECK(back.encoder_channels == c.encoder_channels);
    CHECK(config_hash(back) == config_hash(c));

    PipelineConfig other = c;
    other.seed += 1;
    CHECK(config_hash(other) != config_hash(c));
}

TEST_SUITE_END();
