#include "airshape/autoenc/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "airshape/autoenc/loss.hpp"
#include "airshape/errors.hpp"

namespace airshape::ae {

UNetNoskip::UNetNoskip(const ArchitectureDescriptor& arch, uint64_t init_seed) : arch_(arch) {
    if (arch.encoder_channels.empty()) throw ShapeMismatch("need at least one encoder level");
    if (arch.input_size >> arch.encoder_channels.size() < 1)
        throw ShapeMismatch("input size too small for the encoder depth");

    Rng init(init_seed);
    int in_ch = arch.input_channels;
    int level = 0;

    auto add_block = [&](const std::string& tag, int from, int to) {
        chain_.push_back(std::make_unique<Conv2d>(tag + ".conv1", from, to, 3, init));
        if (arch.batchnorm) chain_.push_back(std::make_unique<BatchNorm2d>(tag + ".bn1", to));
        chain_.push_back(std::make_unique<ReLU>());
        chain_.push_back(std::make_unique<Conv2d>(tag + ".conv2", to, to, 3, init));
        if (arch.batchnorm) chain_.push_back(std::make_unique<BatchNorm2d>(tag + ".bn2", to));
        chain_.push_back(std::make_unique<ReLU>());
    };

    for (int c : arch.encoder_channels) {
        add_block("enc" + std::to_string(level), in_ch, c);
        chain_.push_back(std::make_unique<MaxPool2x2>());
        in_ch = c;
        ++level;
    }

    add_block("bottleneck", in_ch, arch.bottleneck_channels);
    in_ch = arch.bottleneck_channels;
    bottleneck_layer_ = int(chain_.size()) - 1;

    for (int i = int(arch.encoder_channels.size()) - 1; i >= 0; --i) {
        int c = arch.encoder_channels[size_t(i)];
        chain_.push_back(std::make_unique<ConvTranspose2x2>("up" + std::to_string(i), in_ch, c, init));
        add_block("dec" + std::to_string(i), c, c);
        in_ch = c;
    }

    chain_.push_back(std::make_unique<Conv2d>("head", in_ch, arch.input_channels, 1, init));
}

void UNetNoskip::set_jobs(int jobs) {
    for (auto& l : chain_) l->jobs = jobs;
}

ForwardResult UNetNoskip::forward(const Tensor& batch, Mode mode) {
    if (batch.c() != arch_.input_channels || batch.h() != arch_.input_size || batch.w() != arch_.input_size)
        throw ShapeMismatch("batch must be Bx" + std::to_string(arch_.input_channels) + "x" +
                            std::to_string(arch_.input_size) + "x" + std::to_string(arch_.input_size));

    ForwardResult out;
    Tensor x = batch;
    for (int i = 0; i < int(chain_.size()); ++i) {
        x = chain_[size_t(i)]->forward(x, mode);
        if (i == bottleneck_layer_) out.bottleneck = x;
    }

    logits_ = x;
    out.recon = x;
    for (auto& v : out.recon.data) v = 1.0 / (1.0 + std::exp(-v));
    have_forward_ = (mode == Mode::Train);
    return out;
}

void UNetNoskip::backward(const Tensor& recon, const Tensor& target, double loss_scale) {
    if (!have_forward_) throw ShapeMismatch("backward requires a Train-mode forward");
    Tensor grad = bce_dice_grad_logits(recon, target, loss_scale);
    for (int i = int(chain_.size()) - 1; i >= 0; --i) grad = chain_[size_t(i)]->backward(grad);
    have_forward_ = false;
    for (Param* p : params())
        for (double g : p->g)
            if (!std::isfinite(g)) throw NonFinite("gradient overflow in " + p->name);
}

std::vector<Param*> UNetNoskip::params() {
    std::vector<Param*> out;
    for (auto& l : chain_)
        for (Param* p : l->params()) out.push_back(p);
    return out;
}

std::vector<Buffer*> UNetNoskip::buffers() {
    std::vector<Buffer*> out;
    for (auto& l : chain_)
        for (Buffer* b : l->buffers()) out.push_back(b);
    return out;
}

void UNetNoskip::zero_grad() {
    for (Param* p : params()) std::fill(p->g.begin(), p->g.end(), 0.0);
}

size_t UNetNoskip::param_count() {
    size_t n = 0;
    for (Param* p : params()) n += p->size();
    return n;
}

std::vector<LayerSummary> UNetNoskip::summary() {
    std::vector<LayerSummary> out;
    for (auto& l : chain_) {
        size_t n = 0;
        for (Param* p : l->params()) n += p->size();
        out.push_back({l->describe(), n});
    }
    return out;
}

std::vector<std::vector<double>> UNetNoskip::snapshot_state() {
    std::vector<std::vector<double>> state;
    for (Param* p : params()) state.push_back(p->w);
    for (Buffer* b : buffers()) state.push_back(b->v);
    return state;
}

void UNetNoskip::restore_state(const std::vector<std::vector<double>>& state) {
    size_t i = 0;
    for (Param* p : params()) p->w = state.at(i++);
    for (Buffer* b : buffers()) b->v = state.at(i++);
}

// ------------------------------------------------------------ checkpoints

namespace {

nlohmann::json arch_to_json(const ArchitectureDescriptor& a) {
    return {{"input_channels", a.input_channels},
            {"input_size", a.input_size},
            {"encoder_channels", a.encoder_channels},
            {"bottleneck_channels", a.bottleneck_channels},
            {"batchnorm", a.batchnorm}};
}

ArchitectureDescriptor arch_from_json(const nlohmann::json& j) {
    ArchitectureDescriptor a;
    a.input_channels = j.at("input_channels").get<int>();
    a.input_size = j.at("input_size").get<int>();
    a.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    a.bottleneck_channels = j.at("bottleneck_channels").get<int>();
    a.batchnorm = j.at("batchnorm").get<bool>();
    return a;
}

} // namespace

void save_checkpoint(UNetNoskip& net, const CheckpointMeta& meta, const std::filesystem::path& path) {
    nlohmann::json manifest = nlohmann::json::array();
    std::vector<float> blob;

    auto append = [&](const std::string& name, const std::vector<int>& shape, const std::vector<double>& v) {
        manifest.push_back({{"name", name}, {"shape", shape}, {"offset", blob.size()}, {"size", v.size()}});
        for (double x : v) blob.push_back(float(x));
    };
    for (Param* p : net.params()) append(p->name, p->shape, p->w);
    for (Buffer* b : net.buffers()) append(b->name, {int(b->v.size())}, b->v);

    nlohmann::json header;
    header["architecture"] = arch_to_json(net.arch());
    header["manifest"] = manifest;
    header["seed"] = meta.seed;
    header["epoch"] = meta.epoch;
    header["loss"] = meta.loss;
    header["config_hash"] = meta.config_hash;
    header["blob_floats"] = blob.size();
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path.string());
    uint32_t len = uint32_t(hs.size());
    uint8_t len_le[4] = {uint8_t(len), uint8_t(len >> 8), uint8_t(len >> 16), uint8_t(len >> 24)};
    f.write(reinterpret_cast<const char*>(len_le), 4);
    f.write(hs.data(), std::streamsize(hs.size()));
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(blob.data()), std::streamsize(blob.size() * 4));
    if (!f) throw IoError("checkpoint write failed: " + path.string());
}

std::pair<std::unique_ptr<UNetNoskip>, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifact("checkpoint not found: " + path.string());
    uint8_t len_le[4];
    f.read(reinterpret_cast<char*>(len_le), 4);
    if (f.gcount() != 4) throw IoError("truncated checkpoint: " + path.string());
    uint32_t len = uint32_t(len_le[0]) | uint32_t(len_le[1]) << 8 | uint32_t(len_le[2]) << 16 |
                   uint32_t(len_le[3]) << 24;
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (size_t(f.gcount()) != len) throw IoError("truncated checkpoint header: " + path.string());
    nlohmann::json header = nlohmann::json::parse(hs);

    size_t blob_floats = header.at("blob_floats").get<size_t>();
    std::vector<float> blob(blob_floats);
    f.read(reinterpret_cast<char*>(blob.data()), std::streamsize(blob_floats * 4));
    if (size_t(f.gcount()) != blob_floats * 4) throw IoError("truncated checkpoint blob: " + path.string());

    auto net = std::make_unique<UNetNoskip>(arch_from_json(header.at("architecture")), 0);

    std::map<std::string, std::pair<size_t, size_t>> entries;
    for (const auto& e : header.at("manifest"))
        entries[e.at("name").get<std::string>()] = {e.at("offset").get<size_t>(), e.at("size").get<size_t>()};

    auto fill = [&](const std::string& name, std::vector<double>& v) {
        auto it = entries.find(name);
        if (it == entries.end()) throw IoError("checkpoint missing tensor " + name);
        auto [off, size] = it->second;
        if (size != v.size()) throw IoError("checkpoint size mismatch for " + name);
        for (size_t i = 0; i < size; ++i) v[i] = double(blob[off + i]);
    };
    for (Param* p : net->params()) fill(p->name, p->w);
    for (Buffer* b : net->buffers()) fill(b->name, b->v);

    CheckpointMeta meta;
    meta.seed = header.value("seed", uint64_t(0));
    meta.epoch = header.value("epoch", 0);
    meta.loss = header.value("loss", 0.0);
    meta.config_hash = header.value("config_hash", std::string());
    return {std::move(net), meta};
}

} // namespace airshape::ae
