#ifndef AIRSHAPE_AUTOENC_NET_HPP
#define AIRSHAPE_AUTOENC_NET_HPP

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "airshape/autoenc/layers.hpp"
#include "airshape/autoenc/tensor.hpp"

namespace airshape::ae {

// UNet with skip connections removed: a plain encoder-decoder chain, all
// reconstruction information flows through the bottleneck.
struct ArchitectureDescriptor {
    int input_channels = 3;
    int input_size = 256; // 64 / 128 / 256 desk profiles
    std::vector<int> encoder_channels = {8, 16, 32, 64};
    int bottleneck_channels = 128;
    bool batchnorm = true;

    int bottleneck_hw() const { return input_size >> int(encoder_channels.size()); }
    size_t bottleneck_dim() const {
        return size_t(bottleneck_channels) * bottleneck_hw() * bottleneck_hw();
    }
};

struct ForwardResult {
    Tensor recon;      // B x C x H x W, values strictly in (0,1)
    Tensor bottleneck; // B x bottleneck_channels x hw x hw
};

struct LayerSummary {
    std::string describe;
    size_t param_count;
};

class UNetNoskip {
public:
    UNetNoskip(const ArchitectureDescriptor& arch, uint64_t init_seed);

    // record=true (training) caches activations for backward; inference
    // passes keep memory flat with record=false.
    ForwardResult forward(const Tensor& batch, Mode mode);

    // Gradient of loss_scale * (0.5*BCE + 0.5*Dice) for the most recent
    // Train-mode forward; accumulates into the params' g fields.
    void backward(const Tensor& recon, const Tensor& target, double loss_scale = 1.0);

    std::vector<Param*> params();
    std::vector<Buffer*> buffers();
    void zero_grad();

    size_t param_count();
    std::vector<LayerSummary> summary();

    const ArchitectureDescriptor& arch() const { return arch_; }
    void set_jobs(int jobs);

    // deep parameter copy, e.g. for best-epoch snapshots
    std::vector<std::vector<double>> snapshot_state();
    void restore_state(const std::vector<std::vector<double>>& state);

private:
    ArchitectureDescriptor arch_;
    std::vector<std::unique_ptr<Layer>> chain_;
    int bottleneck_layer_ = -1; // output of this layer is the bottleneck
    Tensor logits_;             // cached for backward
    bool have_forward_ = false;
};

// Checkpoint: 4-byte LE header length, JSON header (architecture, manifest
// of tensor names/shapes/offsets, metadata), then a raw little-endian
// float32 blob of parameters and buffers.
struct CheckpointMeta {
    uint64_t seed = 0;
    int epoch = 0;
    double loss = 0.0;
    std::string config_hash;
};

void save_checkpoint(UNetNoskip& net, const CheckpointMeta& meta, const std::filesystem::path& path);
std::pair<std::unique_ptr<UNetNoskip>, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

} // namespace airshape::ae

#endif
