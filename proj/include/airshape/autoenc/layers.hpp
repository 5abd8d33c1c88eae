#ifndef AIRSHAPE_AUTOENC_LAYERS_HPP
#define AIRSHAPE_AUTOENC_LAYERS_HPP

#include <memory>
#include <string>
#include <vector>

#include "airshape/autoenc/tensor.hpp"
#include "airshape/rng.hpp"

namespace airshape::ae {

enum class Mode { Train, Eval };

// Trainable tensor with its gradient accumulator.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> w;
    std::vector<double> g;

    size_t size() const { return w.size(); }
};

// Non-trainable state that still belongs in checkpoints (BN running stats).
struct Buffer {
    std::string name;
    std::vector<double> v;
};

class Layer {
public:
    virtual ~Layer() = default;
    // Train mode caches whatever backward needs; Eval mode caches nothing.
    virtual Tensor forward(const Tensor& x, Mode mode) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual std::vector<Param*> params() { return {}; }
    virtual std::vector<Buffer*> buffers() { return {}; }
    virtual std::string describe() const = 0;
    // jobs for per-sample parallelism; 1 = sequential reference mode
    int jobs = 1;
};

// k x k convolution (k odd) with same-padding, bias included.
class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_ch, int out_ch, int ksize, Rng& init);
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::string describe() const override;

private:
    int in_ch_, out_ch_, k_;
    Param weight_; // (out_ch, in_ch * k * k) row-major
    Param bias_;   // (out_ch)
    Tensor cached_input_;
    bool has_cache_ = false;
};

// 2x2 transposed convolution with stride 2 (doubles H and W).
class ConvTranspose2x2 : public Layer {
public:
    ConvTranspose2x2(std::string name, int in_ch, int out_ch, Rng& init);
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::string describe() const override;

private:
    int in_ch_, out_ch_;
    Param weight_; // (in_ch, out_ch * 4) row-major
    Param bias_;
    Tensor cached_input_;
    bool has_cache_ = false;
};

// Per-channel batch normalization over (B, H, W).
class BatchNorm2d : public Layer {
public:
    explicit BatchNorm2d(std::string name, int channels);
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override { return {&gamma_, &beta_}; }
    std::vector<Buffer*> buffers() override { return {&running_mean_, &running_var_}; }
    std::string describe() const override;

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

private:
    int channels_;
    Param gamma_, beta_;
    Buffer running_mean_, running_var_;
    Tensor cached_input_;
    std::vector<double> mu_, var_;
    bool has_cache_ = false;
    std::string name_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    std::string describe() const override { return "relu"; }

private:
    Tensor cached_input_;
    bool has_cache_ = false;
};

// 2x2 max pooling with stride 2; ties resolve to the first element scanned
// (row-major within the window).
class MaxPool2x2 : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    std::string describe() const override { return "maxpool 2x2"; }

private:
    std::array<int, 4> in_shape_{};
    std::vector<uint8_t> argmax_; // 0..3 per output element
    bool has_cache_ = false;
};

} // namespace airshape::ae

#endif
