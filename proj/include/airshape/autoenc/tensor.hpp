#ifndef AIRSHAPE_AUTOENC_TENSOR_HPP
#define AIRSHAPE_AUTOENC_TENSOR_HPP

#include <array>
#include <cstdint>
#include <vector>

namespace airshape::ae {

// Dense B x C x H x W tensor of doubles, row-major with W fastest.
struct Tensor {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<double> data;

    Tensor() = default;
    Tensor(int b, int c, int h, int w)
        : shape{b, c, h, w}, data(size_t(b) * c * h * w, 0.0) {}

    int b() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }
    size_t size() const { return data.size(); }
    size_t plane() const { return size_t(shape[2]) * shape[3]; }
    size_t sample_size() const { return size_t(shape[1]) * plane(); }

    double* sample(int i) { return data.data() + size_t(i) * sample_size(); }
    const double* sample(int i) const { return data.data() + size_t(i) * sample_size(); }

    double at(int bi, int ci, int hi, int wi) const {
        return data[((size_t(bi) * shape[1] + ci) * shape[2] + hi) * shape[3] + wi];
    }
    double& at(int bi, int ci, int hi, int wi) {
        return data[((size_t(bi) * shape[1] + ci) * shape[2] + hi) * shape[3] + wi];
    }
};

} // namespace airshape::ae

#endif
