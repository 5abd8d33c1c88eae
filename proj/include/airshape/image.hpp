#ifndef AIRSHAPE_IMAGE_HPP
#define AIRSHAPE_IMAGE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace airshape {

// H x W image with strictly binary pixels.
struct BinaryImage {
    int h = 0, w = 0;
    std::vector<uint8_t> px; // row-major, values 0/1

    BinaryImage() = default;
    BinaryImage(int h_, int w_) : h(h_), w(w_), px(size_t(h_) * size_t(w_), 0) {}

    uint8_t at(int r, int c) const { return px[size_t(r) * w + c]; }
    uint8_t& at(int r, int c) { return px[size_t(r) * w + c]; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < h && c >= 0 && c < w; }
    size_t count() const {
        size_t n = 0;
        for (uint8_t v : px) n += (v != 0);
        return n;
    }
    bool operator==(const BinaryImage& o) const = default;
};

// H x W real-valued image in [0,1] (MIP views, reconstructions).
struct RealImage {
    int h = 0, w = 0;
    std::vector<double> px;

    RealImage() = default;
    RealImage(int h_, int w_) : h(h_), w(w_), px(size_t(h_) * size_t(w_), 0.0) {}

    double at(int r, int c) const { return px[size_t(r) * w + c]; }
    double& at(int r, int c) { return px[size_t(r) * w + c]; }
};

BinaryImage threshold(const RealImage& img, double level = 0.5);
RealImage to_real(const BinaryImage& img);

// Binary PGM (P5, maxval 255). Values are scaled to 0..255 on write and back
// to [0,1] on read. An optional comment line is stored after the magic.
void write_pgm(const RealImage& img, const std::filesystem::path& path,
               const std::string& comment = "");
RealImage read_pgm(const std::filesystem::path& path);

} // namespace airshape

#endif
