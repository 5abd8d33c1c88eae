#ifndef AIRSHAPE_VOLUME_HPP
#define AIRSHAPE_VOLUME_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace airshape {

// Dense labeled voxel grid. Label 0 is background, label g+1 marks an airway
// voxel of Weibel generation g (so generations 0..16 map to labels 1..17).
struct LabeledVolume {
    int nx = 0, ny = 0, nz = 0;
    double sx = 1.0, sy = 1.0, sz = 1.0; // voxel spacing, millimeters
    std::vector<uint8_t> data;           // x-fastest order, size nx*ny*nz

    LabeledVolume() = default;
    LabeledVolume(int nx_, int ny_, int nz_, double sx_ = 1.0, double sy_ = 1.0, double sz_ = 1.0)
        : nx(nx_), ny(ny_), nz(nz_), sx(sx_), sy(sy_), sz(sz_),
          data(size_t(nx_) * size_t(ny_) * size_t(nz_), 0) {}

    size_t index(int x, int y, int z) const {
        return size_t(x) + size_t(nx) * (size_t(y) + size_t(ny) * size_t(z));
    }
    uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
    uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }

    size_t voxel_count() const { return size_t(nx) * size_t(ny) * size_t(nz); }
    size_t foreground_count() const;
    uint8_t max_label() const;
};

inline constexpr uint8_t kMaxLabel = 17; // generation 16 = terminal bronchioles

// True when the foreground forms exactly one 26-connected component.
bool is_single_component_26(const LabeledVolume& vol);

// ".lvol" container: 64-byte header (magic "LVOL0001", nx/ny/nz as LE uint32,
// sx/sy/sz as LE float64, 20 reserved zero bytes) followed by the label bytes
// in x-fastest order.
void write_lvol(const LabeledVolume& vol, const std::filesystem::path& path);
LabeledVolume read_lvol(const std::filesystem::path& path);

} // namespace airshape

#endif
