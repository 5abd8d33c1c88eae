#include "airshape/volume.hpp"

#include <cstring>
#include <fstream>
#include <queue>

#include "airshape/errors.hpp"

namespace airshape {

size_t LabeledVolume::foreground_count() const {
    size_t n = 0;
    for (uint8_t v : data) n += (v != 0);
    return n;
}

uint8_t LabeledVolume::max_label() const {
    uint8_t m = 0;
    for (uint8_t v : data) m = std::max(m, v);
    return m;
}

bool is_single_component_26(const LabeledVolume& vol) {
    size_t fg = vol.foreground_count();
    if (fg == 0) return false;

    std::vector<uint8_t> seen(vol.voxel_count(), 0);
    std::queue<std::array<int, 3>> q;
    size_t start = 0;
    while (start < vol.data.size() && vol.data[start] == 0) ++start;
    int sx = int(start % size_t(vol.nx));
    int sy = int((start / size_t(vol.nx)) % size_t(vol.ny));
    int sz = int(start / (size_t(vol.nx) * size_t(vol.ny)));
    q.push({sx, sy, sz});
    seen[start] = 1;
    size_t visited = 0;
    while (!q.empty()) {
        auto [x, y, z] = q.front();
        q.pop();
        ++visited;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    int X = x + dx, Y = y + dy, Z = z + dz;
                    if (!vol.in_bounds(X, Y, Z)) continue;
                    size_t idx = vol.index(X, Y, Z);
                    if (vol.data[idx] == 0 || seen[idx]) continue;
                    seen[idx] = 1;
                    q.push({X, Y, Z});
                }
    }
    return visited == fg;
}

namespace {

constexpr char kMagic[8] = {'L', 'V', 'O', 'L', '0', '0', '0', '1'};

void put_u32le(uint8_t* p, uint32_t v) {
    p[0] = uint8_t(v);
    p[1] = uint8_t(v >> 8);
    p[2] = uint8_t(v >> 16);
    p[3] = uint8_t(v >> 24);
}

uint32_t get_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

void put_f64le(uint8_t* p, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) p[i] = uint8_t(bits >> (8 * i));
}

double get_f64le(const uint8_t* p) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= uint64_t(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace

void write_lvol(const LabeledVolume& vol, const std::filesystem::path& path) {
    if (vol.data.size() != vol.voxel_count())
        throw IoError("volume data size does not match dims: " + path.string());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());

    uint8_t header[64];
    std::memset(header, 0, sizeof(header));
    std::memcpy(header, kMagic, 8);
    put_u32le(header + 8, uint32_t(vol.nx));
    put_u32le(header + 12, uint32_t(vol.ny));
    put_u32le(header + 16, uint32_t(vol.nz));
    put_f64le(header + 20, vol.sx);
    put_f64le(header + 28, vol.sy);
    put_f64le(header + 36, vol.sz);
    f.write(reinterpret_cast<const char*>(header), 64);
    f.write(reinterpret_cast<const char*>(vol.data.data()), std::streamsize(vol.data.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

LabeledVolume read_lvol(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    uint8_t header[64];
    f.read(reinterpret_cast<char*>(header), 64);
    if (f.gcount() != 64) throw IoError("truncated header: " + path.string());
    if (std::memcmp(header, kMagic, 8) != 0) throw IoError("bad magic: " + path.string());

    LabeledVolume vol;
    vol.nx = int(get_u32le(header + 8));
    vol.ny = int(get_u32le(header + 12));
    vol.nz = int(get_u32le(header + 16));
    vol.sx = get_f64le(header + 20);
    vol.sy = get_f64le(header + 28);
    vol.sz = get_f64le(header + 36);
    if (vol.nx <= 0 || vol.ny <= 0 || vol.nz <= 0)
        throw IoError("bad dims: " + path.string());
    if (!(vol.sx > 0) || !(vol.sy > 0) || !(vol.sz > 0))
        throw IoError("bad spacing: " + path.string());

    vol.data.resize(vol.voxel_count());
    f.read(reinterpret_cast<char*>(vol.data.data()), std::streamsize(vol.data.size()));
    if (size_t(f.gcount()) != vol.data.size()) throw IoError("truncated data: " + path.string());
    for (uint8_t v : vol.data)
        if (v > kMaxLabel) throw IoError("label exceeds generation 16: " + path.string());
    return vol;
}

} // namespace airshape
