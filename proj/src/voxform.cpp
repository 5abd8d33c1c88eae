#include "airshape/voxform.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "airshape/errors.hpp"

namespace airshape::vox {

namespace {

struct Vec3 {
    double x, y, z;
};

Vec3 rotate(const std::array<std::array<double, 3>, 3>& m, const Vec3& v) {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

Vec3 rotate_transposed(const std::array<std::array<double, 3>, 3>& m, const Vec3& v) {
    return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
}

} // namespace

RigidAlignment compute_alignment(const LabeledVolume& vol) {
    // centroid and covariance of spacing-scaled foreground coordinates
    double n = 0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x)
                if (vol.at(x, y, z)) {
                    mean += Eigen::Vector3d(x * vol.sx, y * vol.sy, z * vol.sz);
                    n += 1;
                }
    if (n == 0) throw DegenerateGeometry("no foreground voxels");
    if (n < 4) throw DegenerateGeometry("fewer than 4 foreground voxels");
    mean /= n;

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x)
                if (vol.at(x, y, z)) {
                    Eigen::Vector3d d(x * vol.sx - mean.x(), y * vol.sy - mean.y(), z * vol.sz - mean.z());
                    cov += d * d.transpose();
                }
    cov /= n;

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    if (solver.info() != Eigen::Success) throw DegenerateGeometry("eigendecomposition failed");
    Eigen::Vector3d evals = solver.eigenvalues();   // ascending
    Eigen::Matrix3d evecs = solver.eigenvectors();  // columns

    double lmax = std::max(evals.maxCoeff(), 0.0);
    if (lmax <= 0.0 || evals.minCoeff() <= 1e-9 * lmax)
        throw DegenerateGeometry("rank-deficient foreground (collinear or coplanar)");

    struct Pair {
        double value;
        Eigen::Vector3d vec;
    };
    std::array<Pair, 3> pairs;
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector3d v = evecs.col(i);
        // sign convention: largest-magnitude component positive
        int arg = 0;
        for (int j = 1; j < 3; ++j)
            if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
        if (v[arg] < 0) v = -v;
        pairs[i] = {evals[i], v};
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.value != b.value) return a.value > b.value;
        for (int j = 0; j < 3; ++j)
            if (a.vec[j] != b.vec[j]) return a.vec[j] < b.vec[j];
        return false;
    });

    Eigen::Matrix3d rot;
    for (int i = 0; i < 3; ++i) rot.row(i) = pairs[i].vec.transpose();
    if (rot.determinant() < 0) rot.row(2) = -rot.row(2);

    RigidAlignment a;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a.rotation[i][j] = rot(i, j);
    a.centroid = {mean.x() / vol.sx, mean.y() / vol.sy, mean.z() / vol.sz};
    return a;
}

LabeledVolume apply_alignment(const LabeledVolume& vol, const RigidAlignment& a) {
    const Vec3 c{a.centroid[0] * vol.sx, a.centroid[1] * vol.sy, a.centroid[2] * vol.sz};

    // bounding box of rotated foreground voxel centers
    Vec3 lo{0, 0, 0}, hi{0, 0, 0};
    bool any = false;
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x) {
                if (!vol.at(x, y, z)) continue;
                Vec3 p{x * vol.sx - c.x, y * vol.sy - c.y, z * vol.sz - c.z};
                Vec3 r = rotate(a.rotation, p);
                if (!any) {
                    lo = hi = r;
                    any = true;
                } else {
                    lo.x = std::min(lo.x, r.x); hi.x = std::max(hi.x, r.x);
                    lo.y = std::min(lo.y, r.y); hi.y = std::max(hi.y, r.y);
                    lo.z = std::min(lo.z, r.z); hi.z = std::max(hi.z, r.z);
                }
            }
    if (!any) throw DegenerateGeometry("empty rotated bounding box");

    // isotropic output grid; geometric mean keeps per-voxel volume equal to
    // the input so foreground counts survive resampling
    const double s = std::cbrt(vol.sx * vol.sy * vol.sz);
    LabeledVolume out(int(std::floor((hi.x - lo.x) / s + 0.5)) + 1,
                      int(std::floor((hi.y - lo.y) / s + 0.5)) + 1,
                      int(std::floor((hi.z - lo.z) / s + 0.5)) + 1,
                      s, s, s);

    for (int k = 0; k < out.nz; ++k)
        for (int j = 0; j < out.ny; ++j)
            for (int i = 0; i < out.nx; ++i) {
                Vec3 q{lo.x + i * s, lo.y + j * s, lo.z + k * s};
                Vec3 p = rotate_transposed(a.rotation, q);
                int X = int(std::lround((p.x + c.x) / vol.sx));
                int Y = int(std::lround((p.y + c.y) / vol.sy));
                int Z = int(std::lround((p.z + c.z) / vol.sz));
                if (vol.in_bounds(X, Y, Z)) out.at(i, j, k) = vol.at(X, Y, Z);
            }
    return out;
}

LabeledVolume mask_trachea(const LabeledVolume& vol) {
    LabeledVolume out = vol;
    size_t remaining = 0;
    for (auto& v : out.data) {
        if (v == 1) v = 0;
        remaining += (v != 0);
    }
    if (remaining == 0) throw EmptyResult("masking the trachea removed all foreground");
    return out;
}

std::array<BinaryImage, 3> project_views(const LabeledVolume& vol, uint8_t lo, uint8_t hi) {
    BinaryImage axial(vol.ny, vol.nx);    // project along z
    BinaryImage coronal(vol.nz, vol.nx);  // project along y
    BinaryImage sagittal(vol.nz, vol.ny); // project along x
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x) {
                uint8_t v = vol.at(x, y, z);
                if (v < lo || v > hi || v == 0) continue;
                axial.at(y, x) = 1;
                coronal.at(z, x) = 1;
                sagittal.at(z, y) = 1;
            }
    return {axial, coronal, sagittal};
}

BinaryImage dilate_4x4(const BinaryImage& img) {
    BinaryImage out(img.h, img.w);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) {
            if (!img.at(r, c)) continue;
            for (int dr = -1; dr <= 2; ++dr)
                for (int dc = -1; dc <= 2; ++dc) {
                    int R = r + dr, C = c + dc;
                    if (out.in_bounds(R, C)) out.at(R, C) = 1;
                }
        }
    return out;
}

BinaryImage pad_square(const BinaryImage& img) {
    int side = std::max(img.h, img.w);
    BinaryImage out(side, side);
    int r0 = (side - img.h) / 2;
    int c0 = (side - img.w) / 2;
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            if (img.at(r, c)) out.at(r0 + r, c0 + c) = 1;
    return out;
}

BinaryImage maxpool_to(const BinaryImage& img, int size) {
    BinaryImage out(size, size);
    for (int r = 0; r < size; ++r) {
        int r0 = int(int64_t(r) * img.h / size);
        int r1 = std::max(r0 + 1, int(int64_t(r + 1) * img.h / size));
        for (int c = 0; c < size; ++c) {
            int c0 = int(int64_t(c) * img.w / size);
            int c1 = std::max(c0 + 1, int(int64_t(c + 1) * img.w / size));
            uint8_t v = 0;
            for (int rr = r0; rr < r1 && !v; ++rr)
                for (int cc = c0; cc < c1; ++cc)
                    if (img.at(rr, cc)) {
                        v = 1;
                        break;
                    }
            out.at(r, c) = v;
        }
    }
    return out;
}

MipStack project_mip(const LabeledVolume& vol, bool dilate_peripheral,
                     int dilation_threshold_generation, int mip_size) {
    if (mip_size < 8 || (mip_size & (mip_size - 1)) != 0)
        throw ShapeMismatch("mip size must be a power of two >= 8");
    if (vol.foreground_count() == 0) throw EmptyResult("cannot project an empty volume");

    MipStack stack;
    stack.size = mip_size;
    stack.dilated = dilate_peripheral;
    stack.trachea_included = false;
    for (uint8_t v : vol.data)
        if (v == 1) {
            stack.trachea_included = true;
            break;
        }

    // labels are generation + 1
    const uint8_t central_hi = uint8_t(dilation_threshold_generation + 1);
    std::array<BinaryImage, 3> merged;
    if (!dilate_peripheral) {
        merged = project_views(vol, 1, kMaxLabel);
    } else {
        auto central = project_views(vol, 1, central_hi);
        auto periph = project_views(vol, uint8_t(central_hi + 1), kMaxLabel);
        for (int v = 0; v < 3; ++v) {
            BinaryImage d = dilate_4x4(periph[v]);
            merged[v] = central[v];
            for (size_t i = 0; i < d.px.size(); ++i)
                merged[v].px[i] = std::max(merged[v].px[i], d.px[i]);
        }
    }

    for (int v = 0; v < 3; ++v)
        stack.views[v] = to_real(maxpool_to(pad_square(merged[v]), mip_size));
    return stack;
}

void write_mipstack(const MipStack& m, const std::filesystem::path& dir, const std::string& config_hash) {
    std::filesystem::create_directories(dir);
    for (int v = 0; v < 3; ++v) {
        auto path = dir / (m.subject_id + "_" + kViewOrder[v] + ".pgm");
        write_pgm(m.views[v], path, config_hash.empty() ? "" : "config_hash=" + config_hash);
    }
    nlohmann::json j;
    j["subject_id"] = m.subject_id;
    j["dilated"] = m.dilated;
    j["trachea_included"] = m.trachea_included;
    j["view_order"] = {kViewOrder[0], kViewOrder[1], kViewOrder[2]};
    j["size"] = m.size;
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    std::ofstream f(dir / (m.subject_id + ".json"));
    if (!f) throw IoError("cannot write sidecar for " + m.subject_id);
    f << j.dump(2) << "\n";
}

MipStack read_mipstack(const std::filesystem::path& dir, const std::string& subject_id) {
    std::ifstream f(dir / (subject_id + ".json"));
    if (!f) throw IoError("missing sidecar: " + (dir / (subject_id + ".json")).string());
    nlohmann::json j;
    f >> j;

    MipStack m;
    m.subject_id = j.at("subject_id").get<std::string>();
    m.dilated = j.at("dilated").get<bool>();
    m.trachea_included = j.at("trachea_included").get<bool>();
    m.size = j.at("size").get<int>();
    for (int v = 0; v < 3; ++v) {
        m.views[v] = read_pgm(dir / (subject_id + "_" + kViewOrder[v] + ".pgm"));
        if (m.views[v].h != m.size || m.views[v].w != m.size)
            throw IoError("view size mismatch for " + subject_id);
    }
    return m;
}

} // namespace airshape::vox
