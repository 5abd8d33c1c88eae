#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "airshape/errors.hpp"
#include "airshape/rng.hpp"
#include "airshape/voxform.hpp"
#include "test_helpers.hpp"

using namespace airshape;
using namespace airshape::vox;

namespace {

LabeledVolume box_volume(int bx, int by, int bz, int n = 32, uint8_t label = 2,
                         double sx = 1, double sy = 1, double sz = 1) {
    LabeledVolume vol(n, n, n, sx, sy, sz);
    int x0 = (n - bx) / 2, y0 = (n - by) / 2, z0 = (n - bz) / 2;
    for (int z = z0; z < z0 + bz; ++z)
        for (int y = y0; y < y0 + by; ++y)
            for (int x = x0; x < x0 + bx; ++x) vol.at(x, y, z) = label;
    return vol;
}

RigidAlignment identity_alignment(const LabeledVolume& vol) {
    RigidAlignment a;
    a.rotation = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    a.centroid = {vol.nx / 2.0, vol.ny / 2.0, vol.nz / 2.0};
    return a;
}

LabeledVolume tight_crop(const LabeledVolume& vol) {
    int x0 = vol.nx, x1 = -1, y0 = vol.ny, y1 = -1, z0 = vol.nz, z1 = -1;
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x)
                if (vol.at(x, y, z)) {
                    x0 = std::min(x0, x); x1 = std::max(x1, x);
                    y0 = std::min(y0, y); y1 = std::max(y1, y);
                    z0 = std::min(z0, z); z1 = std::max(z1, z);
                }
    LabeledVolume out(x1 - x0 + 1, y1 - y0 + 1, z1 - z0 + 1, vol.sx, vol.sy, vol.sz);
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) out.at(x - x0, y - y0, z - z0) = vol.at(x, y, z);
    return out;
}

std::map<uint8_t, size_t> label_multiset(const LabeledVolume& vol) {
    std::map<uint8_t, size_t> m;
    for (uint8_t v : vol.data)
        if (v) m[v]++;
    return m;
}

} // namespace

TEST_SUITE_BEGIN("voxform");

TEST_CASE("compute_alignment maps the longest axis of a box to the first principal axis") {
    // analytic oracle: a full box has diagonal coordinate covariance with
    // per-axis variance (len^2 - 1) / 12, so eigenvectors are the axes and
    // eigenvalues sort as the extents do
    LabeledVolume vol = box_volume(6, 10, 20);
    RigidAlignment a = compute_alignment(vol);

    double vx = (6.0 * 6.0 - 1.0) / 12.0;
    double vy = (10.0 * 10.0 - 1.0) / 12.0;
    double vz = (20.0 * 20.0 - 1.0) / 12.0;
    CHECK(vz > vy);
    CHECK(vy > vx);

    // descending order: z, y, x; x->z swap is an odd permutation, so the last
    // eigenvector flips to restore det = +1
    std::array<std::array<double, 3>, 3> expect = {{{0, 0, 1}, {0, 1, 0}, {-1, 0, 0}}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(a.rotation[i][j] == doctest::Approx(expect[i][j]).epsilon(1e-9));
}

TEST_CASE("compute_alignment is orthonormal with determinant +1") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        LabeledVolume vol = testutil::random_blob_volume(rng);
        if (vol.foreground_count() < 4) continue;
        RigidAlignment a = compute_alignment(vol);
        const auto& r = a.rotation;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double dot = r[i][0] * r[j][0] + r[i][1] * r[j][1] + r[i][2] * r[j][2];
                CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
            }
        double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                     r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                     r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("compute_alignment on a spherical shell is deterministic and does not throw") {
    LabeledVolume vol(33, 33, 33);
    double c = 16.0;
    for (int z = 0; z < 33; ++z)
        for (int y = 0; y < 33; ++y)
            for (int x = 0; x < 33; ++x) {
                double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c));
                if (d >= 10.0 && d <= 12.0) vol.at(x, y, z) = 1;
            }
    RigidAlignment a1 = compute_alignment(vol);
    RigidAlignment a2 = compute_alignment(vol);
    CHECK(a1.rotation == a2.rotation);
}

TEST_CASE("compute_alignment rejects degenerate geometry") {
    LabeledVolume single(16, 16, 16);
    single.at(8, 8, 8) = 1;
    CHECK_THROWS_AS(compute_alignment(single), DegenerateGeometry);

    LabeledVolume empty(16, 16, 16);
    CHECK_THROWS_AS(compute_alignment(empty), DegenerateGeometry);

    LabeledVolume line(32, 16, 16);
    for (int x = 2; x < 30; ++x) line.at(x, 8, 8) = 1;
    CHECK_THROWS_AS(compute_alignment(line), DegenerateGeometry);

    LabeledVolume plane(32, 32, 16);
    for (int y = 4; y < 28; ++y)
        for (int x = 4; x < 28; ++x) plane.at(x, y, 8) = 1;
    CHECK_THROWS_AS(compute_alignment(plane), DegenerateGeometry);
}

TEST_CASE("apply_alignment with identity equals the tight crop") {
    Rng rng(23);
    LabeledVolume vol = testutil::random_blob_volume(rng);
    LabeledVolume out = apply_alignment(vol, identity_alignment(vol));
    LabeledVolume crop = tight_crop(vol);
    REQUIRE(out.nx == crop.nx);
    REQUIRE(out.ny == crop.ny);
    REQUIRE(out.nz == crop.nz);
    CHECK(out.data == crop.data);
}

TEST_CASE("apply_alignment: 90 degree rotation preserves the label multiset") {
    // oracle: a signed-permutation rotation on an isotropic grid is an exact
    // voxel permutation, so the resample must reproduce it exactly
    Rng rng(31);
    LabeledVolume vol(40, 40, 40);
    for (int z = 5; z < 30; ++z) vol.at(10, 10, z) = 3; // vertical bar
    for (int x = 10; x < 32; ++x) vol.at(x, 10, 29) = 5; // horizontal arm -> L shape
    for (int z = 5; z < 30; ++z)
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy) vol.at(10 + dx, 10 + dy, z) = 3;

    RigidAlignment a;
    a.rotation = {{{0, 1, 0}, {-1, 0, 0}, {0, 0, 1}}}; // 90 degrees about z
    a.centroid = {20, 20, 20};
    LabeledVolume out = apply_alignment(vol, a);
    CHECK(label_multiset(out) == label_multiset(vol));
}

TEST_CASE("apply_alignment keeps foreground count within 10% under generic rotation") {
    Rng rng(37);
    LabeledVolume vol = testutil::random_blob_volume(rng, 48, 5);
    double th = 0.5; // ~30 degrees
    RigidAlignment a;
    a.rotation = {{{std::cos(th), std::sin(th), 0}, {-std::sin(th), std::cos(th), 0}, {0, 0, 1}}};
    a.centroid = {24, 24, 24};
    LabeledVolume out = apply_alignment(vol, a);
    double in_fg = double(vol.foreground_count());
    double out_fg = double(out.foreground_count());
    CHECK(std::abs(out_fg - in_fg) / in_fg < 0.10);
}

TEST_CASE("apply_alignment: single corner voxel crops to 1x1x1") {
    LabeledVolume vol(16, 16, 16);
    vol.at(0, 0, 0) = 7;
    RigidAlignment a = identity_alignment(vol);
    LabeledVolume out = apply_alignment(vol, a);
    REQUIRE(out.voxel_count() == 1);
    CHECK(out.data[0] == 7);
}

TEST_CASE("alignment idempotence on an already-aligned volume") {
    // aligned = extents strictly descending along x, y, z
    LabeledVolume vol = box_volume(20, 12, 6);
    RigidAlignment a = compute_alignment(vol);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(std::abs(a.rotation[i][j] - (i == j ? 1.0 : 0.0)) < 1e-6);

    // and after an exact permutation round-trip
    LabeledVolume rotated = box_volume(6, 12, 20);
    RigidAlignment pre = compute_alignment(rotated);
    LabeledVolume aligned = apply_alignment(rotated, pre);
    RigidAlignment again = compute_alignment(aligned);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(std::abs(again.rotation[i][j] - (i == j ? 1.0 : 0.0)) < 1e-6);
}

TEST_CASE("physical spacing steers the principal axes") {
    // a cube of voxels with strongly anisotropic spacing is physically a slab
    LabeledVolume vol = box_volume(10, 10, 10, 32, 2, 1.0, 1.0, 4.0);
    RigidAlignment a = compute_alignment(vol);
    // first principal axis must be z (largest physical extent)
    CHECK(std::abs(a.rotation[0][2]) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("mask_trachea removes exactly generation 0") {
    LabeledVolume vol(16, 16, 16);
    for (int g = 0; g <= 5; ++g)
        for (int x = 0; x < 8; ++x) vol.at(x, g, 1) = uint8_t(g + 1);
    LabeledVolume out = mask_trachea(vol);
    auto before = label_multiset(vol);
    auto after = label_multiset(out);
    CHECK(after.count(1) == 0);
    for (int g = 1; g <= 5; ++g) CHECK(after.at(uint8_t(g + 1)) == before.at(uint8_t(g + 1)));

    LabeledVolume only_trachea(8, 8, 8);
    only_trachea.at(1, 1, 1) = 1;
    only_trachea.at(2, 1, 1) = 1;
    CHECK_THROWS_AS(mask_trachea(only_trachea), EmptyResult);
}

TEST_CASE("project_views: single voxel yields one pixel per view") {
    LabeledVolume vol(32, 32, 32);
    vol.at(5, 9, 17) = 1;
    auto views = project_views(vol, 1, kMaxLabel);
    for (const auto& v : views) CHECK(v.count() == 1);
    CHECK(views[0].at(9, 5) == 1);   // axial: rows y, cols x
    CHECK(views[1].at(17, 5) == 1);  // coronal: rows z, cols x
    CHECK(views[2].at(17, 9) == 1);  // sagittal: rows z, cols y
}

TEST_CASE("dilate_4x4 anchored at (1,1): single pixel becomes a 4x4 block at rows/cols -1..+2") {
    BinaryImage img(32, 32);
    img.at(10, 10) = 1;
    BinaryImage out = dilate_4x4(img);
    // oracle: direct dilation with kernel offsets (kr-1, kc-1), kr,kc in 0..3
    BinaryImage expect(32, 32);
    for (int kr = 0; kr < 4; ++kr)
        for (int kc = 0; kc < 4; ++kc) expect.at(10 + kr - 1, 10 + kc - 1) = 1;
    CHECK(out == expect);
    for (int r = 9; r <= 12; ++r)
        for (int c = 9; c <= 12; ++c) CHECK(out.at(r, c) == 1);
    CHECK(out.count() == 16);
}

TEST_CASE("dilation is a no-op when all generations are at or below the threshold") {
    LabeledVolume vol(64, 64, 64);
    Rng rng(7);
    for (int i = 0; i < 200; ++i)
        vol.at(int(rng.below(60)) + 2, int(rng.below(60)) + 2, int(rng.below(60)) + 2) =
            uint8_t(1 + rng.below(6)); // labels 1..6 = generations 0..5
    MipStack d = project_mip(vol, true, 5, 64);
    MipStack nd = project_mip(vol, false, 5, 64);
    for (int v = 0; v < 3; ++v) CHECK(d.views[v].px == nd.views[v].px);
}

TEST_CASE("dilated periphery merges over the central projection") {
    LabeledVolume vol(64, 64, 64);
    vol.at(10, 10, 5) = 8; // generation 7
    vol.at(40, 40, 5) = 1; // trachea voxel
    auto central = project_views(vol, 1, 6);
    auto periph = project_views(vol, 7, kMaxLabel);
    BinaryImage merged = dilate_4x4(periph[0]);
    for (size_t i = 0; i < merged.px.size(); ++i) merged.px[i] = std::max(merged.px[i], central[0].px[i]);
    CHECK(merged.at(40, 40) == 1);
    for (int r = 9; r <= 12; ++r)
        for (int c = 9; c <= 12; ++c) CHECK(merged.at(r, c) == 1);
    CHECK(merged.count() == 17);
}

TEST_CASE("property: adding voxels never removes view foreground") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        LabeledVolume vol = testutil::random_blob_volume(rng, 32, 3);
        if (!vol.foreground_count()) continue;
        auto before = project_views(vol, 1, kMaxLabel);
        LabeledVolume more = vol;
        for (int i = 0; i < 20; ++i)
            more.at(int(rng.below(32)), int(rng.below(32)), int(rng.below(32))) = uint8_t(1 + rng.below(17));
        auto after = project_views(more, 1, kMaxLabel);
        for (int v = 0; v < 3; ++v)
            for (size_t i = 0; i < before[v].px.size(); ++i)
                if (before[v].px[i]) CHECK(after[v].px[i] == 1);
    }
}

TEST_CASE("property: dilated MIP foreground is a superset of the undilated one") {
    Rng rng(43);
    for (int trial = 0; trial < 8; ++trial) {
        LabeledVolume vol = testutil::random_blob_volume(rng, 48, 4, 12); // labels up to 12
        if (!vol.foreground_count()) continue;
        MipStack nd = project_mip(vol, false, 5, 64);
        MipStack d = project_mip(vol, true, 5, 64);
        for (int v = 0; v < 3; ++v)
            for (size_t i = 0; i < nd.views[v].px.size(); ++i)
                if (nd.views[v].px[i] > 0.5) CHECK(d.views[v].px[i] > 0.5);
    }
}

TEST_CASE("property: max-pool keeps exactly the bins that contain foreground") {
    Rng rng(47);
    for (int trial = 0; trial < 10; ++trial) {
        int h = 30 + int(rng.below(40));
        int w = 30 + int(rng.below(40));
        BinaryImage img(h, w);
        for (int i = 0; i < 60; ++i) img.at(int(rng.below(h)), int(rng.below(w))) = 1;
        BinaryImage sq = pad_square(img);
        int size = 16;
        BinaryImage out = maxpool_to(sq, size);
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c) {
                int r0 = int(int64_t(r) * sq.h / size), r1 = std::max(r0 + 1, int(int64_t(r + 1) * sq.h / size));
                int c0 = int(int64_t(c) * sq.w / size), c1 = std::max(c0 + 1, int(int64_t(c + 1) * sq.w / size));
                bool any = false;
                for (int rr = r0; rr < r1; ++rr)
                    for (int cc = c0; cc < c1; ++cc) any = any || sq.at(rr, cc);
                CHECK(out.at(r, c) == (any ? 1 : 0));
            }
    }
}

TEST_CASE("property: masking the trachea only shrinks view foreground") {
    Rng rng(53);
    for (int trial = 0; trial < 8; ++trial) {
        LabeledVolume vol = testutil::random_blob_volume(rng, 32, 4, 5);
        bool has_other = false;
        for (uint8_t v : vol.data) has_other = has_other || v > 1;
        if (!has_other) continue;
        MipStack full = project_mip(vol, false, 5, 32);
        MipStack nt = project_mip(mask_trachea(vol), false, 5, 32);
        for (int v = 0; v < 3; ++v)
            for (size_t i = 0; i < full.views[v].px.size(); ++i)
                if (nt.views[v].px[i] > 0.5) CHECK(full.views[v].px[i] > 0.5);
        CHECK_FALSE(nt.trachea_included);
        CHECK(full.trachea_included);
    }
}

TEST_CASE("lvol round-trip is bit exact and the header is laid out as specified") {
    Rng rng(59);
    LabeledVolume vol = testutil::random_blob_volume(rng, 24, 3);
    vol.sx = 0.4668;
    vol.sy = 0.9180;
    vol.sz = 0.5;
    auto dir = testutil::temp_dir("lvol");
    auto path = dir / "subject.lvol";
    write_lvol(vol, path);

    std::ifstream f(path, std::ios::binary);
    std::vector<uint8_t> header(64);
    f.read(reinterpret_cast<char*>(header.data()), 64);
    CHECK(std::string(header.begin(), header.begin() + 8) == "LVOL0001");
    auto u32 = [&](int off) {
        return uint32_t(header[off]) | uint32_t(header[off + 1]) << 8 |
               uint32_t(header[off + 2]) << 16 | uint32_t(header[off + 3]) << 24;
    };
    CHECK(u32(8) == 24);
    CHECK(u32(12) == 24);
    CHECK(u32(16) == 24);
    for (int i = 44; i < 64; ++i) CHECK(header[i] == 0);
    CHECK(std::filesystem::file_size(path) == 64 + vol.voxel_count());

    LabeledVolume back = read_lvol(path);
    CHECK(back.data == vol.data);
    CHECK(back.sx == vol.sx);
    CHECK(back.sy == vol.sy);
    CHECK(back.sz == vol.sz);
}

TEST_CASE("lvol reader rejects corrupt input") {
    auto dir = testutil::temp_dir("lvol_bad");
    {
        std::ofstream f(dir / "short.lvol", std::ios::binary);
        f << "LVOL0001 too short";
    }
    CHECK_THROWS_AS(read_lvol(dir / "short.lvol"), IoError);

    LabeledVolume vol(8, 8, 8);
    vol.at(1, 1, 1) = 1;
    write_lvol(vol, dir / "trunc.lvol");
    std::filesystem::resize_file(dir / "trunc.lvol", 64 + 100);
    CHECK_THROWS_AS(read_lvol(dir / "trunc.lvol"), IoError);

    vol.at(2, 2, 2) = 18; // beyond generation 16
    write_lvol(vol, dir / "label.lvol");
    CHECK_THROWS_AS(read_lvol(dir / "label.lvol"), IoError);
}

TEST_CASE("mipstack PGM + sidecar round-trip") {
    Rng rng(61);
    LabeledVolume vol = testutil::random_blob_volume(rng, 48, 4, 10);
    MipStack m = project_mip(vol, true, 5, 64);
    m.subject_id = "s0001";
    auto dir = testutil::temp_dir("mip");
    write_mipstack(m, dir, "deadbeef");
    MipStack back = read_mipstack(dir, "s0001");
    CHECK(back.dilated == m.dilated);
    CHECK(back.trachea_included == m.trachea_included);
    CHECK(back.size == m.size);
    for (int v = 0; v < 3; ++v) CHECK(back.views[v].px == m.views[v].px);
}

TEST_SUITE_END();
