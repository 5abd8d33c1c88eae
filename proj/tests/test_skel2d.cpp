#include <doctest.h>

#include <array>
#include <map>
#include <set>
#include <vector>

#include "airshape/rng.hpp"
#include "airshape/skel2d.hpp"
#include "test_helpers.hpp"

using namespace airshape;
using airshape::skel::count_components8;
using airshape::skel::skeletonize;

namespace {

// Independent reference implementation of the thinning step, written on sets
// of coordinates rather than a pixel buffer, with the same tiny-component
// survival rule. Used to cross-check the production path.
BinaryImage reference_thin(const BinaryImage& img) {
    std::set<std::pair<int, int>> fg;
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            if (img.at(r, c)) fg.insert({r, c});

    auto val = [&](int r, int c) { return fg.count({r, c}) ? 1 : 0; };
    auto neighbors = [&](int r, int c) {
        // p2..p9 clockwise from north
        return std::array<int, 8>{val(r - 1, c), val(r - 1, c + 1), val(r, c + 1), val(r + 1, c + 1),
                                  val(r + 1, c), val(r + 1, c - 1), val(r, c - 1), val(r - 1, c - 1)};
    };
    auto components = [&]() {
        std::map<std::pair<int, int>, int> comp;
        int n = 0;
        for (const auto& p : fg) {
            if (comp.count(p)) continue;
            std::vector<std::pair<int, int>> stack{p};
            comp[p] = n;
            while (!stack.empty()) {
                auto [r, c] = stack.back();
                stack.pop_back();
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (!dr && !dc) continue;
                        std::pair<int, int> q{r + dr, c + dc};
                        if (fg.count(q) && !comp.count(q)) {
                            comp[q] = n;
                            stack.push_back(q);
                        }
                    }
            }
            ++n;
        }
        return comp;
    };

    bool changed = true;
    while (changed) {
        changed = false;
        for (int phase = 0; phase < 2; ++phase) {
            std::vector<std::pair<int, int>> marked;
            for (const auto& [r, c] : fg) {
                auto p = neighbors(r, c);
                int b = 0;
                for (int v : p) b += v;
                if (b < 2 || b > 6) continue;
                int a = 0;
                for (int i = 0; i < 8; ++i) a += (p[i] == 0 && p[(i + 1) % 8] == 1);
                if (a != 1) continue;
                bool c1 = phase == 0 ? p[0] * p[2] * p[4] == 0 : p[0] * p[2] * p[6] == 0;
                bool c2 = phase == 0 ? p[2] * p[4] * p[6] == 0 : p[0] * p[4] * p[6] == 0;
                if (c1 && c2) marked.push_back({r, c});
            }
            if (marked.empty()) continue;
            auto comp = components();
            std::map<int, int> comp_size, comp_marked;
            for (const auto& [p, id] : comp) comp_size[id]++;
            for (const auto& p : marked) comp_marked[comp.at(p)]++;
            std::set<int> spared;
            for (const auto& p : marked) { // std::set iterates row-major
                int id = comp.at(p);
                if (comp_marked[id] == comp_size[id] && !spared.count(id)) {
                    spared.insert(id);
                    continue;
                }
                fg.erase(p);
                changed = true;
            }
        }
    }

    BinaryImage out(img.h, img.w);
    for (const auto& [r, c] : fg) out.at(r, c) = 1;
    return out;
}

} // namespace

TEST_SUITE_BEGIN("skel2d");

TEST_CASE("empty image stays empty") {
    BinaryImage img(16, 16);
    CHECK(skeletonize(img) == img);
}

TEST_CASE("one-pixel-wide lines are already thin") {
    BinaryImage h(16, 16);
    for (int c = 2; c < 14; ++c) h.at(8, c) = 1;
    CHECK(skeletonize(h) == h);

    BinaryImage v(16, 16);
    for (int r = 1; r < 15; ++r) v.at(r, 5) = 1;
    CHECK(skeletonize(v) == v);

    BinaryImage single(8, 8);
    single.at(3, 3) = 1;
    CHECK(skeletonize(single) == single);
}

TEST_CASE("filled 10x10 square thins to a small connected skeleton inside the square") {
    BinaryImage img(16, 16);
    for (int r = 3; r < 13; ++r)
        for (int c = 3; c < 13; ++c) img.at(r, c) = 1;
    BinaryImage out = skeletonize(img);

    CHECK(out.count() >= 1);
    CHECK(out.count() <= 20);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            if (out.at(r, c)) {
                CHECK(r >= 3);
                CHECK(r < 13);
                CHECK(c >= 3);
                CHECK(c < 13);
            }
    CHECK(count_components8(out) == 1);

    CHECK(out == reference_thin(img));
}

TEST_CASE("tiny components survive thinning") {
    BinaryImage img(12, 12);
    img.at(2, 2) = img.at(2, 3) = img.at(3, 2) = img.at(3, 3) = 1; // 2x2
    img.at(8, 8) = 1;                                               // lone pixel
    BinaryImage out = skeletonize(img);
    CHECK(count_components8(out) == 2);
    for (size_t i = 0; i < out.px.size(); ++i)
        if (out.px[i]) CHECK(img.px[i] == 1);
}

TEST_CASE("property: skeleton is a subset, idempotent, and keeps component count") {
    Rng rng(97);
    for (int trial = 0; trial < 30; ++trial) {
        BinaryImage img = testutil::random_blob_image(rng, 48, 48, 2 + int(rng.below(4)));
        BinaryImage sk = skeletonize(img);

        for (size_t i = 0; i < sk.px.size(); ++i)
            if (sk.px[i]) CHECK(img.px[i] == 1);

        CHECK(skeletonize(sk) == sk);
        CHECK(count_components8(sk) == count_components8(img));
    }
}

TEST_CASE("production path matches the set-based reference on random inputs") {
    Rng rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        BinaryImage img = testutil::random_blob_image(rng, 32, 32, 3);
        CHECK(skeletonize(img) == reference_thin(img));
    }
}

TEST_SUITE_END();
