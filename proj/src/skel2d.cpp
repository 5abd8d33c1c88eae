#include "airshape/skel2d.hpp"

#include <array>
#include <vector>

namespace airshape::skel {

namespace {

// Neighborhood p2..p9 clockwise from north, per the original formulation.
constexpr std::array<std::array<int, 2>, 8> kNbr = {{
    {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1},
}};

struct Padded {
    int h, w; // padded dims
    std::vector<uint8_t> px;
    uint8_t& at(int r, int c) { return px[size_t(r) * w + c]; }
    uint8_t at(int r, int c) const { return px[size_t(r) * w + c]; }
};

int component_of(const Padded& img, std::vector<int>& labels) {
    labels.assign(img.px.size(), -1);
    int n = 0;
    std::vector<int> stack;
    for (int r = 1; r < img.h - 1; ++r)
        for (int c = 1; c < img.w - 1; ++c) {
            size_t idx = size_t(r) * img.w + c;
            if (!img.px[idx] || labels[idx] >= 0) continue;
            labels[idx] = n;
            stack.push_back(int(idx));
            while (!stack.empty()) {
                int cur = stack.back();
                stack.pop_back();
                int cr = cur / img.w, cc = cur % img.w;
                for (const auto& d : kNbr) {
                    int R = cr + d[0], C = cc + d[1];
                    size_t j = size_t(R) * img.w + C;
                    if (img.px[j] && labels[j] < 0) {
                        labels[j] = n;
                        stack.push_back(int(j));
                    }
                }
            }
            ++n;
        }
    return n;
}

// One Zhang-Suen sub-iteration; `phase` 0 uses (p2*p4*p6, p4*p6*p8),
// phase 1 uses (p2*p4*p8, p2*p6*p8). Returns the number of deleted pixels.
int subiteration(Padded& img, int phase) {
    std::vector<size_t> marked;
    for (int r = 1; r < img.h - 1; ++r)
        for (int c = 1; c < img.w - 1; ++c) {
            if (!img.at(r, c)) continue;
            uint8_t p[8];
            int b = 0;
            for (int i = 0; i < 8; ++i) {
                p[i] = img.at(r + kNbr[i][0], c + kNbr[i][1]);
                b += p[i];
            }
            if (b < 2 || b > 6) continue;
            int a = 0;
            for (int i = 0; i < 8; ++i)
                if (p[i] == 0 && p[(i + 1) % 8] == 1) ++a;
            if (a != 1) continue;
            // p2=p[0], p4=p[2], p6=p[4], p8=p[6]
            bool c1 = phase == 0 ? (p[0] * p[2] * p[4] == 0) : (p[0] * p[2] * p[6] == 0);
            bool c2 = phase == 0 ? (p[2] * p[4] * p[6] == 0) : (p[0] * p[4] * p[6] == 0);
            if (c1 && c2) marked.push_back(size_t(r) * img.w + c);
        }
    if (marked.empty()) return 0;

    // keep one pixel of any component that the parallel deletion would erase
    // entirely (classical Zhang-Suen removes isolated 2x2 squares)
    std::vector<int> labels;
    int ncomp = component_of(img, labels);
    std::vector<int> comp_size(ncomp, 0), comp_marked(ncomp, 0);
    for (size_t i = 0; i < img.px.size(); ++i)
        if (img.px[i]) comp_size[labels[i]]++;
    for (size_t i : marked) comp_marked[labels[i]]++;

    std::vector<uint8_t> keep_done(ncomp, 0);
    int deleted = 0;
    for (size_t i : marked) {
        int comp = labels[i];
        if (comp_marked[comp] == comp_size[comp] && !keep_done[comp]) {
            keep_done[comp] = 1; // marked pixels scan in row-major order; spare the first
            continue;
        }
        img.px[i] = 0;
        ++deleted;
    }
    return deleted;
}

} // namespace

BinaryImage skeletonize(const BinaryImage& img) {
    Padded pad{img.h + 2, img.w + 2, std::vector<uint8_t>(size_t(img.h + 2) * (img.w + 2), 0)};
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) pad.at(r + 1, c + 1) = img.at(r, c) ? 1 : 0;

    while (subiteration(pad, 0) + subiteration(pad, 1) > 0) {}

    BinaryImage out(img.h, img.w);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) out.at(r, c) = pad.at(r + 1, c + 1);
    return out;
}

int count_components8(const BinaryImage& img) {
    Padded pad{img.h + 2, img.w + 2, std::vector<uint8_t>(size_t(img.h + 2) * (img.w + 2), 0)};
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) pad.at(r + 1, c + 1) = img.at(r, c) ? 1 : 0;
    std::vector<int> labels;
    return component_of(pad, labels);
}

} // namespace airshape::skel
