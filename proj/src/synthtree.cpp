#include "airshape/synthtree.hpp"

#include <algorithm>
#include <cmath>

#include "airshape/errors.hpp"
#include "airshape/rng.hpp"

namespace airshape::synth {

namespace {

struct V3 {
    double x, y, z;
    V3 operator+(const V3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    V3 operator-(const V3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    V3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const V3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    V3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
    V3 cross(const V3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
};

V3 to_v3(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
std::array<double, 3> to_arr(const V3& v) { return {v.x, v.y, v.z}; }

// Any unit vector orthogonal to d.
V3 orthogonal(const V3& d) {
    V3 ref = std::abs(d.z) < 0.9 ? V3{0, 0, 1} : V3{1, 0, 0};
    return d.cross(ref).normalized();
}

struct Grower {
    const TreeSpec& spec;
    Rng rng;
    TreeSkeleton skel;
    double base_length;

    Grower(const TreeSpec& s) : spec(s), rng(s.seed) {
        base_length = 0.13 * spec.volume_dims[2];
    }

    // depth_limit: maximum generation this subtree may reach
    void grow(int parent_idx, const V3& start, const V3& dir, int generation, int depth_limit) {
        double length = base_length * std::pow(spec.branch_length_decay, std::max(generation - 1, 0));
        length = std::max(length * rng.uniform(0.9, 1.1), 2.5);
        double radius = std::max(trachea_radius() * std::pow(spec.radius_decay, generation), 1.0);

        double angle = 0.0;
        if (parent_idx >= 0)
            angle = std::abs(rng.normal(spec.branch_angle_mean, 6.0));

        V3 d = dir;
        if (parent_idx >= 0) {
            const V3 pd = (to_v3(skel.segments[parent_idx].b) - to_v3(skel.segments[parent_idx].a)).normalized();
            double theta = angle * M_PI / 180.0;
            d = (pd * std::cos(theta) + dir * std::sin(theta)).normalized();
        }
        V3 end = start + d * length;

        Segment seg;
        seg.generation = generation;
        seg.parent = parent_idx;
        seg.a = to_arr(start);
        seg.b = to_arr(end);
        seg.radius = radius;
        seg.branch_angle_deg = angle;
        int my_idx = int(skel.segments.size());
        skel.segments.push_back(seg);

        if (generation >= depth_limit) return;

        // bifurcation: two children on opposite azimuths around the parent axis
        V3 u = orthogonal(d);
        V3 v = d.cross(u).normalized();
        double phi = rng.uniform(0.0, 2.0 * M_PI);
        double phi2 = phi + M_PI + rng.uniform(-0.3, 0.3);
        V3 off1 = (u * std::cos(phi) + v * std::sin(phi)).normalized();
        V3 off2 = (u * std::cos(phi2) + v * std::sin(phi2)).normalized();

        int limit1 = depth_limit, limit2 = depth_limit;
        if (spec.shape_class == 3 && generation == 0) {
            // one main bronchus keeps full depth, the other is cut short
            limit2 = std::max(depth_limit - 3, 2);
        }
        grow(my_idx, end, off1, generation + 1, limit1);
        grow(my_idx, end, off2, generation + 1, limit2);
    }

    double trachea_radius() const { return 0.032 * spec.volume_dims[0]; }

    TreeSkeleton run() {
        const double nx = spec.volume_dims[0];
        const double ny = spec.volume_dims[1];
        const double nz = spec.volume_dims[2];

        V3 start{nx * 0.5 + rng.uniform(-2.0, 2.0), ny * 0.5 + rng.uniform(-2.0, 2.0), nz * 0.88};
        V3 dir = V3{rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06), -1.0}.normalized();

        double trachea_len = 0.19 * nz;
        if (spec.shape_class == 2) trachea_len *= 0.45;
        trachea_len *= rng.uniform(0.9, 1.1);

        int depth_limit = spec.max_generation;
        if (spec.shape_class == 2) depth_limit += 2;
        depth_limit = std::min(depth_limit, 16);

        // trachea placed explicitly, then recursive growth from the carina
        Segment trachea;
        trachea.generation = 0;
        trachea.parent = -1;
        trachea.a = to_arr(start);
        V3 carina = start + dir * trachea_len;
        trachea.b = to_arr(carina);
        trachea.radius = trachea_radius();
        skel.segments.push_back(trachea);

        if (depth_limit > 0) {
            V3 u = orthogonal(dir);
            V3 v = dir.cross(u).normalized();
            double phi = rng.uniform(0.0, 2.0 * M_PI);
            double phi2 = phi + M_PI + rng.uniform(-0.3, 0.3);
            int limit2 = spec.shape_class == 3 ? std::max(depth_limit - 3, 2) : depth_limit;
            grow(0, carina, (u * std::cos(phi) + v * std::sin(phi)).normalized(), 1, depth_limit);
            grow(0, carina, (u * std::cos(phi2) + v * std::sin(phi2)).normalized(), 1, limit2);
        }
        return std::move(skel);
    }
};

} // namespace

TreeSpec spec_for_class(int shape_class, uint64_t seed, std::array<int, 3> volume_dims, int max_generation) {
    TreeSpec spec;
    spec.seed = seed;
    spec.shape_class = shape_class;
    spec.max_generation = max_generation;
    spec.volume_dims = volume_dims;
    switch (shape_class) {
        case 0: spec.branch_angle_mean = 20.0; break;
        case 1: spec.branch_angle_mean = 55.0; break;
        case 2: spec.branch_angle_mean = 35.0; break; // short trachea + deep branching
        case 3: spec.branch_angle_mean = 35.0; break; // asymmetric subtree depth
        default: throw InsufficientData("shape class must be in 0..3");
    }
    return spec;
}

TreeSkeleton build_skeleton(const TreeSpec& spec) {
    if (spec.volume_dims[0] < 64 || spec.volume_dims[1] < 64 || spec.volume_dims[2] < 64)
        throw ShapeMismatch("volume dims must each be >= 64");
    Grower g(spec);
    return g.run();
}

TreeStats skeleton_stats(const TreeSkeleton& skel) {
    TreeStats st;
    double angle_sum = 0.0;
    int angle_n = 0;
    std::vector<int> child_count(skel.segments.size(), 0);
    for (const auto& s : skel.segments) {
        st.max_depth = std::max(st.max_depth, s.generation);
        if (s.parent >= 0) {
            angle_sum += s.branch_angle_deg;
            ++angle_n;
            child_count[s.parent]++;
        }
        if (s.generation == 0) {
            V3 d = to_v3(s.b) - to_v3(s.a);
            st.trachea_length = d.norm();
        }
    }
    st.mean_branch_angle_deg = angle_n ? angle_sum / angle_n : 0.0;

    double leaf_sum = 0.0;
    int leaf_n = 0;
    for (size_t i = 0; i < skel.segments.size(); ++i)
        if (child_count[i] == 0) {
            leaf_sum += skel.segments[i].generation;
            ++leaf_n;
        }
    st.mean_leaf_depth = leaf_n ? leaf_sum / leaf_n : 0.0;

    // subtree depths below the two carina children
    std::vector<int> first_children;
    for (size_t i = 0; i < skel.segments.size(); ++i)
        if (skel.segments[i].parent == 0) first_children.push_back(int(i));
    if (first_children.size() == 2) {
        auto subtree_depth = [&](int root) {
            int best = skel.segments[root].generation;
            for (size_t i = root; i < skel.segments.size(); ++i) {
                int p = int(i);
                bool under = false;
                while (p >= 0) {
                    if (p == root) {
                        under = true;
                        break;
                    }
                    p = skel.segments[p].parent;
                }
                if (under) best = std::max(best, skel.segments[i].generation);
            }
            return best;
        };
        st.depth_asymmetry = std::abs(subtree_depth(first_children[0]) - subtree_depth(first_children[1]));
    }
    return st;
}

LabeledVolume generate(const TreeSpec& spec) {
    TreeSkeleton skel = build_skeleton(spec);

    const auto [nx, ny, nz] = spec.volume_dims;
    for (const auto& s : skel.segments) {
        for (const auto& p : {s.a, s.b}) {
            if (p[0] - s.radius < 0 || p[0] + s.radius > nx - 1 ||
                p[1] - s.radius < 0 || p[1] + s.radius > ny - 1 ||
                p[2] - s.radius < 0 || p[2] + s.radius > nz - 1)
                throw RasterizationOverflow("tree exceeds volume bounds");
        }
    }

    // lower generations rasterize first and are never overwritten
    std::vector<const Segment*> order;
    order.reserve(skel.segments.size());
    for (const auto& s : skel.segments) order.push_back(&s);
    std::stable_sort(order.begin(), order.end(),
                     [](const Segment* a, const Segment* b) { return a->generation < b->generation; });

    LabeledVolume vol(nx, ny, nz, 1.0, 1.0, 1.0);
    for (const Segment* s : order) {
        V3 a = to_v3(s->a), b = to_v3(s->b);
        V3 ab = b - a;
        double len2 = ab.dot(ab);
        double r = s->radius;
        int x0 = int(std::floor(std::min(a.x, b.x) - r)), x1 = int(std::ceil(std::max(a.x, b.x) + r));
        int y0 = int(std::floor(std::min(a.y, b.y) - r)), y1 = int(std::ceil(std::max(a.y, b.y) + r));
        int z0 = int(std::floor(std::min(a.z, b.z) - r)), z1 = int(std::ceil(std::max(a.z, b.z) + r));
        uint8_t label = uint8_t(s->generation + 1);
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    if (!vol.in_bounds(x, y, z)) continue;
                    uint8_t& cell = vol.at(x, y, z);
                    if (cell != 0) continue;
                    V3 p{double(x), double(y), double(z)};
                    double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
                    V3 closest = a + ab * t;
                    if ((p - closest).norm() <= r) cell = label;
                }
    }
    return vol;
}

std::pair<LabeledVolume, uint64_t> generate_with_retries(int shape_class, uint64_t subject_seed,
                                                         std::array<int, 3> volume_dims,
                                                         int max_generation) {
    for (int attempt = 0;; ++attempt) {
        uint64_t seed = attempt == 0 ? subject_seed : derive_seed(subject_seed, "retry", uint64_t(attempt));
        try {
            return {generate(spec_for_class(shape_class, seed, volume_dims, max_generation)), seed};
        } catch (const RasterizationOverflow&) {
            if (attempt == 9) throw;
        }
    }
}

std::vector<std::pair<LabeledVolume, int>> cohort(int n_per_class, uint64_t base_seed,
                                                  std::array<int, 3> volume_dims, int max_generation) {
    if (n_per_class < 1) throw InsufficientData("n_per_class must be >= 1");
    std::vector<std::pair<LabeledVolume, int>> out;
    out.reserve(size_t(n_per_class) * 4);
    for (int i = 0; i < n_per_class; ++i)
        for (int cls = 0; cls < 4; ++cls) {
            uint64_t subject_seed = derive_seed(base_seed, "synth", uint64_t(i) * 4 + uint64_t(cls));
            out.emplace_back(generate_with_retries(cls, subject_seed, volume_dims, max_generation).first, cls);
        }
    return out;
}

} // namespace airshape::synth
