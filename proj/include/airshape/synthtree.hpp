#ifndef AIRSHAPE_SYNTHTREE_HPP
#define AIRSHAPE_SYNTHTREE_HPP

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "airshape/volume.hpp"

namespace airshape::synth {

// Parameters of one synthetic airway tree. The four shape classes plant
// measurable differences: 0 = narrow branch angles, 1 = wide angles,
// 2 = short trachea with deeper branching, 3 = asymmetric subtree depth.
struct TreeSpec {
    uint64_t seed = 0;
    int shape_class = 0;
    int max_generation = 8;
    double branch_angle_mean = 35.0; // degrees
    double branch_length_decay = 0.75;
    double radius_decay = 0.82;
    std::array<int, 3> volume_dims = {128, 128, 128};
};

// Fills class-dependent fields for a given shape class.
TreeSpec spec_for_class(int shape_class, uint64_t seed,
                        std::array<int, 3> volume_dims = {128, 128, 128},
                        int max_generation = 8);

// Centerline segment of the generated tree, in voxel coordinates.
struct Segment {
    int generation = 0;
    int parent = -1;
    std::array<double, 3> a{}, b{};
    double radius = 1.0;
    double branch_angle_deg = 0.0; // deviation from parent direction; 0 for the root
};

struct TreeSkeleton {
    std::vector<Segment> segments;
};

// Ground-truth summary statistics, computed from the skeleton alone.
struct TreeStats {
    double mean_branch_angle_deg = 0.0;
    int max_depth = 0;
    double mean_leaf_depth = 0.0;
    double trachea_length = 0.0;
    double depth_asymmetry = 0.0; // |left subtree depth - right subtree depth| at the carina
};

// Pure function of the spec; no rasterization involved.
TreeSkeleton build_skeleton(const TreeSpec& spec);
TreeStats skeleton_stats(const TreeSkeleton& skel);

// Rasterizes the skeleton with a capsule test per segment. Voxels keep the
// lowest-generation label where capsules overlap, so labels never decrease
// along a root-to-leaf path. Throws RasterizationOverflow when any capsule
// leaves the volume bounds (caller retries with a fresh seed).
LabeledVolume generate(const TreeSpec& spec);

// generate() with up to 10 reseeded retries on overflow; returns the volume
// and the seed that actually produced it.
std::pair<LabeledVolume, uint64_t> generate_with_retries(int shape_class, uint64_t subject_seed,
                                                         std::array<int, 3> volume_dims,
                                                         int max_generation);

// Deterministic class-balanced cohort; retries overflowing seeds up to 10
// times before propagating RasterizationOverflow.
std::vector<std::pair<LabeledVolume, int>> cohort(int n_per_class, uint64_t base_seed,
                                                  std::array<int, 3> volume_dims = {128, 128, 128},
                                                  int max_generation = 8);

} // namespace airshape::synth

#endif
