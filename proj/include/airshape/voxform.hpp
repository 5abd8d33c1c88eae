#ifndef AIRSHAPE_VOXFORM_HPP
#define AIRSHAPE_VOXFORM_HPP

#include <array>
#include <filesystem>
#include <string>

#include "airshape/image.hpp"
#include "airshape/volume.hpp"

namespace airshape::vox {

// Rigid alignment taking a volume into PCA-axis orientation. Rows of
// `rotation` are the covariance eigenvectors of the foreground coordinates
// (in physical millimeters), ordered by descending eigenvalue.
struct RigidAlignment {
    std::array<std::array<double, 3>, 3> rotation{};
    std::array<double, 3> centroid{}; // voxel coordinates
};

// Axial, coronal, sagittal projections stacked in that fixed order. Values
// are in [0,1]; ground-truth stacks contain only {0,1}.
struct MipStack {
    int size = 0; // H = W, power of two
    std::array<RealImage, 3> views;
    bool dilated = false;
    bool trachea_included = true;
    std::string subject_id;
};

inline constexpr std::array<const char*, 3> kViewOrder = {"axial", "coronal", "sagittal"};

// PCA of the spacing-scaled foreground coordinates. Eigenvector signs are
// fixed so the largest-magnitude component is positive; exact eigenvalue ties
// break lexicographically on the eigenvector entries; a determinant of -1 is
// resolved by flipping the last eigenvector.
// Throws DegenerateGeometry on empty, collinear or coplanar foreground.
RigidAlignment compute_alignment(const LabeledVolume& vol);

// Rotates the volume per `a` and crops to the tight bounding box of the
// rotated foreground. The output grid is isotropic (geometric mean of the
// input spacings) and filled by nearest-neighbor inverse-rotation lookup, so
// labels are never interpolated.
LabeledVolume apply_alignment(const LabeledVolume& vol, const RigidAlignment& a);

// Sets all generation-0 voxels (label 1) to background.
// Throws EmptyResult when nothing remains.
LabeledVolume mask_trachea(const LabeledVolume& vol);

// --- projection building blocks (exposed for tests and tools) ---

// Max-projects voxels with labels in [lo, hi] along each axis.
// Views: axial = rows y / cols x, coronal = rows z / cols x,
// sagittal = rows z / cols y.
std::array<BinaryImage, 3> project_views(const LabeledVolume& vol, uint8_t lo, uint8_t hi);

// Morphological dilation with a 4x4 ones kernel anchored at offset (1,1)
// from the kernel's top-left: a foreground pixel at (r,c) covers rows
// r-1..r+2 and cols c-1..c+2.
BinaryImage dilate_4x4(const BinaryImage& img);

// Pads to a centered square of side max(h,w) with background.
BinaryImage pad_square(const BinaryImage& img);

// Max-pools to `size` x `size` over rectangular bins with floor boundaries.
// Bins for size > side degrade to nearest-pixel replication.
BinaryImage maxpool_to(const BinaryImage& img, int size);

// Full MIP: binarize + max-project each axis; when `dilate_peripheral`,
// voxels of generation > dilation_threshold_generation are projected
// separately, dilated with the 4x4 kernel, and merged by pixel-wise max
// before padding and downsampling.
MipStack project_mip(const LabeledVolume& vol, bool dilate_peripheral,
                     int dilation_threshold_generation = 5, int mip_size = 256);

// --- on-disk form: three PGM files plus a JSON sidecar ---
void write_mipstack(const MipStack& m, const std::filesystem::path& dir,
                    const std::string& config_hash = "");
MipStack read_mipstack(const std::filesystem::path& dir, const std::string& subject_id);

} // namespace airshape::vox

#endif
