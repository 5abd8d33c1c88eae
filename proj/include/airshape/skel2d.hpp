#ifndef AIRSHAPE_SKEL2D_HPP
#define AIRSHAPE_SKEL2D_HPP

#include "airshape/image.hpp"

namespace airshape::skel {

// Zhang-Suen iterative thinning to a fixpoint. The skeleton is a subset of
// the input foreground and keeps the 8-connected component count of the
// input (tiny components that the classical parallel deletion step would
// erase completely retain one pixel).
BinaryImage skeletonize(const BinaryImage& img);

// 8-connected component count; shared by metrics and tests.
int count_components8(const BinaryImage& img);

} // namespace airshape::skel

#endif
