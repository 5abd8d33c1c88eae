#ifndef AIRSHAPE_EVALMETRICS_HPP
#define AIRSHAPE_EVALMETRICS_HPP

#include <vector>

#include "airshape/image.hpp"

namespace airshape::metrics {

// Reconstruction quality for one view (or averaged over views by the caller):
// dsc  = 2|M^ ∩ M| / (|M| + |M^|)
// fpr  = |M^ \ M| / |M|
// tl   = |S ∩ M^| / |S|     (tree length: skeleton coverage)
// cl   = |S^ \ M| / |S|     (centerline leakage)
struct ReconReport {
    double dsc = 0.0;
    double fpr = 0.0;
    double tl = 0.0;
    double cl = 0.0;
    bool averaged_over_views = false;
};

// M and S are the ground-truth mask and its skeleton; M^ and S^ the predicted
// mask (probabilities thresholded at 0.5 by the caller) and its skeleton.
// Throws EmptyReference when |M| or |S| is zero, SizeMismatch on shape
// disagreement.
ReconReport recon_metrics(const BinaryImage& m, const BinaryImage& m_hat,
                          const BinaryImage& s, const BinaryImage& s_hat);

// Pair-counting agreement between two clusterings given as label vectors
// over the same subjects. RI = (TP + TN) / C(n,2).
double rand_index(const std::vector<int>& c1, const std::vector<int>& c2);

// Hubert-Arabie adjusted Rand index via the contingency table, equal to
// (RI - E[RI]) / (1 - E[RI]) under the fixed-sizes permutation model.
// When the correction denominator vanishes (both clusterings single-cluster
// or both all-singletons) the value is 1.0 for identical partitions, else 0.
double adjusted_rand_index(const std::vector<int>& c1, const std::vector<int>& c2);

} // namespace airshape::metrics

#endif
