#ifndef AIRSHAPE_CLUSTER_HPP
#define AIRSHAPE_CLUSTER_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace airshape::cluster {

// Row-major n x d feature matrix with subject ids per row.
struct FeatureMatrix {
    std::vector<std::string> subject_ids;
    size_t n = 0, d = 0;
    std::vector<double> values;

    double at(size_t row, size_t col) const { return values[row * d + col]; }
    double& at(size_t row, size_t col) { return values[row * d + col]; }
};

// PCA reduction result: scores are the reduced features; axes allow
// reconstruction (X ~= mean + scores * axes^T).
struct PcaModel {
    FeatureMatrix scores;             // n x m
    std::vector<double> mean;         // d
    std::vector<double> axes;         // d x m, column j = axis j
    std::vector<double> explained;    // variance per component
    double cumulative_explained = 0;  // fraction in [0,1]
    bool truncated_by_rank = false;   // requested dimension exceeded min(n-1, d)
};

// Principal components of mean-centered X, descending variance. Effective
// dimension is min(target_dim, n-1, d). Set variance_target in (0,1] to pick
// the smallest dimension reaching that explained-variance fraction instead.
// Component signs are fixed (largest-magnitude axis entry positive).
// Throws DegenerateData when X has zero variance.
PcaModel pca_reduce(const FeatureMatrix& x, size_t target_dim, double variance_target = 0.0);

enum class Metric { L2, Cosine };
enum class WeightMode { Unit, Distance, Gaussian };

struct KnnGraph {
    size_t n = 0;
    int k = 0;
    Metric metric = Metric::L2;
    WeightMode weight_mode = WeightMode::Unit;
    // union-symmetrized undirected edges, i < j
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    std::vector<double> weights;
};

// Exact kNN by the chosen metric, ties broken by lower index, symmetrized by
// union. Gaussian weights use sigma = mean over all n*k stored neighbor
// distances. Throws InvalidK unless 1 <= k < n.
KnnGraph knn_graph(const FeatureMatrix& x, int k, Metric metric = Metric::L2,
                   WeightMode weight_mode = WeightMode::Unit);

struct Clustering {
    std::vector<int> labels; // community id per subject, 0-based contiguous
    int k_used = 0;
    uint64_t seed = 0;
    double modularity = 0.0;
    std::vector<double> round_modularity; // after each aggregation round
};

// Generic weighted undirected graph for community detection.
struct WeightedGraph {
    size_t n = 0;
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    std::vector<double> weights; // parallel to edges; empty = all 1
};

// Louvain modularity optimization (resolution 1): repeated local moves in a
// seeded shuffle order followed by community aggregation, until no gain
// above 1e-12. Deterministic given the seed. Throws EmptyGraph for n == 0;
// an edgeless graph yields all singletons.
Clustering louvain(const WeightedGraph& g, uint64_t seed);
Clustering louvain(const KnnGraph& g, uint64_t seed);

double modularity(const WeightedGraph& g, const std::vector<int>& labels);

struct KSweepPoint {
    int k = 0;
    int n_clusters = 0;
    double modularity = 0.0;
};

struct KOptResult {
    int k_opt = 0;
    std::vector<KSweepPoint> curve;
    bool plateau_found = false; // false = fell back to the largest run
    int plateau_begin = 0, plateau_end = 0;
};

// Plateau rule on a (k, cluster count) curve: the first maximal run of
// consecutive sampled k with identical cluster count spanning >= plateau_span
// wins; k_opt is the sampled k nearest to the run midpoint. Without a
// qualifying run the largest run is used and plateau_found stays false.
KOptResult select_k_opt_from_curve(const std::vector<KSweepPoint>& curve, int plateau_span = 100);

// Runs knn_graph + louvain per sampled k in [k_min, k_max] (clamped to
// [1, n-1]) and applies the plateau rule.
KOptResult select_k_opt(const FeatureMatrix& x, int k_min, int k_max, int step, int plateau_span,
                        uint64_t seed, Metric metric = Metric::L2,
                        WeightMode weight_mode = WeightMode::Unit);

struct ReproducibilityConfig {
    int k = 0;                 // reference k (e.g. k_opt)
    uint64_t seed = 0;
    Metric metric = Metric::L2;
    WeightMode weight_mode = WeightMode::Unit;
    int subset_runs = 5;
    double subset_fraction = 0.8;
    std::vector<int> k_variants;     // variant (2); defaults derived from k
    size_t reduced_dim_variant = 0;  // variant (4); 0 = half the feature dim
};

struct VariantAgreement {
    std::string name;
    double ri = 0.0;
    double ari = 0.0;
};

struct ReproducibilityReport {
    std::vector<VariantAgreement> subsets;     // (1) five 80% subsets
    std::vector<VariantAgreement> k_variants;  // (2) ARI vs k curve
    VariantAgreement cosine;                   // (3)
    VariantAgreement reduced_dim;              // (4)
    double subset_mean_ari = 0.0;
};

// The four reproducibility variants, each scored (RI, ARI) against the
// reference clustering restricted to the shared subjects.
ReproducibilityReport reproducibility_suite(const FeatureMatrix& x, const Clustering& reference,
                                            const ReproducibilityConfig& config);

// --- persistence ---
void write_features_csv(const FeatureMatrix& x, const std::string& path,
                        const std::string& config_hash = "");
FeatureMatrix read_features_csv(const std::string& path);
// binary container: JSON header + little-endian float64 blob
void write_features_bin(const FeatureMatrix& x, const std::string& path,
                        const std::string& config_hash = "");
FeatureMatrix read_features_bin(const std::string& path);

} // namespace airshape::cluster

#endif
