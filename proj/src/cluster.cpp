#include "airshape/cluster.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "airshape/errors.hpp"
#include "airshape/evalmetrics.hpp"
#include "airshape/rng.hpp"

namespace airshape::cluster {

// ------------------------------------------------------------------- PCA

PcaModel pca_reduce(const FeatureMatrix& x, size_t target_dim, double variance_target) {
    if (x.n < 2) throw DegenerateData("need at least 2 rows");
    const size_t n = x.n, d = x.d;

    std::vector<double> mean(d, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
    for (auto& m : mean) m /= double(n);

    Eigen::MatrixXd xc(n, d);
    double total_var = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) {
            double v = x.at(i, j) - mean[j];
            xc(long(i), long(j)) = v;
            total_var += v * v;
        }
    total_var /= double(n - 1);
    if (total_var <= 0.0) throw DegenerateData("features have zero variance");

    const size_t rank_bound = std::min(n - 1, d);

    // eigendecomposition of the smaller of covariance / Gram matrix
    std::vector<double> evals; // descending, covariance scale
    Eigen::MatrixXd axes;      // d x rank_bound
    if (d <= n) {
        Eigen::MatrixXd cov = xc.transpose() * xc / double(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        if (solver.info() != Eigen::Success) throw DegenerateData("eigendecomposition failed");
        axes.resize(long(d), long(rank_bound));
        for (size_t r = 0; r < rank_bound; ++r) {
            long src = long(d - 1 - r); // ascending -> descending
            evals.push_back(std::max(solver.eigenvalues()[src], 0.0));
            axes.col(long(r)) = solver.eigenvectors().col(src);
        }
    } else {
        Eigen::MatrixXd gram = xc * xc.transpose() / double(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
        if (solver.info() != Eigen::Success) throw DegenerateData("eigendecomposition failed");
        axes.resize(long(d), long(rank_bound));
        for (size_t r = 0; r < rank_bound; ++r) {
            long src = long(n - 1 - r);
            double lambda = std::max(solver.eigenvalues()[src], 0.0);
            evals.push_back(lambda);
            Eigen::VectorXd axis = xc.transpose() * solver.eigenvectors().col(src);
            double norm = axis.norm();
            axes.col(long(r)) = norm > 0 ? (axis / norm).eval() : axis;
        }
    }

    // sign convention: largest-magnitude axis entry positive
    for (size_t r = 0; r < rank_bound; ++r) {
        long arg = 0;
        for (long j = 1; j < long(d); ++j)
            if (std::abs(axes(j, long(r))) > std::abs(axes(arg, long(r)))) arg = j;
        if (axes(arg, long(r)) < 0) axes.col(long(r)) = -axes.col(long(r));
    }

    size_t m = std::min(target_dim, rank_bound);
    if (variance_target > 0.0) {
        double acc = 0.0;
        m = rank_bound;
        for (size_t r = 0; r < rank_bound; ++r) {
            acc += evals[r] / total_var;
            if (acc >= variance_target) {
                m = r + 1;
                break;
            }
        }
    }
    if (m == 0) m = 1;

    PcaModel model;
    model.truncated_by_rank = variance_target <= 0.0 && target_dim > rank_bound;
    model.mean = mean;
    model.explained.assign(evals.begin(), evals.begin() + long(m));
    double acc = 0.0;
    for (size_t r = 0; r < m; ++r) acc += evals[r];
    model.cumulative_explained = acc / total_var;

    model.axes.resize(d * m);
    for (size_t j = 0; j < d; ++j)
        for (size_t r = 0; r < m; ++r) model.axes[j * m + r] = axes(long(j), long(r));

    Eigen::MatrixXd scores = xc * axes.leftCols(long(m));
    model.scores.subject_ids = x.subject_ids;
    model.scores.n = n;
    model.scores.d = m;
    model.scores.values.resize(n * m);
    for (size_t i = 0; i < n; ++i)
        for (size_t r = 0; r < m; ++r) model.scores.values[i * m + r] = scores(long(i), long(r));
    return model;
}

// ------------------------------------------------------------------ kNN

namespace {

double l2_distance(const FeatureMatrix& x, size_t i, size_t j) {
    double acc = 0.0;
    const double* a = x.values.data() + i * x.d;
    const double* b = x.values.data() + j * x.d;
    for (size_t f = 0; f < x.d; ++f) {
        double diff = a[f] - b[f];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

double cosine_distance(const FeatureMatrix& x, size_t i, size_t j) {
    const double* a = x.values.data() + i * x.d;
    const double* b = x.values.data() + j * x.d;
    double dot = 0, na = 0, nb = 0;
    for (size_t f = 0; f < x.d; ++f) {
        dot += a[f] * b[f];
        na += a[f] * a[f];
        nb += b[f] * b[f];
    }
    if (na == 0.0 && nb == 0.0) return 0.0;
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace

KnnGraph knn_graph(const FeatureMatrix& x, int k, Metric metric, WeightMode weight_mode) {
    const size_t n = x.n;
    if (k < 1 || size_t(k) >= n) throw InvalidK("k must satisfy 1 <= k < n");

    KnnGraph g;
    g.n = n;
    g.k = k;
    g.metric = metric;
    g.weight_mode = weight_mode;

    std::map<std::pair<uint32_t, uint32_t>, double> edge_dist;
    double stored_sum = 0.0;
    std::vector<std::pair<double, uint32_t>> cand(n - 1);
    for (size_t i = 0; i < n; ++i) {
        size_t c = 0;
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double dist = metric == Metric::L2 ? l2_distance(x, i, j) : cosine_distance(x, i, j);
            cand[c++] = {dist, uint32_t(j)};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int t = 0; t < k; ++t) {
            stored_sum += cand[size_t(t)].first;
            uint32_t a = uint32_t(i), b = cand[size_t(t)].second;
            if (a > b) std::swap(a, b);
            edge_dist.emplace(std::pair<uint32_t, uint32_t>(a, b), cand[size_t(t)].first);
        }
    }

    const double sigma = stored_sum / (double(n) * k);
    for (const auto& [key, dist] : edge_dist) {
        g.edges.push_back(key);
        switch (weight_mode) {
            case WeightMode::Unit: g.weights.push_back(1.0); break;
            case WeightMode::Distance: g.weights.push_back(dist); break;
            case WeightMode::Gaussian:
                g.weights.push_back(sigma > 0.0 ? std::exp(-dist * dist / (sigma * sigma)) : 1.0);
                break;
        }
    }
    return g;
}

// -------------------------------------------------------------- Louvain

double modularity(const WeightedGraph& g, const std::vector<int>& labels) {
    if (labels.size() != g.n) throw SizeMismatch("labels vs graph size");
    std::vector<double> degree(g.n, 0.0);
    double two_m = 0.0;
    std::map<int, double> in2, tot;
    for (size_t e = 0; e < g.edges.size(); ++e) {
        auto [i, j] = g.edges[e];
        double w = g.weights.empty() ? 1.0 : g.weights[e];
        degree[i] += w;
        degree[j] += w;
        two_m += 2.0 * w;
        if (labels[i] == labels[j]) in2[labels[i]] += 2.0 * w;
    }
    if (two_m == 0.0) return 0.0;
    for (size_t v = 0; v < g.n; ++v) tot[labels[v]] += degree[v];
    double q = 0.0;
    for (const auto& [c, t] : tot) q += in2[c] / two_m - (t / two_m) * (t / two_m);
    return q;
}

namespace {

constexpr double kGainTol = 1e-12;

struct Aggregated {
    size_t n;
    std::vector<std::vector<std::pair<uint32_t, double>>> adj; // no self entries
    std::vector<double> self_loop;                             // double-counted internal weight
    std::vector<double> degree;                                // includes self loop
};

Aggregated build(const WeightedGraph& g) {
    Aggregated a;
    a.n = g.n;
    a.adj.resize(g.n);
    a.self_loop.assign(g.n, 0.0);
    a.degree.assign(g.n, 0.0);
    for (size_t e = 0; e < g.edges.size(); ++e) {
        auto [i, j] = g.edges[e];
        double w = g.weights.empty() ? 1.0 : g.weights[e];
        if (i == j) {
            a.self_loop[i] += 2.0 * w;
            a.degree[i] += 2.0 * w;
        } else {
            a.adj[i].push_back({j, w});
            a.adj[j].push_back({i, w});
            a.degree[i] += w;
            a.degree[j] += w;
        }
    }
    return a;
}

// one level of local moves; returns true if anything moved
bool local_moves(const Aggregated& g, std::vector<int>& comm, double two_m, Rng& rng) {
    std::vector<double> tot(g.n, 0.0);
    for (size_t v = 0; v < g.n; ++v) tot[size_t(comm[v])] += g.degree[v];

    std::vector<uint32_t> order(g.n);
    for (size_t v = 0; v < g.n; ++v) order[v] = uint32_t(v);

    bool any_move = false;
    bool moved = true;
    std::vector<double> link(g.n, 0.0);
    while (moved) {
        moved = false;
        rng.shuffle(order);
        for (uint32_t v : order) {
            int home = comm[v];
            tot[size_t(home)] -= g.degree[v];

            std::vector<int> touched;
            for (const auto& [u, w] : g.adj[v]) {
                int c = comm[u];
                if (link[size_t(c)] == 0.0) touched.push_back(c);
                link[size_t(c)] += w;
            }
            if (link[size_t(home)] == 0.0) touched.push_back(home);

            auto gain = [&](int c) { return link[size_t(c)] - tot[size_t(c)] * g.degree[v] / two_m; };
            int best = home;
            double best_gain = gain(home);
            std::sort(touched.begin(), touched.end());
            for (int c : touched)
                if (gain(c) > best_gain + kGainTol) {
                    best = c;
                    best_gain = gain(c);
                }
            for (int c : touched) link[size_t(c)] = 0.0;

            tot[size_t(best)] += g.degree[v];
            if (best != home) {
                comm[v] = best;
                moved = true;
                any_move = true;
            }
        }
    }
    return any_move;
}

} // namespace

Clustering louvain(const WeightedGraph& g, uint64_t seed) {
    if (g.n == 0) throw EmptyGraph("graph has no nodes");

    Clustering result;
    result.seed = seed;
    result.labels.resize(g.n);
    for (size_t v = 0; v < g.n; ++v) result.labels[v] = int(v);

    double two_m = 0.0;
    for (size_t e = 0; e < g.edges.size(); ++e) two_m += 2.0 * (g.weights.empty() ? 1.0 : g.weights[e]);
    if (two_m == 0.0) {
        result.modularity = 0.0;
        result.round_modularity = {0.0};
        result.k_used = 0;
        return result;
    }

    Rng rng(derive_seed(seed, "louvain"));
    WeightedGraph level = g;
    std::vector<int> node_of(g.n); // original node -> current level node
    for (size_t v = 0; v < g.n; ++v) node_of[v] = int(v);

    while (true) {
        Aggregated agg = build(level);
        std::vector<int> comm(level.n);
        for (size_t v = 0; v < level.n; ++v) comm[v] = int(v);
        bool improved = local_moves(agg, comm, two_m, rng);

        // contiguous community ids in order of first appearance
        std::map<int, int> remap;
        for (size_t v = 0; v < level.n; ++v)
            if (!remap.count(comm[v])) {
                int next = int(remap.size());
                remap[comm[v]] = next;
            }
        for (size_t v = 0; v < level.n; ++v) comm[v] = remap[comm[v]];
        size_t n_comm = remap.size();

        for (size_t v = 0; v < g.n; ++v) result.labels[v] = comm[size_t(node_of[v])];
        result.round_modularity.push_back(modularity(g, result.labels));

        if (!improved || n_comm == level.n) break;

        // aggregate communities into super-nodes
        WeightedGraph next;
        next.n = n_comm;
        std::map<std::pair<uint32_t, uint32_t>, double> merged;
        for (size_t e = 0; e < level.edges.size(); ++e) {
            auto [i, j] = level.edges[e];
            double w = level.weights.empty() ? 1.0 : level.weights[e];
            uint32_t a = uint32_t(comm[i]), b = uint32_t(comm[j]);
            if (a > b) std::swap(a, b);
            merged[std::pair<uint32_t, uint32_t>(a, b)] += w;
        }
        for (const auto& [key, w] : merged) {
            next.edges.push_back(key);
            next.weights.push_back(w);
        }
        for (size_t v = 0; v < g.n; ++v) node_of[v] = comm[size_t(node_of[v])];
        level = std::move(next);
    }

    // relabel final communities by first appearance over subjects
    std::map<int, int> remap;
    for (size_t v = 0; v < g.n; ++v)
        if (!remap.count(result.labels[v])) {
            int next = int(remap.size());
            remap[result.labels[v]] = next;
        }
    for (auto& l : result.labels) l = remap[l];
    result.modularity = result.round_modularity.back();
    return result;
}

Clustering louvain(const KnnGraph& g, uint64_t seed) {
    WeightedGraph wg;
    wg.n = g.n;
    wg.edges = g.edges;
    wg.weights = g.weights;
    Clustering c = louvain(wg, seed);
    c.k_used = g.k;
    return c;
}

// ---------------------------------------------------------- k selection

KOptResult select_k_opt_from_curve(const std::vector<KSweepPoint>& curve, int plateau_span) {
    KOptResult result;
    result.curve = curve;
    if (curve.empty()) throw DegenerateData("empty k sweep");

    struct Run {
        size_t begin, end; // curve indices, inclusive
        int span() const { return 0; }
    };
    std::vector<std::pair<size_t, size_t>> runs;
    size_t start = 0;
    for (size_t i = 1; i <= curve.size(); ++i) {
        if (i == curve.size() || curve[i].n_clusters != curve[start].n_clusters) {
            runs.push_back({start, i - 1});
            start = i;
        }
    }

    auto span_of = [&](const std::pair<size_t, size_t>& r) {
        return curve[r.second].k - curve[r.first].k;
    };

    const std::pair<size_t, size_t>* chosen = nullptr;
    for (const auto& r : runs)
        if (span_of(r) >= plateau_span) {
            chosen = &r;
            result.plateau_found = true;
            break;
        }
    if (!chosen) {
        chosen = &runs[0];
        for (const auto& r : runs)
            if (span_of(r) > span_of(*chosen)) chosen = &r;
    }

    result.plateau_begin = curve[chosen->first].k;
    result.plateau_end = curve[chosen->second].k;
    const double mid = 0.5 * (result.plateau_begin + result.plateau_end);
    size_t best = chosen->first;
    for (size_t i = chosen->first; i <= chosen->second; ++i) {
        double d_new = std::abs(curve[i].k - mid);
        double d_best = std::abs(curve[best].k - mid);
        if (d_new < d_best) best = i;
    }
    result.k_opt = curve[best].k;
    return result;
}

KOptResult select_k_opt(const FeatureMatrix& x, int k_min, int k_max, int step, int plateau_span,
                        uint64_t seed, Metric metric, WeightMode weight_mode) {
    if (step < 1) throw InvalidK("step must be >= 1");
    k_min = std::max(k_min, 1);
    k_max = std::min(k_max, int(x.n) - 1);
    if (k_min > k_max) throw InvalidK("empty k range after clamping");

    std::vector<KSweepPoint> curve;
    for (int k = k_min; k <= k_max; k += step) {
        KnnGraph g = knn_graph(x, k, metric, weight_mode);
        Clustering c = louvain(g, derive_seed(seed, "ksweep", uint64_t(k)));
        int n_clusters = c.labels.empty() ? 0 : 1 + *std::max_element(c.labels.begin(), c.labels.end());
        curve.push_back({k, n_clusters, c.modularity});
    }
    return select_k_opt_from_curve(curve, plateau_span);
}

// ------------------------------------------------------- reproducibility

namespace {

FeatureMatrix subset_rows(const FeatureMatrix& x, const std::vector<size_t>& rows) {
    FeatureMatrix out;
    out.n = rows.size();
    out.d = x.d;
    out.values.resize(out.n * out.d);
    for (size_t r = 0; r < rows.size(); ++r) {
        out.subject_ids.push_back(x.subject_ids.empty() ? std::to_string(rows[r]) : x.subject_ids[rows[r]]);
        std::copy(x.values.begin() + long(rows[r] * x.d), x.values.begin() + long((rows[r] + 1) * x.d),
                  out.values.begin() + long(r * x.d));
    }
    return out;
}

VariantAgreement score(const std::string& name, const std::vector<int>& reference,
                       const std::vector<int>& candidate) {
    VariantAgreement a;
    a.name = name;
    a.ri = metrics::rand_index(reference, candidate);
    a.ari = metrics::adjusted_rand_index(reference, candidate);
    return a;
}

} // namespace

ReproducibilityReport reproducibility_suite(const FeatureMatrix& x, const Clustering& reference,
                                            const ReproducibilityConfig& config) {
    if (x.n < 50) throw InsufficientData("reproducibility suite needs n >= 50");
    if (reference.labels.size() != x.n) throw SizeMismatch("reference labels vs features");
    const int k = config.k > 0 ? config.k : reference.k_used;
    if (k < 1) throw InvalidK("reference k unknown");

    ReproducibilityReport report;

    // (1) clustering on repeated random subsets
    for (int run = 0; run < config.subset_runs; ++run) {
        std::vector<size_t> idx(x.n);
        std::iota(idx.begin(), idx.end(), size_t(0));
        Rng rng(derive_seed(config.seed, "subset", uint64_t(run)));
        rng.shuffle(idx);
        idx.resize(size_t(config.subset_fraction * double(x.n)));
        std::sort(idx.begin(), idx.end());

        FeatureMatrix sub = subset_rows(x, idx);
        int k_sub = std::min(k, int(sub.n) - 1);
        Clustering c = louvain(knn_graph(sub, k_sub, config.metric, config.weight_mode), config.seed);

        std::vector<int> ref_sub;
        for (size_t i : idx) ref_sub.push_back(reference.labels[i]);
        report.subsets.push_back(score("subset" + std::to_string(run), ref_sub, c.labels));
        report.subset_mean_ari += report.subsets.back().ari;
    }
    if (!report.subsets.empty()) report.subset_mean_ari /= double(report.subsets.size());

    // (2) varying k
    std::vector<int> ks = config.k_variants;
    if (ks.empty())
        ks = {k / 4, k / 2, (3 * k) / 4, k, (3 * k) / 2, 2 * k, 3 * k};
    std::set<int> seen;
    for (int kv : ks) {
        kv = std::max(1, std::min(kv, int(x.n) - 1));
        if (!seen.insert(kv).second) continue;
        Clustering c = louvain(knn_graph(x, kv, config.metric, config.weight_mode), config.seed);
        report.k_variants.push_back(score("k=" + std::to_string(kv), reference.labels, c.labels));
    }

    // (3) cosine distance
    {
        Metric other = config.metric == Metric::L2 ? Metric::Cosine : Metric::L2;
        Clustering c = louvain(knn_graph(x, k, other, config.weight_mode), config.seed);
        report.cosine = score(other == Metric::Cosine ? "cosine" : "l2", reference.labels, c.labels);
    }

    // (4) reduced-dimensionality features
    {
        size_t dim = config.reduced_dim_variant ? config.reduced_dim_variant : std::max<size_t>(1, x.d / 2);
        PcaModel reduced = pca_reduce(x, dim);
        Clustering c = louvain(knn_graph(reduced.scores, k, config.metric, config.weight_mode), config.seed);
        report.reduced_dim = score("dim=" + std::to_string(reduced.scores.d), reference.labels, c.labels);
    }
    return report;
}

// ---------------------------------------------------------- persistence

void write_features_csv(const FeatureMatrix& x, const std::string& path, const std::string& config_hash) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    if (!config_hash.empty()) f << "# config_hash=" << config_hash << "\n";
    f << "subject_id";
    for (size_t j = 0; j < x.d; ++j) f << ",f" << j;
    f << "\n";
    char buf[32];
    for (size_t i = 0; i < x.n; ++i) {
        f << (x.subject_ids.empty() ? std::to_string(i) : x.subject_ids[i]);
        for (size_t j = 0; j < x.d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", x.at(i, j));
            f << ',' << buf;
        }
        f << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

FeatureMatrix read_features_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifact("feature csv not found: " + path);
    FeatureMatrix x;
    std::string line;
    bool header_done = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_done) {
            header_done = true;
            x.d = size_t(std::count(line.begin(), line.end(), ',')); // columns after subject_id
            continue;
        }
        size_t pos = line.find(',');
        if (pos == std::string::npos) throw IoError("bad feature row in " + path);
        x.subject_ids.push_back(line.substr(0, pos));
        size_t start = pos + 1;
        while (start <= line.size()) {
            size_t next = line.find(',', start);
            std::string cell = line.substr(start, next == std::string::npos ? std::string::npos : next - start);
            x.values.push_back(std::stod(cell));
            if (next == std::string::npos) break;
            start = next + 1;
        }
    }
    x.n = x.subject_ids.size();
    if (x.n * x.d != x.values.size()) throw IoError("ragged feature csv: " + path);
    return x;
}

void write_features_bin(const FeatureMatrix& x, const std::string& path, const std::string& config_hash) {
    nlohmann::json header;
    header["n"] = x.n;
    header["d"] = x.d;
    header["subject_ids"] = x.subject_ids;
    header["config_hash"] = config_hash;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    uint32_t len = uint32_t(hs.size());
    uint8_t le[4] = {uint8_t(len), uint8_t(len >> 8), uint8_t(len >> 16), uint8_t(len >> 24)};
    f.write(reinterpret_cast<const char*>(le), 4);
    f.write(hs.data(), std::streamsize(hs.size()));
    f.write(reinterpret_cast<const char*>(x.values.data()), std::streamsize(x.values.size() * 8));
    if (!f) throw IoError("write failed: " + path);
}

FeatureMatrix read_features_bin(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifact("feature container not found: " + path);
    uint8_t le[4];
    f.read(reinterpret_cast<char*>(le), 4);
    if (f.gcount() != 4) throw IoError("truncated container: " + path);
    uint32_t len = uint32_t(le[0]) | uint32_t(le[1]) << 8 | uint32_t(le[2]) << 16 | uint32_t(le[3]) << 24;
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (size_t(f.gcount()) != len) throw IoError("truncated container header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs);

    FeatureMatrix x;
    x.n = header.at("n").get<size_t>();
    x.d = header.at("d").get<size_t>();
    x.subject_ids = header.at("subject_ids").get<std::vector<std::string>>();
    x.values.resize(x.n * x.d);
    f.read(reinterpret_cast<char*>(x.values.data()), std::streamsize(x.values.size() * 8));
    if (size_t(f.gcount()) != x.values.size() * 8) throw IoError("truncated container blob: " + path);
    return x;
}

} // namespace airshape::cluster
