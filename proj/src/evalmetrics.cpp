#include "airshape/evalmetrics.hpp"

#include <map>
#include <set>

#include "airshape/errors.hpp"

namespace airshape::metrics {

ReconReport recon_metrics(const BinaryImage& m, const BinaryImage& m_hat,
                          const BinaryImage& s, const BinaryImage& s_hat) {
    if (m.h != m_hat.h || m.w != m_hat.w || m.h != s.h || m.w != s.w || m.h != s_hat.h || m.w != s_hat.w)
        throw SizeMismatch("metric images must share one shape");

    size_t n_m = 0, n_mhat = 0, n_s = 0;
    size_t inter_mm = 0, mhat_minus_m = 0, s_in_mhat = 0, shat_outside_m = 0;
    for (size_t i = 0; i < m.px.size(); ++i) {
        bool gm = m.px[i], pm = m_hat.px[i], gs = s.px[i], ps = s_hat.px[i];
        n_m += gm;
        n_mhat += pm;
        n_s += gs;
        inter_mm += (gm && pm);
        mhat_minus_m += (pm && !gm);
        s_in_mhat += (gs && pm);
        shat_outside_m += (ps && !gm);
    }
    if (n_m == 0 || n_s == 0) throw EmptyReference("empty ground-truth mask or skeleton");

    ReconReport r;
    r.dsc = (n_m + n_mhat) ? 2.0 * double(inter_mm) / double(n_m + n_mhat) : 1.0;
    r.fpr = double(mhat_minus_m) / double(n_m);
    r.tl = double(s_in_mhat) / double(n_s);
    r.cl = double(shat_outside_m) / double(n_s);
    return r;
}

namespace {

// contingency table and marginal pair counts
struct PairCounts {
    double n = 0;
    double sum_nij_c2 = 0; // sum over cells of C(n_ij, 2)
    double sum_a_c2 = 0;   // sum over rows (c1 clusters)
    double sum_b_c2 = 0;   // sum over cols (c2 clusters)
};

double choose2(double x) { return x * (x - 1.0) / 2.0; }

PairCounts tabulate(const std::vector<int>& c1, const std::vector<int>& c2) {
    if (c1.size() != c2.size()) throw SizeMismatch("clusterings differ in size");
    if (c1.size() < 2) throw SizeMismatch("need at least 2 subjects");
    std::map<std::pair<int, int>, size_t> cells;
    std::map<int, size_t> rows, cols;
    for (size_t i = 0; i < c1.size(); ++i) {
        cells[{c1[i], c2[i]}]++;
        rows[c1[i]]++;
        cols[c2[i]]++;
    }
    PairCounts pc;
    pc.n = double(c1.size());
    for (const auto& [k, v] : cells) pc.sum_nij_c2 += choose2(double(v));
    for (const auto& [k, v] : rows) pc.sum_a_c2 += choose2(double(v));
    for (const auto& [k, v] : cols) pc.sum_b_c2 += choose2(double(v));
    return pc;
}

bool same_partition(const std::vector<int>& c1, const std::vector<int>& c2) {
    std::map<int, int> fwd, bwd;
    for (size_t i = 0; i < c1.size(); ++i) {
        auto f = fwd.emplace(c1[i], c2[i]);
        if (!f.second && f.first->second != c2[i]) return false;
        auto b = bwd.emplace(c2[i], c1[i]);
        if (!b.second && b.first->second != c1[i]) return false;
    }
    return true;
}

} // namespace

double rand_index(const std::vector<int>& c1, const std::vector<int>& c2) {
    PairCounts pc = tabulate(c1, c2);
    double total = choose2(pc.n);
    double tp = pc.sum_nij_c2;
    double tn = total - pc.sum_a_c2 - pc.sum_b_c2 + pc.sum_nij_c2;
    return (tp + tn) / total;
}

double adjusted_rand_index(const std::vector<int>& c1, const std::vector<int>& c2) {
    PairCounts pc = tabulate(c1, c2);
    double total = choose2(pc.n);
    double expected = pc.sum_a_c2 * pc.sum_b_c2 / total;
    double maximum = 0.5 * (pc.sum_a_c2 + pc.sum_b_c2);
    if (maximum - expected == 0.0)
        return same_partition(c1, c2) ? 1.0 : 0.0;
    return (pc.sum_nij_c2 - expected) / (maximum - expected);
}

} // namespace airshape::metrics
