#pragma once

#include <numeric>
#include <vector>

#include "slotforge/params.hpp"
#include "slotforge/slot_types.hpp"

namespace slotforge {

struct MergerConfig {
    double theta = 0.90;  // similarity threshold in [-1, 1]
    double eps = 1e-8;    // regularizer in the cosine denominator

    void validate() const {
        require(theta >= -1.0 && theta <= 1.0, "MergerConfig: theta must lie in [-1,1]");
        require(eps > 0.0, "MergerConfig: eps must be positive");
    }
};

// sim = a.b / (|a||b| + eps); the eps removes the zero-vector singularity and
// keeps the value strictly inside (-1, 1).
template <class T>
T cosine_similarity(const T* a, const T* b, size_t d, T eps) {
    require(eps > 0, "cosine_similarity: eps must be positive");
    T dot = T(0), na = T(0), nb = T(0);
    for (size_t i = 0; i < d; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb) + eps);
}

template <class T>
T cosine_similarity(const Tensor<T>& a, const Tensor<T>& b, T eps) {
    require(a.numel() == b.numel(), "cosine_similarity: dimension mismatch");
    return cosine_similarity(a.data.data(), b.data.data(), a.numel(), eps);
}

// Discrete merge structure: connected components of the sim >= theta graph
// over the valid slots, representative = lowest index per cluster.
struct MergeDecision {
    std::vector<int> cluster_of;        // per slot; -1 for invalid slots
    std::vector<size_t> representative; // per cluster, the lowest member index
    std::vector<std::vector<size_t>> members;
    std::vector<uint8_t> valid_out;     // representatives only
};

namespace detail {

struct Dsu {
    std::vector<size_t> parent;
    explicit Dsu(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), size_t(0)); }
    size_t find(size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(size_t a, size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[b] = a;  // keep the lowest index as the root
        else parent[a] = b;
    }
};

}  // namespace detail

template <class T>
MergeDecision decide_merge(const Tensor<T>& slots, const std::vector<uint8_t>& valid,
                           const MergerConfig& cfg) {
    cfg.validate();
    const size_t K = slots.rows(), d = slots.cols();
    std::vector<size_t> idx;
    for (size_t k = 0; k < K; ++k)
        if (valid[k]) idx.push_back(k);
    require(!idx.empty(), "merge: no valid slot");

    detail::Dsu dsu(idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = i + 1; j < idx.size(); ++j) {
            const T sim = cosine_similarity(slots.row_ptr(idx[i]), slots.row_ptr(idx[j]), d,
                                            static_cast<T>(cfg.eps));
            if (static_cast<double>(sim) >= cfg.theta) dsu.unite(i, j);
        }

    MergeDecision dec;
    dec.cluster_of.assign(K, -1);
    dec.valid_out.assign(K, 0);
    std::vector<int> cluster_of_root(idx.size(), -1);
    for (size_t i = 0; i < idx.size(); ++i) {
        const size_t root = dsu.find(i);
        if (cluster_of_root[root] < 0) {
            cluster_of_root[root] = static_cast<int>(dec.representative.size());
            dec.representative.push_back(idx[root]);
            dec.members.emplace_back();
        }
        const int c = cluster_of_root[root];
        dec.cluster_of[idx[i]] = c;
        dec.members[c].push_back(idx[i]);
    }
    for (size_t rep : dec.representative) dec.valid_out[rep] = 1;
    return dec;
}

// Smallest |sim - theta| over valid slot pairs; the gradient-check harness
// requires this margin to be comfortably larger than its perturbation so the
// discrete cluster structure cannot flip during finite differencing.
template <class T>
double merge_margin(const Tensor<T>& slots, const std::vector<uint8_t>& valid,
                    const MergerConfig& cfg) {
    double margin = std::numeric_limits<double>::infinity();
    std::vector<size_t> idx;
    for (size_t k = 0; k < valid.size(); ++k)
        if (valid[k]) idx.push_back(k);
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = i + 1; j < idx.size(); ++j) {
            const double sim = static_cast<double>(cosine_similarity(
                slots.row_ptr(idx[i]), slots.row_ptr(idx[j]), slots.cols(),
                static_cast<T>(cfg.eps)));
            margin = std::min(margin, std::abs(sim - cfg.theta));
        }
    return margin;
}

// Averaging as a constant linear map; gradients flow through the mean, never
// through the threshold decision.
template <class T>
Tensor<T> merge_matrix(const MergeDecision& dec, size_t K) {
    Tensor<T> m({K, K});
    for (size_t c = 0; c < dec.representative.size(); ++c) {
        const T w = T(1) / static_cast<T>(dec.members[c].size());
        for (size_t member : dec.members[c]) m.at(dec.representative[c], member) = w;
    }
    return m;
}

template <class T>
Var apply_merge_graph(GraphCtx<T>& ctx, Var slots, const MergeDecision& dec) {
    Graph<T>& g = ctx.g;
    return g.matmul(g.leaf(merge_matrix<T>(dec, g.val(slots).rows())), slots);
}

// Value-level merge result per the module contract.
template <class T>
struct MergeResult {
    SlotFrame<T> merged;
    std::vector<uint8_t> valid;
    std::vector<int> cluster_of;
};

template <class T>
MergeResult<T> merge_frame(const SlotFrame<T>& sf, const MergerConfig& cfg) {
    sf.check_invariants();
    const MergeDecision dec = decide_merge(sf.slots, sf.valid, cfg);
    MergeResult<T> out;
    out.valid = dec.valid_out;
    out.cluster_of = dec.cluster_of;
    out.merged.valid = dec.valid_out;
    out.merged.slots = Tensor<T>({sf.K(), sf.d()});
    std::vector<T> buf;
    for (size_t c = 0; c < dec.representative.size(); ++c) {
        const auto& members = dec.members[c];
        T* dst = out.merged.slots.row_ptr(dec.representative[c]);
        buf.resize(members.size());
        for (size_t col = 0; col < sf.d(); ++col) {
            for (size_t i = 0; i < members.size(); ++i) buf[i] = sf.slots.at(members[i], col);
            dst[col] = sum_value_sorted(buf.data(), buf.size()) / static_cast<T>(members.size());
        }
    }
    return out;
}

// Independent per-frame merging; m_s row t is frame t's validity mask.
template <class T>
std::pair<SlotSequence<T>, std::vector<std::vector<uint8_t>>> merge_sequence(
    const SlotSequence<T>& s, const MergerConfig& cfg) {
    SlotSequence<T> out;
    std::vector<std::vector<uint8_t>> m_s;
    for (const auto& frame : s.frames) {
        auto res = merge_frame(frame, cfg);
        m_s.push_back(res.valid);
        out.frames.push_back(std::move(res.merged));
    }
    return {std::move(out), std::move(m_s)};
}

}  // namespace slotforge
