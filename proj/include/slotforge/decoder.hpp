#pragma once

#include <utility>
#include <vector>

#include "slotforge/model.hpp"
#include "slotforge/slot_types.hpp"

namespace slotforge {

// Decoder outputs for one frame at value level.
template <class T>
struct DecodedFrame {
    Tensor<T> x_recon;                    // N x D_feature
    Tensor<T> masks;                      // K x N, zero rows for invalid slots
    std::vector<Tensor<T>> per_slot_features;  // K entries, N x D (zero if invalid)
};

// Graph-level decode of one frame. slots is a K x d graph var; only valid
// slots are broadcast/decoded, and the softmax across slots runs over the
// valid set only. Returns {x_recon (N x D), masks (N x Kv)} plus the per-slot
// feature vars when requested.
template <class T>
std::pair<Var, Var> decode_frame_graph(GraphCtx<T>& ctx, Var slots,
                                       const std::vector<uint8_t>& valid,
                                       std::vector<Var>* feats_out = nullptr) {
    Graph<T>& g = ctx.g;
    const ModelDims* dims = nullptr;  // N and D come from the parameters themselves
    (void)dims;
    const size_t N = g.val(ctx.P("dec.pos")).rows();
    const size_t D = g.val(ctx.P("dec.mlp.w2")).cols() - 1;

    std::vector<size_t> idx;
    for (size_t k = 0; k < valid.size(); ++k)
        if (valid[k]) idx.push_back(k);
    require(!idx.empty(), "decode: zero valid slots");

    std::vector<Var> feats, alphas;
    for (size_t i = 0; i < idx.size(); ++i) {
        Var row = g.gather_rows(slots, {idx[i]});                 // 1 x d
        Var toks = g.add(g.broadcast_row(row, N), ctx.P("dec.pos"));
        Var h = mlp_graph(ctx, toks, "dec.mlp");                  // N x (D+1)
        feats.push_back(g.slice_cols(h, 0, D));
        alphas.push_back(g.slice_cols(h, D, 1));
    }
    Var alpha_mat = alphas.size() == 1 ? alphas[0] : g.concat_cols(alphas);  // N x Kv
    Var masks = g.softmax_rows(alpha_mat, /*sorted_sum=*/true);
    Var x_recon = g.weighted_combine(masks, feats);
    if (feats_out) *feats_out = feats;
    return {x_recon, masks};
}

// Value-level: decode a single slot into per-token features and alpha logits.
template <class T>
std::pair<Tensor<T>, Tensor<T>> decode_slot(const Tensor<T>& slot, Model<T>& model) {
    require(slot.all_finite(), "decode_slot: slot must be finite");
    Graph<T> g;
    GraphCtx<T> ctx(g, model.params);
    Tensor<T> row = slot;
    row.shape = {1, slot.numel()};
    Var toks = g.add(g.broadcast_row(g.leaf(row), model.dims.N), ctx.P("dec.pos"));
    Var h = mlp_graph(ctx, toks, "dec.mlp");
    Tensor<T> feats = g.val(g.slice_cols(h, 0, model.dims.D_feature));
    Tensor<T> alpha = g.val(g.slice_cols(h, model.dims.D_feature, 1));
    alpha.shape = {model.dims.N};
    return {feats, alpha};
}

// Value-level: softmax-combine already-decoded slots (Eq-style weighted sum).
template <class T>
DecodedFrame<T> combine_slots(const std::vector<std::pair<Tensor<T>, Tensor<T>>>& decoded,
                              const std::vector<uint8_t>& valid) {
    require(decoded.size() == valid.size(), "combine_slots: size mismatch");
    std::vector<size_t> idx;
    for (size_t k = 0; k < valid.size(); ++k)
        if (valid[k]) idx.push_back(k);
    require(!idx.empty(), "combine_slots: zero valid slots");
    const size_t K = valid.size();
    const size_t N = decoded[idx[0]].first.rows();
    const size_t D = decoded[idx[0]].first.cols();

    Graph<T> g;
    std::vector<Var> feats, alphas;
    for (size_t i : idx) {
        feats.push_back(g.leaf(decoded[i].first));
        Tensor<T> a = decoded[i].second;
        a.shape = {N, 1};
        alphas.push_back(g.leaf(a));
    }
    Var alpha_mat = alphas.size() == 1 ? alphas[0] : g.concat_cols(alphas);
    Var masks_v = g.softmax_rows(alpha_mat, true);  // N x Kv
    Var recon = g.weighted_combine(masks_v, feats);

    DecodedFrame<T> out;
    out.x_recon = g.val(recon);
    out.masks = Tensor<T>({K, N});
    const Tensor<T>& mv = g.val(masks_v);
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t n = 0; n < N; ++n) out.masks.at(idx[i], n) = mv.at(n, i);
    out.per_slot_features.assign(K, Tensor<T>({N, D}));
    for (size_t i = 0; i < idx.size(); ++i) out.per_slot_features[idx[i]] = decoded[i].first;
    return out;
}

// Value-level frame decode through the graph path.
template <class T>
DecodedFrame<T> decode_frame(const SlotFrame<T>& sf, Model<T>& model) {
    sf.check_invariants();
    Graph<T> g;
    GraphCtx<T> ctx(g, model.params);
    std::vector<Var> feat_vars;
    auto [recon, masks_v] = decode_frame_graph(ctx, g.leaf(sf.slots), sf.valid, &feat_vars);
    DecodedFrame<T> out;
    out.x_recon = g.val(recon);
    const auto idx = sf.valid_indices();
    const size_t N = model.dims.N, K = sf.K();
    out.masks = Tensor<T>({K, N});
    const Tensor<T>& mv = g.val(masks_v);
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t n = 0; n < N; ++n) out.masks.at(idx[i], n) = mv.at(n, i);
    out.per_slot_features.assign(K, Tensor<T>({N, model.dims.D_feature}));
    for (size_t i = 0; i < idx.size(); ++i) out.per_slot_features[idx[i]] = g.val(feat_vars[i]);
    return out;
}

// Mean of squared element differences over the whole sequence; computed as a
// mean of per-frame means (frames share one shape) so it reproduces the
// training loss reduction bit for bit.
template <class T>
T recon_loss(const std::vector<Tensor<T>>& x_recon, const std::vector<Tensor<T>>& x) {
    require(x_recon.size() == x.size(), "recon_loss: sequence length mismatch");
    require(!x.empty(), "recon_loss: empty sequence");
    T total = T(0);
    for (size_t t = 0; t < x.size(); ++t) {
        require(x_recon[t].same_shape(x[t]), "recon_loss: frame shape mismatch");
        T acc = T(0);
        for (size_t i = 0; i < x[t].numel(); ++i) {
            const T d = x_recon[t][i] - x[t][i];
            acc += d * d;
        }
        total += acc / static_cast<T>(x[t].numel());
    }
    return total / static_cast<T>(x.size());
}

}  // namespace slotforge
