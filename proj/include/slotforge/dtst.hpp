#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "slotforge/merger.hpp"
#include "slotforge/model.hpp"
#include "slotforge/slot_types.hpp"

namespace slotforge {

// Sinusoidal temporal embedding shared by all K slots of a frame (no
// slot-index embedding; within-frame permutation equivariance is preserved).
template <class T>
Tensor<T> temporal_pe(size_t t, size_t d_slot, size_t t_max) {
    require(t < t_max, "temporal_pe: frame index out of range");
    Tensor<T> pe({1, d_slot});
    for (size_t i = 0; 2 * i < d_slot; ++i) {
        const double angle =
            static_cast<double>(t) / std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                                           static_cast<double>(d_slot));
        pe[2 * i] = static_cast<T>(std::sin(angle));
        if (2 * i + 1 < d_slot) pe[2 * i + 1] = static_cast<T>(std::cos(angle));
    }
    return pe;
}

// Which (frame, slot) tokens get replaced by the mask embedding.
struct MaskPlan {
    std::vector<std::vector<uint8_t>> masked;  // T x K
    double ratio = 0.0;
    uint64_t seed = 0;

    size_t count() const {
        size_t n = 0;
        for (const auto& row : masked)
            for (uint8_t v : row) n += v ? 1 : 0;
        return n;
    }
};

// round(ratio * valid token count) positions sampled without replacement from
// the valid tokens, reproducible per seed.
template <class T>
MaskPlan make_mask_plan(const SlotSequence<T>& s, double ratio, uint64_t seed) {
    require(ratio >= 0.0 && ratio <= 1.0, "mask ratio must lie in [0,1]");
    MaskPlan plan;
    plan.ratio = ratio;
    plan.seed = seed;
    plan.masked.assign(s.T_len(), std::vector<uint8_t>(s.K(), 0));
    std::vector<std::pair<size_t, size_t>> positions;
    for (size_t t = 0; t < s.T_len(); ++t)
        for (size_t k = 0; k < s.K(); ++k)
            if (s.frames[t].valid[k]) positions.emplace_back(t, k);
    const size_t want = static_cast<size_t>(std::llround(ratio * static_cast<double>(positions.size())));
    Rng rng(seed, "mask-plan");
    for (size_t i = 0; i < want; ++i) {  // partial Fisher-Yates
        const size_t j = i + rng.below(positions.size() - i);
        std::swap(positions[i], positions[j]);
        plan.masked[positions[i].first][positions[i].second] = 1;
    }
    return plan;
}

// Masked positions become the learned mask-flag embedding (zero content plus
// flag); validity is unchanged. Masking an invalid slot is a contract error.
template <class T>
SlotSequence<T> apply_mask(const SlotSequence<T>& s, const MaskPlan& plan, Model<T>& model) {
    require(plan.masked.size() == s.T_len(), "apply_mask: plan length mismatch");
    const Tensor<T>& emb = model.params.at("dtst.mask_embed");
    SlotSequence<T> out = s;
    for (size_t t = 0; t < s.T_len(); ++t) {
        require(plan.masked[t].size() == s.K(), "apply_mask: plan width mismatch");
        for (size_t k = 0; k < s.K(); ++k) {
            if (!plan.masked[t][k]) continue;
            require(s.frames[t].valid[k], "apply_mask: plan masks an invalid slot");
            for (size_t c = 0; c < s.d(); ++c) out.frames[t].slots.at(k, c) = emb[c];
        }
    }
    return out;
}

// Bidirectional pre-norm transformer over the valid slot tokens of a window.
// Temporal PEs are injected additively into each layer's attention queries
// and keys only, so L=0 and zero-weight layers are exact identities on the
// slot content. frame_vars are K x d graph vars; invalid tokens never enter
// the attention sequence. pe_offset shifts the temporal indices (used by
// warm-up windows). When plan is given, masked rows are replaced by the mask
// embedding before the transformer runs.
template <class T>
std::vector<Var> dtst_forward_graph(GraphCtx<T>& ctx, const std::vector<Var>& frame_vars,
                                    const std::vector<std::vector<uint8_t>>& valid,
                                    const ModelDims& dims, size_t pe_offset = 0,
                                    const MaskPlan* plan = nullptr) {
    Graph<T>& g = ctx.g;
    const size_t T_len = frame_vars.size();
    require(valid.size() == T_len, "dtst: validity length mismatch");
    require(pe_offset + T_len <= dims.T_max, "dtst: window exceeds T_max");

    // assemble the valid-token sequence, frame-major
    std::vector<Var> gathered;
    std::vector<size_t> frame_sizes;
    std::vector<Tensor<T>> pe_rows;
    for (size_t t = 0; t < T_len; ++t) {
        Var content = frame_vars[t];
        require(g.val(content).cols() == dims.d_slot, "dtst: d_slot mismatch with params");
        if (plan) content = g.replace_rows(content, plan->masked[t], ctx.P("dtst.mask_embed"));
        std::vector<size_t> idx;
        for (size_t k = 0; k < valid[t].size(); ++k)
            if (valid[t][k]) idx.push_back(k);
        require(!idx.empty(), "dtst: frame with no valid slot");
        frame_sizes.push_back(idx.size());
        gathered.push_back(g.gather_rows(content, idx));
        pe_rows.push_back(temporal_pe<T>(t + pe_offset, dims.d_slot, dims.T_max));
    }
    Var x = gathered.size() == 1 ? gathered[0] : g.concat_rows(gathered);

    Tensor<T> pe_seq({g.val(x).rows(), dims.d_slot});
    {
        size_t r0 = 0;
        for (size_t t = 0; t < T_len; ++t)
            for (size_t i = 0; i < frame_sizes[t]; ++i, ++r0)
                std::copy(pe_rows[t].data.begin(), pe_rows[t].data.end(), pe_seq.row_ptr(r0));
    }
    Var pe = g.leaf(pe_seq);

    for (size_t l = 0; l < dims.dtst_layers; ++l) {
        const std::string p = "dtst.l" + std::to_string(l);
        Var h = g.layer_norm_rows(x, ctx.P(p + ".ln1.g"), ctx.P(p + ".ln1.b"), T(1e-5));
        Var h_pe = g.add(h, pe);
        Var q = affine(ctx, h_pe, p + ".q", p + ".bq");
        Var k = affine(ctx, h_pe, p + ".k", p + ".bk");
        Var v = affine(ctx, h, p + ".v", p + ".bv");
        Var att = g.attention_core(q, k, v, dims.dtst_heads);
        x = g.add(x, affine(ctx, att, p + ".o", p + ".bo"));
        Var h2 = g.layer_norm_rows(x, ctx.P(p + ".ln2.g"), ctx.P(p + ".ln2.b"), T(1e-5));
        x = g.add(x, mlp_graph(ctx, h2, p + ".ff"));
    }

    // split back into frames and scatter to the K-slot layout
    std::vector<Var> out;
    size_t r0 = 0;
    for (size_t t = 0; t < T_len; ++t) {
        std::vector<size_t> rows(frame_sizes[t]);
        std::iota(rows.begin(), rows.end(), r0);
        r0 += frame_sizes[t];
        Var frame_tokens = g.gather_rows(x, rows);
        std::vector<size_t> idx;
        for (size_t k = 0; k < valid[t].size(); ++k)
            if (valid[t][k]) idx.push_back(k);
        out.push_back(g.scatter_rows(frame_tokens, idx, valid[t].size()));
    }
    return out;
}

// Value-level forward over a whole sequence.
template <class T>
SlotSequence<T> dtst_forward(const SlotSequence<T>& s, Model<T>& model, size_t pe_offset = 0,
                             const MaskPlan* plan = nullptr) {
    s.check_invariants();
    Graph<T> g;
    GraphCtx<T> ctx(g, model.params);
    std::vector<Var> frame_vars;
    std::vector<std::vector<uint8_t>> valid;
    for (const auto& f : s.frames) {
        frame_vars.push_back(g.leaf(f.slots));
        valid.push_back(f.valid);
    }
    const auto outs = dtst_forward_graph(ctx, frame_vars, valid, model.dims, pe_offset, plan);
    SlotSequence<T> res;
    for (size_t t = 0; t < outs.size(); ++t) {
        SlotFrame<T> f;
        f.slots = g.val(outs[t]);
        f.valid = s.frames[t].valid;
        res.frames.push_back(std::move(f));
    }
    return res;
}

// Next-slot prediction: append one frame of K zero slots carrying the mask
// embedding and the next temporal PE, run the transformer over the extended
// window, take the appended frame's outputs, then merge them (when a merger
// config is supplied).
template <class T>
SlotFrame<T> predict_next(const SlotSequence<T>& buffer, Model<T>& model,
                          const std::optional<MergerConfig>& merger_cfg) {
    require(!buffer.frames.empty(), "predict_next: empty buffer");
    buffer.check_invariants();
    const size_t K = buffer.K();

    Graph<T> g;
    GraphCtx<T> ctx(g, model.params);
    std::vector<Var> frame_vars;
    std::vector<std::vector<uint8_t>> valid;
    MaskPlan plan;
    plan.masked.assign(buffer.T_len() + 1, std::vector<uint8_t>(K, 0));
    for (const auto& f : buffer.frames) {
        frame_vars.push_back(g.leaf(f.slots));
        valid.push_back(f.valid);
    }
    frame_vars.push_back(g.leaf(Tensor<T>({K, buffer.d()})));  // appended zero slots
    valid.push_back(std::vector<uint8_t>(K, 1));
    plan.masked.back().assign(K, 1);  // single slot mask for the last position

    const auto outs =
        dtst_forward_graph(ctx, frame_vars, valid, model.dims, /*pe_offset=*/0, &plan);
    SlotFrame<T> pred;
    pred.slots = g.val(outs.back());
    pred.valid.assign(K, 1);
    if (merger_cfg) {
        auto res = merge_frame(pred, *merger_cfg);
        return res.merged;
    }
    return pred;
}

}  // namespace slotforge
