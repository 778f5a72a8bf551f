#pragma once

#include <utility>

#include "slotforge/model.hpp"
#include "slotforge/slot_types.hpp"

namespace slotforge {

constexpr double kAttnWeightEps = 1e-8;

// Standard-Gaussian slot initialization; all slots valid.
template <class T>
SlotFrame<T> init_slots_gaussian(size_t K, size_t d_slot, uint64_t seed) {
    require(K >= 1 && d_slot >= 1, "init_slots_gaussian: K and d_slot must be >= 1");
    Rng rng(seed, "slot-init");
    SlotFrame<T> sf(K, d_slot);
    for (auto& v : sf.slots.data) v = static_cast<T>(rng.normal());
    return sf;
}

template <class T>
SlotFrame<T> init_slots_gaussian(size_t K, size_t d_slot, Rng& rng) {
    SlotFrame<T> sf(K, d_slot);
    for (auto& v : sf.slots.data) v = static_cast<T>(rng.normal());
    return sf;
}

// One competitive attention iteration over the valid slots only. x is the
// N x D feature frame; slots_v holds the gathered valid rows (Kv x d).
// Returns the updated valid rows plus the N x Kv attention map.
template <class T>
std::pair<Var, Var> attention_step_graph(GraphCtx<T>& ctx, Var x_normed_k, Var x_normed_v,
                                         Var slots_v) {
    Graph<T>& g = ctx.g;
    const size_t d = g.val(slots_v).cols();
    Var s_n = g.layer_norm_rows(slots_v, ctx.P("sa.norm_slots.g"), ctx.P("sa.norm_slots.b"),
                                T(1e-5));
    Var q = g.matmul(s_n, ctx.P("sa.q"));                                   // Kv x d
    Var logits = g.scale(g.matmul(x_normed_k, g.transpose(q)),
                         T(1) / std::sqrt(static_cast<T>(d)));              // N x Kv
    Var attn = g.softmax_rows(logits, /*sorted_sum=*/true);                 // rows sum to 1
    Var w = g.normalize_cols(attn, static_cast<T>(kAttnWeightEps));         // per-slot weights
    Var updates = g.matmul(g.transpose(w), x_normed_v);                     // Kv x d
    Var s_new = gru_graph(ctx, slots_v, updates, "sa.gru");
    s_new = g.add(s_new, mlp_graph(ctx, s_new, "sa.mlp"));
    return {s_new, attn};
}

// f_SA over an initialization already on the graph (used directly by tests
// probing gradient flow). Output scatters updated valid rows back into the
// K-slot layout; optionally reports the final N x K attention (zero columns
// for invalid slots).
template <class T>
Var f_sa_graph_var(GraphCtx<T>& ctx, Var x, Var init_var, const std::vector<uint8_t>& valid,
                   size_t n_iter, Var* out_attn = nullptr) {
    Graph<T>& g = ctx.g;
    std::vector<size_t> idx;
    for (size_t k = 0; k < valid.size(); ++k)
        if (valid[k]) idx.push_back(k);
    require(!idx.empty(), "f_sa: no valid slot");
    const size_t K = valid.size(), N = g.val(x).rows();

    Var slots_v = g.gather_rows(init_var, idx);
    Var x_n = g.layer_norm_rows(x, ctx.P("sa.norm_in.g"), ctx.P("sa.norm_in.b"), T(1e-5));
    Var keys = g.matmul(x_n, ctx.P("sa.k"));
    Var vals = g.matmul(x_n, ctx.P("sa.v"));

    Var attn = -1;
    for (size_t it = 0; it < n_iter; ++it) {
        auto [s_new, a] = attention_step_graph(ctx, keys, vals, slots_v);
        slots_v = s_new;
        attn = a;
    }
    if (out_attn) {
        if (attn >= 0) {
            // place valid columns back into an N x K map
            Var at = g.transpose(attn);                       // Kv x N
            Var full = g.scatter_rows(at, idx, K);            // K x N
            *out_attn = g.transpose(full);                    // N x K
        } else {
            *out_attn = g.leaf(Tensor<T>({N, K}));
        }
    }
    return g.scatter_rows(slots_v, idx, K);
}

// f_SA from a value initialization (initialization paths carry no gradient).
template <class T>
Var f_sa_graph(GraphCtx<T>& ctx, Var x, const SlotFrame<T>& s_init, size_t n_iter,
               Var* out_attn = nullptr) {
    Var init_leaf = ctx.g.leaf(s_init.slots, /*requires_grad=*/false);
    return f_sa_graph_var(ctx, x, init_leaf, s_init.valid, n_iter, out_attn);
}

// Value-level wrappers for the module contracts.

template <class T>
std::pair<SlotFrame<T>, Tensor<T>> attention_step(const Tensor<T>& x, const SlotFrame<T>& sf,
                                                  Model<T>& model) {
    sf.check_invariants();
    Graph<T> g;
    GraphCtx<T> ctx(g, model.params);
    Var out_attn = -1;
    Var out = f_sa_graph(ctx, g.leaf(x), sf, 1, &out_attn);
    SlotFrame<T> res;
    res.slots = g.val(out);
    res.valid = sf.valid;
    return {res, g.val(out_attn)};
}

template <class T>
SlotFrame<T> f_sa(const Tensor<T>& x, const SlotFrame<T>& s_init, Model<T>& model,
                  Tensor<T>* attn_out = nullptr) {
    s_init.check_invariants();
    Graph<T> g;
    GraphCtx<T> ctx(g, model.params);
    Var attn_var = -1;
    Var out = f_sa_graph(ctx, g.leaf(x), s_init, model.dims.sa_iters,
                         attn_out ? &attn_var : nullptr);
    if (attn_out) *attn_out = g.val(attn_var);
    SlotFrame<T> res;
    res.slots = g.val(out);
    res.valid = s_init.valid;
    return res;
}

}  // namespace slotforge
