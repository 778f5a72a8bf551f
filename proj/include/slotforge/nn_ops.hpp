#pragma once

#include <string>

#include "slotforge/params.hpp"

namespace slotforge {

// Value-level kernels, routed through the graph ops so there is a single
// source of truth for the math. Rank <= 2; axis selects the reduced axis.

template <class T>
Tensor<T> softmax(const Tensor<T>& v, size_t axis) {
    require(v.rank() >= 1 && v.rank() <= 2, "softmax: rank must be 1 or 2");
    require(axis < std::max<size_t>(v.rank(), 1), "softmax: invalid axis");
    require(v.all_finite(), "softmax: input must be finite");
    Graph<T> g;
    Var a = g.leaf(v);
    if (v.rank() == 1) return g.val(g.softmax_rows(a));
    if (axis == 1) return g.val(g.softmax_rows(a));
    return g.val(g.transpose(g.softmax_rows(g.transpose(a))));
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& v, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    Graph<T> g;
    return g.val(g.layer_norm_rows(g.leaf(v), g.leaf(gain), g.leaf(bias), eps));
}

template <class T>
Tensor<T> as_matrix(const Tensor<T>& t) {
    Tensor<T> m = t;
    m.shape = {t.rows(), t.cols()};
    return m;
}

template <class T>
Tensor<T> gru_cell(const Tensor<T>& state, const Tensor<T>& input, ParamStore<T>& params,
                   const std::string& prefix = "gru") {
    require(state.same_shape(input), "gru_cell: state/input shape mismatch");
    Graph<T> g;
    GraphCtx<T> ctx(g, params);
    Tensor<T> out = g.val(gru_graph(ctx, g.leaf(as_matrix(state)), g.leaf(as_matrix(input)), prefix));
    out.shape = state.shape;
    return out;
}

template <class T>
Tensor<T> mlp_forward(const Tensor<T>& v, ParamStore<T>& params,
                      const std::string& prefix = "mlp") {
    Graph<T> g;
    GraphCtx<T> ctx(g, params);
    return g.val(mlp_graph(ctx, g.leaf(v), prefix));
}

}  // namespace slotforge
