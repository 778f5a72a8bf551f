#pragma once

#include <map>
#include <string>
#include <vector>

#include "slotforge/graph.hpp"
#include "slotforge/rng.hpp"
#include "slotforge/tensor.hpp"

namespace slotforge {

// Named parameter tensors with a trainable flag. std::map gives the
// deterministic by-name iteration order the optimizer and checkpoint rely on.
template <class T>
class ParamStore {
 public:
    struct Entry {
        Tensor<T> value;
        bool trainable = true;
    };

    void add(const std::string& name, Tensor<T> value, bool trainable = true) {
        require(entries_.find(name) == entries_.end(), "ParamStore: duplicate name " + name);
        entries_[name] = Entry{std::move(value), trainable};
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = entries_.find(name);
        require(it != entries_.end(), "ParamStore: missing parameter " + name);
        return it->second.value;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = entries_.find(name);
        require(it != entries_.end(), "ParamStore: missing parameter " + name);
        return it->second.value;
    }

    // Shape is fixed at add(); value updates must preserve it.
    void set(const std::string& name, const Tensor<T>& v) {
        Tensor<T>& cur = at(name);
        require(cur.same_shape(v), "ParamStore: shape change rejected for " + name);
        cur = v;
    }

    bool trainable(const std::string& name) const {
        auto it = entries_.find(name);
        require(it != entries_.end(), "ParamStore: missing parameter " + name);
        return it->second.trainable;
    }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    size_t size() const { return entries_.size(); }

    size_t trainable_scalars() const {
        size_t n = 0;
        for (const auto& [k, e] : entries_)
            if (e.trainable) n += e.value.numel();
        return n;
    }

 private:
    std::map<std::string, Entry> entries_;
};

// One training-step graph plus the parameter leaves bound into it. P() binds
// lazily and caches so each parameter appears as exactly one leaf.
template <class T>
struct GraphCtx {
    Graph<T>& g;
    ParamStore<T>& ps;
    std::map<std::string, Var> bound;

    GraphCtx(Graph<T>& graph, ParamStore<T>& store) : g(graph), ps(store) {}

    Var P(const std::string& name) {
        auto it = bound.find(name);
        if (it != bound.end()) return it->second;
        const Var v = g.leaf(ps.at(name), ps.trainable(name));
        bound[name] = v;
        return v;
    }

    // Gradients of all bound trainable parameters; untouched parameters get
    // zeros so the optimizer sees a full, deterministic set.
    std::map<std::string, Tensor<T>> collect_grads() const {
        std::map<std::string, Tensor<T>> out;
        for (const auto& [name, entry] : ps) {
            if (!entry.trainable) continue;
            auto it = bound.find(name);
            if (it != bound.end() && g.has_grad(it->second)) {
                out[name] = g.grad(it->second);
            } else {
                Tensor<T> z;
                z.shape = entry.value.shape;
                z.data.assign(entry.value.numel(), T(0));
                out[name] = std::move(z);
            }
        }
        return out;
    }
};

// x W + b for row-major activations; W is (in x out), b a length-out row.
template <class T>
Var affine(GraphCtx<T>& ctx, Var x, const std::string& w, const std::string& b) {
    return ctx.g.add_rowvec(ctx.g.matmul(x, ctx.P(w)), ctx.P(b));
}

// Two affine layers with a rectifier between, parameter names <prefix>.w1/b1/w2/b2.
template <class T>
Var mlp_graph(GraphCtx<T>& ctx, Var x, const std::string& prefix) {
    Var h = ctx.g.relu(affine(ctx, x, prefix + ".w1", prefix + ".b1"));
    return affine(ctx, h, prefix + ".w2", prefix + ".b2");
}

// z = sigm(u Wz + s Uz + bz); r = sigm(u Wr + s Ur + br);
// h = tanh(u Wh + (r.*s) Uh + bh); s' = (1-z).*s + z.*h = s + z.*(h - s).
// Parameter names <prefix>.w_z/u_z/b_z/w_r/u_r/b_r/w_h/u_h/b_h.
template <class T>
Var gru_graph(GraphCtx<T>& ctx, Var state, Var input, const std::string& prefix) {
    Graph<T>& g = ctx.g;
    Var z = g.sigmoid(g.add_rowvec(
        g.add(g.matmul(input, ctx.P(prefix + ".w_z")), g.matmul(state, ctx.P(prefix + ".u_z"))),
        ctx.P(prefix + ".b_z")));
    Var r = g.sigmoid(g.add_rowvec(
        g.add(g.matmul(input, ctx.P(prefix + ".w_r")), g.matmul(state, ctx.P(prefix + ".u_r"))),
        ctx.P(prefix + ".b_r")));
    Var h = g.tanh_act(g.add_rowvec(
        g.add(g.matmul(input, ctx.P(prefix + ".w_h")),
              g.matmul(g.mul(r, state), ctx.P(prefix + ".u_h"))),
        ctx.P(prefix + ".b_h")));
    return g.add(state, g.mul(z, g.sub(h, state)));
}

}  // namespace slotforge
