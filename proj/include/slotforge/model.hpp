#pragma once

#include <string>

#include "slotforge/params.hpp"

namespace slotforge {

// Shape bundle for every learned module.
struct ModelDims {
    size_t D_feature = 64;
    size_t d_slot = 64;
    size_t K = 7;
    size_t N = 64;            // patches per frame
    size_t sa_iters = 3;
    size_t sa_hidden = 128;   // slot-attention residual MLP width
    size_t dec_hidden = 128;
    size_t dtst_layers = 3;
    size_t dtst_heads = 4;
    size_t dtst_ff = 256;     // feed-forward width (4 * d_slot by default)
    size_t T_max = 64;

    void validate() const {
        require(D_feature >= 1 && d_slot >= 1 && K >= 1 && N >= 1, "dims must be positive");
        require(dtst_heads >= 1 && d_slot % dtst_heads == 0,
                "d_slot must be divisible by dtst_heads");
        require(T_max >= 2, "T_max too small");
    }
};

namespace detail {

template <class T>
void add_linear(ParamStore<T>& ps, const std::string& name, size_t in, size_t out,
                uint64_t seed) {
    Tensor<T> w({in, out});
    Rng rng(seed, "init/" + name);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, stddev));
    ps.add(name, std::move(w));
}

template <class T>
void add_bias(ParamStore<T>& ps, const std::string& name, size_t n) {
    ps.add(name, Tensor<T>({1, n}));
}

template <class T>
void add_norm(ParamStore<T>& ps, const std::string& prefix, size_t n) {
    ps.add(prefix + ".g", Tensor<T>({1, n}, T(1)));
    ps.add(prefix + ".b", Tensor<T>({1, n}));
}

}  // namespace detail

// Registers every named, shaped tensor of the model: slot attention,
// broadcast decoder, DTST, and the frozen feature projection.
template <class T>
void init_model_params(ParamStore<T>& ps, const ModelDims& dims, size_t patch, size_t channels,
                       uint64_t seed) {
    using detail::add_bias;
    using detail::add_linear;
    using detail::add_norm;
    dims.validate();
    const size_t D = dims.D_feature, d = dims.d_slot;

    // frozen feature projection (never trainable)
    {
        Tensor<T> proj({patch * patch * channels + 2, D});
        Rng rng(seed, "feature-projection");
        const double stddev = 1.0 / std::sqrt(static_cast<double>(D));
        for (auto& v : proj.data) v = static_cast<T>(rng.normal(0.0, stddev));
        ps.add("feat.proj", std::move(proj), /*trainable=*/false);
    }

    // slot attention
    add_norm(ps, "sa.norm_in", D);
    add_norm(ps, "sa.norm_slots", d);
    add_linear(ps, "sa.q", d, d, seed);
    add_linear(ps, "sa.k", D, d, seed);
    add_linear(ps, "sa.v", D, d, seed);
    for (const char* m : {"w_z", "u_z", "w_r", "u_r", "w_h", "u_h"})
        add_linear(ps, std::string("sa.gru.") + m, d, d, seed);
    for (const char* b : {"b_z", "b_r", "b_h"}) add_bias(ps, std::string("sa.gru.") + b, d);
    add_linear(ps, "sa.mlp.w1", d, dims.sa_hidden, seed);
    add_bias(ps, "sa.mlp.b1", dims.sa_hidden);
    add_linear(ps, "sa.mlp.w2", dims.sa_hidden, d, seed);
    add_bias(ps, "sa.mlp.b2", d);

    // broadcast decoder
    {
        Tensor<T> pos({dims.N, d});
        Rng rng(seed, "init/dec.pos");
        const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
        for (auto& v : pos.data) v = static_cast<T>(rng.normal(0.0, stddev));
        ps.add("dec.pos", std::move(pos));
    }
    add_linear(ps, "dec.mlp.w1", d, dims.dec_hidden, seed);
    add_bias(ps, "dec.mlp.b1", dims.dec_hidden);
    add_linear(ps, "dec.mlp.w2", dims.dec_hidden, D + 1, seed);
    add_bias(ps, "dec.mlp.b2", D + 1);

    // dynamic temporal slot transformer
    {
        Tensor<T> emb({1, d});
        Rng rng(seed, "init/dtst.mask_embed");
        for (auto& v : emb.data) v = static_cast<T>(rng.normal(0.0, 0.02));
        ps.add("dtst.mask_embed", std::move(emb));
    }
    for (size_t l = 0; l < dims.dtst_layers; ++l) {
        const std::string p = "dtst.l" + std::to_string(l);
        add_norm(ps, p + ".ln1", d);
        for (const char* m : {"q", "k", "v", "o"}) add_linear(ps, p + "." + m, d, d, seed);
        for (const char* b : {"bq", "bk", "bv", "bo"}) add_bias(ps, p + "." + b, d);
        add_norm(ps, p + ".ln2", d);
        add_linear(ps, p + ".ff.w1", d, dims.dtst_ff, seed);
        add_bias(ps, p + ".ff.b1", dims.dtst_ff);
        add_linear(ps, p + ".ff.w2", dims.dtst_ff, d, seed);
        add_bias(ps, p + ".ff.b2", d);
    }
}

// Model = dims + parameter store, shared by training, rollout and the CLI.
template <class T>
struct Model {
    ModelDims dims;
    ParamStore<T> params;
};

}  // namespace slotforge
