#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slotforge/slot_attention.hpp"
#include "test_util.hpp"

using namespace slotforge;

namespace {

Model<float> small_model(uint64_t seed = 0) {
    Model<float> m;
    m.dims.D_feature = 16;
    m.dims.d_slot = 8;
    m.dims.K = 7;
    m.dims.N = 12;
    m.dims.sa_iters = 3;
    m.dims.sa_hidden = 16;
    m.dims.dec_hidden = 16;
    m.dims.dtst_layers = 1;
    m.dims.dtst_heads = 2;
    m.dims.dtst_ff = 16;
    init_model_params(m.params, m.dims, 2, 1, seed);
    return m;
}

}  // namespace

TEST_CASE("gaussian init is seeded, standard, and all-valid") {
    auto a = init_slots_gaussian<float>(7, 64, uint64_t(5));
    auto b = init_slots_gaussian<float>(7, 64, uint64_t(5));
    CHECK(bitwise_equal(a.slots, b.slots));
    CHECK(a.valid_count() == 7);

    auto c = init_slots_gaussian<float>(7, 64, uint64_t(6));
    CHECK(max_abs_diff(a.slots, c.slots) > 0.0);

    // pooled over 10k seeds: 4.48M samples of N(0,1)
    double sum = 0, sumsq = 0;
    size_t n = 0;
    for (uint64_t seed = 0; seed < 10000; ++seed) {
        auto sf = init_slots_gaussian<float>(7, 64, seed);
        for (float v : sf.slots.data) {
            sum += v;
            sumsq += static_cast<double>(v) * v;
            ++n;
        }
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);

    CHECK_THROWS_AS(init_slots_gaussian<float>(0, 4, uint64_t(0)), ContractError);
}

TEST_CASE("single valid slot receives all attention; update is the mean of values") {
    Model<float> m = small_model();
    Rng rng(3);
    auto x = random_tensor<float>({12, 16}, rng);
    SlotFrame<float> sf(7, 8);
    Rng r2(9);
    sf.slots = random_tensor<float>({7, 8}, r2);
    for (size_t k = 1; k < 7; ++k) {
        sf.valid[k] = 0;
        std::fill(sf.slots.row_ptr(k), sf.slots.row_ptr(k) + 8, 0.0f);
    }
    auto [out, attn] = attention_step(x, sf, m);
    for (size_t n = 0; n < 12; ++n) {
        CHECK(attn.at(n, 0) == 1.0f);  // softmax over one element
        for (size_t k = 1; k < 7; ++k) CHECK(attn.at(n, k) == 0.0f);
    }
    CHECK(out.valid == sf.valid);
    for (size_t k = 1; k < 7; ++k)
        for (size_t c = 0; c < 8; ++c) CHECK(out.slots.at(k, c) == 0.0f);

    // all-ones attention normalizes to uniform 1/N weights, so the GRU input
    // is the unweighted mean of the value rows
    Graph<float> g;
    Var ones = g.leaf(Tensor<float>({12, 1}, 1.0f));
    Var w = g.normalize_cols(ones, static_cast<float>(kAttnWeightEps));
    Rng r3(4);
    Tensor<float> vals = random_tensor<float>({12, 5}, r3);
    Var upd = g.matmul(g.transpose(w), g.leaf(vals));
    for (size_t c = 0; c < 5; ++c) {
        float mean = 0;
        for (size_t n = 0; n < 12; ++n) mean += vals.at(n, c);
        mean /= 12.0f;
        CHECK(g.val(upd).at(0, c) == doctest::Approx(mean).epsilon(1e-6));
    }
}

TEST_CASE("attention rows sum to one over valid slots") {
    Model<float> m = small_model(1);
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = random_tensor<float>({12, 16}, rng, 2.0);
        SlotFrame<float> sf(7, 8);
        sf.slots = random_tensor<float>({7, 8}, rng);
        sf.valid[2] = 0;
        sf.valid[5] = 0;
        sf.zero_invalid_rows();
        auto [out, attn] = attention_step(x, sf, m);
        for (size_t n = 0; n < 12; ++n) {
            float s = 0;
            for (size_t k = 0; k < 7; ++k) s += attn.at(n, k);
            CHECK(std::abs(s - 1.0f) < 1e-5f);
            CHECK(attn.at(n, 2) == 0.0f);
            CHECK(attn.at(n, 5) == 0.0f);
        }
    }
}

TEST_CASE("slot permutation equivariance is exact") {
    Model<float> m = small_model(2);
    Rng rng(23);
    auto x = random_tensor<float>({12, 16}, rng);
    SlotFrame<float> sf(7, 8);
    sf.slots = random_tensor<float>({7, 8}, rng);
    sf.valid[3] = 0;
    sf.zero_invalid_rows();

    const std::vector<size_t> perm = {5, 0, 6, 3, 2, 4, 1};
    SlotFrame<float> sp(7, 8);
    for (size_t k = 0; k < 7; ++k) {
        sp.valid[k] = sf.valid[perm[k]];
        for (size_t c = 0; c < 8; ++c) sp.slots.at(k, c) = sf.slots.at(perm[k], c);
    }

    Tensor<float> attn_a, attn_b;
    auto a = f_sa(x, sf, m, &attn_a);
    auto b = f_sa(x, sp, m, &attn_b);
    for (size_t k = 0; k < 7; ++k)
        for (size_t c = 0; c < 8; ++c) REQUIRE(b.slots.at(k, c) == a.slots.at(perm[k], c));
    for (size_t n = 0; n < 12; ++n)
        for (size_t k = 0; k < 7; ++k) REQUIRE(attn_b.at(n, k) == attn_a.at(n, perm[k]));
}

TEST_CASE("invalid slots stay zero and receive zero gradient") {
    Model<float> m = small_model(3);
    Rng rng(31);
    auto x = random_tensor<float>({12, 16}, rng);
    Tensor<float> init = random_tensor<float>({7, 8}, rng);
    std::vector<uint8_t> valid(7, 1);
    valid[1] = valid[4] = 0;
    for (size_t k : {size_t(1), size_t(4)})
        std::fill(init.row_ptr(k), init.row_ptr(k) + 8, 0.0f);

    Graph<float> g;
    GraphCtx<float> ctx(g, m.params);
    Var init_var = g.leaf(init, /*requires_grad=*/true);
    Var out = f_sa_graph_var(ctx, g.leaf(x), init_var, valid, 2);
    Var loss = g.mse(out, g.leaf(Tensor<float>({7, 8}, 0.3f)));
    g.backward(loss);
    const auto& gi = g.grad(init_var);
    for (size_t k = 0; k < 7; ++k)
        for (size_t c = 0; c < 8; ++c) {
            if (valid[k]) continue;
            CHECK(g.val(out).at(k, c) == 0.0f);
            CHECK(gi.at(k, c) == 0.0f);
        }
    // valid slots do receive gradient
    double total = 0;
    for (size_t c = 0; c < 8; ++c) total += std::abs(gi.at(0, c));
    CHECK(total > 0.0);
}

TEST_CASE("f_sa iteration contracts") {
    Model<float> m = small_model(4);
    Rng rng(41);
    auto x = random_tensor<float>({12, 16}, rng);
    SlotFrame<float> sf(7, 8);
    sf.slots = random_tensor<float>({7, 8}, rng);

    m.dims.sa_iters = 0;
    auto out0 = f_sa(x, sf, m);
    CHECK(bitwise_equal(out0.slots, sf.slots));  // n_iter=0 is the identity

    m.dims.sa_iters = 3;
    auto a = f_sa(x, sf, m);
    auto b = f_sa(x, sf, m);
    CHECK(bitwise_equal(a.slots, b.slots));
    CHECK(max_abs_diff(a.slots, sf.slots) > 0.0);

    SlotFrame<float> none(3, 8);
    none.valid.assign(3, 0);
    CHECK_THROWS_AS(f_sa(x, none, m), ContractError);
}
