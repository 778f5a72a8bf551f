#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slotforge/decoder.hpp"
#include "test_util.hpp"

using namespace slotforge;

namespace {

Model<float> dec_model(uint64_t seed = 0, size_t N = 9, size_t D = 6, size_t d = 4) {
    Model<float> m;
    m.dims.D_feature = D;
    m.dims.d_slot = d;
    m.dims.K = 4;
    m.dims.N = N;
    m.dims.sa_iters = 1;
    m.dims.sa_hidden = 8;
    m.dims.dec_hidden = 8;
    m.dims.dtst_layers = 1;
    m.dims.dtst_heads = 2;
    m.dims.dtst_ff = 8;
    init_model_params(m.params, m.dims, 2, 1, seed);
    return m;
}

}  // namespace

TEST_CASE("zero decoder weights broadcast the final bias everywhere") {
    Model<float> m = dec_model();
    m.params.at("dec.mlp.w1").fill(0.0f);
    m.params.at("dec.mlp.w2").fill(0.0f);
    Tensor<float>& b2 = m.params.at("dec.mlp.b2");
    Rng rng(5);
    for (auto& v : b2.data) v = static_cast<float>(rng.normal());

    auto [feats, alpha] = decode_slot(random_tensor<float>({4}, rng), m);
    for (size_t n = 0; n < m.dims.N; ++n) {
        for (size_t c = 0; c < m.dims.D_feature; ++c) CHECK(feats.at(n, c) == b2[c]);
        CHECK(alpha[n] == b2[m.dims.D_feature]);
    }
}

TEST_CASE("zero positional encoding makes all tokens identical") {
    Model<float> m = dec_model(1);
    m.params.at("dec.pos").fill(0.0f);
    Rng rng(7);
    auto [feats, alpha] = decode_slot(random_tensor<float>({4}, rng), m);
    for (size_t n = 1; n < m.dims.N; ++n) {
        CHECK(alpha[n] == alpha[0]);
        for (size_t c = 0; c < m.dims.D_feature; ++c) CHECK(feats.at(n, c) == feats.at(0, c));
    }
}

TEST_CASE("perturbing one positional row changes only that token") {
    Model<float> m = dec_model(2);
    Rng rng(9);
    auto slot = random_tensor<float>({4}, rng);
    auto [f0, a0] = decode_slot(slot, m);
    m.params.at("dec.pos").at(3, 1) += 0.25f;
    auto [f1, a1] = decode_slot(slot, m);
    for (size_t n = 0; n < m.dims.N; ++n) {
        bool changed = a1[n] != a0[n];
        for (size_t c = 0; c < m.dims.D_feature; ++c) changed |= f1.at(n, c) != f0.at(n, c);
        if (n == 3) CHECK(changed);
        else CHECK_FALSE(changed);
    }
}

TEST_CASE("combine with one valid slot is the identity") {
    const size_t N = 5, D = 3;
    Rng rng(11);
    std::vector<std::pair<Tensor<float>, Tensor<float>>> decoded(3);
    for (auto& [f, a] : decoded) {
        f = random_tensor<float>({N, D}, rng);
        a = random_tensor<float>({N}, rng);
    }
    std::vector<uint8_t> valid = {0, 1, 0};
    auto out = combine_slots(decoded, valid);
    for (size_t n = 0; n < N; ++n) {
        CHECK(out.masks.at(1, n) == 1.0f);
        CHECK(out.masks.at(0, n) == 0.0f);
        CHECK(out.masks.at(2, n) == 0.0f);
        for (size_t c = 0; c < D; ++c) CHECK(out.x_recon.at(n, c) == decoded[1].first.at(n, c));
    }
}

TEST_CASE("equal alpha logits split the mask evenly") {
    const size_t N = 4, D = 2;
    std::vector<std::pair<Tensor<float>, Tensor<float>>> decoded(4);
    Rng rng(13);
    for (auto& [f, a] : decoded) {
        f = random_tensor<float>({N, D}, rng);
        a = Tensor<float>({N}, 0.7f);
    }
    auto out = combine_slots(decoded, {1, 1, 1, 1});
    for (size_t k = 0; k < 4; ++k)
        for (size_t n = 0; n < N; ++n)
            CHECK(out.masks.at(k, n) == doctest::Approx(0.25f).epsilon(1e-6));
}

TEST_CASE("softmax closed form: logits (0, ln 3) give masks (0.25, 0.75)") {
    const size_t N = 3, D = 2;
    std::vector<std::pair<Tensor<float>, Tensor<float>>> decoded(2);
    Rng rng(15);
    decoded[0].first = random_tensor<float>({N, D}, rng);
    decoded[1].first = random_tensor<float>({N, D}, rng);
    decoded[0].second = Tensor<float>({N}, 0.0f);
    decoded[1].second = Tensor<float>({N}, std::log(3.0f));
    auto out = combine_slots(decoded, {1, 1});
    for (size_t n = 0; n < N; ++n) {
        CHECK(out.masks.at(0, n) == doctest::Approx(0.25f).epsilon(1e-5));
        CHECK(out.masks.at(1, n) == doctest::Approx(0.75f).epsilon(1e-5));
    }
}

TEST_CASE("mask normalization and convexity over random inputs") {
    Model<float> m = dec_model(3);
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        SlotFrame<float> sf(4, 4);
        sf.slots = random_tensor<float>({4, 4}, rng, 2.0);
        if (trial % 3 == 0) {
            sf.valid[0] = 0;
            sf.zero_invalid_rows();
        }
        auto out = decode_frame(sf, m);
        for (size_t n = 0; n < m.dims.N; ++n) {
            float s = 0;
            for (size_t k = 0; k < 4; ++k) s += out.masks.at(k, n);
            CHECK(std::abs(s - 1.0f) < 1e-5f);
            for (size_t c = 0; c < m.dims.D_feature; ++c) {
                float lo = 1e30f, hi = -1e30f;
                for (size_t k = 0; k < 4; ++k) {
                    if (!sf.valid[k]) continue;
                    lo = std::min(lo, out.per_slot_features[k].at(n, c));
                    hi = std::max(hi, out.per_slot_features[k].at(n, c));
                }
                CHECK(out.x_recon.at(n, c) >= lo - 1e-6f);
                CHECK(out.x_recon.at(n, c) <= hi + 1e-6f);
            }
        }
    }
}

TEST_CASE("invalid slots contribute nothing and receive zero gradient") {
    Model<float> m = dec_model(4);
    Rng rng(19);
    Tensor<float> slots = random_tensor<float>({4, 4}, rng);
    std::vector<uint8_t> valid = {1, 0, 1, 0};
    for (size_t k : {size_t(1), size_t(3)})
        std::fill(slots.row_ptr(k), slots.row_ptr(k) + 4, 0.0f);

    Graph<float> g;
    GraphCtx<float> ctx(g, m.params);
    Var sv = g.leaf(slots, true);
    auto [recon, masks] = decode_frame_graph(ctx, sv, valid);
    Var loss = g.mse(recon, g.leaf(Tensor<float>({m.dims.N, m.dims.D_feature}, 0.1f)));
    g.backward(loss);
    const auto& gs = g.grad(sv);
    for (size_t c = 0; c < 4; ++c) {
        CHECK(gs.at(1, c) == 0.0f);
        CHECK(gs.at(3, c) == 0.0f);
    }
    double total = 0;
    for (size_t c = 0; c < 4; ++c) total += std::abs(gs.at(0, c)) + std::abs(gs.at(2, c));
    CHECK(total > 0.0);

    // excluding or including zeroed invalid slots cannot change the output
    SlotFrame<float> sf;
    sf.slots = slots;
    sf.valid = valid;
    auto full = decode_frame(sf, m);
    for (size_t n = 0; n < m.dims.N; ++n) {
        CHECK(full.masks.at(1, n) == 0.0f);
        CHECK(full.masks.at(3, n) == 0.0f);
    }
}

TEST_CASE("recon_loss examples") {
    Rng rng(21);
    std::vector<Tensor<float>> x, same, shifted;
    for (int t = 0; t < 3; ++t) {
        x.push_back(random_tensor<float>({4, 5}, rng));
        same.push_back(x.back());
        Tensor<float> s = x.back();
        for (auto& v : s.data) v += 2.0f;
        shifted.push_back(std::move(s));
    }
    CHECK(recon_loss(same, x) == 0.0f);
    CHECK(recon_loss(shifted, x) == doctest::Approx(4.0f).epsilon(1e-6));

    std::vector<Tensor<float>> wrong = {Tensor<float>({4, 4})};
    CHECK_THROWS_AS(recon_loss(wrong, x), ContractError);
}

TEST_CASE("reconstruction is bitwise invariant to permuting valid slots") {
    Model<float> m = dec_model(5);
    Rng rng(23);
    SlotFrame<float> sf(4, 4);
    sf.slots = random_tensor<float>({4, 4}, rng);
    auto base = decode_frame(sf, m);

    const std::vector<size_t> perm = {2, 0, 3, 1};
    SlotFrame<float> sp(4, 4);
    for (size_t k = 0; k < 4; ++k)
        for (size_t c = 0; c < 4; ++c) sp.slots.at(k, c) = sf.slots.at(perm[k], c);
    auto permuted = decode_frame(sp, m);
    REQUIRE(bitwise_equal(base.x_recon, permuted.x_recon));

    std::vector<Tensor<float>> xa = {base.x_recon}, xb = {permuted.x_recon};
    std::vector<Tensor<float>> target = {random_tensor<float>({m.dims.N, m.dims.D_feature}, rng)};
    CHECK(recon_loss(xa, target) == recon_loss(xb, target));
}
