#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "slotforge/merger.hpp"
#include "test_util.hpp"

using namespace slotforge;

namespace {

SlotFrame<double> frame_from_rows(const std::vector<std::vector<double>>& rows) {
    SlotFrame<double> sf(rows.size(), rows[0].size());
    for (size_t k = 0; k < rows.size(); ++k)
        for (size_t c = 0; c < rows[0].size(); ++c) sf.slots.at(k, c) = rows[k][c];
    return sf;
}

// partition of valid indices as a canonical set of sets
std::set<std::set<size_t>> partition_of(const MergeResult<double>& res, size_t K) {
    std::map<int, std::set<size_t>> by_cluster;
    for (size_t k = 0; k < K; ++k)
        if (res.cluster_of[k] >= 0) by_cluster[res.cluster_of[k]].insert(k);
    std::set<std::set<size_t>> out;
    for (auto& [c, members] : by_cluster) out.insert(members);
    return out;
}

}  // namespace

TEST_CASE("cosine similarity examples") {
    Tensor<double> a = Tensor<double>::vec({1, 0}), b = Tensor<double>::vec({0, 1});
    CHECK(cosine_similarity(a, b, 1e-8) == 0.0);

    Tensor<double> c = Tensor<double>::vec({2, 0});
    CHECK(cosine_similarity(c, c, 1e-8) > 1.0 - 1e-6);
    CHECK(cosine_similarity(c, c, 1e-8) < 1.0);

    Tensor<double> d = Tensor<double>::vec({1, 1}), e = Tensor<double>::vec({1, 0});
    CHECK(cosine_similarity(d, e, 1e-12) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));

    Tensor<double> z = Tensor<double>::vec({0, 0});
    CHECK(cosine_similarity(z, d, 1e-8) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(d, e, 0.0), ContractError);
}

TEST_CASE("theta = 1 with distinct directions is the identity") {
    auto sf = frame_from_rows({{1, 0, 0}, {0, 1, 0}, {0.5, 0.5, 0}});
    MergerConfig cfg;
    cfg.theta = 1.0;
    auto res = merge_frame(sf, cfg);
    CHECK(res.valid == std::vector<uint8_t>{1, 1, 1});
    CHECK(bitwise_equal(res.merged.slots, sf.slots));
}

TEST_CASE("hand-evaluated pairwise merge") {
    // sim(a,b) = 1/sqrt(1.01) ~ 0.99504 >= 0.99; sim(a,c)=0; sim(b,c) ~ 0.0995
    auto sf = frame_from_rows({{1, 0}, {1, 0.1}, {0, 1}});
    MergerConfig cfg;
    cfg.theta = 0.99;
    auto res = merge_frame(sf, cfg);
    CHECK(res.valid == std::vector<uint8_t>{1, 0, 1});
    CHECK(res.merged.slots.at(0, 0) == doctest::Approx(1.0));
    CHECK(res.merged.slots.at(0, 1) == doctest::Approx(0.05));
    CHECK(res.merged.slots.at(1, 0) == 0.0);
    CHECK(res.merged.slots.at(1, 1) == 0.0);
    CHECK(res.merged.slots.at(2, 0) == doctest::Approx(0.0));
    CHECK(res.merged.slots.at(2, 1) == doctest::Approx(1.0));
    CHECK(res.cluster_of[0] == res.cluster_of[1]);
    CHECK(res.cluster_of[2] != res.cluster_of[0]);
}

TEST_CASE("transitive chain merges through the middle slot") {
    // unit vectors at 0, 15 and 30 degrees; cos15 ~ 0.9659 >= 0.96 but
    // cos30 ~ 0.866 < 0.96: the component closure merges all three
    auto deg = [](double d) { return d * M_PI / 180.0; };
    auto sf = frame_from_rows({{std::cos(deg(0)), std::sin(deg(0))},
                               {std::cos(deg(15)), std::sin(deg(15))},
                               {std::cos(deg(30)), std::sin(deg(30))}});
    MergerConfig cfg;
    cfg.theta = 0.96;
    auto res = merge_frame(sf, cfg);
    CHECK(res.merged.valid_count() == 1);
    CHECK(res.valid == std::vector<uint8_t>{1, 0, 0});
    for (size_t c = 0; c < 2; ++c) {
        const double mean = (sf.slots.at(0, c) + sf.slots.at(1, c) + sf.slots.at(2, c)) / 3.0;
        CHECK(res.merged.slots.at(0, c) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("merge_sequence is per-frame and pure") {
    Rng rng(3);
    SlotSequence<double> s;
    SlotFrame<double> f(5, 4);
    f.slots = random_tensor<double>({5, 4}, rng);
    for (int t = 0; t < 3; ++t) s.frames.push_back(f);
    MergerConfig cfg;
    cfg.theta = 0.7;
    auto [merged, m_s] = merge_sequence(s, cfg);
    REQUIRE(m_s.size() == 3);
    CHECK(m_s[0] == m_s[1]);
    CHECK(m_s[1] == m_s[2]);
    CHECK(bitwise_equal(merged.frames[0].slots, merged.frames[2].slots));

    cfg.theta = 1.0;
    auto [m2, ms2] = merge_sequence(s, cfg);
    for (const auto& row : ms2)
        for (uint8_t v : row) CHECK(v == 1);
}

TEST_CASE("valid counts are non-increasing as theta decreases") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        SlotFrame<double> f(6, 4);
        f.slots = random_tensor<double>({6, 4}, rng);
        size_t prev = 0;
        bool first = true;
        for (double theta : {0.99, 0.9, 0.7}) {
            MergerConfig cfg;
            cfg.theta = theta;
            const size_t count = merge_frame(f, cfg).merged.valid_count();
            if (!first) CHECK(count <= prev);
            prev = count;
            first = false;
        }
    }
}

TEST_CASE("merger property suite: 500 seeded random frames") {
    for (uint64_t seed = 0; seed < 500; ++seed) {
        Rng rng(seed, "merger-prop");
        const size_t K = 2 + rng.below(6), d = 2 + rng.below(6);
        SlotFrame<double> f(K, d);
        f.slots = random_tensor<double>({K, d}, rng);
        if (K > 1 && rng.uniform01() < 0.3) {
            f.valid[rng.below(K)] = 0;
            f.zero_invalid_rows();
            if (f.valid_count() == 0) continue;
        }
        MergerConfig cfg;
        cfg.theta = 0.5 + rng.uniform01() * 0.5;

        // identity below threshold
        double max_sim = -2.0;
        const auto idx = f.valid_indices();
        for (size_t i = 0; i < idx.size(); ++i)
            for (size_t j = i + 1; j < idx.size(); ++j)
                max_sim = std::max(max_sim,
                                   cosine_similarity(f.slots.row_ptr(idx[i]),
                                                     f.slots.row_ptr(idx[j]), d, 1e-8));
        auto res = merge_frame(f, cfg);
        if (max_sim < cfg.theta) {
            REQUIRE(res.valid == f.valid);
            REQUIRE(bitwise_equal(res.merged.slots, f.slots));
        }

        // validity: at least one slot, means exact within 1e-6
        REQUIRE(res.merged.valid_count() >= 1);
        const MergeDecision dec = decide_merge(f.slots, f.valid, cfg);
        for (size_t c = 0; c < dec.representative.size(); ++c) {
            for (size_t col = 0; col < d; ++col) {
                double mean = 0;
                for (size_t mb : dec.members[c]) mean += f.slots.at(mb, col);
                mean /= static_cast<double>(dec.members[c].size());
                REQUIRE(std::abs(res.merged.slots.at(dec.representative[c], col) - mean) < 1e-6);
            }
        }

        // count monotonicity for a random theta pair
        MergerConfig lo = cfg, hi = cfg;
        lo.theta = cfg.theta - rng.uniform01() * 0.4;
        REQUIRE(merge_frame(f, lo).merged.valid_count() <= res.merged.valid_count());

        // fixed point within K-1 further applications
        SlotFrame<double> cur = res.merged;
        for (size_t it = 0; it + 1 < K; ++it) {
            auto next = merge_frame(cur, cfg);
            cur = next.merged;
        }
        auto fixed = merge_frame(cur, cfg);
        REQUIRE(fixed.valid == cur.valid);
        REQUIRE(bitwise_equal(fixed.merged.slots, cur.slots));

        // permutation equivariance of the induced partition
        std::vector<size_t> perm(K);
        std::iota(perm.begin(), perm.end(), size_t(0));
        for (size_t i = K - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        SlotFrame<double> pf(K, d);
        for (size_t k = 0; k < K; ++k) {
            pf.valid[k] = f.valid[perm[k]];
            for (size_t c = 0; c < d; ++c) pf.slots.at(k, c) = f.slots.at(perm[k], c);
        }
        auto pres = merge_frame(pf, cfg);
        // map the permuted partition back through perm and compare
        std::set<std::set<size_t>> base = partition_of(res, K);
        std::set<std::set<size_t>> mapped;
        for (const auto& cluster : partition_of(pres, K)) {
            std::set<size_t> back;
            for (size_t k : cluster) back.insert(perm[k]);
            mapped.insert(back);
        }
        REQUIRE(base == mapped);
    }
}
